//! Hyperbolic fits of defect traces.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linking::DefectTrace;

/// Fitted parameters of `f = sqrt(Δ² + (ε_i + γ_t V_t + γ_b V_b)²)`.
///
/// Signs are normalised so that `γ_t ≥ 0`; `γ_b` carries the relative sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunabilityFit {
    pub trace_id: usize,
    pub delta_ghz: f64,
    pub eps_i_ghz: f64,
    pub gamma_t_mhz_per_v: f64,
    pub gamma_b_mhz_per_v: f64,
    /// Covariance of `(Δ, ε_i, γ_t, γ_b)` in GHz, GHz, MHz/V, MHz/V.
    pub covariance: [[f64; 4]; 4],
    pub residual_mhz: f64,
    pub junction_flag: bool,
    pub flags: Vec<String>,
}

impl TunabilityFit {
    /// `γ_t/γ_b`, undefined for junction defects or a vanishing `γ_b`.
    pub fn ratio(&self) -> Option<f64> {
        if self.junction_flag || self.gamma_b_mhz_per_v == 0.0 {
            None
        } else {
            Some(self.gamma_t_mhz_per_v / self.gamma_b_mhz_per_v)
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    /// Junction threshold on `max(|γ_t|, |γ_b|)`, MHz/V.
    pub gamma_min_mhz_per_v: f64,
    /// Traces whose fitted frequency moves less than this over the observed steps are junction defects, MHz.
    pub junction_span_mhz: f64,
    pub min_points: usize,
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self { gamma_min_mhz_per_v: 1.0, junction_span_mhz: 3.0, min_points: 6, max_iterations: 200, step_tolerance: 1e-10 }
    }
}

pub const FLAG_UNLOCATABLE: &str = "unlocatable";
pub const FLAG_VERTEX_UNOBSERVED: &str = "vertex-unobserved";

/// Parameters in GHz and GHz/V.
type P = Vector4<f64>;

fn model(p: &P, vt: f64, vb: f64) -> (f64, f64) {
    let e = p[1] + p[2] * vt + p[3] * vb;
    (p[0].hypot(e), e)
}

struct Data<'a> {
    vt: &'a [f64],
    vb: &'a [f64],
    f: &'a [f64],
}

impl Data<'_> {
    fn sse(&self, p: &P) -> f64 {
        (0..self.f.len()).map(|i| (model(p, self.vt[i], self.vb[i]).0 - self.f[i]).powi(2)).sum()
    }

    /// Normal matrix and gradient of the least-squares objective.
    fn normal(&self, p: &P) -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for i in 0..self.f.len() {
            let (m, e) = model(p, self.vt[i], self.vb[i]);
            let m = m.max(1e-300);
            let j = Vector4::new(p[0] / m, e / m, e * self.vt[i] / m, e * self.vb[i] / m);
            jtj += j * j.transpose();
            jtr += j * (m - self.f[i]);
        }
        (jtj, jtr)
    }
}

/// Levenberg–Marquardt with Marquardt diagonal scaling.
fn levenberg_marquardt(data: &Data, start: P, params: &FitParams) -> (P, f64, bool) {
    let mut p = start;
    let mut sse = data.sse(&p);
    let mut lambda = 1e-3;
    for _ in 0..params.max_iterations {
        let (jtj, jtr) = data.normal(&p);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let s = data.sse(&trial);
            if s <= sse {
                let rel = step.norm() / p.norm().max(1e-12);
                p = trial;
                sse = s;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < params.step_tolerance {
                    return (p, sse, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: stationary point
            return (p, sse, true);
        }
    }
    (p, sse, false)
}

/// Linear least squares of `f²` on the six quadratic monomials of `(V_t, V_b)`.
fn quadratic_start(data: &Data) -> Option<P> {
    let n = data.f.len();
    let mut a = DMatrix::zeros(n, 6);
    let mut b = DVector::zeros(n);
    for i in 0..n {
        let (x, y) = (data.vt[i], data.vb[i]);
        for (k, v) in [1.0, x, y, x * x, x * y, y * y].into_iter().enumerate() {
            a[(i, k)] = v;
        }
        b[i] = data.f[i] * data.f[i];
    }
    let c = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let gt = c[3].max(0.0).sqrt();
    let gb = c[5].max(0.0).sqrt() * if c[4] < 0.0 { -1.0 } else { 1.0 };
    let eps = if gt.abs() >= gb.abs() && gt > 0.0 {
        c[1] / (2.0 * gt)
    } else if gb != 0.0 {
        c[2] / (2.0 * gb)
    } else {
        0.0
    };
    let d2 = c[0] - eps * eps;
    let fmin = data.f.iter().cloned().fold(f64::INFINITY, f64::min);
    let delta = if d2 > 0.0 { d2.sqrt().min(fmin) } else { 0.9 * fmin };
    Some(P::new(delta, eps, gt, gb))
}

/// Least-squares hyperbola through a trace.
pub fn fit_hyperbola(trace: &DefectTrace, params: &FitParams) -> Result<TunabilityFit> {
    let vt: Vec<f64> = trace.points.iter().map(|p| p.v_t).collect();
    let vb: Vec<f64> = trace.points.iter().map(|p| p.v_b).collect();
    let f: Vec<f64> = trace.points.iter().map(|p| p.f_ghz).collect();
    fit_points(trace.id, &vt, &vb, &f, trace.is_localizable(params.min_points), params)
}

/// Fit raw `(V_t, V_b, f)` samples. `localizable` only controls flagging.
pub fn fit_points(trace_id: usize, vt: &[f64], vb: &[f64], f: &[f64], localizable: bool, params: &FitParams) -> Result<TunabilityFit> {
    let n = f.len();
    if n < 4 {
        return Err(Error::FitFailed { best_residual_mhz: f64::INFINITY });
    }
    let data = Data { vt, vb, f };
    let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let base = quadratic_start(&data).unwrap_or(P::new(0.9 * fmin, 0.0, 0.0, 0.0));
    let mut starts = Vec::with_capacity(8);
    for sb in [1.0, -1.0] {
        for se in [1.0, -1.0] {
            for d in [base[0], 0.5 * fmin] {
                starts.push(P::new(d.max(1e-6), se * base[1], base[2], sb * base[3]));
            }
        }
    }
    let mut best: Option<(P, f64)> = None;
    let mut best_any: Option<(P, f64)> = None;
    for s in starts {
        let (p, sse, ok) = levenberg_marquardt(&data, s, params);
        if !p.iter().all(|v| v.is_finite()) {
            continue;
        }
        if best_any.as_ref().map_or(true, |b| sse < b.1) {
            best_any = Some((p, sse));
        }
        if ok && best.as_ref().map_or(true, |b| sse < b.1) {
            best = Some((p, sse));
        }
    }
    // a partial fit may stall along its unobservable direction
    let chosen = if localizable { best } else { best.or(best_any) };
    let Some((mut p, sse)) = chosen else {
        let r = best_any.map_or(f64::INFINITY, |b| (b.1 / n as f64).sqrt() * 1e3);
        return Err(Error::FitFailed { best_residual_mhz: r });
    };
    p[0] = p[0].abs();
    if p[2] < 0.0 || (p[2] == 0.0 && p[3] < 0.0) {
        p[1] = -p[1];
        p[2] = -p[2];
        p[3] = -p[3];
    }
    let (jtj, _) = data.normal(&p);
    let dof = (n as f64 - 4.0).max(1.0);
    let s2 = sse / dof;
    let cov = jtj.try_inverse().map(|m| m * s2).unwrap_or(Matrix4::from_element(f64::INFINITY));
    // GHz/V -> MHz/V for the tunabilities
    let scale = [1.0, 1.0, 1e3, 1e3];
    let mut covariance = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            covariance[i][j] = cov[(i, j)] * scale[i] * scale[j];
        }
    }
    let gamma_t = p[2] * 1e3;
    let gamma_b = p[3] * 1e3;
    let fitted: Vec<f64> = (0..n).map(|i| model(&p, vt[i], vb[i]).0).collect();
    let span = fitted.iter().copied().fold(f64::NEG_INFINITY, f64::max) - fitted.iter().copied().fold(f64::INFINITY, f64::min);
    let junction_flag =
        classify_junction_values(gamma_t, gamma_b, params.gamma_min_mhz_per_v) || span * 1e3 < params.junction_span_mhz;
    let mut flags = Vec::new();
    if !localizable {
        flags.push(FLAG_UNLOCATABLE.to_string());
    }
    let signs: Vec<f64> = (0..n).map(|i| model(&p, vt[i], vb[i]).1).collect();
    let crosses = signs.iter().any(|&e| e > 0.0) && signs.iter().any(|&e| e < 0.0);
    if !crosses && !junction_flag {
        flags.push(FLAG_VERTEX_UNOBSERVED.to_string());
    }
    Ok(TunabilityFit {
        trace_id,
        delta_ghz: p[0],
        eps_i_ghz: p[1],
        gamma_t_mhz_per_v: gamma_t,
        gamma_b_mhz_per_v: gamma_b,
        covariance,
        residual_mhz: (sse / n as f64).sqrt() * 1e3,
        junction_flag,
        flags,
    })
}

fn classify_junction_values(gamma_t: f64, gamma_b: f64, threshold: f64) -> bool {
    gamma_t.abs().max(gamma_b.abs()) < threshold
}

/// Junction defects show no field tunability.
pub fn classify_junction(fit: &TunabilityFit, threshold_mhz_per_v: f64) -> bool {
    classify_junction_values(fit.gamma_t_mhz_per_v, fit.gamma_b_mhz_per_v, threshold_mhz_per_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linking::TracePoint;
    use crate::ramp::{ramp_path, RampPlan};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Normal;

    fn planted(delta: f64, eps: f64, gt: f64, gb: f64, lo: f64, hi: f64) -> DefectTrace {
        let path = ramp_path(&RampPlan::staircase(lo, hi, 2.0, 0.14)).unwrap();
        let points = path
            .points
            .iter()
            .enumerate()
            .map(|(k, v)| TracePoint {
                step: k,
                v_t: v[0],
                v_b: v[1],
                f_ghz: delta.hypot(eps + 1e-3 * (gt * v[0] + gb * v[1])),
                rate: 1.0,
                segment: path.segment[k],
            })
            .collect();
        DefectTrace { id: 7, points, swept: path.swept }
    }

    #[test]
    fn exemplary_defect_recovered() {
        let t = planted(5.9, 0.4, 102.0, 29.0, -6.0, 6.0);
        let fit = fit_hyperbola(&t, &FitParams::default()).unwrap();
        assert!((fit.delta_ghz / 5.9 - 1.0).abs() < 1e-3);
        assert!((fit.gamma_t_mhz_per_v / 102.0 - 1.0).abs() < 1e-3);
        assert!((fit.gamma_b_mhz_per_v / 29.0 - 1.0).abs() < 1e-3);
        assert!((fit.eps_i_ghz / 0.4 - 1.0).abs() < 1e-3);
        assert!(!fit.junction_flag);
        assert!(fit.flags.is_empty(), "{:?}", fit.flags);
    }

    #[test]
    fn sign_flipped_planting_gives_identical_magnitudes() {
        let a = fit_hyperbola(&planted(5.8, 0.3, 60.0, -20.0, -5.0, 5.0), &FitParams::default()).unwrap();
        let b = fit_hyperbola(&planted(5.8, -0.3, -60.0, 20.0, -5.0, 5.0), &FitParams::default()).unwrap();
        assert!((a.gamma_t_mhz_per_v - b.gamma_t_mhz_per_v).abs() < 1e-6);
        assert!((a.gamma_b_mhz_per_v - b.gamma_b_mhz_per_v).abs() < 1e-6);
        assert!(a.gamma_b_mhz_per_v < 0.0);
    }

    #[test]
    fn far_vertex_trace_is_flagged() {
        // ε stays large and positive across the window
        let t = planted(5.0, 3.0, 30.0, 10.0, -2.0, 2.0);
        let fit = fit_hyperbola(&t, &FitParams::default()).unwrap();
        assert!((fit.gamma_t_mhz_per_v / 30.0 - 1.0).abs() < 0.01, "{}", fit.gamma_t_mhz_per_v);
        assert!((fit.gamma_b_mhz_per_v / 10.0 - 1.0).abs() < 0.01);
        assert!(fit.has_flag(FLAG_VERTEX_UNOBSERVED));
    }

    #[test]
    fn segment_order_does_not_change_the_fit() {
        let t = planted(5.9, 0.1, 40.0, 25.0, -4.0, 4.0);
        let mut r = t.clone();
        r.points.reverse();
        let a = fit_hyperbola(&t, &FitParams::default()).unwrap();
        let b = fit_hyperbola(&r, &FitParams::default()).unwrap();
        assert!((a.gamma_t_mhz_per_v - b.gamma_t_mhz_per_v).abs() < 1e-6);
        assert!((a.gamma_b_mhz_per_v - b.gamma_b_mhz_per_v).abs() < 1e-6);
    }

    #[test]
    fn junction_classification() {
        let flat = planted(6.0, 0.0, 0.0, 0.0, -5.0, 5.0);
        let fit = fit_hyperbola(&flat, &FitParams::default()).unwrap();
        assert!(fit.junction_flag);
        assert_eq!(fit.ratio(), None);
        let mut f = fit.clone();
        f.gamma_t_mhz_per_v = 0.5;
        f.gamma_b_mhz_per_v = 0.0;
        assert!(classify_junction(&f, 1.0));
        f.gamma_t_mhz_per_v = 102.0;
        f.gamma_b_mhz_per_v = 29.0;
        assert!(!classify_junction(&f, 1.0));
    }

    #[test]
    fn covariance_scales_with_noise_variance() {
        let t = planted(5.9, 0.2, 50.0, 20.0, -5.0, 5.0);
        let mut var = Vec::new();
        for sigma in [1e-4, 2e-4] {
            let mut acc = 0.0;
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let nrm = Normal::new(0.0, sigma).unwrap();
                let mut n = t.clone();
                for p in &mut n.points {
                    p.f_ghz += nrm.sample(&mut rng);
                }
                acc += fit_hyperbola(&n, &FitParams::default()).unwrap().covariance[2][2];
            }
            var.push(acc / 20.0);
        }
        let q = var[1] / var[0];
        assert!((q / 4.0 - 1.0).abs() < 0.3, "{q}");
    }

    #[test]
    fn too_few_points_fail() {
        let mut t = planted(5.9, 0.2, 50.0, 20.0, -1.0, 1.0);
        t.points.truncate(3);
        assert!(matches!(fit_hyperbola(&t, &FitParams::default()), Err(Error::FitFailed { .. })));
    }
}
