//! Trace refinement against fitted hyperbolas.
//!
//! Linked traces may swap ridges where two defects cross and a slowly tuning
//! defect is usually split into several fragments. Each trace is fitted
//! robustly, the fit then re-collects every peak of the map lying on its
//! hyperbola, and duplicate hypotheses are dropped. Peaks left unexplained are
//! linked again for a second pass.

use serde::{Deserialize, Serialize};

use crate::fit::{fit_points, FitParams, TunabilityFit};
use crate::linking::{link_traces, DefectTrace, LinkParams, TracePoint};
use crate::peaks::Peak;
use crate::ramp::RampPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    /// Inlier gate around a fitted hyperbola, in frequency bins.
    pub gate_bins: f64,
    /// Recollection rounds per hypothesis.
    pub rounds: usize,
    /// Share of a hypothesis' in-band steps that must carry a peak.
    pub min_coverage: f64,
    /// Linking passes over the still unexplained peaks.
    pub passes: usize,
    /// Fraction of points kept by each trimming step of a robust fit.
    pub trim_keep: f64,
    /// Share of a hypothesis' peaks already claimed that marks a duplicate.
    pub duplicate_overlap: f64,
    /// Final outlier cut in robust standard deviations of the residuals.
    pub outlier_mads: f64,
    /// Lower bound of the final outlier cut, in frequency bins.
    pub outlier_floor_bins: f64,
    /// Largest segment distance between two fragments tried as one defect.
    pub pair_segments: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self { gate_bins: 2.0, rounds: 4, min_coverage: 0.5, passes: 2, trim_keep: 0.8, duplicate_overlap: 0.5, outlier_mads: 5.0, outlier_floor_bins: 0.05, pair_segments: 2 }
    }
}

/// Frequency of a fitted hyperbola at `(v_t, v_b)`, GHz.
pub fn fitted_frequency(fit: &TunabilityFit, v_t: f64, v_b: f64) -> f64 {
    let e = fit.eps_i_ghz + 1e-3 * (fit.gamma_t_mhz_per_v * v_t + fit.gamma_b_mhz_per_v * v_b);
    fit.delta_ghz.hypot(e)
}

fn fit_set(id: usize, pts: &[TracePoint], swept: &[crate::ramp::Electrode], params: &FitParams) -> Option<TunabilityFit> {
    let vt: Vec<f64> = pts.iter().map(|p| p.v_t).collect();
    let vb: Vec<f64> = pts.iter().map(|p| p.v_b).collect();
    let f: Vec<f64> = pts.iter().map(|p| p.f_ghz).collect();
    let trace = DefectTrace { id, points: pts.to_vec(), swept: swept.to_vec() };
    if !trace.is_localizable(params.min_points) {
        return None;
    }
    fit_points(id, &vt, &vb, &f, true, params).ok()
}

/// Least-trimmed fit: drop the worst points until every residual is inside the gate.
pub fn robust_fit(
    trace: &DefectTrace,
    gate_ghz: f64,
    keep: f64,
    params: &FitParams,
) -> Option<(TunabilityFit, Vec<TracePoint>)> {
    let mut pts = trace.points.clone();
    loop {
        let fit = fit_set(trace.id, &pts, &trace.swept, params)?;
        let mut res: Vec<(f64, TracePoint)> =
            pts.iter().map(|p| ((fitted_frequency(&fit, p.v_t, p.v_b) - p.f_ghz).abs(), *p)).collect();
        let within = res.iter().filter(|r| r.0 <= gate_ghz).count();
        if within == res.len() {
            return Some((fit, pts));
        }
        let n_keep = if within as f64 >= keep * res.len() as f64 {
            within
        } else {
            ((keep * res.len() as f64).ceil() as usize).min(res.len() - 1)
        };
        res.sort_by(|a, b| a.0.total_cmp(&b.0));
        res.truncate(n_keep);
        res.sort_by_key(|r| r.1.step);
        pts = res.into_iter().map(|r| r.1).collect();
    }
}

struct Hypothesis {
    /// `(step, peak index)` of every collected peak.
    claims: Vec<(usize, usize)>,
    points: Vec<TracePoint>,
}

/// Peaks within the gate of the hyperbola, nearest one per step.
fn collect(fit: &TunabilityFit, peaks: &[Vec<Peak>], path: &RampPath, gate: f64) -> (Vec<(usize, usize)>, Vec<TracePoint>) {
    let mut claims = Vec::new();
    let mut points = Vec::new();
    for (step, column) in peaks.iter().enumerate().take(path.len()) {
        let [vt, vb] = path.points[step];
        let pred = fitted_frequency(fit, vt, vb);
        let best = column
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p.f_ghz - pred).abs()))
            .filter(|&(_, d)| d <= gate)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = best {
            let p = column[i];
            claims.push((step, i));
            points.push(TracePoint { step, v_t: vt, v_b: vb, f_ghz: p.f_ghz, rate: p.rate, segment: path.segment[step] });
        }
    }
    (claims, points)
}

fn in_band_steps(fit: &TunabilityFit, path: &RampPath, band: [f64; 2]) -> usize {
    path.points.iter().filter(|v| (band[0]..=band[1]).contains(&fitted_frequency(fit, v[0], v[1]))).count()
}

fn grow(
    trace: &DefectTrace,
    peaks: &[Vec<Peak>],
    path: &RampPath,
    band: [f64; 2],
    gate: f64,
    params: &RefineParams,
    fit_params: &FitParams,
) -> Option<Hypothesis> {
    let (mut fit, _) = robust_fit(trace, gate, params.trim_keep, fit_params)?;
    let mut claims = Vec::new();
    let mut points = Vec::new();
    for _ in 0..params.rounds.max(1) {
        let (c, p) = collect(&fit, peaks, path, gate);
        if c == claims {
            break;
        }
        let candidate = DefectTrace { id: trace.id, points: p, swept: path.swept.clone() };
        let (f, inliers) = robust_fit(&candidate, gate, params.trim_keep, fit_params)?;
        fit = f;
        let keep: std::collections::HashSet<usize> = inliers.iter().map(|p| p.step).collect();
        claims = c.into_iter().filter(|(s, _)| keep.contains(s)).collect();
        points = inliers;
    }
    if points.is_empty() {
        return None;
    }
    // crossings shift merged peaks; drop them from the final fit
    for _ in 0..3 {
        let mut res: Vec<f64> = points.iter().map(|p| (fitted_frequency(&fit, p.v_t, p.v_b) - p.f_ghz).abs()).collect();
        let limit = {
            let mut sorted = res.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            (params.outlier_mads * 1.4826 * sorted[sorted.len() / 2]).max(params.outlier_floor_bins * gate / params.gate_bins)
        };
        if res.iter().all(|&r| r <= limit) {
            break;
        }
        let tight: Vec<TracePoint> = points.iter().zip(res.drain(..)).filter(|(_, r)| *r <= limit).map(|(p, _)| *p).collect();
        match fit_set(trace.id, &tight, &path.swept, fit_params) {
            Some(f) => {
                fit = f;
                points = tight;
            }
            None => break,
        }
    }
    let expected = in_band_steps(&fit, path, band).max(1);
    if (points.len() as f64) < params.min_coverage * expected as f64 {
        return None;
    }
    Some(Hypothesis { claims, points })
}

/// Accept hypotheses in order of size unless most of their peaks are taken.
/// Returns which candidates were explained by some hypothesis.
fn accept(
    mut hyps: Vec<(usize, Hypothesis)>,
    n_candidates: usize,
    claimed: &mut [Vec<bool>],
    accepted: &mut Vec<Hypothesis>,
    overlap: f64,
) -> Vec<bool> {
    // most complete hypotheses first; the candidate index breaks ties
    hyps.sort_by(|a, b| b.1.points.len().cmp(&a.1.points.len()).then(a.0.cmp(&b.0)));
    let mut explained = vec![false; n_candidates];
    for (k, h) in hyps {
        explained[k] = true;
        let taken = h.claims.iter().filter(|&&(s, i)| claimed[s][i]).count();
        if taken as f64 > overlap * h.claims.len() as f64 {
            continue;
        }
        for &(s, i) in &h.claims {
            claimed[s][i] = true;
        }
        accepted.push(h);
    }
    explained
}

fn unclaimed_points(t: &DefectTrace, peaks: &[Vec<Peak>], claimed: &[Vec<bool>]) -> Vec<TracePoint> {
    t.points
        .iter()
        .filter(|p| {
            !peaks[p.step].iter().zip(&claimed[p.step]).any(|(q, &c)| c && (q.f_ghz - p.f_ghz).abs() < 1e-12)
        })
        .copied()
        .collect()
}

/// Refine linked traces into one clean trace per defect.
///
/// `band` is the frequency span of the map. Returned traces are renumbered;
/// peaks no hypothesis explains come back as their own (usually unlocatable)
/// traces.
#[allow(clippy::too_many_arguments)]
pub fn refine_traces(
    peaks: &[Vec<Peak>],
    path: &RampPath,
    traces: Vec<DefectTrace>,
    band: [f64; 2],
    resolution_ghz: f64,
    link: &LinkParams,
    params: &RefineParams,
    fit_params: &FitParams,
) -> Vec<DefectTrace> {
    use rayon::prelude::*;
    let gate = params.gate_bins * resolution_ghz;
    let mut accepted: Vec<Hypothesis> = Vec::new();
    let mut claimed: Vec<Vec<bool>> = peaks.iter().map(|c| vec![false; c.len()]).collect();
    let mut pending = traces;
    for pass in 0..params.passes.max(1) {
        let hyps: Vec<(usize, Hypothesis)> = pending
            .par_iter()
            .enumerate()
            .filter_map(|(k, t)| grow(t, peaks, path, band, gate, params, fit_params).map(|h| (k, h)))
            .collect();
        let explained = accept(hyps, pending.len(), &mut claimed, &mut accepted, params.duplicate_overlap);
        if pass + 1 == params.passes.max(1) {
            pending = pending.into_iter().zip(explained).filter(|(_, e)| !e).map(|(t, _)| t).collect();
            break;
        }
        let residual: Vec<Vec<Peak>> = peaks
            .iter()
            .zip(&claimed)
            .map(|(c, used)| c.iter().zip(used).filter(|(_, u)| !**u).map(|(p, _)| *p).collect())
            .collect();
        pending = link_traces(&residual, path, resolution_ghz, link);
    }
    // fast defects cross the band within single sweeps; join fragments pairwise
    let mut fragments: Vec<DefectTrace> = pending
        .into_iter()
        .map(|t| DefectTrace { points: unclaimed_points(&t, peaks, &claimed), ..t })
        .filter(|t| t.points.len() >= link.min_points)
        .collect();
    let mut pairs = Vec::new();
    for i in 0..fragments.len() {
        for j in i + 1..fragments.len() {
            let (a, b) = (&fragments[i], &fragments[j]);
            let near = a.segments().iter().any(|&sa| b.segments().iter().any(|&sb| sa.abs_diff(sb) <= params.pair_segments));
            if near {
                pairs.push((i, j));
            }
        }
    }
    let hyps: Vec<(usize, Hypothesis)> = pairs
        .par_iter()
        .enumerate()
        .filter_map(|(k, &(i, j))| {
            let mut points = fragments[i].points.clone();
            points.extend_from_slice(&fragments[j].points);
            points.sort_by_key(|p| p.step);
            let t = DefectTrace { id: fragments[i].id, points, swept: path.swept.clone() };
            grow(&t, peaks, path, band, gate, params, fit_params).map(|h| (k, h))
        })
        .collect();
    accept(hyps, pairs.len(), &mut claimed, &mut accepted, params.duplicate_overlap);
    fragments = fragments
        .into_iter()
        .map(|t| DefectTrace { points: unclaimed_points(&t, peaks, &claimed), ..t })
        .filter(|t| t.points.len() >= link.min_points)
        .collect();
    let mut out: Vec<DefectTrace> = accepted
        .into_iter()
        .map(|h| DefectTrace { id: 0, points: h.points, swept: path.swept.clone() })
        .chain(fragments)
        .collect();
    out.sort_by_key(|t| (t.points[0].step, t.points[0].f_ghz.to_bits()));
    for (k, t) in out.iter_mut().enumerate() {
        t.id = k;
    }
    out
}
