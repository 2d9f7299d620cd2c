//! Defect ensembles and synthetic swap-spectroscopy maps.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::Interface;
use crate::profiles::InterfaceProfileSet;
use crate::ramp::RampPath;
use crate::units;

/// A two-level defect.
///
/// On film interfaces `alpha_rad` is the angle between the dipole and the
/// (shared) field direction, so only `0` or `π` give the full moment. On SV it
/// is measured from the bisector of the two plate fields, rotating towards the
/// top-plate field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defect {
    pub id: usize,
    pub interface: Interface,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_nm: Option<f64>,
    pub p_debye: f64,
    pub alpha_rad: f64,
    pub delta_ghz: f64,
    pub eps_i_ghz: f64,
    pub gamma2_per_us: f64,
    /// Coupling override; when absent the coupling follows from the qubit field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QubitParams {
    pub t1_us: f64,
    pub band_ghz: [f64; 2],
    pub resolution_mhz: f64,
    pub frequency_ghz: f64,
    pub capacitance_ff: f64,
    /// Multiplies the zero-point voltage `sqrt(h f / 2C)`.
    pub v_rms_scale: f64,
    /// Log-normal sigma of multiplicative rate noise; zero disables it.
    pub noise_sigma: f64,
}

impl Default for QubitParams {
    fn default() -> Self {
        Self {
            t1_us: 8.3,
            band_ghz: [5.6, 6.3],
            resolution_mhz: 1.5,
            frequency_ghz: 6.0,
            capacitance_ff: 90.0,
            v_rms_scale: 1.0,
            noise_sigma: 0.1,
        }
    }
}

impl QubitParams {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.band_ghz;
        if !(hi > lo) || !(lo > 0.0) {
            return Err(Error::Config(format!("empty analysis band [{lo}, {hi}] GHz")));
        }
        for (name, v) in [
            ("t1_us", self.t1_us),
            ("resolution_mhz", self.resolution_mhz),
            ("frequency_ghz", self.frequency_ghz),
            ("capacitance_ff", self.capacitance_ff),
            ("v_rms_scale", self.v_rms_scale),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn baseline_rate(&self) -> f64 {
        1.0 / self.t1_us
    }

    /// Zero-point voltage of the qubit mode, volts.
    pub fn v_rms(&self) -> f64 {
        let hf = units::PLANCK * self.frequency_ghz * 1e9;
        self.v_rms_scale * (hf / (2.0 * self.capacitance_ff * 1e-15)).sqrt()
    }

    /// Uniform frequency grid spanning the band at the configured resolution.
    pub fn frequency_axis(&self) -> Vec<f64> {
        let [lo, hi] = self.band_ghz;
        let df = self.resolution_mhz * 1e-3;
        let n = ((hi - lo) / df + 1e-9).floor() as usize + 1;
        (0..n).map(|k| lo + k as f64 * df).collect()
    }
}

/// Tunabilities `(γ_t, γ_b)` in MHz/V.
pub fn defect_gammas(defect: &Defect, profiles: &InterfaceProfileSet) -> Result<(f64, f64)> {
    if defect.interface == Interface::JJ {
        return Ok((0.0, 0.0));
    }
    let x = defect.x_nm.ok_or_else(|| Error::Config(format!("defect {} lacks a position", defect.id)))?;
    let prof = profiles.get(defect.interface);
    let l = prof.locate(x)?;
    let (ct, cb) = if defect.interface.is_film() {
        (defect.alpha_rad.cos(), defect.alpha_rad.cos())
    } else {
        let half = 0.5 * prof.alpha_tb_at(l);
        ((defect.alpha_rad - half).cos(), (defect.alpha_rad + half).cos())
    };
    Ok((
        units::gamma_mhz_per_v(defect.p_debye * ct, profiles.eff_t(prof, l)),
        units::gamma_mhz_per_v(defect.p_debye * cb, profiles.eff_b(prof, l)),
    ))
}

/// Transition frequency in GHz at gate voltages `(v_t, v_b)`.
pub fn defect_frequency(defect: &Defect, gamma_t: f64, gamma_b: f64, v_t: f64, v_b: f64) -> f64 {
    defect.delta_ghz.hypot(asymmetry_ghz(defect, gamma_t, gamma_b, v_t, v_b))
}

/// Asymmetry energy in GHz at gate voltages `(v_t, v_b)`.
pub fn asymmetry_ghz(defect: &Defect, gamma_t: f64, gamma_b: f64, v_t: f64, v_b: f64) -> f64 {
    defect.eps_i_ghz + 1e-3 * (gamma_t * v_t + gamma_b * v_b)
}

/// Dipole projection onto the qubit field, Debye.
pub fn qubit_projection(defect: &Defect, profiles: &InterfaceProfileSet) -> Result<f64> {
    let x = defect.x_nm.ok_or_else(|| Error::Config(format!("defect {} lacks a position", defect.id)))?;
    let prof = profiles.get(defect.interface);
    let l = prof.locate(x)?;
    if defect.interface.is_film() {
        return Ok((defect.p_debye * defect.alpha_rad.cos()).abs());
    }
    let theta = prof.dipole_angle(l, defect.alpha_rad);
    Ok((defect.p_debye * (theta - prof.dir_q_at(l)).cos()).abs())
}

/// Coupling `g/h` in MHz of a dipole projection `p_par` at `x` on `interface`.
pub fn coupling_from_field(
    p_par: f64,
    interface: Interface,
    x_nm: f64,
    profiles: &InterfaceProfileSet,
    qubit: &QubitParams,
) -> Result<f64> {
    let prof = profiles.get(interface);
    let l = prof.locate(x_nm)?;
    Ok(units::coupling_mhz(p_par.abs(), l.at(&prof.e_q) * qubit.v_rms()))
}

/// Coupling of a planted defect: the override when present, else from the qubit field.
pub fn defect_coupling(defect: &Defect, profiles: &InterfaceProfileSet, qubit: &QubitParams) -> Result<f64> {
    if let Some(g) = defect.g_mhz {
        return Ok(g);
    }
    if defect.interface == Interface::JJ {
        return Err(Error::Config(format!("junction defect {} needs an explicit coupling", defect.id)));
    }
    let p = qubit_projection(defect, profiles)?;
    coupling_from_field(p, defect.interface, defect.x_nm.unwrap(), profiles, qubit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    pub band_ghz: [f64; 2],
    pub jj_per_ghz: f64,
    pub tunable_per_ghz: f64,
    /// Relative occupation of SM, Ox, OxV and SV.
    pub interface_weights: [f64; 4],
    pub x_range_nm: [f64; 2],
    pub p_range_debye: [f64; 2],
    /// Draw `p` log-uniformly rather than uniformly.
    pub p_log_uniform: bool,
    /// Lower bound of the tunnelling energy; the upper bound is the crossing frequency.
    pub delta_min_ghz: f64,
    /// Diagonal gate voltage at which a tunable defect crosses the band.
    pub crossing_v: [f64; 2],
    pub gamma2_per_us: f64,
    pub jj_g_mhz: [f64; 2],
    /// Fixed coupling for every defect instead of the field-derived or drawn value.
    pub fixed_g_mhz: Option<f64>,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            band_ghz: [5.6, 6.3],
            jj_per_ghz: 16.0,
            tunable_per_ghz: 26.0,
            interface_weights: [1.0; 4],
            x_range_nm: [1.0, 200.0],
            p_range_debye: [0.5, 10.0],
            p_log_uniform: true,
            delta_min_ghz: 5.0,
            crossing_v: [-90.0, 90.0],
            gamma2_per_us: 2.0,
            jj_g_mhz: [0.05, 0.3],
            fixed_g_mhz: None,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.band_ghz;
        if !(hi > lo) {
            return Err(Error::Config(format!("empty analysis band [{lo}, {hi}] GHz")));
        }
        if !(self.jj_per_ghz >= 0.0 && self.tunable_per_ghz >= 0.0) {
            return Err(Error::Config("densities must be non-negative".into()));
        }
        if self.interface_weights.iter().any(|w| !(*w >= 0.0)) || self.interface_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("interface weights must be non-negative with a positive sum".into()));
        }
        let [p0, p1] = self.p_range_debye;
        if !(p0 > 0.0 && p1 >= p0 && p1 <= units::DEFAULT_CUTOFF_DEBYE) {
            return Err(Error::Config("dipole range must lie in (0, 10] D".into()));
        }
        let [x0, x1] = self.x_range_nm;
        if !(x0 >= 0.0 && x1 >= x0) {
            return Err(Error::Config("invalid position range".into()));
        }
        if !(self.delta_min_ghz > 0.0 && self.delta_min_ghz < hi) {
            return Err(Error::Config("delta_min_ghz must be positive and below the band top".into()));
        }
        if !(self.gamma2_per_us > 0.0) {
            return Err(Error::Config("gamma2_per_us must be positive".into()));
        }
        Ok(())
    }
}

fn poisson(rng: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).unwrap().sample(rng) as usize
}

/// Draw a reproducible ensemble. Tunable defects are placed so their
/// frequency crosses the band near a random point on the voltage diagonal.
pub fn sample_defect_ensemble(spec: &EnsembleSpec, profiles: &InterfaceProfileSet, seed: u64) -> Result<Vec<Defect>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = spec.band_ghz;
    let bw = hi - lo;
    let n_jj = poisson(&mut rng, spec.jj_per_ghz * bw);
    let n_tun = poisson(&mut rng, spec.tunable_per_ghz * bw);
    let mut out = Vec::with_capacity(n_jj + n_tun);
    for _ in 0..n_jj {
        let f = rng.gen_range(lo..hi);
        let phi = rng.gen_range(0.0..std::f64::consts::FRAC_PI_3);
        out.push(Defect {
            id: out.len(),
            interface: Interface::JJ,
            x_nm: None,
            p_debye: rng.gen_range(spec.p_range_debye[0]..=spec.p_range_debye[1]),
            alpha_rad: 0.0,
            delta_ghz: f * phi.cos(),
            eps_i_ghz: f * phi.sin(),
            gamma2_per_us: spec.gamma2_per_us,
            g_mhz: Some(spec.fixed_g_mhz.unwrap_or(rng.gen_range(spec.jj_g_mhz[0]..=spec.jj_g_mhz[1]))),
        });
    }
    let total_w: f64 = spec.interface_weights.iter().sum();
    for _ in 0..n_tun {
        let mut u = rng.gen_range(0.0..total_w);
        let mut which = 3;
        for (k, w) in spec.interface_weights.iter().enumerate() {
            if u < *w {
                which = k;
                break;
            }
            u -= w;
        }
        let interface = Interface::FIELD[which];
        let x = rng.gen_range(spec.x_range_nm[0]..=spec.x_range_nm[1]);
        let [p0, p1] = spec.p_range_debye;
        let p = if spec.p_log_uniform { (rng.gen_range(p0.ln()..=p1.ln())).exp() } else { rng.gen_range(p0..=p1) };
        let alpha = if interface.is_film() {
            if rng.gen_bool(0.5) {
                0.0
            } else {
                std::f64::consts::PI
            }
        } else {
            rng.gen_range(0.0..std::f64::consts::PI)
        };
        let f_star = rng.gen_range(lo..hi);
        let delta = rng.gen_range(spec.delta_min_ghz.min(f_star)..=f_star);
        let v_star = rng.gen_range(spec.crossing_v[0]..=spec.crossing_v[1]);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut d = Defect {
            id: out.len(),
            interface,
            x_nm: Some(x),
            p_debye: p,
            alpha_rad: alpha,
            delta_ghz: delta,
            eps_i_ghz: 0.0,
            gamma2_per_us: spec.gamma2_per_us,
            g_mhz: spec.fixed_g_mhz,
        };
        let (gt, gb) = defect_gammas(&d, profiles)?;
        let eps_star = sign * (f_star * f_star - delta * delta).max(0.0).sqrt();
        d.eps_i_ghz = eps_star - 1e-3 * (gt + gb) * v_star;
        out.push(d);
    }
    Ok(out)
}

/// Relaxation-rate map over voltage steps and frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroscopyMap {
    pub voltages: Vec<[f64; 2]>,
    pub f_ghz: Vec<f64>,
    /// Row-major, one row of `f_ghz.len()` rates per voltage step, 1/μs.
    pub rates: Vec<f64>,
}

impl SpectroscopyMap {
    pub fn n_steps(&self) -> usize {
        self.voltages.len()
    }
    pub fn n_freq(&self) -> usize {
        self.f_ghz.len()
    }
    pub fn row(&self, step: usize) -> &[f64] {
        let n = self.n_freq();
        &self.rates[step * n..(step + 1) * n]
    }
    pub fn resolution_ghz(&self) -> f64 {
        if self.f_ghz.len() < 2 {
            return 0.0;
        }
        (self.f_ghz[self.f_ghz.len() - 1] - self.f_ghz[0]) / (self.f_ghz.len() - 1) as f64
    }
}

/// Lorentzian relaxation rate (1/μs) at detuning `df_mhz` for coupling `g_mhz`.
pub fn lorentzian_rate(g_mhz: f64, gamma2_per_us: f64, df_mhz: f64) -> f64 {
    let g = 2.0 * std::f64::consts::PI * g_mhz;
    let w = 2.0 * std::f64::consts::PI * df_mhz;
    2.0 * g * g * gamma2_per_us / (gamma2_per_us * gamma2_per_us + w * w)
}

#[derive(Debug, Clone, Copy)]
struct Line {
    gamma_t: f64,
    gamma_b: f64,
    delta: f64,
    eps: f64,
    gamma2: f64,
    g: f64,
}

impl Line {
    fn key(&self) -> [u64; 6] {
        [self.delta, self.eps, self.gamma_t, self.gamma_b, self.gamma2, self.g].map(|v| v.to_bits())
    }
}

/// Synthesize the rate map along `path`. Returns the map and warnings for
/// defects that never enter the band. `noise_seed` drives the optional
/// multiplicative noise.
pub fn simulate_swap_spectroscopy(
    ensemble: &[Defect],
    path: &RampPath,
    qubit: &QubitParams,
    profiles: &InterfaceProfileSet,
    noise_seed: u64,
) -> Result<(SpectroscopyMap, Vec<String>)> {
    qubit.validate()?;
    let f_axis = qubit.frequency_axis();
    let [lo, hi] = qubit.band_ghz;
    let mut lines = Vec::with_capacity(ensemble.len());
    let mut warnings = Vec::new();
    for d in ensemble {
        let (gt, gb) = defect_gammas(d, profiles)?;
        let g = defect_coupling(d, profiles, qubit)?;
        let in_band = path.points.iter().any(|v| {
            let f = defect_frequency(d, gt, gb, v[0], v[1]);
            f >= lo && f <= hi
        });
        if !in_band {
            warnings.push(format!("defect {} never enters the band", d.id));
        }
        lines.push(Line { gamma_t: gt, gamma_b: gb, delta: d.delta_ghz, eps: d.eps_i_ghz, gamma2: d.gamma2_per_us, g });
    }
    // fixed summation order regardless of input order
    lines.sort_by_key(|l| l.key());
    let nf = f_axis.len();
    let base = qubit.baseline_rate();
    let mut rates = vec![base; path.len() * nf];
    rates.par_chunks_mut(nf).zip(path.points.par_iter()).for_each(|(row, v)| {
        for l in &lines {
            let f0 = l.delta.hypot(l.eps + 1e-3 * (l.gamma_t * v[0] + l.gamma_b * v[1]));
            for (r, f) in row.iter_mut().zip(&f_axis) {
                *r += lorentzian_rate(l.g, l.gamma2, (f - f0) * 1e3);
            }
        }
    });
    if qubit.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let ln = LogNormal::new(0.0, qubit.noise_sigma).unwrap();
        for r in rates.iter_mut() {
            *r *= ln.sample(&mut rng);
        }
    }
    Ok((SpectroscopyMap { voltages: path.points.clone(), f_ghz: f_axis, rates }, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::tests::synthetic_profiles;
    use crate::ramp::{ramp_path, RampPlan};

    fn defect(interface: Interface, x: f64, p: f64, alpha: f64) -> Defect {
        Defect {
            id: 0,
            interface,
            x_nm: Some(x),
            p_debye: p,
            alpha_rad: alpha,
            delta_ghz: 5.9,
            eps_i_ghz: 0.0,
            gamma2_per_us: 2.0,
            g_mhz: Some(0.2),
        }
    }

    #[test]
    fn three_four_five() {
        let mut d = defect(Interface::OxV, 10.0, 1.0, 0.0);
        d.delta_ghz = 6.0;
        assert!((defect_frequency(&d, 100.0, 0.0, 80.0, 0.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn vertex_and_asymptote() {
        let mut d = defect(Interface::OxV, 10.0, 1.0, 0.0);
        d.eps_i_ghz = -1.0;
        assert_eq!(defect_frequency(&d, 50.0, 50.0, 10.0, 10.0), d.delta_ghz);
        let f = defect_frequency(&d, 100.0, 0.0, 1e6, 0.0);
        // approaches the straight line |ε + γV| from above, offset Δ²/2f
        let line = 100.0e-3 * 1e6 - 1.0;
        assert!(f > line && f - line < d.delta_ghz.powi(2) / (2.0 * line) * 1.001);
    }

    #[test]
    fn orthogonal_sv_dipole_is_untunable() {
        let p = synthetic_profiles();
        let mut d = defect(Interface::SV, 0.0, 5.0, 0.5 * std::f64::consts::PI);
        d.x_nm = Some(0.0);
        // α_tb = 0 at x = 0 on the synthetic SV curve
        let (gt, gb) = defect_gammas(&d, &p).unwrap();
        assert!(gt.abs() < 1e-12 && gb.abs() < 1e-12);
    }

    #[test]
    fn film_ratio_passes_through() {
        let mut p = synthetic_profiles();
        for prof in &mut p.profiles {
            prof.e_t = prof.e_b.iter().map(|v| 3.5 * v).collect();
        }
        let (gt, gb) = defect_gammas(&defect(Interface::OxV, 37.3, 4.0, 0.0), &p).unwrap();
        assert!((gt / gb - 3.5).abs() < 1e-12);
    }

    #[test]
    fn junction_defects_have_no_tunability() {
        let p = synthetic_profiles();
        let mut d = defect(Interface::JJ, 0.0, 5.0, 0.0);
        d.x_nm = None;
        assert_eq!(defect_gammas(&d, &p).unwrap(), (0.0, 0.0));
        let spec = EnsembleSpec { tunable_per_ghz: 0.0, ..Default::default() };
        for d in sample_defect_ensemble(&spec, &p, 3).unwrap() {
            assert_eq!(defect_gammas(&d, &p).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn out_of_coverage_is_an_error() {
        let p = synthetic_profiles();
        let d = defect(Interface::SM, 250.0, 1.0, 0.0);
        assert!(matches!(defect_gammas(&d, &p), Err(Error::OutOfCoverage { .. })));
    }

    #[test]
    fn ensemble_is_reproducible_and_matches_densities() {
        let p = synthetic_profiles();
        let spec = EnsembleSpec::default();
        assert_eq!(sample_defect_ensemble(&spec, &p, 11).unwrap(), sample_defect_ensemble(&spec, &p, 11).unwrap());
        let (mut jj, mut tun) = (0usize, 0usize);
        let n = 400;
        for s in 0..n {
            for d in sample_defect_ensemble(&spec, &p, s).unwrap() {
                if d.interface == Interface::JJ {
                    jj += 1;
                } else {
                    tun += 1;
                }
            }
        }
        // 16 and 26 per GHz over 0.7 GHz: 11.2 and 18.2
        let (mj, mt) = (jj as f64 / n as f64, tun as f64 / n as f64);
        assert!((mj - 11.2).abs() < 4.0 * (11.2f64 / n as f64).sqrt(), "{mj}");
        assert!((mt - 18.2).abs() < 4.0 * (18.2f64 / n as f64).sqrt(), "{mt}");
    }

    #[test]
    fn empty_band_is_rejected() {
        let spec = EnsembleSpec { band_ghz: [6.0, 6.0], ..Default::default() };
        assert!(sample_defect_ensemble(&spec, &synthetic_profiles(), 0).is_err());
    }

    #[test]
    fn tunable_defects_cross_the_band_at_their_anchor() {
        let p = synthetic_profiles();
        let spec = EnsembleSpec { jj_per_ghz: 0.0, ..Default::default() };
        for d in sample_defect_ensemble(&spec, &p, 5).unwrap() {
            let (gt, gb) = defect_gammas(&d, &p).unwrap();
            let hit = (0..=1800).any(|k| {
                let v = -90.0 + 0.1 * k as f64;
                let f = defect_frequency(&d, gt, gb, v, v);
                (5.6..=6.3).contains(&f)
            });
            assert!(hit, "{d:?}");
        }
    }

    fn small_path() -> RampPath {
        ramp_path(&RampPlan::staircase(-5.0, 5.0, 2.5, 0.14)).unwrap()
    }

    #[test]
    fn empty_ensemble_gives_flat_baseline() {
        let q = QubitParams { noise_sigma: 0.0, ..Default::default() };
        let (m, w) = simulate_swap_spectroscopy(&[], &small_path(), &q, &synthetic_profiles(), 0).unwrap();
        assert!(w.is_empty());
        assert!(m.rates.iter().all(|&r| r == q.baseline_rate()));
        assert_eq!(m.n_freq(), 467);
        assert!((m.resolution_ghz() - 1.5e-3).abs() < 1e-12);
    }

    #[test]
    fn map_is_invariant_under_reordering() {
        let p = synthetic_profiles();
        let q = QubitParams::default();
        let spec = EnsembleSpec { fixed_g_mhz: Some(0.2), ..Default::default() };
        let mut e = sample_defect_ensemble(&spec, &p, 9).unwrap();
        let (a, _) = simulate_swap_spectroscopy(&e, &small_path(), &q, &p, 1).unwrap();
        e.reverse();
        let (b, _) = simulate_swap_spectroscopy(&e, &small_path(), &q, &p, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_defect_ridge_follows_its_hyperbola() {
        let p = synthetic_profiles();
        let q = QubitParams { noise_sigma: 0.0, ..Default::default() };
        let mut d = defect(Interface::OxV, 20.0, 3.0, 0.0);
        d.delta_ghz = 5.9;
        let path = small_path();
        let (m, _) = simulate_swap_spectroscopy(std::slice::from_ref(&d), &path, &q, &p, 0).unwrap();
        let (gt, gb) = defect_gammas(&d, &p).unwrap();
        for (k, v) in path.points.iter().enumerate() {
            let f0 = defect_frequency(&d, gt, gb, v[0], v[1]);
            let row = m.row(k);
            let (imax, _) = row.iter().enumerate().fold((0, 0.0), |a, (i, &r)| if r > a.1 { (i, r) } else { a });
            assert!((m.f_ghz[imax] - f0).abs() <= 0.5 * 1.5e-3 + 1e-12);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let p = synthetic_profiles();
        let q = QubitParams::default();
        let (a, _) = simulate_swap_spectroscopy(&[], &small_path(), &q, &p, 4).unwrap();
        let (b, _) = simulate_swap_spectroscopy(&[], &small_path(), &q, &p, 4).unwrap();
        let (c, _) = simulate_swap_spectroscopy(&[], &small_path(), &q, &p, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_point_voltage_of_default_qubit() {
        // sqrt(h · 6 GHz / (2 · 90 fF))
        let v = (6.62607015e-34f64 * 6e9 / 1.8e-13).sqrt();
        assert!((QubitParams::default().v_rms() - v).abs() < 1e-15);
        assert!((v - 4.70e-6).abs() < 0.01e-6);
    }

    #[test]
    fn voltage_scaling_scales_asymmetry() {
        let d = defect(Interface::OxV, 20.0, 3.0, 0.0);
        let (gt, gb) = (40.0, 12.0);
        let e1 = asymmetry_ghz(&d, gt, gb, 3.0, -2.0);
        let e2 = asymmetry_ghz(&d, gt, gb, 6.0, -4.0);
        assert_eq!(e2, 2.0 * e1);
    }
}
