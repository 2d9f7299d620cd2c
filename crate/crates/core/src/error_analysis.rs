//! Sensitivity of the interface participations to the electrode distances and
//! to the dipole cutoff.
//!
//! Electrode distances follow a coupled-shift rule: a change `δ_b` of the
//! bottom distance moves the top electrode the opposite way before the top's own
//! shift `δ_t` is applied, so `h_t = h_t0 + δ_t − δ_b` and `h_b = h_b0 + δ_b`.
//! Points whose net top shift leaves the `±range` window are excluded.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::TunabilityFit;
use crate::geometry::{build_geometry, CrossSectionConfig};
use crate::localization::{build_histograms, DefectLocalization, InterfaceHistogram, LocalizationParams};
use crate::pipeline::localize_fits;
use crate::profiles::{simulate_profiles, InterfaceProfileSet};
use crate::spectroscopy::QubitParams;

/// Nominal distance of the top electrode from the chip, μm.
pub const NOMINAL_H_T_UM: f64 = 590.0;
/// Nominal distance of the bottom electrode from the chip, μm.
pub const NOMINAL_H_B_UM: f64 = 815.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta_t_um: f64,
    pub delta_b_um: f64,
    pub h_t_um: f64,
    pub h_b_um: f64,
    pub admissible: bool,
}

/// Full `(δ_t, δ_b)` frame grid, row-major in `δ_t` then `δ_b`.
pub fn sweep_frames(range_um: f64, step_um: f64) -> Result<Vec<SweepPoint>> {
    if !(range_um > 0.0 && step_um > 0.0) {
        return Err(Error::Config("sweep range and step must be positive".into()));
    }
    let n = range_um / step_um;
    if (n - n.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("step {step_um} μm does not divide the range {range_um} μm")));
    }
    let n = n.round() as i64;
    let mut out = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            let (dt, db) = (i as f64 * step_um, j as f64 * step_um);
            let h_t = NOMINAL_H_T_UM + dt - db;
            let h_b = NOMINAL_H_B_UM + db;
            if h_t <= 0.0 || h_b <= 0.0 {
                return Err(Error::Config("sweep reaches non-positive electrode distances".into()));
            }
            out.push(SweepPoint {
                delta_t_um: dt,
                delta_b_um: db,
                h_t_um: h_t,
                h_b_um: h_b,
                admissible: (dt - db).abs() <= range_um + 1e-9,
            });
        }
    }
    Ok(out)
}

pub fn admissible_points(range_um: f64, step_um: f64) -> Result<Vec<SweepPoint>> {
    Ok(sweep_frames(range_um, step_um)?.into_iter().filter(|p| p.admissible).collect())
}

/// Cross-section with the plate offsets scaled to the given electrode distances.
pub fn sweep_config(base: &CrossSectionConfig, h_t_um: f64, h_b_um: f64) -> Result<CrossSectionConfig> {
    if !(h_t_um > 0.0 && h_b_um > 0.0) {
        return Err(Error::Config("electrode distances must be positive".into()));
    }
    Ok(CrossSectionConfig {
        plate_above_offset_um: base.plate_above_offset_um * h_t_um / NOMINAL_H_T_UM,
        plate_below_offset_um: base.plate_below_offset_um * h_b_um / NOMINAL_H_B_UM,
        ..base.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub h_t_um: Option<f64>,
    pub h_b_um: Option<f64>,
    pub cutoff_debye: Option<f64>,
    /// SM, Ox, OxV, SV.
    pub participation: [f64; 4],
    pub located: usize,
    pub unlocated: usize,
    pub kept_solutions: usize,
    pub histogram: InterfaceHistogram,
    /// Weighted mean position of each located fit, by fit order.
    pub mean_x_nm: Vec<Option<f64>>,
}

fn summarize(
    locs: &[DefectLocalization],
    params: &LocalizationParams,
    extent_nm: f64,
    h: Option<(f64, f64)>,
    cutoff: Option<f64>,
) -> SweepResult {
    let histogram = build_histograms(locs, params.bin_width_nm, extent_nm);
    let mean_x_nm = locs
        .iter()
        .map(|l| {
            let w: f64 = l.solutions.iter().map(|s| s.weight).sum();
            (!l.unlocated && w > 0.0).then(|| l.solutions.iter().map(|s| s.weight * s.x_nm).sum::<f64>() / w)
        })
        .collect();
    SweepResult {
        h_t_um: h.map(|h| h.0),
        h_b_um: h.map(|h| h.1),
        cutoff_debye: cutoff,
        participation: histogram.participation,
        located: histogram.located,
        unlocated: histogram.unlocated,
        kept_solutions: locs.iter().map(|l| l.solutions.len()).sum(),
        histogram,
        mean_x_nm,
    }
}

/// Re-solve the fields at every point and re-localize all fits there.
pub fn sweep_electrode_distances(
    base: &CrossSectionConfig,
    points: &[SweepPoint],
    fits: &[TunabilityFit],
    qubit: &QubitParams,
    params: &LocalizationParams,
) -> Result<Vec<SweepResult>> {
    points
        .par_iter()
        .filter(|p| p.admissible)
        .map(|p| {
            let profiles = simulate_profiles(&build_geometry(&sweep_config(base, p.h_t_um, p.h_b_um)?)?)?;
            let locs = localize_fits(fits, &profiles, qubit, params)?;
            Ok(summarize(&locs, params, base.profile_extent_nm, Some((p.h_t_um, p.h_b_um)), None))
        })
        .collect()
}

pub fn cutoff_sweep(
    cutoffs: &[f64],
    fits: &[TunabilityFit],
    profiles: &InterfaceProfileSet,
    qubit: &QubitParams,
    params: &LocalizationParams,
) -> Result<Vec<SweepResult>> {
    if cutoffs.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Config("cutoffs must be positive".into()));
    }
    let extent = profiles.profiles.iter().filter_map(|p| p.x_nm.last().copied()).fold(0.0, f64::max);
    cutoffs
        .par_iter()
        .map(|&c| {
            let p = LocalizationParams { cutoff_debye: c, ..*params };
            let locs = localize_fits(fits, profiles, qubit, &p)?;
            Ok(summarize(&locs, &p, extent, None, Some(c)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipationStats {
    pub mean: [f64; 4],
    /// Sample standard deviation.
    pub std: [f64; 4],
    pub n: usize,
}

pub fn participation_statistics(results: &[SweepResult]) -> Result<ParticipationStats> {
    let n = results.len();
    if n < 2 {
        return Err(Error::Config("participation statistics need at least two results".into()));
    }
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for i in 0..4 {
        let m = results.iter().map(|r| r.participation[i]).sum::<f64>() / n as f64;
        let v = results.iter().map(|r| (r.participation[i] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        mean[i] = m;
        std[i] = v.sqrt();
    }
    Ok(ParticipationStats { mean, std, n })
}

/// Sample spread of each fit's mean position across the results.
pub fn position_spread(results: &[SweepResult]) -> Vec<Option<f64>> {
    let n = results.iter().map(|r| r.mean_x_nm.len()).max().unwrap_or(0);
    (0..n)
        .map(|k| {
            let xs: Vec<f64> = results.iter().filter_map(|r| r.mean_x_nm.get(k).copied().flatten()).collect();
            (xs.len() >= 2).then(|| {
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_grid_shape() {
        let frames = sweep_frames(50.0, 25.0).unwrap();
        assert_eq!(frames.len(), 25);
        let ok: Vec<_> = frames.iter().filter(|p| p.admissible).collect();
        assert_eq!(ok.len(), 19);
        // excluded corners: net top shift beyond the window
        for p in frames.iter().filter(|p| !p.admissible) {
            assert!((p.delta_t_um - p.delta_b_um).abs() > 50.0);
        }
        assert!(ok.iter().any(|p| p.h_t_um == 565.0 && p.h_b_um == 790.0));
    }

    #[test]
    fn full_range_step() {
        let ok = admissible_points(50.0, 50.0).unwrap();
        assert_eq!(sweep_frames(50.0, 50.0).unwrap().len(), 9);
        assert_eq!(ok.len(), 7);
        assert!(ok.iter().any(|p| p.delta_t_um == 0.0 && p.delta_b_um == 0.0));
    }

    #[test]
    fn step_must_divide_range() {
        assert!(sweep_frames(50.0, 30.0).is_err());
        assert!(sweep_frames(50.0, 0.0).is_err());
    }

    #[test]
    fn offsets_scale_with_distance() {
        let base = CrossSectionConfig::default();
        let c = sweep_config(&base, NOMINAL_H_T_UM, NOMINAL_H_B_UM).unwrap();
        assert_eq!(c, base);
        let c = sweep_config(&base, 2.0 * NOMINAL_H_T_UM, 0.5 * NOMINAL_H_B_UM).unwrap();
        assert!((c.plate_above_offset_um - 2.0 * base.plate_above_offset_um).abs() < 1e-12);
        assert!((c.plate_below_offset_um - 0.5 * base.plate_below_offset_um).abs() < 1e-12);
        assert!(sweep_config(&base, 0.0, 1.0).is_err());
    }

    fn result(p: [f64; 4]) -> SweepResult {
        SweepResult {
            h_t_um: None,
            h_b_um: None,
            cutoff_debye: None,
            participation: p,
            located: 1,
            unlocated: 0,
            kept_solutions: 1,
            histogram: build_histograms(&[], 5.0, 10.0),
            mean_x_nm: vec![Some(p[0])],
        }
    }

    #[test]
    fn statistics() {
        let s = participation_statistics(&[result([0.4; 4]), result([0.6; 4])]).unwrap();
        assert!((s.mean[0] - 0.5).abs() < 1e-12);
        assert!((s.std[0] - 0.141_421_356).abs() < 1e-6);
        let s = participation_statistics(&[result([0.3; 4]), result([0.3; 4]), result([0.3; 4])]).unwrap();
        assert_eq!(s.std, [0.0; 4]);
        assert!(participation_statistics(&[result([0.3; 4])]).is_err());
        let spread = position_spread(&[result([0.4; 4]), result([0.6; 4])]);
        assert!((spread[0].unwrap() - 0.141_421_356).abs() < 1e-6);
    }
}
