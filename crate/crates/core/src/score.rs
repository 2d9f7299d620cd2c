//! Round-trip scoring of localizations against planted ground truth.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fit::TunabilityFit;
use crate::interface::Interface;
use crate::localization::{solve_sv_interface, DefectLocalization};
use crate::profiles::InterfaceProfileSet;
use crate::ramp::RampPath;
use crate::spectroscopy::{defect_coupling, defect_frequency, defect_gammas, Defect, QubitParams};

/// Planted defect with the tunabilities and coupling it was rendered with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub id: usize,
    pub interface: Interface,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_nm: Option<f64>,
    #[serde(rename = "p_D")]
    pub p_debye: f64,
    pub alpha_rad: f64,
    #[serde(rename = "delta_GHz")]
    pub delta_ghz: f64,
    #[serde(rename = "eps_i_GHz")]
    pub eps_i_ghz: f64,
    pub gamma2_per_us: f64,
    #[serde(rename = "gamma_t_MHz_per_V")]
    pub gamma_t: f64,
    #[serde(rename = "gamma_b_MHz_per_V")]
    pub gamma_b: f64,
    #[serde(rename = "g_MHz")]
    pub g_mhz: f64,
    /// Whether the defect crosses the band somewhere on the path.
    pub in_band: bool,
}

impl TruthRecord {
    pub fn new(d: &Defect, profiles: &InterfaceProfileSet, qubit: &QubitParams, path: &RampPath) -> Result<Self> {
        let (gt, gb) = defect_gammas(d, profiles)?;
        let [lo, hi] = qubit.band_ghz;
        let in_band = path.points.iter().any(|v| {
            let f = defect_frequency(d, gt, gb, v[0], v[1]);
            f >= lo && f <= hi
        });
        Ok(Self {
            id: d.id,
            interface: d.interface,
            x_nm: d.x_nm,
            p_debye: d.p_debye,
            alpha_rad: d.alpha_rad,
            delta_ghz: d.delta_ghz,
            eps_i_ghz: d.eps_i_ghz,
            gamma2_per_us: d.gamma2_per_us,
            gamma_t: gt,
            gamma_b: gb,
            g_mhz: defect_coupling(d, profiles, qubit)?,
            in_band,
        })
    }

    pub fn is_tunable(&self) -> bool {
        self.interface != Interface::JJ
    }

    /// `(ε_i, γ_t, γ_b)` with the sign convention of the fitter (`γ_t ≥ 0`).
    fn normalized(&self) -> (f64, f64, f64) {
        if self.gamma_t < 0.0 || (self.gamma_t == 0.0 && self.gamma_b < 0.0) {
            (-self.eps_i_ghz, -self.gamma_t, -self.gamma_b)
        } else {
            (self.eps_i_ghz, self.gamma_t, self.gamma_b)
        }
    }

    pub fn ratio(&self) -> Option<f64> {
        (self.gamma_b != 0.0).then(|| self.gamma_t / self.gamma_b)
    }
}

/// Largest matching cost accepted when pairing fits with planted defects.
pub const MATCH_TOLERANCE: f64 = 0.1;

fn match_cost(t: &TruthRecord, f: &TunabilityFit) -> Option<f64> {
    if !t.is_tunable() {
        let f0_t = t.delta_ghz.hypot(t.eps_i_ghz);
        let f0_f = f.delta_ghz.hypot(f.eps_i_ghz);
        let tuning = f.gamma_t_mhz_per_v.abs().max(f.gamma_b_mhz_per_v.abs());
        return (f.junction_flag || tuning < 1.0).then(|| (f0_f - f0_t).abs() * 10.0);
    }
    let (eps, gt, gb) = t.normalized();
    let norm = gt.hypot(gb);
    if norm == 0.0 {
        return None;
    }
    let dg = (f.gamma_t_mhz_per_v - gt).hypot(f.gamma_b_mhz_per_v - gb) / norm;
    let de = (f.eps_i_ghz - eps).abs() / (eps.abs() + t.delta_ghz);
    Some(dg + de)
}

/// Pair each planted defect with at most one fit, cheapest pairs first.
pub fn match_fits(truth: &[TruthRecord], fits: &[TunabilityFit]) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, f) in fits.iter().enumerate() {
            if let Some(c) = match_cost(t, f) {
                if c < MATCH_TOLERANCE {
                    pairs.push((c, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; fits.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

/// Position error of the closest kept solution at the planted interface.
/// SV branches are compared at the planted orientation.
/// Distance from the planted position to the nearest kept solution on the planted interface.
/// On SV the measured ratio is solved at the planted orientation, inside the kept orientation ranges.
pub fn position_error(
    t: &TruthRecord,
    loc: &DefectLocalization,
    profiles: &InterfaceProfileSet,
    alpha_step: f64,
) -> Option<f64> {
    let x = t.x_nm?;
    let kept = loc.solutions.iter().filter(|s| s.interface == t.interface);
    let candidates: Vec<f64> = if t.interface == Interface::SV {
        let a = t.alpha_rad.rem_euclid(PI);
        let covers = |iv: [f64; 2]| {
            [a, a - PI, a + PI].iter().any(|&b| b >= iv[0] - 1.01 * alpha_step && b <= iv[1] + 1.01 * alpha_step)
        };
        if !kept.clone().any(|s| s.alpha_interval_rad.is_some_and(covers)) {
            return None;
        }
        solve_sv_interface(loc.ratio?, profiles, &[a]).into_iter().map(|(_, x)| x).collect()
    } else {
        kept.map(|s| s.x_nm).collect()
    };
    candidates.into_iter().map(|c| (c - x).abs()).min_by(f64::total_cmp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceScore {
    pub interface: Interface,
    /// Planted in-band defects.
    pub planted: usize,
    /// Matched with a ratio inside the tolerance.
    pub ratio_ok: usize,
    /// Ratio-recovered defects whose planted interface carries weight.
    pub true_interface_weighted: usize,
    pub recall: f64,
    pub position_rmse_nm: Option<f64>,
    pub within_position_tolerance: usize,
    pub planted_fraction: f64,
    pub recovered_participation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub ratio_tolerance: f64,
    pub position_tolerance_nm: f64,
    pub interfaces: Vec<InterfaceScore>,
    pub tunable_planted: usize,
    pub tunable_ratio_ok: usize,
    pub tunable_true_weighted: usize,
    pub tunable_within_position: usize,
    /// Tunable defects whose fit was classified as junction.
    pub tunable_misflagged_junction: usize,
    pub junction_planted: usize,
    pub junction_flagged: usize,
    pub unmatched_fits: usize,
    pub participation_delta: [f64; 4],
}

impl ScoreReport {
    pub fn ratio_recall(&self) -> f64 {
        frac(self.tunable_ratio_ok, self.tunable_planted)
    }
}

fn frac(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn score(
    truth: &[TruthRecord],
    fits: &[TunabilityFit],
    locs: &[DefectLocalization],
    profiles: &InterfaceProfileSet,
    ratio_tolerance: f64,
    position_tolerance_nm: f64,
    alpha_step: f64,
) -> ScoreReport {
    let matched = match_fits(truth, fits);
    let loc_of = |trace_id: usize| locs.iter().find(|l| l.trace_id == trace_id);
    let mut planted = [0usize; 4];
    let mut ratio_ok = [0usize; 4];
    let mut weighted = [0usize; 4];
    let mut within = [0usize; 4];
    let mut sq = [0.0; 4];
    let mut n_pos = [0usize; 4];
    let (mut misflag, mut jj_planted, mut jj_flagged) = (0, 0, 0);
    for (t, m) in truth.iter().zip(&matched) {
        if !t.in_band {
            continue;
        }
        if !t.is_tunable() {
            jj_planted += 1;
            if m.is_some_and(|j| fits[j].junction_flag) {
                jj_flagged += 1;
            }
            continue;
        }
        let i = t.interface.index();
        planted[i] += 1;
        let Some(j) = *m else { continue };
        let f = &fits[j];
        if f.junction_flag {
            misflag += 1;
            continue;
        }
        let ok = match (t.ratio(), f.ratio()) {
            (Some(rt), Some(rf)) => ((rf - rt) / rt).abs() <= ratio_tolerance,
            _ => false,
        };
        if !ok {
            continue;
        }
        ratio_ok[i] += 1;
        let Some(loc) = loc_of(f.trace_id) else { continue };
        if loc.solutions.iter().any(|s| s.interface == t.interface && s.weight > 0.0) {
            weighted[i] += 1;
        }
        if let Some(e) = position_error(t, loc, profiles, alpha_step) {
            sq[i] += e * e;
            n_pos[i] += 1;
            if e <= position_tolerance_nm {
                within[i] += 1;
            }
        }
    }
    let total_planted: usize = planted.iter().sum();
    let mut recovered = [0.0; 4];
    let mut located = 0usize;
    for l in locs.iter().filter(|l| !l.unlocated && !l.solutions.is_empty()) {
        located += 1;
        for s in &l.solutions {
            recovered[s.interface.index()] += s.weight;
        }
    }
    let mut interfaces = Vec::new();
    let mut delta = [0.0; 4];
    for (i, &interface) in Interface::FIELD.iter().enumerate() {
        let pf = frac(planted[i], total_planted);
        let rp = if located > 0 { recovered[i] / located as f64 } else { 0.0 };
        delta[i] = rp - pf;
        interfaces.push(InterfaceScore {
            interface,
            planted: planted[i],
            ratio_ok: ratio_ok[i],
            true_interface_weighted: weighted[i],
            recall: frac(weighted[i], planted[i]),
            position_rmse_nm: (n_pos[i] > 0).then(|| (sq[i] / n_pos[i] as f64).sqrt()),
            within_position_tolerance: within[i],
            planted_fraction: pf,
            recovered_participation: rp,
        });
    }
    let used = matched.iter().flatten().count();
    ScoreReport {
        ratio_tolerance,
        position_tolerance_nm,
        interfaces,
        tunable_planted: total_planted,
        tunable_ratio_ok: ratio_ok.iter().sum(),
        tunable_true_weighted: weighted.iter().sum(),
        tunable_within_position: within.iter().sum(),
        tunable_misflagged_junction: misflag,
        junction_planted: jj_planted,
        junction_flagged: jj_flagged,
        unmatched_fits: fits.len() - used,
        participation_delta: delta,
    }
}
