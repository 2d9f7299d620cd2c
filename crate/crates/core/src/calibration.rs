//! One-time calibration of the effective plate scales and of the qubit
//! zero-point voltage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::Interface;
use crate::localization::solve_film_interface;
use crate::profiles::{field_ratio, InterfaceProfileSet};
use crate::spectroscopy::{coupling_from_field, QubitParams};
use crate::units;

/// Targets fixing the two plate scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateAnchor {
    /// Calibrated OxV ratio at `x_nm`.
    pub ratio: f64,
    pub x_nm: f64,
    /// Reference tunabilities, MHz/V.
    pub gamma_t_mhz_per_v: f64,
    pub gamma_b_mhz_per_v: f64,
    /// Dipole the reference defect needs at its Ox position.
    pub ox_dipole_debye: f64,
}

impl Default for PlateAnchor {
    fn default() -> Self {
        Self { ratio: 3.5, x_nm: 15.0, gamma_t_mhz_per_v: 102.0, gamma_b_mhz_per_v: 29.0, ox_dipole_debye: 30.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateCalibration {
    pub scale_t: f64,
    pub scale_b: f64,
    /// Ox position of the reference defect under the calibrated ratio.
    pub ox_root_nm: f64,
}

/// Fit `scale_t / scale_b` to the OxV ratio anchor, then the common magnitude
/// to the Ox dipole of the reference defect.
pub fn calibrate_plate_scales(profiles: &InterfaceProfileSet, anchor: &PlateAnchor) -> Result<PlateCalibration> {
    let raw = profiles.with_scales(1.0, 1.0);
    let rho = field_ratio(&raw, Interface::OxV)?
        .value_at(anchor.x_nm)
        .ok_or_else(|| Error::Config(format!("anchor x = {} nm outside the OxV profile", anchor.x_nm)))?;
    let k = anchor.ratio / rho;
    let scaled = raw.with_scales(k, 1.0);
    let target = anchor.gamma_t_mhz_per_v / anchor.gamma_b_mhz_per_v;
    let ox_root_nm = solve_film_interface(target, &field_ratio(&scaled, Interface::Ox)?)
        .into_iter()
        .min_by(|a, b| (a - anchor.x_nm).abs().total_cmp(&(b - anchor.x_nm).abs()))
        .ok_or_else(|| Error::Config(format!("reference ratio {target:.3} has no Ox solution")))?;
    let ox = raw.get(Interface::Ox);
    let e_t = ox.locate(ox_root_nm)?.at(&ox.e_t);
    let scale_t = units::dipole_debye(anchor.gamma_t_mhz_per_v, e_t) / anchor.ox_dipole_debye;
    Ok(PlateCalibration { scale_t, scale_b: scale_t / k, ox_root_nm })
}

/// Coupling bound used to fix the zero-point voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingAnchor {
    pub p_debye: f64,
    pub x_nm: f64,
    pub g_mhz: f64,
}

impl Default for CouplingAnchor {
    fn default() -> Self {
        Self { p_debye: 10.0, x_nm: 200.0, g_mhz: 0.05 }
    }
}

/// `v_rms_scale` at which the strongest interface reaches exactly the bound.
pub fn calibrate_v_rms(profiles: &InterfaceProfileSet, qubit: &QubitParams, anchor: &CouplingAnchor) -> Result<f64> {
    let unit = QubitParams { v_rms_scale: 1.0, ..qubit.clone() };
    let mut g_max: f64 = 0.0;
    for i in Interface::FIELD {
        g_max = g_max.max(coupling_from_field(anchor.p_debye, i, anchor.x_nm, profiles, &unit)?);
    }
    if !(g_max > 0.0) {
        return Err(Error::Config("qubit field vanishes at the coupling anchor".into()));
    }
    Ok(anchor.g_mhz / g_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::tests::synthetic_profiles;

    #[test]
    fn plate_scales_hit_both_anchors() {
        let p = synthetic_profiles();
        let a = PlateAnchor::default();
        let c = calibrate_plate_scales(&p, &a).unwrap();
        let cal = p.with_scales(c.scale_t, c.scale_b);
        let r = field_ratio(&cal, Interface::OxV).unwrap().value_at(a.x_nm).unwrap();
        assert!((r - 3.5).abs() < 1e-12);
        let ox = cal.get(Interface::Ox);
        let l = ox.locate(c.ox_root_nm).unwrap();
        let p_ox = units::dipole_debye(a.gamma_t_mhz_per_v, cal.eff_t(ox, l));
        assert!((p_ox - 30.0).abs() < 1e-9, "{p_ox}");
    }

    #[test]
    fn v_rms_bound_is_tight() {
        let p = synthetic_profiles();
        let q = QubitParams::default();
        let s = calibrate_v_rms(&p, &q, &CouplingAnchor::default()).unwrap();
        let q = QubitParams { v_rms_scale: s, ..q };
        let g: Vec<f64> = Interface::FIELD
            .iter()
            .map(|&i| coupling_from_field(10.0, i, 200.0, &p, &q).unwrap())
            .collect();
        assert!(g.iter().all(|&v| v <= 0.05 + 1e-12));
        assert!(g.iter().any(|&v| (v - 0.05).abs() < 1e-12));
    }
}
