//! Frozen calibration of the default cross-section and the reference run settings.

use crate::geometry::CrossSectionConfig;
use crate::spectroscopy::QubitParams;

/// Top-plate scale from the OxV-ratio and Ox-dipole anchors.
pub const PLATE_SCALE_T: f64 = 0.086_702_166_974_117_58;
/// Bottom-plate scale from the same anchors.
pub const PLATE_SCALE_B: f64 = 0.025_301_464_196_276_15;
/// Zero-point voltage multiplier from the 10 D at 200 nm coupling bound.
pub const V_RMS_SCALE: f64 = 7.616_721_838_334_956;

/// Fine electrode-distance sweep step, μm.
pub const SWEEP_STEP_FINE_UM: f64 = 10.0;
/// Coarse step of the sweep grid, μm.
pub const SWEEP_STEP_COARSE_UM: f64 = 25.0;

pub fn calibrated_geometry() -> CrossSectionConfig {
    CrossSectionConfig {
        plate_voltage_scale_t: PLATE_SCALE_T,
        plate_voltage_scale_b: PLATE_SCALE_B,
        ..CrossSectionConfig::default()
    }
}

pub fn calibrated_qubit() -> QubitParams {
    QubitParams { v_rms_scale: V_RMS_SCALE, ..QubitParams::default() }
}
