//! Browser bindings: localize a defect from its tunabilities, plot the ratio
//! curves, and fit a synthetic trace, all on the calibrated cross-section.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use tls_locator::fit::{fit_points, FitParams, TunabilityFit};
use tls_locator::localization::{localize_defect, DefectLocalization, LocalizationParams};
use tls_locator::presets::calibrated_qubit;
use tls_locator::profiles::{field_ratio, InterfaceProfileSet, RatioCurve};
use tls_locator::ramp::{ramp_path, RampPlan};
use tls_locator::spectroscopy::{defect_frequency, Defect};
use tls_locator::Interface;
use wasm_bindgen::prelude::*;

static PROFILES_JSON: &str = include_str!("../assets/profiles.json");

fn profiles() -> Result<&'static InterfaceProfileSet, String> {
    static P: OnceLock<Result<InterfaceProfileSet, String>> = OnceLock::new();
    P.get_or_init(|| serde_json::from_str(PROFILES_JSON).map_err(|e| e.to_string())).as_ref().map_err(Clone::clone)
}

fn to_js<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn js_err(e: impl ToString) -> JsValue {
    JsValue::from_str(&e.to_string())
}

pub fn localize_native(gamma_t: f64, gamma_b: f64, cutoff_debye: f64) -> Result<DefectLocalization, String> {
    let fit = TunabilityFit {
        trace_id: 0,
        delta_ghz: 0.0,
        eps_i_ghz: 0.0,
        gamma_t_mhz_per_v: gamma_t,
        gamma_b_mhz_per_v: gamma_b,
        covariance: [[0.0; 4]; 4],
        residual_mhz: 0.0,
        junction_flag: gamma_t.abs().max(gamma_b.abs()) < FitParams::default().gamma_min_mhz_per_v,
        flags: Vec::new(),
    };
    let params = LocalizationParams { cutoff_debye, ..LocalizationParams::default() };
    localize_defect(&fit, profiles()?, &calibrated_qubit(), &params).map_err(|e| e.to_string())
}

/// Candidate positions for tunabilities `γ_t`, `γ_b` (MHz/V) as JSON.
#[wasm_bindgen]
pub fn localize(gamma_t: f64, gamma_b: f64, cutoff_debye: f64) -> Result<String, JsValue> {
    to_js(&localize_native(gamma_t, gamma_b, cutoff_debye).map_err(js_err)?)
}

pub fn ratio_curves_native() -> Result<Vec<RatioCurve>, String> {
    let p = profiles()?;
    Interface::FIELD.iter().map(|&i| field_ratio(p, i).map_err(|e| e.to_string())).collect()
}

/// `E_t/E_b` along every interface as JSON.
#[wasm_bindgen]
pub fn ratio_curves() -> Result<String, JsValue> {
    to_js(&ratio_curves_native().map_err(js_err)?)
}

#[derive(Debug, Serialize)]
pub struct TraceFit {
    /// `(step, f_GHz)` of every in-band sample.
    pub points: Vec<(usize, f64)>,
    pub fitted: Vec<f64>,
    pub fit: TunabilityFit,
}

pub fn fit_trace_native(
    delta_ghz: f64,
    eps_ghz: f64,
    gamma_t: f64,
    gamma_b: f64,
    noise_mhz: f64,
    seed: u64,
) -> Result<TraceFit, String> {
    let path = ramp_path(&RampPlan::paper()).map_err(|e| e.to_string())?;
    let [lo, hi] = calibrated_qubit().band_ghz;
    let d = Defect {
        id: 0,
        interface: Interface::OxV,
        x_nm: Some(15.0),
        p_debye: 1.0,
        alpha_rad: 0.0,
        delta_ghz,
        eps_i_ghz: eps_ghz,
        gamma2_per_us: 2.0,
        g_mhz: None,
    };
    let noise = Normal::new(0.0, 1e-3 * noise_mhz.max(0.0)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut steps, mut vt, mut vb, mut f) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, v) in path.points.iter().enumerate() {
        let fk = defect_frequency(&d, gamma_t, gamma_b, v[0], v[1]);
        if (lo..=hi).contains(&fk) {
            steps.push(k);
            vt.push(v[0]);
            vb.push(v[1]);
            f.push(fk + noise.sample(&mut rng));
        }
    }
    let distinct = |xs: &[f64]| xs.iter().any(|x| *x != xs[0]);
    let localizable = !vt.is_empty() && distinct(&vt) && distinct(&vb);
    let fit = fit_points(0, &vt, &vb, &f, localizable, &FitParams::default()).map_err(|e| e.to_string())?;
    let fitted_defect = Defect { delta_ghz: fit.delta_ghz, eps_i_ghz: fit.eps_i_ghz, ..d };
    let fitted = vt
        .iter()
        .zip(&vb)
        .map(|(a, b)| defect_frequency(&fitted_defect, fit.gamma_t_mhz_per_v, fit.gamma_b_mhz_per_v, *a, *b))
        .collect();
    Ok(TraceFit { points: steps.into_iter().zip(f).collect(), fitted, fit })
}

/// Render a defect along the reference ramp, add Gaussian frequency noise and fit it back.
#[wasm_bindgen]
pub fn fit_trace(
    delta_ghz: f64,
    eps_ghz: f64,
    gamma_t: f64,
    gamma_b: f64,
    noise_mhz: f64,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(&fit_trace_native(delta_ghz, eps_ghz, gamma_t, gamma_b, noise_mhz, seed as u64).map_err(js_err)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exemplary_defect_lands_on_oxv_near_15_nm() {
        let l = localize_native(102.0, 29.0, 10.0).unwrap();
        let oxv = l.solutions.iter().find(|s| s.interface == Interface::OxV).unwrap();
        assert!((oxv.x_nm - 15.0).abs() < 5.0);
        assert!(l.discarded.iter().any(|s| s.interface == Interface::Ox));
    }

    #[test]
    fn curves_cover_all_interfaces() {
        let c = ratio_curves_native().unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|r| r.x_nm.len() == r.ratio.len() && !r.x_nm.is_empty()));
    }

    #[test]
    fn noiseless_trace_fits_back() {
        let t = fit_trace_native(5.8, 0.4, 102.0, 29.0, 0.0, 1).unwrap();
        assert!(t.points.len() > 20);
        assert!((t.fit.gamma_t_mhz_per_v / t.fit.gamma_b_mhz_per_v / (102.0 / 29.0) - 1.0).abs() < 1e-3);
        let js = fit_trace(5.8, 0.4, 102.0, 29.0, 0.5, 2).unwrap();
        assert!(js.contains("\"fit\""));
    }
}
