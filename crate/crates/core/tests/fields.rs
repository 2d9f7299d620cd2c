use std::sync::OnceLock;

use tls_locator::calibration::{calibrate_plate_scales, calibrate_v_rms, CouplingAnchor, PlateAnchor};
use tls_locator::geometry::{build_geometry, CrossSectionConfig};
use tls_locator::localization::solve_film_interface;
use tls_locator::presets::{calibrated_geometry, PLATE_SCALE_B, PLATE_SCALE_T, V_RMS_SCALE};
use tls_locator::profiles::{field_ratio, simulate_profiles, InterfaceProfileSet};
use tls_locator::spectroscopy::QubitParams;
use tls_locator::Interface;

fn profiles() -> &'static InterfaceProfileSet {
    static P: OnceLock<InterfaceProfileSet> = OnceLock::new();
    P.get_or_init(|| simulate_profiles(&build_geometry(&calibrated_geometry()).unwrap()).unwrap())
}

#[test]
fn calibration_reproduces_frozen_constants() {
    let p = profiles();
    let c = calibrate_plate_scales(p, &PlateAnchor::default()).unwrap();
    assert!((c.scale_t / PLATE_SCALE_T - 1.0).abs() < 1e-6, "{}", c.scale_t);
    assert!((c.scale_b / PLATE_SCALE_B - 1.0).abs() < 1e-6, "{}", c.scale_b);
    let v = calibrate_v_rms(p, &QubitParams::default(), &CouplingAnchor::default()).unwrap();
    assert!((v / V_RMS_SCALE - 1.0).abs() < 1e-6, "{v}");
}

#[test]
fn oxv_ratio_crosses_anchor_near_15_nm() {
    let curve = field_ratio(profiles(), Interface::OxV).unwrap();
    let roots = solve_film_interface(3.5, &curve);
    assert!(roots.iter().any(|x| (x - 15.0).abs() <= 5.0), "{roots:?}");
}

#[test]
fn oxide_field_is_an_order_below_the_vacuum_side() {
    let p = profiles();
    let (ox, oxv) = (p.get(Interface::Ox), p.get(Interface::OxV));
    for x in [15.0, 30.0, 60.0, 120.0, 200.0] {
        let r = oxv.locate(x).unwrap().at(&oxv.e_t) / ox.locate(x).unwrap().at(&ox.e_t);
        assert!((r - 10.0).abs() < 1.5, "x {x}: {r}");
    }
}

#[test]
fn calibrated_top_field_exceeds_130_per_volt_near_the_edge() {
    let p = profiles();
    for i in [Interface::SM, Interface::Ox, Interface::OxV] {
        let prof = p.get(i);
        for (x, e) in prof.x_nm.iter().zip(&prof.e_t) {
            if *x <= 200.0 {
                assert!(p.plate_voltage_scale_t * e >= 130.0, "{i} x {x}: {}", p.plate_voltage_scale_t * e);
            }
        }
    }
}

#[test]
fn film_interfaces_have_parallel_fields() {
    for i in [Interface::SM, Interface::Ox, Interface::OxV] {
        assert!(profiles().get(i).alpha_tb.iter().all(|a| *a == 0.0), "{i}");
    }
}

#[test]
fn qubit_field_on_sv_decays_as_inverse_root() {
    let sv = profiles().get(Interface::SV);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (x, e) in sv.x_nm.iter().zip(&sv.e_q) {
        if (20.0..=200.0).contains(x) {
            xs.push(1.0 / x.sqrt());
            ys.push(*e);
        }
    }
    let c = xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / xs.iter().map(|a| a * a).sum::<f64>();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(a, b)| (b - c * a).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|b| (b - mean).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    assert!(r2 >= 0.95, "R² = {r2}");
}

#[test]
fn refining_the_edge_mesh_changes_samples_by_under_two_percent() {
    let base = calibrated_geometry();
    let fine = CrossSectionConfig {
        fine_spacing_nm: 0.5 * base.fine_spacing_nm,
        edge_spacing_nm: 0.5 * base.edge_spacing_nm,
        ..base
    };
    let a = profiles();
    let b = simulate_profiles(&build_geometry(&fine).unwrap()).unwrap();
    let mut worst: (f64, String) = (0.0, String::new());
    for i in Interface::FIELD {
        let (pa, pb) = (a.get(i), b.get(i));
        for (k, x) in pa.x_nm.iter().enumerate() {
            if *x < 1.0 {
                continue;
            }
            let l = pb.locate(*x).unwrap();
            for (name, va, vb) in [
                ("e_t", pa.e_t[k], l.at(&pb.e_t)),
                ("e_b", pa.e_b[k], l.at(&pb.e_b)),
                ("e_q", pa.e_q[k], l.at(&pb.e_q)),
            ] {
                let d = (vb / va - 1.0).abs();
                if d > worst.0 {
                    worst = (d, format!("{i} {name} x {x}"));
                }
            }
        }
    }
    assert!(worst.0 < 0.02, "{:.4} at {}", worst.0, worst.1);
}
