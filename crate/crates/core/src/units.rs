//! Physical constants and the unit conventions used throughout.
//!
//! Energies are expressed as linear frequencies (E/h): tunnelling and
//! asymmetry energies in GHz, tunabilities in MHz per volt, couplings in MHz.
//! Fields are per applied volt, in (V/m)/V.

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// One Debye in C·m.
pub const DEBYE: f64 = 3.335_64e-30;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Default dipole cutoff, Debye (about 2 e·Å).
pub const DEFAULT_CUTOFF_DEBYE: f64 = 10.0;

/// Tunability (MHz/V, energy/h) of a dipole of `p_debye` aligned with a
/// field of `field_per_volt` (V/m)/V: `2 p E / h`.
pub fn gamma_mhz_per_v(p_debye: f64, field_per_volt: f64) -> f64 {
    2.0 * p_debye * DEBYE * field_per_volt / PLANCK * 1e-6
}

/// Inverse of [`gamma_mhz_per_v`]: dipole (Debye) needed to reach `gamma`
/// in a field of `field_per_volt`.
pub fn dipole_debye(gamma_mhz_per_v: f64, field_per_volt: f64) -> f64 {
    gamma_mhz_per_v * 1e6 * PLANCK / (2.0 * field_per_volt * DEBYE)
}

/// Coupling `g/h` in MHz of a dipole projection `p_debye` to a field of
/// `field_v_per_m` (absolute, not per volt).
pub fn coupling_mhz(p_debye: f64, field_v_per_m: f64) -> f64 {
    p_debye * DEBYE * field_v_per_m / PLANCK * 1e-6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_debye_in_130_v_per_m() {
        // constant by constant: 1 D = 0.020819 e·nm
        let p_e_nm = 10.0 * DEBYE / ELEMENTARY_CHARGE * 1e9;
        assert!((p_e_nm - 0.2082).abs() < 1e-3);
        // 2 p E in eV per volt, then eV -> Hz via e/h
        let ev = 2.0 * p_e_nm * 1e-9 * 130.0;
        let hz = ev * ELEMENTARY_CHARGE / PLANCK;
        let g = gamma_mhz_per_v(10.0, 130.0);
        assert!((g - hz * 1e-6).abs() < 1e-9);
        assert!((g - 13.088).abs() < 1e-2, "{g}");
    }

    #[test]
    fn one_debye_tuned_by_130_mhz_at_100_v() {
        let shift = gamma_mhz_per_v(1.0, 130.0) * 100.0;
        assert!((shift - 130.9).abs() < 0.5, "{shift}");
    }

    #[test]
    fn dipole_inverts_gamma() {
        let e = 2.0 * DEBYE / PLANCK * 1e-6;
        // gamma equal to 2 e (1 D) maps back to exactly one Debye
        assert!((dipole_debye(gamma_mhz_per_v(1.0, 412.0), 412.0) - 1.0).abs() < 1e-12);
        assert!((gamma_mhz_per_v(1.0, 1.0) - e).abs() < 1e-18);
    }
}
