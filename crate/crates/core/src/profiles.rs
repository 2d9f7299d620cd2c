//! Field profiles along the four interfaces and the derived ratio curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CrossSectionModel, Material, SvSide};
use crate::interface::{Excitation, Interface};
use crate::solver::{FieldSolver, PotentialGrid};

/// Per-volt fields sampled along one interface.
///
/// `e_t`, `e_b` and `e_q` are raw 2D-model magnitudes in (V/m)/V; the plate
/// calibration scales live on the owning [`InterfaceProfileSet`]. Direction
/// angles are measured from the +x axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceProfile {
    pub interface: Interface,
    pub x_nm: Vec<f64>,
    pub e_t: Vec<f64>,
    pub e_b: Vec<f64>,
    pub e_q: Vec<f64>,
    pub alpha_tb: Vec<f64>,
    pub dir_t: Vec<f64>,
    pub dir_b: Vec<f64>,
    pub dir_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceProfileSet {
    pub profiles: Vec<InterfaceProfile>,
    pub plate_voltage_scale_t: f64,
    pub plate_voltage_scale_b: f64,
}

/// Linear-interpolation cursor into a sample grid.
#[derive(Debug, Clone, Copy)]
pub struct Lerp {
    pub i: usize,
    pub f: f64,
}

impl Lerp {
    pub fn at(&self, v: &[f64]) -> f64 {
        if self.f == 0.0 {
            v[self.i]
        } else {
            v[self.i] * (1.0 - self.f) + v[self.i + 1] * self.f
        }
    }
}

impl InterfaceProfile {
    pub fn max_x(&self) -> f64 {
        *self.x_nm.last().unwrap()
    }

    pub fn locate(&self, x: f64) -> Result<Lerp> {
        let xs = &self.x_nm;
        if !(x >= xs[0] && x <= self.max_x()) {
            return Err(Error::OutOfCoverage { x_nm: x, max_nm: self.max_x() });
        }
        let i = match xs.binary_search_by(|a| a.partial_cmp(&x).unwrap()) {
            Ok(i) => return Ok(Lerp { i, f: 0.0 }),
            Err(i) => i - 1,
        };
        Ok(Lerp { i, f: (x - xs[i]) / (xs[i + 1] - xs[i]) })
    }

    /// Angle between the top and bottom fields, interpolated through their directions.
    pub fn alpha_tb_at(&self, l: Lerp) -> f64 {
        if self.interface.is_film() {
            return 0.0;
        }
        let dt = interp_angle(&self.dir_t, l);
        let db = interp_angle(&self.dir_b, l);
        angle_between(dt, db)
    }
}

impl InterfaceProfile {
    /// Lab-frame angle of a dipole at `alpha` from the plate-field bisector,
    /// rotated towards the top-plate field.
    pub fn dipole_angle(&self, l: Lerp, alpha: f64) -> f64 {
        let dt = interp_angle(&self.dir_t, l);
        let db = interp_angle(&self.dir_b, l);
        let d = wrap_angle(dt - db);
        let sigma = if d < 0.0 { -1.0 } else { 1.0 };
        db + 0.5 * d + sigma * alpha
    }

    pub fn dir_q_at(&self, l: Lerp) -> f64 {
        interp_angle(&self.dir_q, l)
    }
}

/// Wrap into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

fn interp_angle(v: &[f64], l: Lerp) -> f64 {
    if l.f == 0.0 {
        return v[l.i];
    }
    let a = v[l.i];
    a + l.f * wrap_angle(v[l.i + 1] - a)
}

/// Unsigned angle between two direction angles, in `[0, π]`.
pub fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    if d > std::f64::consts::PI {
        2.0 * std::f64::consts::PI - d
    } else {
        d
    }
}

impl InterfaceProfileSet {
    pub fn get(&self, interface: Interface) -> &InterfaceProfile {
        self.profiles
            .iter()
            .find(|p| p.interface == interface)
            .expect("profile set holds all four interfaces")
    }

    /// Calibrated per-applied-volt top-electrode field at `l`.
    pub fn eff_t(&self, p: &InterfaceProfile, l: Lerp) -> f64 {
        self.plate_voltage_scale_t * l.at(&p.e_t)
    }

    pub fn eff_b(&self, p: &InterfaceProfile, l: Lerp) -> f64 {
        self.plate_voltage_scale_b * l.at(&p.e_b)
    }

    pub fn with_scales(&self, scale_t: f64, scale_b: f64) -> Self {
        Self { plate_voltage_scale_t: scale_t, plate_voltage_scale_b: scale_b, ..self.clone() }
    }
}

/// Potential grids of the three excitations; any may be missing.
#[derive(Debug, Clone, Default)]
pub struct ExcitationGrids {
    pub top: Option<PotentialGrid>,
    pub bottom: Option<PotentialGrid>,
    pub qubit: Option<PotentialGrid>,
}

impl ExcitationGrids {
    /// Solve all three excitations at 1 V with a shared factorization.
    pub fn solve_all(model: &CrossSectionModel) -> Result<Self> {
        let solver = FieldSolver::new(model);
        Ok(Self {
            top: Some(solver.solve(model, Excitation::Top, 1.0)?),
            bottom: Some(solver.solve(model, Excitation::Bottom, 1.0)?),
            qubit: Some(solver.solve(model, Excitation::Qubit, 1.0)?),
        })
    }
}

/// Arc-length coordinates of the profile samples: dense near the edge.
pub fn sample_coordinates(extent: f64) -> Vec<f64> {
    let mut xs = Vec::new();
    let mut k = 0;
    loop {
        let x = if k <= 80 { 0.25 * k as f64 } else { 20.0 + 0.5 * (k - 80) as f64 };
        if x > extent + 1e-9 {
            break;
        }
        xs.push(x);
        k += 1;
    }
    if (xs.last().unwrap() - extent).abs() > 1e-9 {
        xs.push(extent);
    }
    xs
}

/// Sample location, the dielectric it lies in, and the local outward surface normal.
pub fn sample_point(model: &CrossSectionModel, interface: Interface, s: f64) -> ([f64; 2], Material, [f64; 2]) {
    let delta = model.config.sample_standoff_nm;
    let d = model.oxide_thickness();
    let substrate = if model.config.include_substrate { Material::Substrate } else { Material::Vacuum };
    match interface {
        Interface::SM => ([-s, -delta], substrate, [0.0, -1.0]),
        Interface::Ox | Interface::OxV => {
            let (p, n) = model.film_surface_point(s);
            let off = if interface == Interface::Ox { d - delta } else { d + delta };
            let q = [p[0] + off * n[0], p[1] + off * n[1]];
            let m = if interface == Interface::Ox { Material::Oxide } else { Material::Vacuum };
            (q, m, n)
        }
        Interface::SV => {
            let y = match model.config.sv_sample_side {
                SvSide::Vacuum => delta,
                SvSide::Substrate => -delta,
            };
            let q = [s, y];
            (q, model.material_at(q[0], q[1]), [0.0, 1.0])
        }
        Interface::JJ => unreachable!("junction defects see no applied field"),
    }
}

/// Sample the per-volt fields of all three excitations along SM, Ox, OxV and SV.
pub fn extract_interface_profiles(grids: &ExcitationGrids, model: &CrossSectionModel) -> Result<InterfaceProfileSet> {
    let top = grids.top.as_ref().ok_or(Error::MissingExcitation("top"))?;
    let bottom = grids.bottom.as_ref().ok_or(Error::MissingExcitation("bottom"))?;
    let qubit = grids.qubit.as_ref().ok_or(Error::MissingExcitation("qubit"))?;
    let xs = sample_coordinates(model.config.profile_extent_nm);
    let per_volt = |g: &PotentialGrid, p: [f64; 2], m: Material| {
        let e = g.field_at(model, p, m);
        [e[0] * 1e9 / g.volts, e[1] * 1e9 / g.volts]
    };
    let mut profiles = Vec::with_capacity(4);
    for interface in Interface::FIELD {
        let n = xs.len();
        let mut prof = InterfaceProfile {
            interface,
            x_nm: xs.clone(),
            e_t: Vec::with_capacity(n),
            e_b: Vec::with_capacity(n),
            e_q: Vec::with_capacity(n),
            alpha_tb: Vec::with_capacity(n),
            dir_t: Vec::with_capacity(n),
            dir_b: Vec::with_capacity(n),
            dir_q: Vec::with_capacity(n),
        };
        for &s in &xs {
            let (p, m, _) = sample_point(model, interface, s);
            let et = per_volt(top, p, m);
            let eb = per_volt(bottom, p, m);
            let eq = per_volt(qubit, p, m);
            let (at, ab, aq) = (et[1].atan2(et[0]), eb[1].atan2(eb[0]), eq[1].atan2(eq[0]));
            prof.e_t.push(et[0].hypot(et[1]));
            prof.e_b.push(eb[0].hypot(eb[1]));
            prof.e_q.push(eq[0].hypot(eq[1]));
            prof.dir_t.push(at);
            prof.dir_b.push(ab);
            prof.dir_q.push(aq);
            let alpha = if interface.is_film() { 0.0 } else { angle_between(at, ab) };
            // [0, π): an exactly antiparallel pair folds back to zero
            prof.alpha_tb.push(if alpha >= std::f64::consts::PI { 0.0 } else { alpha });
        }
        profiles.push(prof);
    }
    Ok(InterfaceProfileSet {
        profiles,
        plate_voltage_scale_t: model.config.plate_voltage_scale_t,
        plate_voltage_scale_b: model.config.plate_voltage_scale_b,
    })
}

/// Build the geometry, solve all excitations and extract profiles in one go.
pub fn simulate_profiles(model: &CrossSectionModel) -> Result<InterfaceProfileSet> {
    let grids = ExcitationGrids::solve_all(model)?;
    extract_interface_profiles(&grids, model)
}

/// Calibrated ratio `|E_t|/|E_b|` of the magnitudes along one interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub interface: Interface,
    pub x_nm: Vec<f64>,
    pub ratio: Vec<f64>,
    pub monotone: bool,
}

pub fn field_ratio(profiles: &InterfaceProfileSet, interface: Interface) -> Result<RatioCurve> {
    let p = profiles.get(interface);
    let (st, sb) = (profiles.plate_voltage_scale_t, profiles.plate_voltage_scale_b);
    let mut ratio = Vec::with_capacity(p.x_nm.len());
    for (k, (&et, &eb)) in p.e_t.iter().zip(&p.e_b).enumerate() {
        if !(eb > 0.0) {
            return Err(Error::ZeroDenominator { interface: interface.to_string(), x_nm: p.x_nm[k] });
        }
        ratio.push(st * et / (sb * eb));
    }
    let inc = ratio.windows(2).all(|w| w[1] >= w[0]);
    let dec = ratio.windows(2).all(|w| w[1] <= w[0]);
    Ok(RatioCurve { interface, x_nm: p.x_nm.clone(), ratio, monotone: inc || dec })
}

impl RatioCurve {
    pub fn value_at(&self, x: f64) -> Option<f64> {
        let xs = &self.x_nm;
        if !(x >= xs[0] && x <= *xs.last()?) {
            return None;
        }
        let i = xs.partition_point(|&a| a <= x).min(xs.len() - 1).max(1) - 1;
        let f = (x - xs[i]) / (xs[i + 1] - xs[i]);
        Some(self.ratio[i] + f * (self.ratio[i + 1] - self.ratio[i]))
    }

    pub fn min(&self) -> f64 {
        self.ratio.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.ratio.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Synthetic profile set with analytic shapes, for tests that don't need a solve.
    pub fn synthetic_profiles() -> InterfaceProfileSet {
        let xs = sample_coordinates(220.0);
        let mk = |interface: Interface, et: &dyn Fn(f64) -> f64, eb: &dyn Fn(f64) -> f64, alpha: &dyn Fn(f64) -> f64| {
            let n = xs.len();
            let dir_t: Vec<f64> = xs.iter().map(|&x| std::f64::consts::PI + 0.5 * alpha(x)).collect();
            let dir_b: Vec<f64> = xs.iter().map(|&x| std::f64::consts::PI - 0.5 * alpha(x)).collect();
            InterfaceProfile {
                interface,
                x_nm: xs.clone(),
                e_t: xs.iter().map(|&x| et(x)).collect(),
                e_b: xs.iter().map(|&x| eb(x)).collect(),
                e_q: xs.iter().map(|&x| 2.0e5 / (x + 1.0).sqrt()).collect(),
                alpha_tb: xs.iter().map(|&x| alpha(x)).collect(),
                dir_t,
                dir_b,
                dir_q: vec![std::f64::consts::PI; n],
            }
        };
        let zero = |_x: f64| 0.0;
        InterfaceProfileSet {
            profiles: vec![
                mk(Interface::SM, &|x| 3000.0 / (x + 5.0).sqrt(), &|x| 1500.0 / (x + 5.0).sqrt() * (1.0 + x / 400.0), &zero),
                mk(Interface::Ox, &|x| 400.0 * (1.0 + x / 30.0) / (x + 5.0).sqrt(), &|x| 400.0 / (x + 5.0).sqrt(), &zero),
                mk(Interface::OxV, &|x| 4000.0 * (1.0 + x / 30.0) / (x + 5.0).sqrt(), &|x| 4000.0 / (x + 5.0).sqrt(), &zero),
                mk(Interface::SV, &|x| 5000.0 / (x + 5.0).sqrt(), &|x| 2500.0 / (x + 5.0).sqrt(), &|x| 2.5 * x / (x + 60.0)),
            ],
            plate_voltage_scale_t: 1.0,
            plate_voltage_scale_b: 1.0,
        }
    }

    #[test]
    fn identical_profiles_give_unit_ratio() {
        let mut p = synthetic_profiles();
        for prof in &mut p.profiles {
            prof.e_b = prof.e_t.clone();
        }
        let r = field_ratio(&p, Interface::OxV).unwrap();
        assert!(r.ratio.iter().all(|&v| v == 1.0));
        assert!(r.monotone);
    }

    #[test]
    fn zero_denominator_names_position() {
        let mut p = synthetic_profiles();
        p.profiles[2].e_b[10] = 0.0;
        match field_ratio(&p, Interface::OxV) {
            Err(Error::ZeroDenominator { x_nm, .. }) => assert_eq!(x_nm, p.profiles[2].x_nm[10]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scales_multiply_the_ratio() {
        let p = synthetic_profiles();
        let a = field_ratio(&p, Interface::SM).unwrap();
        let b = field_ratio(&p.with_scales(2.0, 1.0), Interface::SM).unwrap();
        for (u, v) in a.ratio.iter().zip(&b.ratio) {
            assert!((2.0 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_grid_is_strictly_increasing_and_covers_extent() {
        let xs = sample_coordinates(220.0);
        assert_eq!(xs[0], 0.0);
        assert_eq!(*xs.last().unwrap(), 220.0);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn angle_between_folds_into_zero_pi() {
        assert!((angle_between(0.1, -0.1) - 0.2).abs() < 1e-12);
        assert!((angle_between(3.0, -3.0) - (2.0 * std::f64::consts::PI - 6.0)).abs() < 1e-12);
    }
}
