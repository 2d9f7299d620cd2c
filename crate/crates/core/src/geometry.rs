//! Film-edge cross-section: geometry and materials.
//!
//! Coordinates are in nanometres with the origin at the substrate-metal-vacuum
//! triple point. The substrate fills `y < 0`, the aluminium film sits on top of
//! it for `x <= 0` with a quarter-round edge, and a thin oxide wraps the film.
//! Two effective plates close the domain above and below; the side walls are
//! symmetry (Neumann) planes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::mesh::Mesh;

/// Minimum fine-mesh margin along every interface, nm.
pub const MIN_FINE_MARGIN_NM: f64 = 220.0;

/// JSON configuration for the cross-section. Lengths carry their unit in the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossSectionConfig {
    pub substrate_permittivity: f64,
    pub oxide_permittivity: f64,
    pub oxide_thickness_nm: f64,
    pub film_thickness_nm: f64,
    /// Quarter-round edge radius; defaults to the film thickness.
    pub edge_radius_nm: Option<f64>,
    pub substrate_thickness_um: f64,
    pub plate_below_offset_um: f64,
    pub plate_above_offset_um: f64,
    pub plate_voltage_scale_t: f64,
    pub plate_voltage_scale_b: f64,
    /// Distance from the edge to each Neumann side wall.
    pub half_width_um: f64,
    /// Extent of the finely meshed margin around the edge.
    pub fine_margin_nm: f64,
    pub fine_spacing_nm: f64,
    /// Spacing at the triple point and along the substrate surface.
    pub edge_spacing_nm: f64,
    pub growth_ratio: f64,
    pub max_spacing_um: f64,
    /// Interface coverage of the exported profiles.
    pub profile_extent_nm: f64,
    /// Distance of each field sample from its surface.
    pub sample_standoff_nm: f64,
    /// Which side of the substrate surface the SV samples sit on.
    pub sv_sample_side: SvSide,
    pub include_film: bool,
    pub include_substrate: bool,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvSide {
    Vacuum,
    Substrate,
}

impl Default for CrossSectionConfig {
    fn default() -> Self {
        Self {
            substrate_permittivity: 10.0,
            oxide_permittivity: 10.0,
            oxide_thickness_nm: 4.0,
            film_thickness_nm: 100.0,
            edge_radius_nm: None,
            substrate_thickness_um: 500.0,
            plate_below_offset_um: 50.0,
            plate_above_offset_um: 100.0,
            plate_voltage_scale_t: 1.0,
            plate_voltage_scale_b: 1.0,
            half_width_um: 20.0,
            fine_margin_nm: 250.0,
            fine_spacing_nm: 0.5,
            edge_spacing_nm: 0.1,
            growth_ratio: 1.2,
            max_spacing_um: 5.0,
            profile_extent_nm: 220.0,
            sample_standoff_nm: 0.2,
            sv_sample_side: SvSide::Vacuum,
            include_film: true,
            include_substrate: true,
            solver_tolerance: 1e-11,
            solver_max_iterations: 50_000,
        }
    }
}

impl CrossSectionConfig {
    /// Both plates only, no chip: the parallel-plate limit.
    pub fn chip_removed() -> Self {
        Self { include_film: false, include_substrate: false, ..Self::default() }
    }

    pub fn edge_radius(&self) -> f64 {
        self.edge_radius_nm.unwrap_or(self.film_thickness_nm)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("oxide_thickness_nm", self.oxide_thickness_nm),
            ("film_thickness_nm", self.film_thickness_nm),
            ("edge_radius_nm", self.edge_radius()),
            ("substrate_thickness_um", self.substrate_thickness_um),
            ("plate_below_offset_um", self.plate_below_offset_um),
            ("plate_above_offset_um", self.plate_above_offset_um),
            ("plate_voltage_scale_t", self.plate_voltage_scale_t),
            ("plate_voltage_scale_b", self.plate_voltage_scale_b),
            ("half_width_um", self.half_width_um),
            ("fine_margin_nm", self.fine_margin_nm),
            ("fine_spacing_nm", self.fine_spacing_nm),
            ("edge_spacing_nm", self.edge_spacing_nm),
            ("max_spacing_um", self.max_spacing_um),
            ("profile_extent_nm", self.profile_extent_nm),
            ("sample_standoff_nm", self.sample_standoff_nm),
            ("solver_tolerance", self.solver_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("substrate_permittivity", self.substrate_permittivity),
            ("oxide_permittivity", self.oxide_permittivity),
        ] {
            if !(v >= 1.0) {
                return Err(Error::Config(format!("{name} must be >= 1, got {v}")));
            }
        }
        if self.oxide_thickness_nm >= self.film_thickness_nm {
            return Err(Error::Config(format!(
                "oxide_thickness_nm ({}) must be smaller than film_thickness_nm ({})",
                self.oxide_thickness_nm, self.film_thickness_nm
            )));
        }
        if self.edge_radius() > self.film_thickness_nm {
            return Err(Error::Config("edge_radius_nm must not exceed film_thickness_nm".into()));
        }
        if self.fine_margin_nm < MIN_FINE_MARGIN_NM {
            return Err(Error::Config(format!(
                "fine_margin_nm = {} is below the required {MIN_FINE_MARGIN_NM} nm",
                self.fine_margin_nm
            )));
        }
        if self.fine_spacing_nm > 1.0 {
            return Err(Error::Config("fine_spacing_nm must be <= 1 nm".into()));
        }
        if self.edge_spacing_nm > self.fine_spacing_nm {
            return Err(Error::Config("edge_spacing_nm must be <= fine_spacing_nm".into()));
        }
        if self.profile_extent_nm > self.fine_margin_nm {
            return Err(Error::Config("profile_extent_nm must lie inside the fine margin".into()));
        }
        if self.sample_standoff_nm >= self.oxide_thickness_nm / 2.0 {
            return Err(Error::Config("sample_standoff_nm must be below half the oxide thickness".into()));
        }
        if !(self.growth_ratio > 1.0 && self.growth_ratio < 2.0) {
            return Err(Error::Config("growth_ratio must lie in (1, 2)".into()));
        }
        if self.half_width_um * 1e3 < 4.0 * self.fine_margin_nm {
            return Err(Error::Config("half_width_um too small for the fine margin".into()));
        }
        Ok(())
    }
}

/// Material occupying a point of the cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Material {
    Metal,
    Oxide,
    Substrate,
    Vacuum,
}

/// Geometry plus mesh, ready to solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionModel {
    pub config: CrossSectionConfig,
    pub mesh: Mesh,
    /// y of the top plate, nm.
    pub top_plate_y: f64,
    /// y of the bottom plate, nm.
    pub bottom_plate_y: f64,
}

/// Validate the config and build the deterministic model and mesh.
pub fn build_geometry(config: &CrossSectionConfig) -> Result<CrossSectionModel> {
    config.validate()?;
    let c = config;
    let sub = c.substrate_thickness_um * 1e3;
    let top = c.plate_above_offset_um * 1e3;
    let bottom = -sub - c.plate_below_offset_um * 1e3;
    let mut model = CrossSectionModel {
        config: c.clone(),
        mesh: Mesh::default(),
        top_plate_y: top,
        bottom_plate_y: bottom,
    };
    let mesh = crate::mesh::generate(c, top, bottom, |x, y| model.material_at(x, y))?;
    model.mesh = mesh;
    Ok(model)
}

impl CrossSectionModel {
    pub fn film_thickness(&self) -> f64 {
        self.config.film_thickness_nm
    }
    pub fn oxide_thickness(&self) -> f64 {
        self.config.oxide_thickness_nm
    }
    pub fn edge_radius(&self) -> f64 {
        self.config.edge_radius()
    }
    pub fn substrate_bottom(&self) -> f64 {
        -self.config.substrate_thickness_um * 1e3
    }

    /// Signed distance to the film (negative inside); `+inf` when the film is absent.
    pub fn film_distance(&self, x: f64, y: f64) -> f64 {
        if !self.config.include_film {
            return f64::INFINITY;
        }
        film_sdf(x, y, self.film_thickness(), self.edge_radius())
    }

    pub fn material_at(&self, x: f64, y: f64) -> Material {
        let sd = self.film_distance(x, y);
        if sd <= 0.0 {
            Material::Metal
        } else if sd <= self.oxide_thickness() && y >= 0.0 {
            Material::Oxide
        } else if self.config.include_substrate && y < 0.0 && y >= self.substrate_bottom() {
            Material::Substrate
        } else {
            Material::Vacuum
        }
    }

    pub fn permittivity(&self, m: Material) -> f64 {
        match m {
            Material::Oxide => self.config.oxide_permittivity,
            Material::Substrate => self.config.substrate_permittivity,
            Material::Vacuum | Material::Metal => 1.0,
        }
    }

    /// Whether a point lies in the closure of dielectric `m` (interface points count for both sides).
    pub fn in_closure(&self, m: Material, x: f64, y: f64) -> bool {
        const TOL: f64 = 1e-7;
        let sd = self.film_distance(x, y);
        if sd < -TOL {
            return false;
        }
        let d = self.oxide_thickness();
        let sub = self.config.include_substrate;
        let bottom = self.substrate_bottom();
        match m {
            Material::Metal => sd.abs() <= TOL,
            Material::Oxide => self.config.include_film && y >= -TOL && sd <= d + TOL,
            Material::Substrate => sub && y <= TOL && y >= bottom - TOL,
            Material::Vacuum => {
                let oxide_interior = self.config.include_film && y > TOL && sd < d - TOL;
                let substrate_interior = sub && y < -TOL && y > bottom + TOL;
                !oxide_interior && !substrate_interior
            }
        }
    }

    /// Point on the metal surface at arc length `s` from the triple point, with outward normal.
    ///
    /// The path climbs the vertical edge face, follows the rounded corner and
    /// continues along the top face.
    pub fn film_surface_point(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let t = self.film_thickness();
        let r = self.edge_radius();
        let straight = t - r;
        let arc = 0.5 * std::f64::consts::PI * r;
        if s <= straight {
            ([0.0, s], [1.0, 0.0])
        } else if s <= straight + arc {
            let th = (s - straight) / r;
            let (sn, cs) = th.sin_cos();
            ([-r + r * cs, straight + r * sn], [cs, sn])
        } else {
            ([-r - (s - straight - arc), t], [0.0, 1.0])
        }
    }

    /// Nearest crossing of the metal surface on the segment `p → q` as a fraction of its length.
    pub fn metal_crossing(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        let f = |u: f64| self.film_distance(p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1]));
        let (mut lo, mut hi) = (0.0, 1.0);
        if f(hi) > 0.0 {
            return 1.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Signed distance to a slab `x <= 0, 0 <= y <= t` whose top-right corner is rounded with radius `r`.
pub fn film_sdf(x: f64, y: f64, t: f64, r: f64) -> f64 {
    let cx = -r;
    let cy = t - r;
    if x > cx && y > cy {
        return (x - cx).hypot(y - cy) - r;
    }
    let ox = x.max(0.0);
    let oy = (-y).max(y - t).max(0.0);
    if ox > 0.0 || oy > 0.0 {
        ox.hypot(oy)
    } else {
        x.max(-y).max(y - t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_has_4nm_oxide_on_film_and_edge() {
        let m = build_geometry(&CrossSectionConfig::default()).unwrap();
        assert_eq!(m.oxide_thickness(), 4.0);
        // atop the flat film
        assert_eq!(m.material_at(-500.0, 102.0), Material::Oxide);
        assert_eq!(m.material_at(-500.0, 104.5), Material::Vacuum);
        assert_eq!(m.material_at(-500.0, 99.0), Material::Metal);
        // around the rounded edge, 45 degrees
        let (p, n) = m.film_surface_point(0.25 * std::f64::consts::PI * 100.0);
        assert_eq!(m.material_at(p[0] + 2.0 * n[0], p[1] + 2.0 * n[1]), Material::Oxide);
        assert_eq!(m.material_at(p[0] + 5.0 * n[0], p[1] + 5.0 * n[1]), Material::Vacuum);
        assert_eq!(m.material_at(p[0] - 1.0 * n[0], p[1] - 1.0 * n[1]), Material::Metal);
        assert_eq!(m.material_at(50.0, -1.0), Material::Substrate);
    }

    #[test]
    fn quarter_round_edge_is_tangent_to_both_faces() {
        let (t, r) = (100.0, 100.0);
        // top face tangent: points on y = t just left of the arc are on the surface
        assert!(film_sdf(-r, t, t, r).abs() < 1e-12);
        // arc meets the substrate at the triple point with vertical tangent
        assert!(film_sdf(0.0, 0.0, t, r).abs() < 1e-12);
        for k in 0..=20 {
            let th = k as f64 / 20.0 * std::f64::consts::FRAC_PI_2;
            let (x, y) = (-r + r * th.cos(), r * th.sin());
            assert!(film_sdf(x, y, t, r).abs() < 1e-9);
        }
        let m = build_geometry(&CrossSectionConfig::default()).unwrap();
        let (p0, n0) = m.film_surface_point(0.0);
        assert_eq!(p0, [0.0, 0.0]);
        assert_eq!(n0, [1.0, 0.0]);
        let (p1, n1) = m.film_surface_point(0.5 * std::f64::consts::PI * 100.0);
        assert!((p1[0] + 100.0).abs() < 1e-9 && (p1[1] - 100.0).abs() < 1e-9);
        assert!(n1[0].abs() < 1e-12 && (n1[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn narrow_fine_margin_is_rejected() {
        let cfg = CrossSectionConfig { fine_margin_nm: 100.0, ..Default::default() };
        assert!(matches!(build_geometry(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn thick_oxide_is_rejected() {
        let cfg = CrossSectionConfig { oxide_thickness_nm: 100.0, ..Default::default() };
        assert!(build_geometry(&cfg).is_err());
    }

    #[test]
    fn mesh_is_deterministic_and_fine_near_edge() {
        let cfg = CrossSectionConfig::default();
        let a = build_geometry(&cfg).unwrap();
        let b = build_geometry(&cfg).unwrap();
        assert_eq!(a.mesh, b.mesh);
        let probes: Vec<[f64; 2]> = crate::Interface::FIELD
            .iter()
            .flat_map(|&i| {
                crate::profiles::sample_coordinates(MIN_FINE_MARGIN_NM).into_iter().map(move |s| (i, s))
            })
            .map(|(i, s)| crate::profiles::sample_point(&a, i, s).0)
            .collect();
        let h = a.mesh.max_edge_near(&probes, 0.25);
        assert!(h <= 1.0, "{h}");
        assert!(a.mesh.max_angle_deg() < 150.0, "{}", a.mesh.max_angle_deg());
        for key in [[0.0, 0.0], [4.0, 0.0], [-100.0, 100.0], [-100.0, 104.0], [-20_000.0, 100_000.0]] {
            assert!(a.mesh.nodes.contains(&key), "{key:?} not a node");
        }
        for (t, m) in a.mesh.triangles.iter().zip(&a.mesh.material) {
            for &k in t {
                let p = a.mesh.nodes[k];
                let inner = a.material_at(p[0], p[1]);
                assert!(inner == *m || a.film_distance(p[0], p[1]).abs() < 1e-6 || p[1].abs() < 1e-9
                    || (a.film_distance(p[0], p[1]) - 4.0).abs() < 1e-6 || p[1] == -500_000.0,
                    "node {p:?} of a {m:?} triangle");
            }
        }
    }
}
