//! Conforming triangular mesh of the cross-section.
//!
//! Every material interface is a chain of constrained edges, so each triangle
//! lies in a single material. Interior points come from a quadtree refined
//! against a size field that is finest at the triple points, fine along the
//! interfaces near the edge and grows linearly with distance elsewhere.

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{film_sdf, CrossSectionConfig, Material};

/// Triangle mesh with one material per triangle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub material: Vec<Material>,
    /// Bitmask of the materials of the triangles touching each node.
    pub closure: Vec<u8>,
    /// Node indices sorted by x, for window queries.
    by_x: Vec<usize>,
}

pub(crate) fn material_bit(m: Material) -> u8 {
    match m {
        Material::Metal => 1,
        Material::Oxide => 2,
        Material::Substrate => 4,
        Material::Vacuum => 8,
    }
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Longest edge of the non-metal triangles with a vertex within `radius` of any probe.
    pub fn max_edge_near(&self, probes: &[[f64; 2]], radius: f64) -> f64 {
        let mut near = vec![false; self.nodes.len()];
        for p in probes {
            for k in self.nodes_within(*p, radius) {
                near[k] = true;
            }
        }
        let mut h: f64 = 0.0;
        for (t, m) in self.triangles.iter().zip(&self.material) {
            if *m == Material::Metal || !t.iter().any(|&k| near[k]) {
                continue;
            }
            for e in 0..3 {
                let (a, b) = (self.nodes[t[e]], self.nodes[t[(e + 1) % 3]]);
                h = h.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        h
    }

    /// Largest interior angle over all non-metal triangles, degrees.
    pub fn max_angle_deg(&self) -> f64 {
        let mut worst = 0.0f64;
        for (t, m) in self.triangles.iter().zip(&self.material) {
            if *m == Material::Metal {
                continue;
            }
            for e in 0..3 {
                let (a, b, c) = (self.nodes[t[e]], self.nodes[t[(e + 1) % 3]], self.nodes[t[(e + 2) % 3]]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cosang = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                worst = worst.max(cosang.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        worst
    }

    /// Nodes within `r` of `p`, in ascending index order.
    pub fn nodes_within(&self, p: [f64; 2], r: f64) -> Vec<usize> {
        let lo = self.by_x.partition_point(|&k| self.nodes[k][0] < p[0] - r);
        let mut out: Vec<usize> = self.by_x[lo..]
            .iter()
            .take_while(|&&k| self.nodes[k][0] <= p[0] + r)
            .copied()
            .filter(|&k| {
                let q = self.nodes[k];
                (q[0] - p[0]).hypot(q[1] - p[1]) <= r
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// Distance from a triple point over which the element size doubles.
const CORNER_SCALE_NM: f64 = 2.5;

/// Target element size at each point.
#[derive(Debug, Clone)]
pub struct SizeField {
    h_edge: f64,
    h_fine: f64,
    grade: f64,
    h_max: f64,
    corners: Vec<[f64; 2]>,
    fine_box: [f64; 4],
    film: Option<(f64, f64, f64)>,
    surface: bool,
}

impl SizeField {
    pub fn new(c: &CrossSectionConfig) -> Self {
        let t = c.film_thickness_nm;
        let d = c.oxide_thickness_nm;
        let fm = c.fine_margin_nm;
        let mut corners = Vec::new();
        if c.include_film {
            corners.push([0.0, 0.0]);
            corners.push([d, 0.0]);
        }
        Self {
            h_edge: c.edge_spacing_nm,
            h_fine: c.fine_spacing_nm,
            grade: c.growth_ratio - 1.0,
            h_max: c.max_spacing_um * 1e3,
            corners,
            fine_box: [-fm, fm, -fm, t + d + fm],
            film: c.include_film.then(|| (t, c.edge_radius(), d)),
            surface: c.include_film || c.include_substrate,
        }
    }

    pub fn at(&self, p: [f64; 2]) -> f64 {
        let mut h = self.h_max;
        for c in &self.corners {
            let hc = self.h_edge * (1.0 + (p[0] - c[0]).hypot(p[1] - c[1]) / CORNER_SCALE_NM);
            if hc < self.h_fine {
                h = h.min(hc);
            }
        }
        let [x0, x1, y0, y1] = self.fine_box;
        let outside = (x0 - p[0]).max(p[0] - x1).max(0.0).hypot((y0 - p[1]).max(p[1] - y1).max(0.0));
        let mut di = f64::INFINITY;
        if self.surface {
            di = p[1].abs();
        }
        if let Some((t, r, d)) = self.film {
            let s = film_sdf(p[0], p[1], t, r);
            di = di.min(s.abs());
            if p[1] >= 0.0 {
                di = di.min((s - d).abs());
            }
        }
        if di.is_finite() {
            h = h.min(self.h_fine + self.grade * di.max(outside));
        }
        h
    }
}

struct Builder<'a> {
    size: &'a SizeField,
    points: Vec<[f64; 2]>,
    edges: Vec<[usize; 2]>,
}

impl Builder<'_> {
    fn vertex(&mut self, p: [f64; 2]) -> usize {
        if let Some(k) = self.points.iter().position(|q| q == &p) {
            return k;
        }
        self.points.push(p);
        self.points.len() - 1
    }

    /// Constrained polyline along `curve(u)`, `u ∈ [0, 1]`, of length `len`,
    /// spaced by the size field.
    fn curve(&mut self, a: [f64; 2], b: [f64; 2], len: f64, curve: impl Fn(f64) -> [f64; 2]) {
        let ia = self.vertex(a);
        let mut table = vec![(0.0, 0.0)];
        let mut u = 0.0;
        let mut acc = 0.0;
        while u < 1.0 {
            let h = self.size.at(curve(u));
            let du = (h / (8.0 * len)).min(1.0 - u);
            acc += du * len / self.size.at(curve(u + 0.5 * du));
            u += du;
            table.push((u, acc));
        }
        let n = acc.ceil().max(1.0) as usize;
        let mut prev = ia;
        let mut ti = 0;
        for k in 1..n {
            let target = acc * k as f64 / n as f64;
            while table[ti + 1].1 < target {
                ti += 1;
            }
            let (u0, a0) = table[ti];
            let (u1, a1) = table[ti + 1];
            let uu = u0 + (target - a0) / (a1 - a0) * (u1 - u0);
            self.points.push(curve(uu));
            let cur = self.points.len() - 1;
            self.edges.push([prev, cur]);
            prev = cur;
        }
        let ib = self.vertex(b);
        self.edges.push([prev, ib]);
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2]) {
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        self.curve(a, b, len, |u| [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
    }

    fn arc(&mut self, c: [f64; 2], r: f64, th0: f64, th1: f64) {
        let p = |th: f64| [c[0] + r * th.cos(), c[1] + r * th.sin()];
        let (a, b) = (p(th0), p(th1));
        self.curve(a, b, r * (th1 - th0).abs(), |u| p(th0 + u * (th1 - th0)));
    }

    /// Vertical wall segments split at the given heights.
    fn wall(&mut self, x: f64, ys: &mut Vec<f64>) {
        ys.sort_by(|a, b| a.total_cmp(b));
        ys.dedup();
        for w in ys.windows(2) {
            self.line([x, w[0]], [x, w[1]]);
        }
    }
}

/// Distance to the nearest constrained curve of the geometry.
fn constraint_distance(c: &CrossSectionConfig, p: [f64; 2], box_: [f64; 4]) -> f64 {
    let [xl, xr, yb, yt] = box_;
    let mut d = (p[0] - xl).min(xr - p[0]).min(p[1] - yb).min(yt - p[1]);
    if c.include_film || c.include_substrate {
        d = d.min(p[1].abs());
    }
    if c.include_substrate {
        d = d.min((p[1] + c.substrate_thickness_um * 1e3).abs());
    }
    if c.include_film {
        let s = film_sdf(p[0], p[1], c.film_thickness_nm, c.edge_radius());
        d = d.min(s.abs());
        if p[1] >= 0.0 {
            d = d.min((s - c.oxide_thickness_nm).abs());
        }
    }
    d
}

/// Build the conforming mesh. `material_at` classifies triangle centroids.
pub fn generate(c: &CrossSectionConfig, top: f64, bottom: f64, material_at: impl Fn(f64, f64) -> Material) -> Result<Mesh> {
    let size = SizeField::new(c);
    let w = c.half_width_um * 1e3;
    let sub = c.substrate_thickness_um * 1e3;
    let t = c.film_thickness_nm;
    let d = c.oxide_thickness_nm;
    let r = c.edge_radius();
    let mut b = Builder { size: &size, points: Vec::new(), edges: Vec::new() };

    let mut left = vec![bottom, top];
    let mut right = vec![bottom, top];
    if c.include_substrate {
        b.line([-w, -sub], [w, -sub]);
        left.push(-sub);
        right.push(-sub);
    }
    if c.include_film {
        let straight = t - r;
        b.line([-w, 0.0], [0.0, 0.0]);
        b.line([0.0, 0.0], [d, 0.0]);
        if c.include_substrate {
            b.line([d, 0.0], [w, 0.0]);
            right.push(0.0);
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if straight > 0.0 {
            b.line([0.0, 0.0], [0.0, straight]);
            b.line([d, 0.0], [d, straight]);
        }
        b.arc([-r, straight], r, 0.0, half_pi);
        b.line([-r, t], [-w, t]);
        b.arc([-r, straight], r + d, 0.0, half_pi);
        b.line([-r, t + d], [-w, t + d]);
        left.extend([0.0, t, t + d]);
    } else if c.include_substrate {
        b.line([-w, 0.0], [w, 0.0]);
        left.push(0.0);
        right.push(0.0);
    }
    b.wall(-w, &mut left);
    b.wall(w, &mut right);
    b.line([-w, bottom], [w, bottom]);
    b.line([-w, top], [w, top]);

    // quadtree leaves as interior points
    let box_ = [-w, w, bottom, top];
    let rows = ((top - bottom) / (2.0 * w)).ceil().max(1.0) as usize;
    let cell_h = (top - bottom) / rows as f64;
    let mut stack: Vec<(f64, f64, f64, f64)> = (0..rows).map(|k| (-w, bottom + k as f64 * cell_h, 2.0 * w, cell_h)).collect();
    let film_sdf_at = |p: [f64; 2]| {
        if c.include_film {
            film_sdf(p[0], p[1], t, r)
        } else {
            f64::INFINITY
        }
    };
    let mut interior = Vec::new();
    while let Some((x0, y0, sx, sy)) = stack.pop() {
        let centre = [x0 + 0.5 * sx, y0 + 0.5 * sy];
        let half_diag = 0.5 * sx.hypot(sy);
        let h = size.at(centre);
        if sx.max(sy) > (h - size.grade * half_diag).max(0.5 * h) {
            let (hx, hy) = (0.5 * sx, 0.5 * sy);
            stack.push((x0, y0, hx, hy));
            stack.push((x0 + hx, y0, hx, hy));
            stack.push((x0, y0 + hy, hx, hy));
            stack.push((x0 + hx, y0 + hy, hx, hy));
            continue;
        }
        if film_sdf_at(centre) < 0.0 || constraint_distance(c, centre, box_) < 0.5 * h {
            continue;
        }
        interior.push(centre);
    }
    interior.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let n_constrained = b.points.len();
    let mut vertices: Vec<Point2<f64>> = b.points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    vertices.extend(interior.iter().map(|p| Point2::new(p[0], p[1])));
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(vertices, b.edges.clone())
        .map_err(|e| Error::Config(format!("mesh generation failed: {e:?}")))?;
    if cdt.num_vertices() < n_constrained {
        return Err(Error::Config("mesh generation merged constrained vertices".into()));
    }
    let nodes: Vec<[f64; 2]> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let mut triangles = Vec::with_capacity(cdt.num_inner_faces());
    let mut material = Vec::with_capacity(cdt.num_inner_faces());
    for f in cdt.inner_faces() {
        let vs = f.vertices();
        let tri = [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()];
        let cx = (nodes[tri[0]][0] + nodes[tri[1]][0] + nodes[tri[2]][0]) / 3.0;
        let cy = (nodes[tri[0]][1] + nodes[tri[1]][1] + nodes[tri[2]][1]) / 3.0;
        triangles.push(tri);
        material.push(material_at(cx, cy));
    }
    let mut closure = vec![0u8; nodes.len()];
    for (tri, m) in triangles.iter().zip(&material) {
        for &k in tri {
            closure[k] |= material_bit(*m);
        }
    }
    let mut by_x: Vec<usize> = (0..nodes.len()).collect();
    by_x.sort_by(|&a, &b| nodes[a][0].total_cmp(&nodes[b][0]).then(a.cmp(&b)));
    Ok(Mesh { nodes, triangles, material, closure, by_x })
}
