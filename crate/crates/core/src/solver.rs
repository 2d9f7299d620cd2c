//! Linear finite-element Laplace solver on the conforming triangle mesh.
//!
//! Conductors are Dirichlet nodes; the side walls are natural (Neumann)
//! boundaries. The reduced system over free nodes is ordered by reverse
//! Cuthill-McKee and solved with conjugate gradients preconditioned by a
//! zero-fill incomplete Cholesky factor.

use std::collections::VecDeque;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{film_sdf, CrossSectionModel, Material};
use crate::interface::Excitation;
use crate::mesh::material_bit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Free,
    Metal,
    TopPlate,
    BottomPlate,
}

/// Symmetric sparse matrix, full storage, sorted columns.
#[derive(Debug, Clone)]
struct Csr {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut ptr = vec![0; n + 1];
        let mut col = Vec::with_capacity(t.len() / 2);
        let mut val: Vec<f64> = Vec::with_capacity(t.len() / 2);
        let mut last = (usize::MAX, usize::MAX);
        for (i, j, v) in t {
            if (i, j) == last {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                ptr[i + 1] = col.len();
                last = (i, j);
            }
        }
        for i in 0..n {
            ptr[i + 1] = ptr[i + 1].max(ptr[i]);
        }
        Self { ptr, col, val }
    }

    fn matvec(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.ptr[i]..self.ptr[i + 1] {
                s += self.val[k] * u[self.col[k]];
            }
            *o = s;
        }
    }
}

/// Zero-fill incomplete Cholesky factor, lower triangle by rows with the pivot last.
#[derive(Debug, Clone)]
struct Ic0 {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Ic0 {
    fn new(a: &Csr) -> Self {
        let n = a.ptr.len() - 1;
        let mut ptr = vec![0; n + 1];
        let mut col = Vec::new();
        let mut orig = Vec::new();
        for i in 0..n {
            for k in a.ptr[i]..a.ptr[i + 1] {
                if a.col[k] <= i {
                    col.push(a.col[k]);
                    orig.push(a.val[k]);
                }
            }
            ptr[i + 1] = col.len();
        }
        let mut shift = 0.0;
        loop {
            if let Some(val) = Self::factor(&ptr, &col, &orig, shift) {
                return Self { ptr, col, val };
            }
            shift = if shift == 0.0 { 1e-3 } else { 2.0 * shift };
        }
    }

    fn factor(ptr: &[usize], col: &[usize], orig: &[f64], shift: f64) -> Option<Vec<f64>> {
        let n = ptr.len() - 1;
        let mut val = orig.to_vec();
        for i in 0..n {
            let (s, e) = (ptr[i], ptr[i + 1]);
            for a in s..e - 1 {
                let k = col[a];
                // dot of row i and row k over their shared columns below k
                let (mut p, mut q) = (s, ptr[k]);
                let mut dot = 0.0;
                while p < a && q < ptr[k + 1] - 1 {
                    match col[p].cmp(&col[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            dot += val[p] * val[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                val[a] = (val[a] - dot) / val[ptr[k + 1] - 1];
            }
            let d = orig[e - 1] * (1.0 + shift) - val[s..e - 1].iter().map(|v| v * v).sum::<f64>();
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            val[e - 1] = d.sqrt();
        }
        Some(val)
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let (s, e) = (self.ptr[i], self.ptr[i + 1]);
            let mut t = r[i];
            for k in s..e - 1 {
                t -= self.val[k] * z[self.col[k]];
            }
            z[i] = t / self.val[e - 1];
        }
        for i in (0..n).rev() {
            let (s, e) = (self.ptr[i], self.ptr[i + 1]);
            z[i] /= self.val[e - 1];
            let zi = z[i];
            for k in s..e - 1 {
                z[self.col[k]] -= self.val[k] * zi;
            }
        }
    }
}

/// Assembled and factorized system for one model, reusable across excitations.
#[derive(Debug, Clone)]
pub struct FieldSolver {
    kind: Vec<NodeKind>,
    /// Free node of each row of the reduced system.
    free: Vec<usize>,
    matrix: Csr,
    prec: Ic0,
    rhs_metal: Vec<f64>,
    rhs_top: Vec<f64>,
    rhs_bottom: Vec<f64>,
    tolerance: f64,
    max_iterations: usize,
}

/// Solved potential on every mesh node.
#[derive(Debug, Clone)]
pub struct PotentialGrid {
    pub potential: Vec<f64>,
    pub excitation: Excitation,
    pub volts: f64,
    /// Potential of the film conductor.
    pub metal_potential: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Element stiffness of a linear triangle with unit permittivity.
fn element_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
        g[a] = [(b[1] - c[1]) / area2, (c[0] - b[0]) / area2];
    }
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = 0.5 * area2.abs() * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// Reverse Cuthill-McKee order of a symmetric pattern.
fn reverse_cuthill_mckee(ptr: &[usize], col: &[usize]) -> Vec<usize> {
    let n = ptr.len() - 1;
    let degree = |i: usize| ptr[i + 1] - ptr[i];
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree(i), i));
    for &root in &by_degree {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            let mut nb: Vec<usize> = col[ptr[i]..ptr[i + 1]].iter().copied().filter(|&j| !seen[j]).collect();
            nb.sort_by_key(|&j| (degree(j), j));
            for j in nb {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

impl FieldSolver {
    pub fn new(model: &CrossSectionModel) -> Self {
        let mesh = &model.mesh;
        let c = &model.config;
        let n = mesh.len();
        let (t, r) = (c.film_thickness_nm, c.edge_radius());
        let plate_tol = 1e-9 * model.top_plate_y.abs().max(model.bottom_plate_y.abs());
        let kind: Vec<NodeKind> = mesh
            .nodes
            .iter()
            .map(|p| {
                if (p[1] - model.top_plate_y).abs() <= plate_tol {
                    NodeKind::TopPlate
                } else if (p[1] - model.bottom_plate_y).abs() <= plate_tol {
                    NodeKind::BottomPlate
                } else if c.include_film && film_sdf(p[0], p[1], t, r) <= 1e-9 {
                    NodeKind::Metal
                } else {
                    NodeKind::Free
                }
            })
            .collect();

        // free-node pattern for the ordering
        let mut local = vec![usize::MAX; n];
        let mut nfree = 0;
        for k in 0..n {
            if kind[k] == NodeKind::Free {
                local[k] = nfree;
                nfree += 1;
            }
        }
        let mut elements = Vec::with_capacity(mesh.triangles.len());
        let mut pattern = Vec::new();
        for (tri, m) in mesh.triangles.iter().zip(&mesh.material) {
            if *m == Material::Metal {
                continue;
            }
            let ke = element_stiffness([mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]]);
            let eps = model.permittivity(*m);
            for a in 0..3 {
                for b in 0..3 {
                    if local[tri[a]] != usize::MAX && local[tri[b]] != usize::MAX {
                        pattern.push((local[tri[a]], local[tri[b]], 1.0));
                    }
                }
            }
            elements.push((tri, eps, ke));
        }
        let pat = Csr::from_triplets(nfree, pattern);
        let order = reverse_cuthill_mckee(&pat.ptr, &pat.col);
        let mut rank = vec![0; nfree];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new;
        }
        let mut free = vec![0; nfree];
        for k in 0..n {
            if local[k] != usize::MAX {
                local[k] = rank[local[k]];
                free[local[k]] = k;
            }
        }

        let mut triplets = Vec::with_capacity(9 * elements.len());
        let mut rhs_metal = vec![0.0; nfree];
        let mut rhs_top = vec![0.0; nfree];
        let mut rhs_bottom = vec![0.0; nfree];
        for (tri, eps, ke) in elements {
            for a in 0..3 {
                let i = local[tri[a]];
                if i == usize::MAX {
                    continue;
                }
                for b in 0..3 {
                    let v = eps * ke[a][b];
                    let j = local[tri[b]];
                    match kind[tri[b]] {
                        NodeKind::Free => triplets.push((i, j, v)),
                        NodeKind::Metal => rhs_metal[i] -= v,
                        NodeKind::TopPlate => rhs_top[i] -= v,
                        NodeKind::BottomPlate => rhs_bottom[i] -= v,
                    }
                }
            }
        }
        let matrix = Csr::from_triplets(nfree, triplets);
        let prec = Ic0::new(&matrix);
        Self {
            kind,
            free,
            matrix,
            prec,
            rhs_metal,
            rhs_top,
            rhs_bottom,
            tolerance: c.solver_tolerance,
            max_iterations: c.solver_max_iterations,
        }
    }

    pub fn node_count(&self) -> usize {
        self.kind.len()
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn node_kind(&self, k: usize) -> NodeKind {
        self.kind[k]
    }

    /// Potentials of (film, top plate, bottom plate) for an excitation.
    pub fn boundary_values(excitation: Excitation, volts: f64) -> (f64, f64, f64) {
        match excitation {
            Excitation::Top => (0.0, volts, 0.0),
            Excitation::Bottom => (0.0, 0.0, volts),
            Excitation::Qubit => (volts, 0.0, 0.0),
        }
    }

    /// Solve for one excitation; the driven source is set to `volts`, all other conductors grounded.
    pub fn solve(&self, _model: &CrossSectionModel, excitation: Excitation, volts: f64) -> Result<PotentialGrid> {
        let (vm, vt, vb) = Self::boundary_values(excitation, volts);
        let nf = self.free.len();
        let b: Vec<f64> =
            (0..nf).map(|i| vm * self.rhs_metal[i] + vt * self.rhs_top[i] + vb * self.rhs_bottom[i]).collect();
        let mut potential: Vec<f64> = self
            .kind
            .iter()
            .map(|k| match k {
                NodeKind::Free => 0.0,
                NodeKind::Metal => vm,
                NodeKind::TopPlate => vt,
                NodeKind::BottomPlate => vb,
            })
            .collect();
        let bnorm = norm(&b);
        if bnorm == 0.0 {
            return Ok(PotentialGrid {
                potential,
                excitation,
                volts,
                metal_potential: vm,
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        let mut x = vec![0.0; nf];
        let mut r = b.clone();
        let mut z = vec![0.0; nf];
        self.prec.apply(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; nf];
        let mut history = Vec::new();
        let mut rel = 1.0;
        let mut it = 0;
        // the recurrence drifts from the true residual; aim below the target
        let inner_tol = 0.25 * self.tolerance;
        while rel > inner_tol {
            if it >= self.max_iterations {
                return Err(Error::NonConvergence { iterations: it, residual: rel, history });
            }
            self.matrix.matvec(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..nf {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            self.prec.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..nf {
                p[k] = z[k] + beta * p[k];
            }
            rel = norm(&r) / bnorm;
            it += 1;
            if it % 25 == 0 {
                history.push(rel);
            }
        }
        self.matrix.matvec(&x, &mut ap);
        let true_rel = norm(&b.iter().zip(&ap).map(|(u, v)| u - v).collect::<Vec<_>>()) / bnorm;
        for (i, &k) in self.free.iter().enumerate() {
            potential[k] = x[i];
        }
        Ok(PotentialGrid {
            potential,
            excitation,
            volts,
            metal_potential: vm,
            iterations: it,
            relative_residual: true_rel,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Convenience wrapper: assemble, factorize and solve a single excitation.
pub fn solve_laplace(model: &CrossSectionModel, excitation: Excitation, volts: f64) -> Result<PotentialGrid> {
    FieldSolver::new(model).solve(model, excitation, volts)
}

/// Nodes used by one field recovery.
const RECOVERY_POINTS: usize = 16;

impl PotentialGrid {
    /// Electric field (V/nm) at `p`, recovered from the potential within dielectric `medium`.
    ///
    /// A weighted quadratic is fitted to the nearest nodes that touch a
    /// triangle of the medium, so the gradient never mixes values from across
    /// a permittivity jump.
    pub fn field_at(&self, model: &CrossSectionModel, p: [f64; 2], medium: Material) -> [f64; 2] {
        let mesh = &model.mesh;
        let bit = material_bit(medium);
        let mut reach = 0.05;
        let mut idx;
        loop {
            idx = mesh.nodes_within(p, reach);
            idx.retain(|&k| mesh.closure[k] & bit != 0);
            if idx.len() >= RECOVERY_POINTS || reach > 1e7 {
                break;
            }
            reach *= 1.4;
        }
        let pts: Vec<([f64; 2], f64)> = idx.iter().map(|&k| (mesh.nodes[k], self.potential[k])).collect();
        fit_gradient(&pts, p, 0.5 * reach).map(|g| [-g[0], -g[1]]).unwrap_or([f64::NAN, f64::NAN])
    }

    /// Field in V/m, using the medium found at the point itself.
    pub fn field_v_per_m(&self, model: &CrossSectionModel, p: [f64; 2]) -> [f64; 2] {
        let m = model.material_at(p[0], p[1]);
        let e = self.field_at(model, p, m);
        [e[0] * 1e9, e[1] * 1e9]
    }
}

/// Weighted least-squares gradient of a local quadratic through `pts`, evaluated at `p`.
fn fit_gradient(pts: &[([f64; 2], f64)], p: [f64; 2], h: f64) -> Option<[f64; 2]> {
    let quadratic = pts.len() >= 8;
    let m = if quadratic { 6 } else { 3 };
    if pts.len() < m {
        return None;
    }
    let mut ata = SMatrix::<f64, 6, 6>::zeros();
    let mut atb = SVector::<f64, 6>::zeros();
    for &(q, v) in pts {
        let u = (q[0] - p[0]) / h;
        let w = (q[1] - p[1]) / h;
        let weight = 1.0 / (1.0 + 0.25 * (u * u + w * w));
        let row = [1.0, u, w, u * u, u * w, w * w];
        for a in 0..m {
            atb[a] += weight * row[a] * v;
            for b in 0..m {
                ata[(a, b)] += weight * row[a] * row[b];
            }
        }
    }
    if !quadratic {
        for a in 3..6 {
            ata[(a, a)] = 1.0;
        }
    }
    let sol = ata.lu().solve(&atb)?;
    Some([sol[1] / h, sol[2] / h])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, CrossSectionConfig};

    fn coarse(cfg: CrossSectionConfig) -> CrossSectionConfig {
        CrossSectionConfig { fine_spacing_nm: 1.0, edge_spacing_nm: 0.5, ..cfg }
    }

    #[test]
    fn parallel_plate_field_matches_v_over_d() {
        let model = build_geometry(&coarse(CrossSectionConfig::chip_removed())).unwrap();
        let grid = solve_laplace(&model, Excitation::Top, -0.5).unwrap();
        assert!(grid.relative_residual <= 1e-8);
        let d = model.top_plate_y - model.bottom_plate_y;
        let mid = 0.5 * (model.top_plate_y + model.bottom_plate_y);
        let e = grid.field_v_per_m(&model, [0.0, mid]);
        let analytic = 0.5 / (d * 1e-9);
        assert!((e[1].abs() - analytic).abs() / analytic < 0.01, "{e:?} vs {analytic}");
    }

    #[test]
    fn dielectric_stack_field_jump_equals_permittivity_ratio() {
        let cfg = CrossSectionConfig { include_film: false, ..coarse(CrossSectionConfig::default()) };
        let model = build_geometry(&cfg).unwrap();
        let grid = solve_laplace(&model, Excitation::Bottom, 1.0).unwrap();
        let e_vac = grid.field_v_per_m(&model, [0.0, 1000.0]);
        let e_sub = grid.field_v_per_m(&model, [0.0, -1000.0]);
        let ratio = e_vac[1] / e_sub[1];
        assert!((ratio - 10.0).abs() / 10.0 < 0.01, "ratio {ratio}");
        // analytic two-layer capacitor
        let sub = cfg.substrate_thickness_um * 1e-6;
        let gap = (cfg.plate_above_offset_um + cfg.plate_below_offset_um) * 1e-6;
        let e_sub_analytic = 1.0 / (gap * 10.0 + sub);
        assert!((e_sub[1] - e_sub_analytic).abs() / e_sub_analytic < 0.01, "{e_sub:?}");
    }

    #[test]
    fn potential_obeys_maximum_principle() {
        let model = build_geometry(&coarse(CrossSectionConfig::default())).unwrap();
        let grid = solve_laplace(&model, Excitation::Top, 1.0).unwrap();
        let (lo, hi) = grid.potential.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12, "{lo} {hi}");
    }

    #[test]
    fn doubling_voltage_doubles_potential_exactly() {
        let model = build_geometry(&coarse(CrossSectionConfig::default())).unwrap();
        let s = FieldSolver::new(&model);
        let a = s.solve(&model, Excitation::Bottom, 0.75).unwrap();
        let b = s.solve(&model, Excitation::Bottom, 1.5).unwrap();
        assert!(a.potential.iter().zip(&b.potential).all(|(u, v)| 2.0 * u == *v));
    }
}
