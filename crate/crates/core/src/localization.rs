//! Inversion of tunability ratios into candidate defect positions.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fit::TunabilityFit;
use crate::interface::Interface;
use crate::profiles::{field_ratio, InterfaceProfileSet, RatioCurve};
use crate::spectroscopy::{coupling_from_field, QubitParams};
use crate::units;

pub const FLAG_INCONSISTENT_TB: &str = "inconsistent-tb";
pub const FLAG_ORIENTATION_DEGENERATE: &str = "orientation-degenerate";
pub const FLAG_JUNCTION: &str = "junction";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationParams {
    pub cutoff_debye: f64,
    pub alpha_points: usize,
    /// Relative disagreement allowed between top and bottom dipole estimates.
    pub consistency_tolerance: f64,
    pub bin_width_nm: f64,
    /// Largest jump in x between neighbouring α samples of one SV branch.
    pub branch_gap_nm: f64,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            cutoff_debye: units::DEFAULT_CUTOFF_DEBYE,
            alpha_points: 512,
            consistency_tolerance: 0.05,
            bin_width_nm: 5.0,
            branch_gap_nm: 10.0,
        }
    }
}

/// One point of an SV solution branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub alpha_rad: f64,
    pub x_nm: f64,
    pub p_par_debye: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSolution {
    pub interface: Interface,
    pub x_nm: f64,
    /// Allowed orientation range on SV; absent on film interfaces.
    pub alpha_interval_rad: Option<[f64; 2]>,
    pub p_par_debye: f64,
    /// α measure before normalisation.
    pub measure: f64,
    pub weight: f64,
    pub g_mhz: f64,
    pub flags: Vec<String>,
    /// Sampled `(α, x, p)` along an SV branch.
    pub branch: Vec<BranchPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectLocalization {
    pub trace_id: usize,
    pub ratio: Option<f64>,
    pub solutions: Vec<LocalizationSolution>,
    pub discarded: Vec<LocalizationSolution>,
    pub unlocated: bool,
    pub flags: Vec<String>,
}

/// `cos(α − α_tb/2) / cos(α + α_tb/2)`; `None` when the denominator vanishes.
pub fn zeta(alpha: f64, alpha_tb: f64) -> Option<f64> {
    let den = (alpha + 0.5 * alpha_tb).cos();
    if den.abs() < 1e-9 {
        None
    } else {
        Some((alpha - 0.5 * alpha_tb).cos() / den)
    }
}

/// All `x` where the piecewise-linear ratio curve equals `ratio`.
pub fn solve_film_interface(ratio: f64, curve: &RatioCurve) -> Vec<f64> {
    let mut roots = Vec::new();
    if !(ratio > 0.0) {
        return roots;
    }
    let (xs, r) = (&curve.x_nm, &curve.ratio);
    for i in 0..xs.len() {
        let a = r[i] - ratio;
        if a == 0.0 {
            roots.push(xs[i]);
            continue;
        }
        if i + 1 < xs.len() {
            let b = r[i + 1] - ratio;
            if b != 0.0 && (a < 0.0) != (b < 0.0) {
                roots.push(xs[i] + (xs[i + 1] - xs[i]) * a / (a - b));
            }
        }
    }
    roots
}

/// Uniform grid of `n` orientations over `[0, π)`.
pub fn alpha_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| std::f64::consts::PI * k as f64 / n as f64).collect()
}

/// Roots `(α, x)` of `r_SV(x) · ζ(α, α_tb(x)) = ratio` for every α of the grid.
pub fn solve_sv_interface(ratio: f64, profiles: &InterfaceProfileSet, alphas: &[f64]) -> Vec<(f64, f64)> {
    solve_sv_by_alpha(ratio, profiles, alphas).into_iter().flat_map(|(a, xs)| xs.into_iter().map(move |x| (a, x))).collect()
}

fn solve_sv_by_alpha(ratio: f64, profiles: &InterfaceProfileSet, alphas: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let prof = profiles.get(Interface::SV);
    let (st, sb) = (profiles.plate_voltage_scale_t, profiles.plate_voltage_scale_b);
    let xs = &prof.x_nm;
    let r: Vec<f64> = prof.e_t.iter().zip(&prof.e_b).map(|(t, b)| st * t / (sb * b)).collect();
    let eval = |alpha: f64, x: f64| -> Option<(f64, f64)> {
        let l = prof.locate(x).ok()?;
        let atb = prof.alpha_tb_at(l);
        let rr = st * l.at(&prof.e_t) / (sb * l.at(&prof.e_b));
        let den = (alpha + 0.5 * atb).cos();
        Some((rr * (alpha - 0.5 * atb).cos() - ratio * den, den))
    };
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        // cleared of the ζ pole: r cos(α − α_tb/2) − ratio cos(α + α_tb/2)
        let vals: Vec<(f64, f64)> = (0..xs.len())
            .map(|i| {
                let atb = prof.alpha_tb[i];
                let den = (alpha + 0.5 * atb).cos();
                (r[i] * (alpha - 0.5 * atb).cos() - ratio * den, den)
            })
            .collect();
        let mut roots = Vec::new();
        for i in 0..xs.len() {
            let (a, da) = vals[i];
            if a == 0.0 && da.abs() >= 1e-9 {
                roots.push(xs[i]);
                continue;
            }
            if i + 1 == xs.len() {
                break;
            }
            let (b, db) = vals[i + 1];
            if b == 0.0 || (a < 0.0) == (b < 0.0) {
                continue;
            }
            let (mut lo, mut hi, mut flo) = (xs[i], xs[i + 1], a);
            while hi - lo > 1e-3 {
                let mid = 0.5 * (lo + hi);
                let Some((fm, _)) = eval(alpha, mid) else { break };
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            let x = 0.5 * (lo + hi);
            let Some((_, den)) = eval(alpha, x) else { continue };
            // a root of the cleared form at ζ's pole is no solution
            if den.abs() < 1e-9 || (da < 0.0) != (db < 0.0) && den.abs() < 1e-6 {
                continue;
            }
            // ζ must carry the sign of the measured ratio
            let l = prof.locate(x).unwrap();
            let atb = prof.alpha_tb_at(l);
            match zeta(alpha, atb) {
                Some(z) if z * ratio > 0.0 => roots.push(x),
                _ => {}
            }
        }
        out.push((alpha, roots));
    }
    out
}

/// Dipole magnitude (Debye) implied by the top and bottom tunabilities at a film solution.
pub fn film_dipoles(fit: &TunabilityFit, profiles: &InterfaceProfileSet, interface: Interface, x: f64) -> Result<(f64, f64)> {
    let prof = profiles.get(interface);
    let l = prof.locate(x)?;
    Ok((
        units::dipole_debye(fit.gamma_t_mhz_per_v.abs(), profiles.eff_t(prof, l)),
        units::dipole_debye(fit.gamma_b_mhz_per_v.abs(), profiles.eff_b(prof, l)),
    ))
}

/// Dipole magnitude (Debye) at an SV solution `(α, x)`, from the larger of the two projections.
pub fn sv_dipole(fit: &TunabilityFit, profiles: &InterfaceProfileSet, alpha: f64, x: f64) -> Result<f64> {
    let prof = profiles.get(Interface::SV);
    let l = prof.locate(x)?;
    let half = 0.5 * prof.alpha_tb_at(l);
    let ct = (alpha - half).cos().abs();
    let cb = (alpha + half).cos().abs();
    Ok(if ct >= cb {
        units::dipole_debye(fit.gamma_t_mhz_per_v.abs(), profiles.eff_t(prof, l) * ct)
    } else {
        units::dipole_debye(fit.gamma_b_mhz_per_v.abs(), profiles.eff_b(prof, l) * cb)
    })
}

/// Dipole magnitude of a solution, as stored on it.
pub fn dipole_moment(solution: &LocalizationSolution) -> f64 {
    solution.p_par_debye
}

/// Coupling `g/h` (MHz) of a solution to the qubit mode.
pub fn coupling_strength(solution: &LocalizationSolution, profiles: &InterfaceProfileSet, qubit: &QubitParams) -> Result<f64> {
    coupling_at(solution.interface, solution.x_nm, solution.p_par_debye, solution_alpha(solution), profiles, qubit)
}

fn solution_alpha(s: &LocalizationSolution) -> Option<f64> {
    s.alpha_interval_rad.map(|[a, b]| {
        // the representative point sits mid-branch
        s.branch.get(s.branch.len() / 2).map(|p| p.alpha_rad).unwrap_or(0.5 * (a + b))
    })
}

fn coupling_at(
    interface: Interface,
    x: f64,
    p: f64,
    alpha: Option<f64>,
    profiles: &InterfaceProfileSet,
    qubit: &QubitParams,
) -> Result<f64> {
    let p_q = match (interface, alpha) {
        (Interface::SV, Some(a)) => {
            let prof = profiles.get(Interface::SV);
            let l = prof.locate(x)?;
            p * (prof.dipole_angle(l, a) - prof.dir_q_at(l)).cos().abs()
        }
        _ => p,
    };
    coupling_from_field(p_q, interface, x, profiles, qubit)
}

/// Split solutions by the dipole cutoff. SV branches are trimmed point by
/// point; a branch keeps the measure of its surviving points.
pub fn apply_cutoff(
    solutions: Vec<LocalizationSolution>,
    cutoff: f64,
    alpha_step: f64,
) -> (Vec<LocalizationSolution>, Vec<LocalizationSolution>) {
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for s in solutions {
        if s.interface.is_film() {
            if s.p_par_debye <= cutoff {
                kept.push(s);
            } else {
                discarded.push(s);
            }
            continue;
        }
        let (mut run, mut drop) = (Vec::new(), Vec::new());
        for p in &s.branch {
            if p.p_par_debye <= cutoff {
                run.push(*p);
            } else {
                drop.push(*p);
            }
        }
        for part in split_runs(&run, alpha_step) {
            kept.push(sv_solution(part, alpha_step, s.flags.clone()));
        }
        for part in split_runs(&drop, alpha_step) {
            discarded.push(sv_solution(part, alpha_step, s.flags.clone()));
        }
    }
    (kept, discarded)
}

/// Break a branch where consecutive α samples are not neighbours on the grid.
fn split_runs(points: &[BranchPoint], alpha_step: f64) -> Vec<Vec<BranchPoint>> {
    let mut out: Vec<Vec<BranchPoint>> = Vec::new();
    for p in points {
        match out.last_mut() {
            Some(run) if (p.alpha_rad - run.last().unwrap().alpha_rad - alpha_step).abs() < 1e-6 * alpha_step.max(1e-12) + 1e-9 => {
                run.push(*p)
            }
            _ => out.push(vec![*p]),
        }
    }
    out
}

fn sv_solution(branch: Vec<BranchPoint>, alpha_step: f64, flags: Vec<String>) -> LocalizationSolution {
    let mid = branch[branch.len() / 2];
    LocalizationSolution {
        interface: Interface::SV,
        x_nm: mid.x_nm,
        alpha_interval_rad: Some([branch[0].alpha_rad, branch[branch.len() - 1].alpha_rad]),
        p_par_debye: mid.p_par_debye,
        measure: branch.len() as f64 * alpha_step,
        weight: 0.0,
        g_mhz: 0.0,
        flags,
        branch,
    }
}

/// Normalise α measures into interface weights. Returns `false` for an empty set.
pub fn interface_probabilities(solutions: &mut [LocalizationSolution]) -> bool {
    let total: f64 = solutions.iter().map(|s| s.measure).sum();
    if solutions.is_empty() || total <= 0.0 {
        return false;
    }
    for s in solutions.iter_mut() {
        s.weight = s.measure / total;
    }
    true
}

/// Group per-α roots into continuous branches, joining across the α = π wrap.
fn assemble_branches(by_alpha: &[(f64, Vec<f64>)], gap_nm: f64) -> Vec<Vec<(f64, f64)>> {
    let mut closed: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut open: Vec<Vec<(usize, f64)>> = Vec::new();
    for (k, (_, roots)) in by_alpha.iter().enumerate() {
        let mut next_open = Vec::new();
        let mut taken = vec![false; roots.len()];
        for mut br in open.drain(..) {
            let last = br.last().unwrap().1;
            let best = roots
                .iter()
                .enumerate()
                .filter(|(j, x)| !taken[*j] && (**x - last).abs() <= gap_nm)
                .min_by(|a, b| (a.1 - last).abs().total_cmp(&(b.1 - last).abs()));
            match best {
                Some((j, &x)) => {
                    taken[j] = true;
                    br.push((k, x));
                    next_open.push(br);
                }
                None => closed.push(br),
            }
        }
        for (j, &x) in roots.iter().enumerate() {
            if !taken[j] {
                next_open.push(vec![(k, x)]);
            }
        }
        open = next_open;
    }
    // wrap: a branch reaching the last α may continue into one starting at α = 0
    let ends = open;
    let mut starts: Vec<usize> = closed.iter().enumerate().filter(|(_, b)| b[0].0 == 0).map(|(i, _)| i).collect();
    let mut merged = Vec::new();
    for e in ends {
        let last = e.last().unwrap().1;
        let pick = starts
            .iter()
            .enumerate()
            .filter(|(_, &i)| (closed[i][0].1 - last).abs() <= gap_nm && closed[i].last().unwrap().0 < e[0].0)
            .min_by(|a, b| (closed[*a.1][0].1 - last).abs().total_cmp(&(closed[*b.1][0].1 - last).abs()))
            .map(|(si, &i)| (si, i));
        match pick {
            Some((si, i)) => {
                starts.remove(si);
                let head = std::mem::take(&mut closed[i]);
                // α of the tail is shifted down by π so the interval stays contiguous
                let mut br: Vec<(f64, f64)> =
                    e.iter().map(|&(k, x)| (by_alpha[k].0 - std::f64::consts::PI, x)).collect();
                br.extend(head.iter().map(|&(k, x)| (by_alpha[k].0, x)));
                merged.push(br);
            }
            None => merged.push(e.iter().map(|&(k, x)| (by_alpha[k].0, x)).collect()),
        }
    }
    for b in closed.into_iter().filter(|b| !b.is_empty()) {
        merged.push(b.iter().map(|&(k, x)| (by_alpha[k].0, x)).collect());
    }
    merged.sort_by(|a, b| a[0].0.total_cmp(&b[0].0).then(a[0].1.total_cmp(&b[0].1)));
    merged
}

/// Reported position resolution, nm.
pub const POSITION_RESOLUTION_NM: f64 = 0.1;

fn round_position(x: f64) -> f64 {
    (x / POSITION_RESOLUTION_NM).round() * POSITION_RESOLUTION_NM
}

/// Full localization of one fitted defect.
pub fn localize_defect(
    fit: &TunabilityFit,
    profiles: &InterfaceProfileSet,
    qubit: &QubitParams,
    params: &LocalizationParams,
) -> Result<DefectLocalization> {
    let mut out = DefectLocalization {
        trace_id: fit.trace_id,
        ratio: fit.ratio(),
        solutions: Vec::new(),
        discarded: Vec::new(),
        unlocated: false,
        flags: Vec::new(),
    };
    if fit.junction_flag {
        out.flags.push(FLAG_JUNCTION.to_string());
        return Ok(out);
    }
    if fit.has_flag(crate::fit::FLAG_UNLOCATABLE) {
        out.flags.push(crate::fit::FLAG_UNLOCATABLE.to_string());
        out.unlocated = true;
        return Ok(out);
    }
    let Some(ratio) = fit.ratio() else {
        out.unlocated = true;
        return Ok(out);
    };
    let mut all = Vec::new();
    for interface in [Interface::SM, Interface::Ox, Interface::OxV] {
        let curve = field_ratio(profiles, interface)?;
        for x in solve_film_interface(ratio, &curve) {
            let (pt, pb) = film_dipoles(fit, profiles, interface, x)?;
            let mut flags = vec![FLAG_ORIENTATION_DEGENERATE.to_string()];
            if (pt - pb).abs() > params.consistency_tolerance * pt.max(pb) {
                flags.push(FLAG_INCONSISTENT_TB.to_string());
            }
            all.push(LocalizationSolution {
                interface,
                x_nm: x,
                alpha_interval_rad: None,
                p_par_debye: pt,
                measure: std::f64::consts::PI,
                weight: 0.0,
                g_mhz: 0.0,
                flags,
                branch: Vec::new(),
            });
        }
    }
    let alphas = alpha_grid(params.alpha_points);
    let step = std::f64::consts::PI / params.alpha_points as f64;
    let by_alpha = solve_sv_by_alpha(ratio, profiles, &alphas);
    for br in assemble_branches(&by_alpha, params.branch_gap_nm) {
        let mut pts = Vec::with_capacity(br.len());
        for (a, x) in br {
            pts.push(BranchPoint { alpha_rad: a, x_nm: x, p_par_debye: sv_dipole(fit, profiles, a, x)? });
        }
        all.push(sv_solution(pts, step, Vec::new()));
    }
    let (mut kept, mut discarded) = apply_cutoff(all, params.cutoff_debye, step);
    for s in kept.iter_mut().chain(discarded.iter_mut()) {
        s.g_mhz = coupling_strength(s, profiles, qubit)?;
    }
    out.unlocated = !interface_probabilities(&mut kept);
    for s in kept.iter_mut().chain(discarded.iter_mut()) {
        s.x_nm = round_position(s.x_nm);
    }
    out.solutions = kept;
    out.discarded = discarded;
    Ok(out)
}

/// Weighted position histograms per interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceHistogram {
    pub bin_width_nm: f64,
    pub edges_nm: Vec<f64>,
    /// One row of bin weights per interface in SM, Ox, OxV, SV order.
    pub weights: [Vec<f64>; 4],
    pub participation: [f64; 4],
    pub located: usize,
    pub unlocated: usize,
    pub junction: usize,
}

impl InterfaceHistogram {
    /// Fraction of all located weight at `x ≤ limit`.
    pub fn weight_fraction_below(&self, limit: f64) -> f64 {
        let total: f64 = self.weights.iter().flatten().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let mut w = 0.0;
        for row in &self.weights {
            for (k, v) in row.iter().enumerate() {
                if self.edges_nm[k + 1] <= limit + 1e-9 {
                    w += v;
                }
            }
        }
        w / total
    }
}

/// Histogram located defects; SV branch weight is spread evenly over its points.
pub fn build_histograms(locs: &[DefectLocalization], bin_width: f64, extent_nm: f64) -> InterfaceHistogram {
    let nb = (extent_nm / bin_width).ceil().max(1.0) as usize;
    let edges: Vec<f64> = (0..=nb).map(|k| k as f64 * bin_width).collect();
    let mut weights: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; nb]);
    let mut totals = [0.0; 4];
    let (mut located, mut unlocated, mut junction) = (0, 0, 0);
    let bin = |x: f64| ((x / bin_width).floor().max(0.0) as usize).min(nb - 1);
    for loc in locs {
        if loc.flags.iter().any(|f| f == FLAG_JUNCTION) {
            junction += 1;
            continue;
        }
        if loc.unlocated || loc.solutions.is_empty() {
            unlocated += 1;
            continue;
        }
        located += 1;
        for s in &loc.solutions {
            let i = s.interface.index();
            totals[i] += s.weight;
            if s.branch.is_empty() {
                weights[i][bin(s.x_nm)] += s.weight;
            } else {
                let w = s.weight / s.branch.len() as f64;
                for p in &s.branch {
                    weights[i][bin(p.x_nm)] += w;
                }
            }
        }
    }
    let participation = if located > 0 { totals.map(|t| t / located as f64) } else { [0.0; 4] };
    InterfaceHistogram { bin_width_nm: bin_width, edges_nm: edges, weights, participation, located, unlocated, junction }
}
