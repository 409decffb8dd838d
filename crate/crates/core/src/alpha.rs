//! Normalization weights α: one non-negative weight per node such that the
//! weights along every root-to-leaf path sum to one (or lie in `[1, T]` for
//! the relaxed DAG variant).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{
    augmented_lagrangian_min, lp_solve, LinearProgram, LinearlyConstrained, Relation, Sense,
    SolveStatus,
};
use crate::taxonomy::{NodeId, Taxonomy};

/// Tolerance used when checking path-sum constraints.
pub const PATH_TOL: f64 = 1e-6;

/// KKT residual below which a Newton-polished ρ solution is accepted without
/// a tighter first-order solve.
const POLISHED_KKT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeWeights {
    pub alpha: Vec<f64>,
    pub path_sum_lo: f64,
    pub path_sum_hi: f64,
}

impl NodeWeights {
    /// α = 1 on every node with no path-sum constraint (the unnormalized model).
    pub fn ones(t: &Taxonomy) -> Self {
        NodeWeights {
            alpha: vec![1.0; t.node_count()],
            path_sum_lo: 0.0,
            path_sum_hi: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn sqrt(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a.max(0.0).sqrt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaScheme {
    Rho,
    Maximin,
    Flat,
}

impl std::str::FromStr for AlphaScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(AlphaScheme::Rho),
            "maximin" => Ok(AlphaScheme::Maximin),
            "flat" => Ok(AlphaScheme::Flat),
            _ => Err(Error::InvalidConfig(format!("unknown alpha scheme '{s}'"))),
        }
    }
}

impl std::fmt::Display for AlphaScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlphaScheme::Rho => "rho",
            AlphaScheme::Maximin => "maximin",
            AlphaScheme::Flat => "flat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaConfig {
    pub scheme: AlphaScheme,
    pub rho: f64,
    /// α_n ≥ α_p for every edge p → n.
    pub directional: bool,
    pub range_t: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig::rho(2.0)
    }
}

impl AlphaConfig {
    pub fn rho(rho: f64) -> Self {
        AlphaConfig {
            scheme: AlphaScheme::Rho,
            rho,
            directional: false,
            range_t: 1.0,
        }
    }

    pub fn maximin(directional: bool) -> Self {
        AlphaConfig {
            scheme: AlphaScheme::Maximin,
            rho: 1.0,
            directional,
            range_t: 1.0,
        }
    }

    pub fn flat() -> Self {
        AlphaConfig {
            scheme: AlphaScheme::Flat,
            rho: 1.0,
            directional: false,
            range_t: 1.0,
        }
    }

    pub fn with_directional(mut self, on: bool) -> Self {
        self.directional = on;
        self
    }

    pub fn with_range(mut self, t: f64) -> Self {
        self.range_t = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == AlphaScheme::Rho && !(self.rho > 1.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho must exceed 1, got {}", self.rho)));
        }
        if !(self.range_t >= 1.0 && self.range_t.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "range T must be at least 1, got {}",
                self.range_t
            )));
        }
        Ok(())
    }

    pub fn compute(&self, t: &Taxonomy) -> Result<NodeWeights> {
        self.validate()?;
        match self.scheme {
            AlphaScheme::Rho => {
                Ok(solve_rho_full(t, self.rho, self.range_t, self.directional)?.weights)
            }
            AlphaScheme::Maximin => solve_maximin(t, self.directional, self.range_t),
            AlphaScheme::Flat => Ok(flat_alpha(t)),
        }
    }
}

/// α = 1 on leaves, 0 elsewhere.
pub fn flat_alpha(t: &Taxonomy) -> NodeWeights {
    let mut alpha = vec![0.0; t.node_count()];
    for &l in t.leaves() {
        alpha[l] = 1.0;
    }
    NodeWeights {
        alpha,
        path_sum_lo: 1.0,
        path_sum_hi: 1.0,
    }
}

#[derive(Debug, Clone)]
pub struct RhoSolution {
    pub weights: NodeWeights,
    pub objective: f64,
    /// Projected-gradient norm of the Lagrangian at the returned point.
    pub kkt_residual: f64,
    pub max_violation: f64,
}

/// `min Σ α_n^ρ` subject to per-leaf path sums in `[1, T]` and `α ≥ 0`.
pub fn solve_rho(t: &Taxonomy, rho: f64, range_t: f64) -> Result<NodeWeights> {
    Ok(solve_rho_full(t, rho, range_t, false)?.weights)
}

pub fn rho_objective(alpha: &[f64], rho: f64) -> f64 {
    alpha.iter().map(|a| a.max(0.0).powf(rho)).sum()
}

/// As [`solve_rho`], optionally adding the directional constraints, and
/// reporting solver diagnostics.
pub fn solve_rho_full(
    t: &Taxonomy,
    rho: f64,
    range_t: f64,
    directional: bool,
) -> Result<RhoSolution> {
    AlphaConfig::rho(rho).with_range(range_t).validate()?;
    if t.is_tree() && range_t == 1.0 && !directional {
        return Ok(solve_rho_tree(t, rho));
    }
    solve_rho_numeric(t, rho, range_t, directional)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Exact solution on a tree with every path sum equal to 1.
///
/// A subtree whose paths must sum to `s` has optimal value `c_n s^ρ`. With
/// `C = Σ_children c_k` the node takes the fraction `σ(ln C / ε)` of `s`
/// (`ε = ρ - 1`) and `ln c_n = -ε softplus(-ln C / ε)`; leaves have `c = 1`.
/// Everything runs in log space because near `ρ = 1` the off-root weights
/// underflow long before they stop mattering.
fn solve_rho_tree(t: &Taxonomy, rho: f64) -> RhoSolution {
    let m = t.node_count();
    let eps = rho - 1.0;
    let mut ln_c = vec![0.0; m];
    let mut ln_big_c = vec![f64::NEG_INFINITY; m];
    for &n in t.topo_order().iter().rev() {
        let ch = t.children(n);
        if ch.is_empty() {
            continue;
        }
        let top = ch.iter().map(|&k| ln_c[k]).fold(f64::NEG_INFINITY, f64::max);
        let lc = top + ch.iter().map(|&k| (ln_c[k] - top).exp()).sum::<f64>().ln();
        ln_big_c[n] = lc;
        ln_c[n] = -eps * softplus(-lc / eps);
    }
    let mut ln_s = vec![0.0; m];
    let mut ln_alpha = vec![0.0; m];
    for &n in t.topo_order() {
        if let Some(&p) = t.parents(n).first() {
            ln_s[n] = ln_s[p] - softplus(ln_big_c[p] / eps);
        }
        ln_alpha[n] = if t.is_leaf(n) {
            ln_s[n]
        } else {
            ln_s[n] - softplus(-ln_big_c[n] / eps)
        };
    }
    // stationarity with leaf multipliers μ_l = ρ α_l^ε: every node's
    // derivative equals the multiplier mass of the leaves below it
    let deriv: Vec<f64> = ln_alpha.iter().map(|&la| rho * (eps * la).exp()).collect();
    let mut below = vec![0.0; m];
    let mut kkt: f64 = 0.0;
    for &n in t.topo_order().iter().rev() {
        if t.is_leaf(n) {
            below[n] = deriv[n];
        } else {
            below[n] = t.children(n).iter().map(|&k| below[k]).sum();
            kkt = kkt.max((deriv[n] - below[n]).abs());
        }
    }
    let alpha: Vec<f64> = ln_alpha.iter().map(|v| v.exp()).collect();
    let weights = NodeWeights {
        alpha,
        path_sum_lo: 1.0,
        path_sum_hi: 1.0,
    };
    let max_violation = validate_alpha(t, &weights).max_violation;
    RhoSolution {
        objective: t.roots().map(|r| ln_c[r].exp()).sum(),
        weights,
        kkt_residual: kkt,
        max_violation,
    }
}

/// The general path: augmented Lagrangian with an active-set Newton polish.
pub(crate) fn solve_rho_numeric(
    t: &Taxonomy,
    rho: f64,
    range_t: f64,
    directional: bool,
) -> Result<RhoSolution> {
    let m = t.node_count();
    let leaves = t.leaves();
    let edges: Vec<(NodeId, NodeId)> = if directional { t.edges().collect() } else { Vec::new() };
    // layout: [alpha (m) | path slacks (|L|) | directional slacks (|E|)]
    let n_var = m + leaves.len() + edges.len();
    let mut rows = Vec::with_capacity(leaves.len() + edges.len());
    for (i, &l) in leaves.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = t.ancestors_closure(l).iter().map(|&n| (n, 1.0)).collect();
        row.push((m + i, -1.0));
        rows.push(row);
    }
    for (k, &(p, c)) in edges.iter().enumerate() {
        rows.push(vec![(c, 1.0), (p, -1.0), (m + leaves.len() + k, -1.0)]);
    }
    let mut lower = vec![0.0; n_var];
    let mut upper = vec![f64::INFINITY; n_var];
    for i in 0..leaves.len() {
        lower[m + i] = 1.0;
        upper[m + i] = range_t;
    }
    let problem = LinearlyConstrained {
        rhs: vec![0.0; rows.len()],
        rows,
        lower,
        upper,
    };

    let longest = t.longest_path_through();
    let mut x0 = vec![0.0; n_var];
    for n in 0..m {
        x0[n] = 1.0 / longest[n] as f64;
    }
    for i in 0..leaves.len() {
        x0[m + i] = 1.0;
    }
    for (k, &(p, c)) in edges.iter().enumerate() {
        x0[m + leaves.len() + k] = (x0[c] - x0[p]).max(0.0);
    }

    let f = |x: &[f64]| rho_objective(&x[..m], rho);
    let grad = |x: &[f64], g: &mut [f64]| {
        g.iter_mut().for_each(|v| *v = 0.0);
        for n in 0..m {
            g[n] = rho * x[n].max(0.0).powf(rho - 1.0);
        }
    };
    // a loose solve usually identifies the active set; Newton finishes it
    let polish = |x: Vec<f64>, kkt: f64| -> (Vec<f64>, f64) {
        let mut best = (x.clone(), kkt);
        for zero in [1e-10, 1e-7, 1e-5] {
            if let Some((xp, mu)) = newton_polish(&problem, m, rho, &x, zero) {
                let mut g = vec![0.0; n_var];
                grad(&xp, &mut g);
                let k = problem.kkt_residual(&xp, &g, &mu);
                if k < best.1 && problem.max_violation(&xp) <= 1e-12 {
                    best = (xp, k);
                }
            }
        }
        best
    };
    let (mut x, mut kkt) = polish(x0.clone(), f64::INFINITY);
    if kkt > POLISHED_KKT {
        let loose = augmented_lagrangian_min(f, &grad, &problem, &x0, 1e-6)?;
        (x, kkt) = polish(loose.x, loose.kkt_residual);
    }
    if kkt > POLISHED_KKT || problem.max_violation(&x) > 1e-12 {
        let tight = augmented_lagrangian_min(f, &grad, &problem, &x, 1e-10)?;
        (x, kkt) = polish(tight.x, tight.kkt_residual);
    }
    let alpha: Vec<f64> = x[..m].iter().map(|v| v.max(0.0)).collect();
    let weights = NodeWeights {
        alpha,
        path_sum_lo: 1.0,
        path_sum_hi: range_t,
    };
    let report = validate_alpha(t, &weights);
    if !report.valid {
        return Err(Error::Solver(format!(
            "rho program ended with path-sum violation {:.3e}",
            report.max_violation
        )));
    }
    Ok(RhoSolution {
        objective: rho_objective(&weights.alpha, rho),
        weights,
        kkt_residual: kkt,
        max_violation: report.max_violation,
    })
}

/// Newton iterations on the equality system of the active set identified by
/// an approximate solution `x` of the slack formulation. Returns the polished
/// point and its multipliers, or `None` when the active-set system is
/// singular or the iterate leaves the box.
fn newton_polish(
    problem: &LinearlyConstrained,
    m: usize,
    rho: f64,
    x: &[f64],
    zero: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    use nalgebra::{DMatrix, DVector};
    let n_var = x.len();
    // free alpha entries and slack variables strictly inside their box
    let free: Vec<usize> = (0..n_var)
        .filter(|&j| {
            if j < m {
                x[j] > zero
            } else {
                x[j] > problem.lower[j] + zero && x[j] < problem.upper[j] - zero
            }
        })
        .collect();
    let mut col = vec![usize::MAX; n_var];
    for (k, &j) in free.iter().enumerate() {
        col[j] = k;
    }
    let nf = free.len();
    let nr = problem.rows.len();
    let mut xf: Vec<f64> = free.iter().map(|&j| x[j]).collect();
    // fixed variables sit exactly on their bound
    let mut fixed = x.to_vec();
    for j in 0..n_var {
        if col[j] == usize::MAX {
            fixed[j] = if j < m {
                0.0
            } else if (x[j] - problem.lower[j]).abs() <= (problem.upper[j] - x[j]).abs() {
                problem.lower[j]
            } else {
                problem.upper[j]
            };
        }
    }
    let mut mu = vec![0.0; nr];
    for _ in 0..60 {
        let mut kkt = DMatrix::<f64>::zeros(nf + nr, nf + nr);
        let mut rhs = DVector::<f64>::zeros(nf + nr);
        for (k, &j) in free.iter().enumerate() {
            if j < m {
                kkt[(k, k)] = rho * (rho - 1.0) * xf[k].powf(rho - 2.0);
                rhs[k] = -rho * xf[k].powf(rho - 1.0);
            }
        }
        for (i, row) in problem.rows.iter().enumerate() {
            let mut r = -problem.rhs[i];
            for &(j, a) in row {
                let v = if col[j] == usize::MAX { fixed[j] } else { xf[col[j]] };
                r += a * v;
                if col[j] != usize::MAX {
                    kkt[(nf + i, col[j])] = a;
                    kkt[(col[j], nf + i)] = a;
                }
            }
            rhs[nf + i] = -r;
        }
        let sol = kkt.svd(true, true).solve(&rhs, 1e-12).ok()?;
        let mut step: f64 = 1.0;
        for k in 0..nf {
            let j = free[k];
            let d = sol[k];
            if d < 0.0 && j < m {
                step = step.min(0.9 * xf[k] / -d);
            }
        }
        let mut moved: f64 = 0.0;
        for k in 0..nf {
            xf[k] += step * sol[k];
            moved = moved.max((step * sol[k]).abs());
        }
        for i in 0..nr {
            mu[i] = sol[nf + i];
        }
        if moved <= 1e-15 {
            break;
        }
    }
    let mut out = fixed;
    for (k, &j) in free.iter().enumerate() {
        out[j] = xf[k];
        if out[j] < problem.lower[j] - 1e-12 || out[j] > problem.upper[j] + 1e-12 {
            return None;
        }
        out[j] = out[j].clamp(problem.lower[j], problem.upper[j]);
    }
    if out.iter().chain(&mu).any(|v| !v.is_finite()) {
        return None;
    }
    Some((out, mu))
}

/// `max min_n α_n` subject to path sums in `[1, T]`, `α ≥ 0`, and optionally
/// `α_n ≥ α_p` on every edge. Solved as an LP with an auxiliary variable.
pub fn solve_maximin(t: &Taxonomy, directional: bool, range_t: f64) -> Result<NodeWeights> {
    AlphaConfig::maximin(directional).with_range(range_t).validate()?;
    Ok(solve_maximin_full(t, directional, range_t)?.0)
}

/// Returns the weights and the attained minimum weight.
pub fn solve_maximin_full(
    t: &Taxonomy,
    directional: bool,
    range_t: f64,
) -> Result<(NodeWeights, f64)> {
    let m = t.node_count();
    let mvar = m;
    let mut lp = LinearProgram::new(m + 1, Sense::Maximize);
    lp.objective[mvar] = 1.0;
    for n in 0..m {
        lp.add_constraint(vec![(n, 1.0), (mvar, -1.0)], Relation::Ge, 0.0);
    }
    for &l in t.leaves() {
        let row: Vec<(usize, f64)> = t.ancestors_closure(l).iter().map(|&n| (n, 1.0)).collect();
        if range_t == 1.0 {
            lp.add_constraint(row, Relation::Eq, 1.0);
        } else {
            lp.add_constraint(row.clone(), Relation::Ge, 1.0);
            lp.add_constraint(row, Relation::Le, range_t);
        }
    }
    if directional {
        for (p, c) in t.edges() {
            lp.add_constraint(vec![(c, 1.0), (p, -1.0)], Relation::Ge, 0.0);
        }
    }
    let report = lp_solve(&lp)?;
    if report.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!("maximin LP ended with {:?}", report.status)));
    }
    let x = report.solution.expect("optimal LP has a solution");
    let alpha: Vec<f64> = x[..m].iter().map(|v| v.max(0.0)).collect();
    let min = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        NodeWeights {
            alpha,
            path_sum_lo: 1.0,
            path_sum_hi: range_t,
        },
        min,
    ))
}

#[derive(Debug, Clone)]
pub struct AlphaReport {
    /// Path sum for each leaf, in `Taxonomy::leaves` order.
    pub path_sums: Vec<f64>,
    pub min_alpha: f64,
    pub max_alpha: f64,
    /// Leaves whose path sum leaves `[lo, hi]` by more than [`PATH_TOL`].
    pub violating_leaves: Vec<NodeId>,
    pub negative_nodes: Vec<NodeId>,
    pub max_violation: f64,
    pub valid: bool,
}

pub fn path_sums(t: &Taxonomy, alpha: &[f64]) -> Vec<f64> {
    t.leaves()
        .iter()
        .map(|&l| t.ancestors_closure(l).iter().map(|&n| alpha[n]).sum())
        .collect()
}

pub fn validate_alpha(t: &Taxonomy, w: &NodeWeights) -> AlphaReport {
    let sums = if w.alpha.len() == t.node_count() {
        path_sums(t, &w.alpha)
    } else {
        vec![f64::NAN; t.leaves().len()]
    };
    let mut violating = Vec::new();
    let mut max_violation: f64 = 0.0;
    for (i, &s) in sums.iter().enumerate() {
        let v = if s.is_nan() {
            f64::INFINITY
        } else {
            (w.path_sum_lo - s).max(s - w.path_sum_hi).max(0.0)
        };
        max_violation = max_violation.max(v);
        if v > PATH_TOL {
            violating.push(t.leaves()[i]);
        }
    }
    let negative: Vec<NodeId> = (0..w.alpha.len()).filter(|&n| !(w.alpha[n] >= 0.0)).collect();
    let min_alpha = w.alpha.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_alpha = w.alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    AlphaReport {
        valid: violating.is_empty() && negative.is_empty() && w.alpha.len() == t.node_count(),
        path_sums: sums,
        min_alpha,
        max_alpha,
        violating_leaves: violating,
        negative_nodes: negative,
        max_violation,
    }
}

/// Euclidean projection onto `{α ≥ 0, lo ≤ Σ_{Ā(l)} α ≤ hi ∀ l}` by cyclic
/// Dykstra over the per-leaf slabs and the non-negative orthant.
#[derive(Debug, Clone)]
pub struct PathPolytope {
    paths: Vec<Vec<NodeId>>,
    lo: f64,
    hi: f64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl PathPolytope {
    pub fn new(t: &Taxonomy, lo: f64, hi: f64) -> Self {
        PathPolytope {
            paths: t.leaves().iter().map(|&l| t.ancestors_closure(l).to_vec()).collect(),
            lo,
            hi,
            max_sweeps: 200,
            tol: 1e-9,
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        let k = self.paths.len();
        let n = x.len();
        let mut corr = vec![vec![0.0; n]; k + 1];
        for _ in 0..self.max_sweeps {
            let mut change = 0.0f64;
            for (i, path) in self.paths.iter().enumerate() {
                // y = x + p_i, project y onto slab i, p_i = y - P(y)
                let p = &mut corr[i];
                let mut s = 0.0;
                for &j in path {
                    s += x[j] + p[j];
                }
                let len = path.len() as f64;
                let shift = if s > self.hi {
                    (s - self.hi) / len
                } else if s < self.lo {
                    (s - self.lo) / len
                } else {
                    0.0
                };
                for &j in path {
                    let y = x[j] + p[j];
                    let new = y - shift;
                    change = change.max((new - x[j]).abs());
                    p[j] = shift;
                    x[j] = new;
                }
            }
            let p = &mut corr[k];
            for j in 0..n {
                let y = x[j] + p[j];
                let new = y.max(0.0);
                change = change.max((new - x[j]).abs());
                p[j] = y - new;
                x[j] = new;
            }
            if change <= self.tol {
                break;
            }
        }
    }
}
