//! Shared SVM: joint learning of the weights and the normalization `α`.
//!
//! In the `U` parameterization the objective is
//! `(λ/N) Σ_n ||U_n||²/α_n + mean loss(Σ_{n∈y} U_n·x)` subject to
//! `Σ_{n∈Ā(l)} α_n ≤ 1` for every leaf. Training alternates SGD over
//! `V_n = U_n/sqrt(α_n)` (which is plain NHSVM training with fixed `α`) with an
//! exact closed-form minimization over `α` for fixed `U`.

use serde::{Deserialize, Serialize};

use crate::alpha::NodeWeights;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::Variant;
use crate::model::{ErrorKind, WeightMatrix};
use crate::optim::{augmented_lagrangian_min, LinearlyConstrained};
use crate::taxonomy::Taxonomy;
use crate::training::{run_epoch, LossSpec, Model, Objective, TrainConfig, TrainingProblem};

/// Relative slack allowed when asserting that an `α`-step did not increase
/// the joint objective.
pub const ALPHA_STEP_TOL: f64 = 1e-9;

/// Relative change of the outer objective below which training stops early.
pub const OUTER_TOL: f64 = 1e-5;

fn row_norms_sq(u: &WeightMatrix) -> Vec<f64> {
    (0..u.rows()).map(|n| u.row_norm_sq(n)).collect()
}

/// Minimizer of `Σ_n ||U_n||²/α_n` over `{α ≥ 0, Σ_{n∈Ā(l)} α_n ≤ 1}` on a
/// tree, in `O(M)`.
pub fn optimal_alpha_tree(u: &WeightMatrix, t: &Taxonomy) -> Result<NodeWeights> {
    if u.rows() != t.node_count() {
        return Err(Error::DimensionMismatch {
            expected: t.node_count(),
            got: u.rows(),
        });
    }
    optimal_alpha_from_norms(&row_norms_sq(u), t)
}

/// As [`optimal_alpha_tree`], given the squared row norms `B_n = ||U_n||²`.
///
/// A subtree with budget `L` has optimal value `N_n / L`. Splitting a node's
/// budget as `k` to itself and `1 - k` to its children gives
/// `N_n = (sqrt(B_n) + sqrt(S))²` with `S = Σ_c N_c` and
/// `k = E_n = sqrt(B_n) / (sqrt(B_n) + sqrt(S))`. Leaves take the whole
/// remaining budget, so every path sum is exactly one.
pub fn optimal_alpha_from_norms(b: &[f64], t: &Taxonomy) -> Result<NodeWeights> {
    t.require_tree()?;
    let m = t.node_count();
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("row norms"));
    }
    let mut n_val = vec![0.0; m];
    let mut e = vec![0.0; m];
    for &n in t.topo_order().iter().rev() {
        if t.is_leaf(n) {
            n_val[n] = b[n];
            e[n] = 1.0;
            continue;
        }
        let s: f64 = t.children(n).iter().map(|&c| n_val[c]).sum();
        let (rb, rs) = (b[n].sqrt(), s.sqrt());
        n_val[n] = (rb + rs) * (rb + rs);
        e[n] = if rb + rs > 0.0 { rb / (rb + rs) } else { 0.0 };
    }
    let mut budget = vec![0.0; m];
    let mut alpha = vec![0.0; m];
    for &n in t.topo_order() {
        let lp = match t.parents(n).first() {
            Some(&p) => budget[p],
            None => 1.0,
        };
        alpha[n] = lp * e[n];
        budget[n] = lp * (1.0 - e[n]);
    }
    Ok(NodeWeights {
        alpha,
        path_sum_lo: 0.0,
        path_sum_hi: 1.0,
    })
}

/// `Σ_n B_n/α_n` with `0/0 = 0`; `+∞` when some `α_n = 0` carries `B_n > 0`.
pub fn alpha_objective_norms(b: &[f64], alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&bn, &a) in b.iter().zip(alpha) {
        if bn == 0.0 {
            continue;
        }
        if a <= 0.0 {
            return f64::INFINITY;
        }
        total += bn / a;
    }
    total
}

pub fn alpha_objective(u: &WeightMatrix, alpha: &NodeWeights) -> f64 {
    alpha_objective_norms(&row_norms_sq(u), &alpha.alpha)
}

/// Numerical solution of the same subproblem by an augmented Lagrangian over
/// nodes with `B_n > 0` (the others are optimally zero). Returns the weights
/// and the objective value. Works on DAGs too.
pub fn optimal_alpha_numeric(b: &[f64], t: &Taxonomy) -> Result<(NodeWeights, f64)> {
    let m = t.node_count();
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    let active: Vec<usize> = (0..m).filter(|&n| b[n] > 0.0).collect();
    let mut var_of = vec![usize::MAX; m];
    for (k, &n) in active.iter().enumerate() {
        var_of[n] = k;
    }
    let na = active.len();
    let mut rows = Vec::new();
    for &l in t.leaves() {
        let row: Vec<(usize, f64)> = t
            .ancestors_closure(l)
            .iter()
            .filter(|&&n| var_of[n] != usize::MAX)
            .map(|&n| (var_of[n], 1.0))
            .collect();
        if !row.is_empty() {
            rows.push(row);
        }
    }
    let longest = rows.iter().map(Vec::len).max().unwrap_or(1) as f64;
    let ns = rows.len();
    let mut x0 = vec![1.0 / longest; na + ns];
    for (i, row) in rows.iter_mut().enumerate() {
        x0[na + i] = 1.0 - row.len() as f64 / longest;
        row.push((na + i, 1.0));
    }
    let mut lower = vec![1e-12; na];
    lower.extend(std::iter::repeat_n(0.0, ns));
    let problem = LinearlyConstrained {
        rhs: vec![1.0; ns],
        rows,
        lower,
        upper: vec![1.0; na + ns],
    };
    let bw: Vec<f64> = active.iter().map(|&n| b[n]).collect();
    let f = |x: &[f64]| bw.iter().zip(x).map(|(b, a)| b / a).sum::<f64>();
    let grad = |x: &[f64], g: &mut [f64]| {
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = if k < na { -bw[k] / (x[k] * x[k]) } else { 0.0 };
        }
    };
    let sol = augmented_lagrangian_min(f, grad, &problem, &x0, 1e-10)?;
    let mut alpha = vec![0.0; m];
    for (k, &n) in active.iter().enumerate() {
        alpha[n] = sol.x[k];
    }
    let value = alpha_objective_norms(b, &alpha);
    Ok((
        NodeWeights {
            alpha,
            path_sum_lo: 0.0,
            path_sum_hi: 1.0,
        },
        value,
    ))
}

/// Joint objective in `(U, α)`: `(λ/N) Σ ||U_n||²/α_n + mean loss` where the
/// loss scores labels by `Σ_{n∈y} U_n·x` against the given error.
pub fn joint_objective(
    u: &WeightMatrix,
    alpha: &NodeWeights,
    data: &Dataset,
    t: &Taxonomy,
    lambda: f64,
    kind: ErrorKind,
) -> Result<f64> {
    let spec = LossSpec {
        alpha: NodeWeights::ones(t),
        kind,
        variant: Variant::Plain,
    };
    let p = TrainingProblem::new(t, spec, false, Default::default())?;
    let n = data.len().max(1) as f64;
    let mut loss = 0.0;
    for inst in &data.instances {
        loss += p.loss(u, inst)?;
    }
    Ok(lambda / n * alpha_objective(u, alpha) + loss / n)
}

/// Joint objective just before and after one `α`-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaStep {
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsvmState {
    pub u: WeightMatrix,
    pub v: WeightMatrix,
    pub alpha: NodeWeights,
    pub outer_iterations: usize,
    pub trace: Vec<AlphaStep>,
}

/// `U_n = sqrt(α_n) V_n`.
pub fn u_from_v(v: &WeightMatrix, alpha: &NodeWeights) -> WeightMatrix {
    let mut u = v.clone();
    for n in 0..u.rows() {
        let s = alpha.alpha[n].max(0.0).sqrt();
        u.row_mut(n).iter_mut().for_each(|x| *x *= s);
    }
    u
}

/// `V_n = U_n / sqrt(α_n)`, zero where `α_n = 0`.
pub fn v_from_u(u: &WeightMatrix, alpha: &NodeWeights) -> WeightMatrix {
    let mut v = u.clone();
    for n in 0..v.rows() {
        let a = alpha.alpha[n];
        let s = if a > 0.0 { 1.0 / a.sqrt() } else { 0.0 };
        v.row_mut(n).iter_mut().for_each(|x| *x *= s);
    }
    v
}

fn ssvm_problem<'a>(t: &'a Taxonomy, alpha: &NodeWeights, kind: ErrorKind) -> Result<TrainingProblem<'a>> {
    let spec = LossSpec {
        alpha: alpha.clone(),
        kind,
        variant: Variant::Plain,
    };
    TrainingProblem::new(t, spec, false, Default::default())
}

/// Alternating optimization; returns the final state with the per-round
/// `α`-step trace. Fails if any `α`-step raises the objective by more than
/// [`ALPHA_STEP_TOL`] relative.
pub fn train_ssvm_state(data: &Dataset, t: &Taxonomy, cfg: &TrainConfig) -> Result<SsvmState> {
    cfg.validate()?;
    t.require_tree()?;
    if data.multilabel {
        return Err(Error::MultiLabelUnsupported("ssvm"));
    }
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let kind = cfg.error_kind_for(false);
    let mut alpha = cfg.alpha.compute(t)?;
    let mut v = WeightMatrix::zeros(t.node_count(), data.dim);
    let lambda_p = cfg.lambda_prime(data.len());
    let mut step = 0u64;
    let mut trace: Vec<AlphaStep> = Vec::new();
    let mut rounds = 0;
    for round in 0..cfg.outer_rounds {
        let problem = ssvm_problem(t, &alpha, kind)?;
        for e in 0..cfg.inner_epochs {
            let epoch = round * cfg.inner_epochs + e;
            run_epoch(&problem, &mut v, data, lambda_p, cfg.seed, epoch, &mut step, cfg.project_ball, &mut |_, _| {})?;
        }
        let before = problem.objective(&v, data, cfg.lambda)?;
        let u = u_from_v(&v, &alpha);
        let new_alpha = optimal_alpha_tree(&u, t)?;
        let new_v = v_from_u(&u, &new_alpha);
        let after = ssvm_problem(t, &new_alpha, kind)?.objective(&new_v, data, cfg.lambda)?;
        if after > before + ALPHA_STEP_TOL * before.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Solver(format!(
                "alpha step increased the objective from {before} to {after}"
            )));
        }
        alpha = new_alpha;
        v = new_v;
        rounds = round + 1;
        let prev = trace.last().map(|s| s.after);
        trace.push(AlphaStep { before, after });
        if let Some(p) = prev {
            if (p - after).abs() <= OUTER_TOL * p.abs() {
                break;
            }
        }
    }
    Ok(SsvmState {
        u: u_from_v(&v, &alpha),
        v,
        alpha,
        outer_iterations: rounds,
        trace,
    })
}

/// SSVM training packaged as a [`Model`]: weights are `V`, `α` is the learned
/// one, and the history holds the objective after each `α`-step.
pub fn train_ssvm(data: &Dataset, t: &Taxonomy, cfg: &TrainConfig) -> Result<Model> {
    let state = train_ssvm_state(data, t, cfg)?;
    Ok(Model {
        weights: state.v,
        alpha: state.alpha,
        config: TrainConfig {
            objective: Objective::Ssvm,
            ..cfg.clone()
        },
        history: state.trace.iter().map(|s| s.after).collect(),
        multilabel: false,
        taxonomy_fingerprint: t.fingerprint(),
    })
}
