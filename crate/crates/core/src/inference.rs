//! Prediction and loss-augmented inference.
//!
//! Single-label problems enumerate leaves. Multi-label problems maximize
//! `Σ_{n∈y} r_n` over ancestor-closed label sets: by dynamic programming on
//! trees and by an integer program (LP first, branch-and-bound on fractional
//! relaxations) on DAGs.

use serde::{Deserialize, Serialize};

use crate::alpha::NodeWeights;
use crate::error::{Error, Result};
use crate::model::{
    class_coefficients, leaf_error_term, node_potentials, potential, structural_error, ErrorKind,
    SparseVector, WeightMatrix,
};
use crate::optim::{ip_solve_binary, lp_solve, LinearProgram, Relation, Sense, SolveStatus};
use crate::taxonomy::{Label, NodeId, Taxonomy};

/// Largest leaf count accepted by the exhaustive multi-label oracle.
pub const MAX_BRUTE_LEAVES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `max_y pot(y) - pot(y_true) + Δ(y, y_true)`.
    #[default]
    Plain,
    /// `max_y (pot(y) - pot(y_true)) / ||Λ̃(y) - Λ̃(y_true)|| + 1`, 0 at `y_true`.
    MarginNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DagMode {
    #[default]
    LpThenIp,
    Ip,
    LpRound,
}

impl std::str::FromStr for DagMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp_then_ip" => Ok(DagMode::LpThenIp),
            "ip" => Ok(DagMode::Ip),
            "lp_round" => Ok(DagMode::LpRound),
            _ => Err(Error::InvalidConfig(format!("unknown DAG inference mode '{s}'"))),
        }
    }
}

/// Leaf-indexed tables for single-label inference under fixed `α` and error.
#[derive(Debug, Clone)]
pub struct SingleLabelSpace {
    leaves: Vec<NodeId>,
    paths: Vec<Vec<NodeId>>,
    /// `error[i * L + j]`: error of predicting leaf `j` when leaf `i` is true.
    error: Vec<f64>,
    /// `dist[i * L + j] = ||Λ̃(j) - Λ̃(i)||`.
    dist: Vec<f64>,
}

impl SingleLabelSpace {
    pub fn new(t: &Taxonomy, alpha: &NodeWeights, kind: ErrorKind) -> Result<Self> {
        let leaves = t.leaves().to_vec();
        if leaves.is_empty() {
            return Err(Error::EmptyLabel);
        }
        let labels: Vec<Label> = leaves.iter().map(|&l| t.leaf_label(l)).collect();
        let k = leaves.len();
        let mut error = vec![0.0; k * k];
        let mut dist = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                error[i * k + j] = structural_error(kind, alpha, &labels[j], &labels[i]);
                dist[i * k + j] =
                    structural_error(ErrorKind::Normalized, alpha, &labels[j], &labels[i]);
            }
        }
        Ok(SingleLabelSpace {
            paths: labels.iter().map(|y| y.nodes().to_vec()).collect(),
            leaves,
            error,
            dist,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf(&self, pos: usize) -> NodeId {
        self.leaves[pos]
    }

    pub fn path(&self, pos: usize) -> &[NodeId] {
        &self.paths[pos]
    }

    pub fn error(&self, truth: usize, pred: usize) -> f64 {
        self.error[truth * self.leaves.len() + pred]
    }

    /// Potential of each leaf label from per-node potentials.
    pub fn path_potentials(&self, node_pot: &[f64]) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| p.iter().map(|&n| node_pot[n]).sum())
            .collect()
    }

    /// Value of the max term for each candidate leaf position.
    pub fn candidate_values(
        &self,
        node_pot: &[f64],
        truth: Option<usize>,
        variant: Variant,
    ) -> Vec<f64> {
        let pot = self.path_potentials(node_pot);
        let k = self.leaves.len();
        match truth {
            None => pot,
            Some(i) => (0..k)
                .map(|j| {
                    if j == i {
                        return 0.0;
                    }
                    match variant {
                        Variant::Plain => pot[j] - pot[i] + self.error[i * k + j],
                        Variant::MarginNormalized => {
                            let d = self.dist[i * k + j];
                            if d > 0.0 {
                                (pot[j] - pot[i]) / d + 1.0
                            } else {
                                f64::NEG_INFINITY
                            }
                        }
                    }
                })
                .collect(),
        }
    }

    /// Leaf position maximizing the max term, with its value; ties go to the
    /// smallest leaf id.
    pub fn argmax(&self, node_pot: &[f64], truth: Option<usize>, variant: Variant) -> (usize, f64) {
        let vals = self.candidate_values(node_pot, truth, variant);
        let mut best = 0;
        for j in 1..vals.len() {
            if vals[j] > vals[best] {
                best = j;
            }
        }
        (best, vals[best])
    }
}

/// Single-label prediction (`y_true = None`) or loss-augmented inference.
#[allow(clippy::too_many_arguments)]
pub fn argmax_single(
    w: &WeightMatrix,
    alpha: &NodeWeights,
    x: &SparseVector,
    t: &Taxonomy,
    y_true: Option<&Label>,
    variant: Variant,
    normalized: bool,
    kind: ErrorKind,
) -> Result<Label> {
    if variant == Variant::MarginNormalized && y_true.is_none() {
        return Err(Error::InvalidConfig("margin-normalized inference needs a true label".into()));
    }
    w.check_input(x)?;
    let space = SingleLabelSpace::new(t, alpha, kind)?;
    let pot = node_potentials(w, &class_coefficients(alpha, normalized), x);
    let truth = match y_true {
        Some(y) => {
            if !y.is_single() {
                return Err(Error::MultiLabelUnsupported("single-label inference"));
            }
            Some(t.leaf_position(y.leaves()[0]).ok_or(Error::NotALeaf(y.leaves()[0] as u64))?)
        }
        None => None,
    };
    let (pos, _) = space.argmax(&pot, truth, variant);
    Ok(t.leaf_label(space.leaf(pos)))
}

/// Multi-label scores `r_n`: node potentials plus the decomposed leaf error.
pub fn loss_augmented_scores(node_pot: &[f64], t: &Taxonomy, y_true: &Label) -> Vec<f64> {
    let mut r = node_pot.to_vec();
    for &l in t.leaves() {
        r[l] += leaf_error_term(l, y_true);
    }
    r
}

pub fn label_score(r: &[f64], y: &Label) -> f64 {
    y.nodes().iter().map(|&n| r[n]).sum()
}

/// Exact `max_y Σ_{n∈y} r_n` over multi-label sets of a tree (or forest) in
/// `O(M)`. A selected internal node keeps every child of positive value, or
/// its single best child when none is positive.
pub fn argmax_multilabel_tree(r: &[f64], t: &Taxonomy) -> Result<(Label, f64)> {
    t.require_tree()?;
    let m = t.node_count();
    if r.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: r.len(),
        });
    }
    let mut best = vec![0.0; m];
    for &n in t.topo_order().iter().rev() {
        best[n] = r[n] + select_value(t.children(n), &best);
    }
    let roots: Vec<NodeId> = t.roots().collect();
    let mut selected = vec![false; m];
    let mut stack = select_children(&roots, &best);
    while let Some(n) = stack.pop() {
        selected[n] = true;
        stack.extend(select_children(t.children(n), &best));
    }
    let label = t.label_from_selection(&selected)?;
    // re-summed in node order so equal labels give bit-identical values
    Ok((label.clone(), label_score(r, &label)))
}

fn select_value(children: &[NodeId], best: &[f64]) -> f64 {
    if children.is_empty() {
        return 0.0;
    }
    let pos: f64 = children.iter().map(|&c| best[c].max(0.0)).sum();
    if children.iter().any(|&c| best[c] > 0.0) {
        pos
    } else {
        children.iter().map(|&c| best[c]).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn select_children(children: &[NodeId], best: &[f64]) -> Vec<NodeId> {
    if children.is_empty() {
        return Vec::new();
    }
    let pos: Vec<NodeId> = children.iter().copied().filter(|&c| best[c] > 0.0).collect();
    if !pos.is_empty() {
        return pos;
    }
    let mut arg = children[0];
    for &c in &children[1..] {
        if best[c] > best[arg] || (best[c] == best[arg] && c < arg) {
            arg = c;
        }
    }
    vec![arg]
}

#[derive(Debug, Clone)]
pub struct DagInference {
    pub label: Label,
    pub value: f64,
    /// Optimal value of the LP relaxation, when it was solved.
    pub lp_value: Option<f64>,
    pub lp_integral: bool,
    /// Branch-and-bound nodes explored (0 when not used).
    pub bnb_nodes: usize,
}

/// The 0/1 program over node indicators `z`: upward closure along every edge,
/// at least one selected child under every selected internal node, and at
/// least one selected leaf.
pub fn multilabel_program(r: &[f64], t: &Taxonomy) -> LinearProgram {
    let m = t.node_count();
    let mut p = LinearProgram::new(m, Sense::Maximize);
    p.objective = r.to_vec();
    for n in 0..m {
        p.set_bounds(n, 0.0, 1.0);
        let ch = t.children(n);
        if !ch.is_empty() {
            let mut row: Vec<(usize, f64)> = ch.iter().map(|&c| (c, 1.0)).collect();
            row.push((n, -1.0));
            p.add_constraint(row, Relation::Ge, 0.0);
        }
    }
    for (par, c) in t.edges() {
        p.add_constraint(vec![(c, 1.0), (par, -1.0)], Relation::Le, 0.0);
    }
    p.add_constraint(t.leaves().iter().map(|&l| (l, 1.0)).collect(), Relation::Ge, 1.0);
    p
}

pub fn argmax_multilabel_dag(r: &[f64], t: &Taxonomy, mode: DagMode) -> Result<DagInference> {
    let m = t.node_count();
    if r.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: r.len(),
        });
    }
    let program = multilabel_program(r, t);
    let mut lp_value = None;
    let mut lp_integral = false;
    let mut bnb_nodes = 0;
    let z: Vec<f64> = match mode {
        DagMode::Ip => {
            let rep = ip_solve_binary(&program)?;
            bnb_nodes = rep.iterations;
            expect_optimal(rep.status, "integer program")?;
            rep.solution.unwrap()
        }
        DagMode::LpThenIp | DagMode::LpRound => {
            let lp = lp_solve(&program)?;
            expect_optimal(lp.status, "LP relaxation")?;
            lp_value = Some(lp.objective);
            lp_integral = lp.is_integral;
            let x = lp.solution.unwrap();
            if lp.is_integral {
                x.iter().map(|v| v.round()).collect()
            } else if mode == DagMode::LpThenIp {
                let rep = ip_solve_binary(&program)?;
                bnb_nodes = rep.iterations;
                expect_optimal(rep.status, "integer program")?;
                rep.solution.unwrap()
            } else {
                round_to_label(&x, t)
            }
        }
    };
    let selected: Vec<bool> = z.iter().map(|&v| v > 0.5).collect();
    if !t.is_feasible_selection(&selected) {
        return Err(Error::Solver("inference returned an infeasible node set".into()));
    }
    let label = t.label_from_selection(&selected)?;
    Ok(DagInference {
        value: label_score(r, &label),
        label,
        lp_value,
        lp_integral,
        bnb_nodes,
    })
}

fn expect_optimal(status: SolveStatus, what: &str) -> Result<()> {
    if status == SolveStatus::Optimal {
        Ok(())
    } else {
        Err(Error::Solver(format!("{what} ended with {status:?}")))
    }
}

/// Keeps leaves with `z ≥ 1/2` (or the largest one) and closes upwards.
fn round_to_label(z: &[f64], t: &Taxonomy) -> Vec<f64> {
    let mut leaves: Vec<NodeId> = t.leaves().iter().copied().filter(|&l| z[l] >= 0.5).collect();
    if leaves.is_empty() {
        let mut arg = t.leaves()[0];
        for &l in t.leaves() {
            if z[l] > z[arg] {
                arg = l;
            }
        }
        leaves.push(arg);
    }
    let mut out = vec![0.0; z.len()];
    for l in leaves {
        for &n in t.ancestors_closure(l) {
            out[n] = 1.0;
        }
    }
    out
}

/// Multi-label maximization dispatched on the taxonomy shape.
pub fn argmax_multilabel(r: &[f64], t: &Taxonomy, mode: DagMode) -> Result<(Label, f64)> {
    if t.is_tree() {
        argmax_multilabel_tree(r, t)
    } else {
        let d = argmax_multilabel_dag(r, t, mode)?;
        Ok((d.label, d.value))
    }
}

/// Exhaustive `max_y Σ_{n∈y} r_n` over all non-empty leaf subsets. Ties go
/// to the lexicographically smallest node set.
pub fn brute_force_multilabel(r: &[f64], t: &Taxonomy) -> Result<(Label, f64)> {
    let leaves = t.leaves();
    if leaves.len() > MAX_BRUTE_LEAVES {
        return Err(Error::TooManyLeaves(leaves.len()));
    }
    let mut best: Option<(Label, f64)> = None;
    for mask in 1u32..(1u32 << leaves.len()) {
        let chosen: Vec<NodeId> = (0..leaves.len())
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| leaves[i])
            .collect();
        let y = t.label_closure(&chosen)?;
        let v = label_score(r, &y);
        let better = match &best {
            None => true,
            Some((by, bv)) => v > *bv || (v == *bv && y.nodes() < by.nodes()),
        };
        if better {
            best = Some((y, v));
        }
    }
    Ok(best.expect("at least one leaf"))
}

/// Exhaustive single-label counterpart of [`argmax_single`], computed from
/// label sets directly. Returns the maximizing label and the max-term value.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_single(
    w: &WeightMatrix,
    alpha: &NodeWeights,
    x: &SparseVector,
    t: &Taxonomy,
    y_true: Option<&Label>,
    variant: Variant,
    normalized: bool,
    kind: ErrorKind,
) -> Result<(Label, f64)> {
    let mut best: Option<(Label, f64)> = None;
    for &l in t.leaves() {
        let y = t.leaf_label(l);
        let p = potential(w, alpha, x, &y, normalized)?;
        let v = match y_true {
            None => p,
            Some(yt) if *yt == y => 0.0,
            Some(yt) => {
                let diff = p - potential(w, alpha, x, yt, normalized)?;
                match variant {
                    Variant::Plain => diff + structural_error(kind, alpha, &y, yt),
                    Variant::MarginNormalized => {
                        let d = structural_error(ErrorKind::Normalized, alpha, &y, yt);
                        if d > 0.0 {
                            diff / d + 1.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    }
                }
            }
        };
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((y, v));
        }
    }
    best.ok_or(Error::EmptyLabel)
}
