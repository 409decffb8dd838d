//! Weight matrices, sparse features, class attributes, potentials and
//! structural errors.

use serde::{Deserialize, Serialize};

use crate::alpha::NodeWeights;
use crate::error::{Error, Result};
use crate::taxonomy::{Label, NodeId, Taxonomy};

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Sorts by index and sums duplicates. Exact zeros are dropped.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<usize> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != 0.0)
            .unzip();
        SparseVector { indices, values }
    }

    pub fn from_dense(x: &[f64]) -> Self {
        let (indices, values) = x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .unzip();
        SparseVector { indices, values }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// One past the largest index, or 0 when empty.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Dense row-major `M x d` matrix; row `n` holds the weights of node `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        WeightMatrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(WeightMatrix {
            rows: rows.len(),
            dim,
            data,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).take(self.rows).map(|c| c.to_vec()).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn dot_row(&self, n: usize, x: &SparseVector) -> f64 {
        x.dot(self.row(n))
    }

    /// `W_n += s * x`.
    pub fn add_scaled(&mut self, n: usize, s: f64, x: &SparseVector) {
        let row = self.row_mut(n);
        for (i, v) in x.iter() {
            row[i] += s * v;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn row_norm_sq(&self, n: usize) -> f64 {
        self.row(n).iter().map(|v| v * v).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_input(&self, x: &SparseVector) -> Result<()> {
        if x.min_dim() > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.min_dim(),
            });
        }
        Ok(())
    }
}

/// Per-node potential coefficients: `sqrt(α_n)` when normalized, 1 otherwise.
pub fn class_coefficients(alpha: &NodeWeights, normalized: bool) -> Vec<f64> {
    if normalized {
        alpha.sqrt()
    } else {
        vec![1.0; alpha.len()]
    }
}

/// `c_n W_n·x` for every node.
pub fn node_potentials(w: &WeightMatrix, coeff: &[f64], x: &SparseVector) -> Vec<f64> {
    (0..w.rows()).map(|n| coeff[n] * w.dot_row(n, x)).collect()
}

/// `Σ_{n∈y} c_n W_n·x`.
pub fn potential(
    w: &WeightMatrix,
    alpha: &NodeWeights,
    x: &SparseVector,
    y: &Label,
    normalized: bool,
) -> Result<f64> {
    if alpha.len() != w.rows() {
        return Err(Error::DimensionMismatch {
            expected: w.rows(),
            got: alpha.len(),
        });
    }
    w.check_input(x)?;
    Ok(y
        .nodes()
        .iter()
        .map(|&n| {
            let c = if normalized { alpha.alpha[n].max(0.0).sqrt() } else { 1.0 };
            c * w.dot_row(n, x)
        })
        .sum())
}

/// Dense class attribute over nodes: indicator of `y`, or `sqrt(α)` on `y`
/// when `alpha` is given.
pub fn class_attribute(y: &Label, node_count: usize, alpha: Option<&NodeWeights>) -> Vec<f64> {
    let mut v = vec![0.0; node_count];
    for &n in y.nodes() {
        v[n] = alpha.map_or(1.0, |a| a.alpha[n].max(0.0).sqrt());
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Node-set symmetric difference size.
    Hamming,
    /// `sqrt(Σ_{n ∈ y Δ y'} α_n)`.
    Normalized,
    /// Leaf symmetric difference, in the per-leaf decomposed form used by
    /// multi-label inference.
    LeafDecomposable,
    /// 1 when the leaf sets differ.
    ZeroOne,
}

impl std::str::FromStr for ErrorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(ErrorKind::Hamming),
            "normalized" => Ok(ErrorKind::Normalized),
            "leaf_decomposable" | "leaf" => Ok(ErrorKind::LeafDecomposable),
            "zero_one" | "01" => Ok(ErrorKind::ZeroOne),
            _ => Err(Error::InvalidConfig(format!("unknown error kind '{s}'"))),
        }
    }
}

impl std::fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorKind::Hamming => "hamming",
            ErrorKind::Normalized => "normalized",
            ErrorKind::LeafDecomposable => "leaf_decomposable",
            ErrorKind::ZeroOne => "zero_one",
        })
    }
}

/// Calls `f` on every node in the symmetric difference of two sorted sets.
fn for_each_sym_diff(a: &[NodeId], b: &[NodeId], mut f: impl FnMut(NodeId)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            f(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            f(b[j]);
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
}

/// Per-leaf term of the decomposed leaf error for leaf `l` in `y`:
/// `+1` if `l ∉ y_true`, `-1` if `l ∈ y_true`. The error is the sum over the
/// leaves of `y` plus `|y_true ∩ leaves|`.
pub fn leaf_error_term(l: NodeId, y_true: &Label) -> f64 {
    if y_true.contains(l) {
        -1.0
    } else {
        1.0
    }
}

pub fn structural_error(kind: ErrorKind, alpha: &NodeWeights, y: &Label, y_true: &Label) -> f64 {
    match kind {
        ErrorKind::Hamming => {
            let mut c = 0usize;
            for_each_sym_diff(y.nodes(), y_true.nodes(), |_| c += 1);
            c as f64
        }
        ErrorKind::Normalized => {
            let mut s = 0.0;
            for_each_sym_diff(y.nodes(), y_true.nodes(), |n| s += alpha.alpha[n]);
            s.max(0.0).sqrt()
        }
        ErrorKind::LeafDecomposable => {
            let per_leaf: f64 = y.leaves().iter().map(|&l| leaf_error_term(l, y_true)).sum();
            per_leaf + y_true.leaves().len() as f64
        }
        ErrorKind::ZeroOne => {
            if y.leaves() == y_true.leaves() {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// `|leaves(y) \ leaves(y_true)|` counted directly, without decomposition.
pub fn leaf_set_difference(y: &Label, y_true: &Label) -> usize {
    y.leaves().iter().filter(|l| !y_true.leaves().contains(l)).count()
}

/// Checks that `w` has one row per node of `t`.
pub fn check_shape(w: &WeightMatrix, t: &Taxonomy) -> Result<()> {
    if w.rows() != t.node_count() {
        return Err(Error::DimensionMismatch {
            expected: t.node_count(),
            got: w.rows(),
        });
    }
    Ok(())
}
