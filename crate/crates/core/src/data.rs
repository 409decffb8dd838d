//! Datasets: text I/O, synthetic generators and evaluation metrics.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, so generated
//! data is bit-identical for identical arguments.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{SparseVector, WeightMatrix};
use crate::taxonomy::{Label, NodeId, Taxonomy};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x: SparseVector,
    pub y: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub dim: usize,
    /// True when some label has more than one leaf.
    pub multilabel: bool,
}

impl Dataset {
    pub fn new(instances: Vec<Instance>, dim: usize) -> Result<Self> {
        for inst in &instances {
            if inst.x.min_dim() > dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: inst.x.min_dim(),
                });
            }
        }
        let multilabel = instances.iter().any(|i| !i.y.is_single());
        Ok(Dataset {
            instances,
            dim,
            multilabel,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.instances.iter().map(|i| i.y.clone()).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let instances: Vec<Instance> = idx.iter().map(|&i| self.instances[i].clone()).collect();
        Dataset {
            multilabel: instances.iter().any(|i| !i.y.is_single()),
            instances,
            dim: self.dim,
        }
    }

    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut instances = self.instances.clone();
        instances.extend(other.instances.iter().cloned());
        Dataset {
            instances,
            dim: self.dim.max(other.dim),
            multilabel: self.multilabel || other.multilabel,
        }
    }

    /// Shuffles with `seed` and cuts into consecutive parts of the given
    /// fractions; the last part takes the remainder.
    pub fn split(&self, fractions: &[f64], seed: u64) -> Vec<Dataset> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut out = Vec::with_capacity(fractions.len());
        let mut start = 0;
        for (k, f) in fractions.iter().enumerate() {
            let end = if k + 1 == fractions.len() {
                self.len()
            } else {
                (start + (f * self.len() as f64).round() as usize).min(self.len())
            };
            out.push(self.subset(&idx[start..end]));
            start = end;
        }
        out
    }

    /// Number of instances carrying each leaf, in `t.leaves()` order.
    pub fn leaf_counts(&self, t: &Taxonomy) -> Vec<usize> {
        let mut c = vec![0; t.leaves().len()];
        for inst in &self.instances {
            for &l in inst.y.leaves() {
                if let Some(p) = t.leaf_position(l) {
                    c[p] += 1;
                }
            }
        }
        c
    }
}

/// Complete binary tree with `depth` levels; children of `k` are `2k+1`
/// and `2k+2`.
pub fn binary_tree(depth: usize) -> Result<Taxonomy> {
    if depth < 2 {
        return Err(Error::InvalidConfig("depth must be at least 2".into()));
    }
    let m = (1usize << depth) - 1;
    let edges: Vec<(NodeId, NodeId)> = (1..m).map(|c| ((c - 1) / 2, c)).collect();
    Taxonomy::from_dense(m, &edges)
}

/// Binary tree deepening along one branch: at level `k ≥ 1` node `2k-1` is
/// a leaf and node `2k` continues. `2·depth - 1` nodes, `depth` leaves.
pub fn caterpillar(depth: usize) -> Result<Taxonomy> {
    if depth < 2 {
        return Err(Error::InvalidConfig("depth must be at least 2".into()));
    }
    let mut edges = Vec::new();
    for k in 1..depth {
        let parent = if k == 1 { 0 } else { 2 * (k - 1) };
        edges.push((parent, 2 * k - 1));
        edges.push((parent, 2 * k));
    }
    Taxonomy::from_dense(2 * depth - 1, &edges)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Balanced synthetic data: node weights and instances i.i.d. standard
/// normal (weights drawn first); each instance takes the leaf whose path
/// potential `Σ_{n∈Ā(l)} W_n·x` is largest. Returns the generating weights.
pub fn generate_balanced(
    d: usize,
    depth: usize,
    n: usize,
    seed: u64,
) -> Result<(Taxonomy, Dataset, WeightMatrix)> {
    let t = binary_tree(depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..t.node_count()).map(|_| gaussian_vec(&mut rng, d)).collect();
    let w = WeightMatrix::from_rows(&rows)?;
    let mut instances = Vec::with_capacity(n);
    for _ in 0..n {
        let x = SparseVector::from_dense(&gaussian_vec(&mut rng, d));
        let node: Vec<f64> = (0..t.node_count()).map(|k| w.dot_row(k, &x)).collect();
        let mut best = (f64::NEG_INFINITY, t.leaves()[0]);
        for &l in t.leaves() {
            let p: f64 = t.ancestors_closure(l).iter().map(|&k| node[k]).sum();
            if p > best.0 {
                best = (p, l);
            }
        }
        instances.push(Instance {
            x,
            y: t.leaf_label(best.1),
        });
    }
    Ok((t, Dataset::new(instances, d)?, w))
}

/// Unbalanced synthetic data on [`caterpillar`]: unit-norm Gaussian
/// instances, and `depth - 1` random hyperplanes through the origin. An
/// instance stops at the leaf of the first level `k` with `h_k·x < 0`, or
/// reaches the deepest leaf. Returns the hyperplane normals.
pub fn generate_unbalanced(
    d: usize,
    depth: usize,
    n: usize,
    seed: u64,
) -> Result<(Taxonomy, Dataset, Vec<Vec<f64>>)> {
    let t = caterpillar(depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes: Vec<Vec<f64>> = (1..depth).map(|_| gaussian_vec(&mut rng, d)).collect();
    let mut instances = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = gaussian_vec(&mut rng, d);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let leaf = unbalanced_region(&planes, &v);
        instances.push(Instance {
            x: SparseVector::from_dense(&v),
            y: t.leaf_label(leaf),
        });
    }
    Ok((t, Dataset::new(instances, d)?, planes))
}

/// Leaf of [`caterpillar`] whose region contains `x`.
pub fn unbalanced_region(planes: &[Vec<f64>], x: &[f64]) -> NodeId {
    for (i, h) in planes.iter().enumerate() {
        let s: f64 = h.iter().zip(x).map(|(a, b)| a * b).sum();
        if s < 0.0 {
            return 2 * (i + 1) - 1;
        }
    }
    2 * planes.len()
}

/// Parses feature lines of `index:value` pairs. Returns the vectors and one
/// past the largest index seen.
pub fn parse_features(features: &str, dim: Option<usize>) -> Result<(Vec<SparseVector>, usize)> {
    let mut xs = Vec::new();
    let mut max_dim = 0;
    for (i, line) in features.lines().enumerate() {
        let mut pairs = Vec::new();
        for tok in line.split_whitespace() {
            let (a, b) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected index:value, got '{tok}'"),
            })?;
            let idx: usize = a.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad feature index '{a}'"),
            })?;
            let val: f64 = b.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad feature value '{b}'"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("non-finite feature value '{b}'"),
                });
            }
            if let Some(d) = dim {
                if idx >= d {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("feature index {idx} is not below dimension {d}"),
                    });
                }
            }
            pairs.push((idx, val));
        }
        let x = SparseVector::from_pairs(pairs);
        max_dim = max_dim.max(x.min_dim());
        xs.push(x);
    }
    Ok((xs, max_dim))
}

/// Parses feature lines (see [`parse_features`]) and label lines
/// (comma-separated external leaf ids). `dim` defaults to one past the
/// largest index seen.
pub fn parse_dataset(
    features: &str,
    labels: &str,
    t: &Taxonomy,
    dim: Option<usize>,
) -> Result<Dataset> {
    let feat_count = features.lines().count();
    let label_lines: Vec<&str> = labels.lines().collect();
    if feat_count != label_lines.len() {
        return Err(Error::Parse {
            line: feat_count.min(label_lines.len()) + 1,
            msg: format!(
                "{} feature lines but {} label lines",
                feat_count,
                label_lines.len()
            ),
        });
    }
    let (xs, max_dim) = parse_features(features, dim)?;
    let mut instances = Vec::with_capacity(xs.len());
    for (i, (x, line)) in xs.into_iter().zip(&label_lines).enumerate() {
        let mut ids = Vec::new();
        for tok in line.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            ids.push(tok.parse::<u64>().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad label id '{tok}'"),
            })?);
        }
        if ids.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "empty label".into(),
            });
        }
        let y = t.label_from_external(&ids).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        instances.push(Instance { x, y });
    }
    Dataset::new(instances, dim.unwrap_or(max_dim))
}

pub fn load_dataset(
    features_path: &Path,
    labels_path: &Path,
    t: &Taxonomy,
    dim: Option<usize>,
) -> Result<Dataset> {
    let f = std::fs::read_to_string(features_path)?;
    let l = std::fs::read_to_string(labels_path)?;
    parse_dataset(&f, &l, t, dim)
}

pub fn format_features(data: &Dataset) -> String {
    let mut out = String::new();
    for inst in &data.instances {
        let toks: Vec<String> = inst.x.iter().map(|(i, v)| format!("{i}:{v}")).collect();
        out.push_str(&toks.join(" "));
        out.push('\n');
    }
    out
}

pub fn format_label(y: &Label, t: &Taxonomy) -> String {
    let ids: Vec<String> = y.leaves().iter().map(|&l| t.external_id(l).to_string()).collect();
    ids.join(",")
}

pub fn format_labels(data: &Dataset, t: &Taxonomy) -> String {
    let mut out = String::new();
    for inst in &data.instances {
        out.push_str(&format_label(&inst.y, t));
        out.push('\n');
    }
    out
}

pub fn save_dataset(
    data: &Dataset,
    t: &Taxonomy,
    features_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    std::fs::write(features_path, format_features(data))?;
    std::fs::write(labels_path, format_labels(data, t))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Metrics {
    /// Fraction of instances whose predicted leaf set equals the true one.
    pub accuracy: f64,
    /// Mean over instances of `2|P∩T| / (|P|+|T|)` on leaf sets.
    pub example_f1: f64,
    /// Pooled `2 ΣTP / (Σ|P| + Σ|T|)`.
    pub micro_f1: f64,
    pub count: usize,
}

impl Metrics {
    pub fn to_key_values(&self) -> String {
        format!(
            "accuracy={}\nexample_f1={}\nmicro_f1={}\ncount={}\n",
            self.accuracy, self.example_f1, self.micro_f1, self.count
        )
    }

    pub fn to_table(&self) -> String {
        format!(
            "{:<12} {:>10}\n{:<12} {:>10.4}\n{:<12} {:>10.4}\n{:<12} {:>10.4}\n{:<12} {:>10}\n",
            "metric", "value", "accuracy", self.accuracy, "example_f1", self.example_f1,
            "micro_f1", self.micro_f1, "count", self.count
        )
    }
}

pub fn metrics_from_predictions(pred: &[Label], truth: &[Label]) -> Metrics {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return Metrics {
            accuracy: 0.0,
            example_f1: 0.0,
            micro_f1: 0.0,
            count: 0,
        };
    }
    let mut exact = 0usize;
    let mut f1_sum = 0.0;
    let (mut tp_all, mut size_all) = (0usize, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        if p.leaves() == t.leaves() {
            exact += 1;
        }
        let tp = p.leaves().iter().filter(|l| t.leaves().binary_search(l).is_ok()).count();
        let size = p.leaves().len() + t.leaves().len();
        f1_sum += 2.0 * tp as f64 / size as f64;
        tp_all += tp;
        size_all += size;
    }
    let n = pred.len() as f64;
    Metrics {
        accuracy: exact as f64 / n,
        example_f1: f1_sum / n,
        micro_f1: 2.0 * tp_all as f64 / size_all as f64,
        count: pred.len(),
    }
}
