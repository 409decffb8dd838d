//! Stochastic subgradient (Pegasos) training of flat, hierarchical and
//! normalized hierarchical SVMs.
//!
//! The optimized objective is `(λ/N)·||W||² + (1/N)·Σ_i loss_i(W)`, i.e.
//! `λ'/2·||W||² + mean loss` with `λ' = 2λ/N`. Step `t` (1-based, counted
//! across epochs) uses `η_t = 1/(λ' t)` and the update
//! `W ← (1 - η_t λ') W - η_t ∂loss_i(W)`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alpha::{flat_alpha, AlphaConfig, NodeWeights};
use crate::data::{metrics_from_predictions, Dataset, Instance, Metrics};
use crate::error::{Error, Result};
use crate::inference::{
    argmax_multilabel, label_score, DagMode, SingleLabelSpace, Variant,
};
use crate::model::{class_coefficients, node_potentials, ErrorKind, SparseVector, WeightMatrix};
use crate::taxonomy::{Label, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Flat,
    Hsvm,
    Nhsvm,
    /// Margin-normalized NHSVM (single-label only).
    NhsvmMargin,
    Ssvm,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Objective::Flat),
            "hsvm" => Ok(Objective::Hsvm),
            "nhsvm" => Ok(Objective::Nhsvm),
            "nhsvm_margin" => Ok(Objective::NhsvmMargin),
            "ssvm" => Ok(Objective::Ssvm),
            _ => Err(Error::InvalidConfig(format!("unknown objective '{s}'"))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Flat => "flat",
            Objective::Hsvm => "hsvm",
            Objective::Nhsvm => "nhsvm",
            Objective::NhsvmMargin => "nhsvm_margin",
            Objective::Ssvm => "ssvm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// `None` picks the objective's default error.
    pub error_kind: Option<ErrorKind>,
    pub alpha: AlphaConfig,
    pub dag_mode: DagMode,
    /// Project onto `||W|| ≤ sqrt(2/λ')` after every step.
    pub project_ball: bool,
    /// Record the training objective after every epoch.
    pub track_objective: bool,
    pub inner_epochs: usize,
    pub outer_rounds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Nhsvm,
            lambda: 1e-2,
            epochs: 20,
            seed: 0,
            error_kind: None,
            alpha: AlphaConfig::default(),
            dag_mode: DagMode::default(),
            project_ball: false,
            track_objective: true,
            inner_epochs: 5,
            outer_rounds: 10,
        }
    }
}

impl TrainConfig {
    pub fn new(objective: Objective, lambda: f64) -> Self {
        TrainConfig {
            objective,
            lambda,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.objective == Objective::Ssvm && (self.inner_epochs == 0 || self.outer_rounds == 0) {
            return Err(Error::InvalidConfig("inner epochs and outer rounds must be at least 1".into()));
        }
        self.alpha.validate()
    }

    pub fn error_kind_for(&self, multilabel: bool) -> ErrorKind {
        self.error_kind.unwrap_or(match (self.objective, multilabel) {
            (Objective::Hsvm, _) => ErrorKind::Hamming,
            (Objective::Ssvm, _) => ErrorKind::ZeroOne,
            (_, true) => ErrorKind::LeafDecomposable,
            (_, false) => ErrorKind::Normalized,
        })
    }

    /// Weights, error and variant that define this objective's loss.
    pub fn loss_spec(&self, t: &Taxonomy, multilabel: bool) -> Result<LossSpec> {
        self.validate()?;
        let alpha = match self.objective {
            Objective::Flat => flat_alpha(t),
            Objective::Hsvm => NodeWeights::ones(t),
            Objective::Nhsvm | Objective::NhsvmMargin | Objective::Ssvm => self.alpha.compute(t)?,
        };
        Ok(LossSpec {
            alpha,
            kind: self.error_kind_for(multilabel),
            variant: if self.objective == Objective::NhsvmMargin {
                Variant::MarginNormalized
            } else {
                Variant::Plain
            },
        })
    }

    pub(crate) fn lambda_prime(&self, n: usize) -> f64 {
        2.0 * self.lambda / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub alpha: NodeWeights,
    pub kind: ErrorKind,
    pub variant: Variant,
}

/// The per-instance loss of a fixed objective: potentials use `sqrt(α_n)`
/// coefficients and the margin is the structural error.
#[derive(Debug, Clone)]
pub struct TrainingProblem<'a> {
    t: &'a Taxonomy,
    spec: LossSpec,
    coeff: Vec<f64>,
    dag_mode: DagMode,
    single: Option<SingleLabelSpace>,
}

/// Maximizer of the loss term together with what its subgradient needs.
#[derive(Debug, Clone)]
enum Violator {
    Single { pos: usize, truth: usize, scale: f64 },
    Multi(Label),
}

impl<'a> TrainingProblem<'a> {
    pub fn new(t: &'a Taxonomy, spec: LossSpec, multilabel: bool, dag_mode: DagMode) -> Result<Self> {
        if spec.alpha.len() != t.node_count() {
            return Err(Error::DimensionMismatch {
                expected: t.node_count(),
                got: spec.alpha.len(),
            });
        }
        let single = if multilabel {
            if spec.variant == Variant::MarginNormalized {
                return Err(Error::MultiLabelUnsupported("margin-normalized loss"));
            }
            if !matches!(spec.kind, ErrorKind::Hamming | ErrorKind::LeafDecomposable) {
                return Err(Error::MultiLabelUnsupported("non-decomposable structural error"));
            }
            None
        } else {
            Some(SingleLabelSpace::new(t, &spec.alpha, spec.kind)?)
        };
        Ok(TrainingProblem {
            coeff: class_coefficients(&spec.alpha, true),
            t,
            spec,
            dag_mode,
            single,
        })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        self.t
    }

    pub fn alpha(&self) -> &NodeWeights {
        &self.spec.alpha
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeff
    }

    fn truth_pos(&self, y: &Label) -> Result<usize> {
        if !y.is_single() {
            return Err(Error::MultiLabelUnsupported("single-label objective"));
        }
        self.t.leaf_position(y.leaves()[0]).ok_or(Error::NotALeaf(y.leaves()[0] as u64))
    }

    /// Per-node error terms `e_n` and constant `c` with
    /// `Δ(y, y_true) = Σ_{n∈y} e_n + c`.
    fn error_terms(&self, y_true: &Label) -> (Vec<f64>, f64) {
        let m = self.t.node_count();
        match self.spec.kind {
            ErrorKind::Hamming => {
                let e = (0..m).map(|n| if y_true.contains(n) { -1.0 } else { 1.0 }).collect();
                (e, y_true.nodes().len() as f64)
            }
            _ => {
                let mut e = vec![0.0; m];
                for &l in self.t.leaves() {
                    e[l] = if y_true.contains(l) { -1.0 } else { 1.0 };
                }
                (e, y_true.leaves().len() as f64)
            }
        }
    }

    fn violator(&self, w: &WeightMatrix, inst: &Instance) -> Result<(f64, Option<Violator>)> {
        let pot = node_potentials(w, &self.coeff, &inst.x);
        match &self.single {
            Some(space) => {
                let truth = self.truth_pos(&inst.y)?;
                let (pos, value) = space.argmax(&pot, Some(truth), self.spec.variant);
                if pos == truth || value <= 0.0 {
                    return Ok((value.max(0.0), None));
                }
                let scale = match self.spec.variant {
                    Variant::Plain => 1.0,
                    Variant::MarginNormalized => {
                        1.0 / crate::model::structural_error(
                            ErrorKind::Normalized,
                            &self.spec.alpha,
                            &self.t.leaf_label(space.leaf(pos)),
                            &inst.y,
                        )
                    }
                };
                Ok((value, Some(Violator::Single { pos, truth, scale })))
            }
            None => {
                let (e, c) = self.error_terms(&inst.y);
                let r: Vec<f64> = pot.iter().zip(&e).map(|(p, q)| p + q).collect();
                let (y, v) = argmax_multilabel(&r, self.t, self.dag_mode)?;
                let value = v - label_score(&pot, &inst.y) + c;
                if y == inst.y || value <= 0.0 {
                    return Ok((value.max(0.0), None));
                }
                Ok((value, Some(Violator::Multi(y))))
            }
        }
    }

    /// Adds `s · ∂loss` for the given violator to `w`.
    fn add_subgradient(&self, w: &mut WeightMatrix, x: &SparseVector, y_true: &Label, v: &Violator, s: f64) {
        match v {
            Violator::Single { pos, truth, scale } => {
                let space = self.single.as_ref().expect("single-label violator");
                let (pred, gold) = (space.path(*pos), space.path(*truth));
                for &n in pred {
                    if gold.binary_search(&n).is_err() {
                        w.add_scaled(n, s * scale * self.coeff[n], x);
                    }
                }
                for &n in gold {
                    if pred.binary_search(&n).is_err() {
                        w.add_scaled(n, -(s * scale * self.coeff[n]), x);
                    }
                }
            }
            Violator::Multi(y) => {
                for &n in y.nodes() {
                    if !y_true.contains(n) {
                        w.add_scaled(n, s * self.coeff[n], x);
                    }
                }
                for &n in y_true.nodes() {
                    if !y.contains(n) {
                        w.add_scaled(n, -(s * self.coeff[n]), x);
                    }
                }
            }
        }
    }

    pub fn loss(&self, w: &WeightMatrix, inst: &Instance) -> Result<f64> {
        Ok(self.violator(w, inst)?.0)
    }

    /// Loss value and a subgradient of the loss alone (no regularizer).
    pub fn loss_subgradient(&self, w: &WeightMatrix, inst: &Instance) -> Result<(f64, WeightMatrix)> {
        let (value, v) = self.violator(w, inst)?;
        let mut g = WeightMatrix::zeros(w.rows(), w.dim());
        if let Some(v) = v {
            self.add_subgradient(&mut g, &inst.x, &inst.y, &v, 1.0);
        }
        Ok((value, g))
    }

    /// Gap between the largest and second largest candidate values of a
    /// single-label instance; a positive gap certifies a unique maximizer.
    pub fn margin_gap(&self, w: &WeightMatrix, inst: &Instance) -> Result<f64> {
        let space = self
            .single
            .as_ref()
            .ok_or(Error::MultiLabelUnsupported("margin gap"))?;
        let pot = node_potentials(w, &self.coeff, &inst.x);
        let mut vals = space.candidate_values(&pot, Some(self.truth_pos(&inst.y)?), self.spec.variant);
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(if vals.len() < 2 { f64::INFINITY } else { vals[0] - vals[1] })
    }

    /// `(λ/N)·||W||² + mean loss`.
    pub fn objective(&self, w: &WeightMatrix, data: &Dataset, lambda: f64) -> Result<f64> {
        let n = data.len().max(1) as f64;
        let mut loss = 0.0;
        for inst in &data.instances {
            loss += self.loss(w, inst)?;
        }
        Ok(lambda / n * w.frobenius_sq() + loss / n)
    }

    pub fn predict(&self, w: &WeightMatrix, x: &SparseVector) -> Result<Label> {
        w.check_input(x)?;
        let pot = node_potentials(w, &self.coeff, x);
        match &self.single {
            Some(space) => Ok(self.t.leaf_label(space.leaf(space.argmax(&pot, None, Variant::Plain).0))),
            None => Ok(argmax_multilabel(&pot, self.t, self.dag_mode)?.0),
        }
    }

    /// One Pegasos step at (1-based) step `step`.
    pub(crate) fn sgd_step(
        &self,
        w: &mut WeightMatrix,
        inst: &Instance,
        step: u64,
        lambda_p: f64,
        project_ball: bool,
    ) -> Result<()> {
        let eta = 1.0 / (lambda_p * step as f64);
        let (_, v) = self.violator(w, inst)?;
        w.scale(1.0 - eta * lambda_p);
        if let Some(v) = v {
            self.add_subgradient(w, &inst.x, &inst.y, &v, -eta);
        }
        if project_ball {
            project_to_ball(w, lambda_p);
        }
        Ok(())
    }
}

fn project_to_ball(w: &mut WeightMatrix, lambda_p: f64) {
    let radius = (2.0 / lambda_p).sqrt();
    let norm = w.frobenius_sq().sqrt();
    if norm > radius {
        w.scale(radius / norm);
    }
}

/// Visiting order of epoch `epoch`: a shuffle keyed by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Runs one epoch of SGD, advancing the global step counter.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_epoch(
    problem: &TrainingProblem<'_>,
    w: &mut WeightMatrix,
    data: &Dataset,
    lambda_p: f64,
    seed: u64,
    epoch: usize,
    step: &mut u64,
    project_ball: bool,
    observer: &mut dyn FnMut(u64, &WeightMatrix),
) -> Result<()> {
    for i in epoch_order(data.len(), seed, epoch) {
        *step += 1;
        problem.sgd_step(w, &data.instances[i], *step, lambda_p, project_ball)?;
        observer(*step, w);
    }
    if !w.is_finite() {
        return Err(Error::NonFinite("weights after an SGD epoch"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub weights: WeightMatrix,
    pub alpha: NodeWeights,
    pub config: TrainConfig,
    /// Training objective after each epoch (or each outer round for SSVM).
    pub history: Vec<f64>,
    pub multilabel: bool,
    pub taxonomy_fingerprint: u64,
}

const MODEL_FORMAT: &str = "nhsvm-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: Model,
}

impl Model {
    pub fn error_kind(&self) -> ErrorKind {
        self.config.error_kind_for(self.multilabel)
    }

    pub fn check_taxonomy(&self, t: &Taxonomy) -> Result<()> {
        if t.fingerprint() != self.taxonomy_fingerprint {
            return Err(Error::ModelFormat(
                "model was trained on a different hierarchy".into(),
            ));
        }
        Ok(())
    }

    /// The loss this model was trained with, using its stored `α`.
    pub fn problem<'a>(&self, t: &'a Taxonomy) -> Result<TrainingProblem<'a>> {
        let spec = LossSpec {
            alpha: self.alpha.clone(),
            kind: self.error_kind(),
            variant: if self.config.objective == Objective::NhsvmMargin {
                Variant::MarginNormalized
            } else {
                Variant::Plain
            },
        };
        TrainingProblem::new(t, spec, self.multilabel, self.config.dag_mode)
    }

    pub fn predict(&self, t: &Taxonomy, x: &SparseVector) -> Result<Label> {
        self.problem(t)?.predict(&self.weights, x)
    }

    pub fn predict_all(&self, t: &Taxonomy, data: &Dataset) -> Result<Vec<Label>> {
        let p = self.problem(t)?;
        data.instances.iter().map(|i| p.predict(&self.weights, &i.x)).collect()
    }

    /// Weights in the `U_n = sqrt(α_n) W_n` parameterization.
    pub fn u_weights(&self) -> WeightMatrix {
        let mut u = self.weights.clone();
        for n in 0..u.rows() {
            let s = self.alpha.alpha[n].max(0.0).sqrt();
            u.row_mut(n).iter_mut().for_each(|v| *v *= s);
        }
        u
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })
        .map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unexpected format '{}'", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", file.version)));
        }
        if !file.model.weights.is_finite() {
            return Err(Error::ModelFormat("non-finite weights".into()));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Exact training objective of `m` on `data`.
pub fn objective_value(m: &Model, t: &Taxonomy, data: &Dataset) -> Result<f64> {
    m.problem(t)?.objective(&m.weights, data, m.config.lambda)
}

/// The same objective evaluated in the `U` parameterization:
/// `(λ/N) Σ_n ||U_n||²/α_n + mean loss` with potentials `Σ_{n∈y} U_n·x`.
pub fn objective_value_u(m: &Model, t: &Taxonomy, data: &Dataset) -> Result<f64> {
    let u = m.u_weights();
    let mut reg = 0.0;
    for n in 0..u.rows() {
        let a = m.alpha.alpha[n];
        let s = u.row_norm_sq(n);
        if s > 0.0 {
            reg += s / a;
        }
    }
    // potentials Σ U_n·x equal Σ sqrt(α_n) W_n·x, so the loss part is shared
    let p = m.problem(t)?;
    let n = data.len().max(1) as f64;
    let mut loss = 0.0;
    for inst in &data.instances {
        loss += p.loss(&m.weights, inst)?;
    }
    Ok(m.config.lambda / n * reg + loss / n)
}

/// Metrics of `m` on `data`; the model must belong to `t`.
pub fn evaluate(m: &Model, t: &Taxonomy, data: &Dataset) -> Result<Metrics> {
    m.check_taxonomy(t)?;
    let pred = m.predict_all(t, data)?;
    Ok(metrics_from_predictions(&pred, &data.labels()))
}

fn check_data(data: &Dataset, t: &Taxonomy) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    for inst in &data.instances {
        if let Some(&n) = inst.y.nodes().last() {
            if n >= t.node_count() {
                return Err(Error::UnknownNode(n as u64));
            }
        }
    }
    Ok(())
}

pub fn train(data: &Dataset, t: &Taxonomy, cfg: &TrainConfig) -> Result<Model> {
    train_observed(data, t, cfg, &mut |_, _| {})
}

/// As [`train`], calling `observer(step, W)` after every SGD step.
pub fn train_observed(
    data: &Dataset,
    t: &Taxonomy,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(u64, &WeightMatrix),
) -> Result<Model> {
    cfg.validate()?;
    check_data(data, t)?;
    match cfg.objective {
        Objective::Ssvm => return crate::ssvm::train_ssvm(data, t, cfg),
        Objective::NhsvmMargin if data.multilabel => {
            return Err(Error::MultiLabelUnsupported("nhsvm_margin"))
        }
        _ => {}
    }
    let spec = cfg.loss_spec(t, data.multilabel)?;
    let problem = TrainingProblem::new(t, spec, data.multilabel, cfg.dag_mode)?;
    let mut w = WeightMatrix::zeros(t.node_count(), data.dim);
    let lambda_p = cfg.lambda_prime(data.len());
    let mut step = 0;
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        run_epoch(&problem, &mut w, data, lambda_p, cfg.seed, epoch, &mut step, cfg.project_ball, observer)?;
        if cfg.track_objective {
            history.push(problem.objective(&w, data, cfg.lambda)?);
        }
    }
    Ok(Model {
        alpha: problem.alpha().clone(),
        weights: w,
        config: cfg.clone(),
        history,
        multilabel: data.multilabel,
        taxonomy_fingerprint: t.fingerprint(),
    })
}

pub fn train_flat(data: &Dataset, t: &Taxonomy, cfg: &TrainConfig) -> Result<Model> {
    train_flat_observed(data, t, cfg, &mut |_, _| {})
}

/// Multi-class SVM over the leaves alone (one weight row per leaf, margin
/// `sqrt 2` between distinct classes), trained with the same step rule and
/// visiting order as [`train`]. `observer` receives the leaf-row matrix in
/// `t.leaves()` order. The returned model embeds those rows in an `M x d`
/// matrix with flat `α`.
pub fn train_flat_observed(
    data: &Dataset,
    t: &Taxonomy,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(u64, &WeightMatrix),
) -> Result<Model> {
    cfg.validate()?;
    check_data(data, t)?;
    if data.multilabel {
        return Err(Error::MultiLabelUnsupported("flat multi-class trainer"));
    }
    let k = t.leaves().len();
    let margin = 2f64.sqrt();
    let mut v = WeightMatrix::zeros(k, data.dim);
    let lambda_p = cfg.lambda_prime(data.len());
    let truth: Vec<usize> = data
        .instances
        .iter()
        .map(|i| t.leaf_position(i.y.leaves()[0]).ok_or(Error::NotALeaf(i.y.leaves()[0] as u64)))
        .collect::<Result<_>>()?;
    let mut step = 0u64;
    let mut history = Vec::new();
    let flat_cfg = TrainConfig {
        objective: Objective::Flat,
        ..cfg.clone()
    };
    for epoch in 0..cfg.epochs {
        for i in epoch_order(data.len(), cfg.seed, epoch) {
            step += 1;
            let eta = 1.0 / (lambda_p * step as f64);
            let x = &data.instances[i].x;
            let ti = truth[i];
            let score: Vec<f64> = (0..k).map(|j| v.dot_row(j, x)).collect();
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for j in 0..k {
                let val = if j == ti { 0.0 } else { score[j] - score[ti] + margin };
                if val > best_val {
                    best = j;
                    best_val = val;
                }
            }
            v.scale(1.0 - eta * lambda_p);
            if best != ti && best_val > 0.0 {
                v.add_scaled(best, -eta, x);
                v.add_scaled(ti, eta, x);
            }
            if cfg.project_ball {
                project_to_ball(&mut v, lambda_p);
            }
            observer(step, &v);
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("weights after an SGD epoch"));
        }
        if cfg.track_objective {
            let m = embed_flat(&v, t, data, &flat_cfg, Vec::new());
            history.push(objective_value(&m, t, data)?);
        }
    }
    Ok(embed_flat(&v, t, data, &flat_cfg, history))
}

fn embed_flat(v: &WeightMatrix, t: &Taxonomy, data: &Dataset, cfg: &TrainConfig, history: Vec<f64>) -> Model {
    let mut w = WeightMatrix::zeros(t.node_count(), v.dim());
    for (j, &l) in t.leaves().iter().enumerate() {
        w.row_mut(l).copy_from_slice(v.row(j));
    }
    Model {
        weights: w,
        alpha: flat_alpha(t),
        config: cfg.clone(),
        history,
        multilabel: data.multilabel,
        taxonomy_fingerprint: t.fingerprint(),
    }
}
