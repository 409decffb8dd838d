//! The `nhsvm` command line.
//!
//! Data sets are addressed by path prefix: `PREFIX.features` holds one
//! instance per line as `index:value` pairs, `PREFIX.labels` the matching
//! comma-separated leaf ids, and `synth` also writes `PREFIX.hierarchy`.
//!
//! Any long flag may also come from a `key=value` file given with
//! `--config`; flags on the command line win over the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use nhsvm::alpha::{AlphaConfig, AlphaScheme};
use nhsvm::data::{self, Dataset};
use nhsvm::experiment::{self, BenchConfig, Suite};
use nhsvm::inference::DagMode;
use nhsvm::shared_norm;
use nhsvm::training::{self, Model, Objective, TrainConfig};
use nhsvm::{Error, ErrorClass, Taxonomy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Flags that take no value; `key=true` in a config file turns them on.
const SWITCHES: &[&str] = &["directional", "quiet"];

#[derive(Debug, Parser)]
#[command(name = "nhsvm", version, about = "Normalized hierarchical SVMs over label taxonomies")]
struct Cli {
    /// Seed for every random choice (data generation, epoch order, splits).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for `bench`.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Line-oriented key=value file supplying defaults for long flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress progress messages on standard error.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute normalization weights for a hierarchy.
    Alpha(AlphaArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Predict leaf sets for unlabeled instances.
    Predict(PredictArgs),
    /// Score a model on labeled data.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic data set.
    Synth(SynthArgs),
    /// Shared-norm estimates and reference norms for a matrix.
    Norms(NormsArgs),
    /// Run the synthetic benchmark protocol.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct AlphaFlags {
    #[arg(long = "alpha-scheme", alias = "scheme", default_value = "rho")]
    scheme: AlphaScheme,
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    /// Require α to be non-decreasing along every edge.
    #[arg(long)]
    directional: bool,
    /// Upper bound on root-to-leaf path sums (DAGs).
    #[arg(long = "range-T", default_value_t = 1.0)]
    range_t: f64,
}

impl AlphaFlags {
    fn config(&self) -> AlphaConfig {
        AlphaConfig {
            scheme: self.scheme,
            rho: self.rho,
            directional: self.directional,
            range_t: self.range_t,
        }
    }
}

#[derive(Debug, Args)]
struct AlphaArgs {
    #[arg(long)]
    hierarchy: PathBuf,
    #[command(flatten)]
    alpha: AlphaFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    hierarchy: PathBuf,
    /// Training data prefix.
    #[arg(long)]
    train: PathBuf,
    /// Holdout data prefix; when given, λ is chosen on it and the final model
    /// is retrained on train and holdout together.
    #[arg(long)]
    holdout: Option<PathBuf>,
    #[arg(long, default_value = "nhsvm")]
    objective: Objective,
    #[command(flatten)]
    alpha: AlphaFlags,
    /// Fixed regularization strength. Defaults to 0.01 without a holdout.
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated λ grid swept on the holdout.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long = "inner-epochs", default_value_t = 5)]
    inner_epochs: usize,
    #[arg(long = "outer-rounds", default_value_t = 10)]
    outer_rounds: usize,
    #[arg(long = "dag-mode", default_value = "lp_then_ip")]
    dag_mode: DagMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    hierarchy: PathBuf,
    /// Data prefix; only the features file is read.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Kv,
    Json,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value = "unbalanced")]
    suite: Suite,
    #[arg(long, default_value_t = 200)]
    d: usize,
    /// Defaults to 8 for the unbalanced suite and 4 for the balanced one.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 3000)]
    n: usize,
    /// Comma-separated fractions; two parts are written as `train`/`test`,
    /// three as `train`/`holdout`/`test`.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<f64>>,
    /// Output prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct NormsArgs {
    /// Whitespace-separated matrix, one row per line.
    #[arg(long)]
    matrix: PathBuf,
    /// Hierarchy whose leaves index the matrix rows; enables the structured
    /// estimate.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value = "unbalanced")]
    suite: Suite,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = experiment::DESK_EPOCHS)]
    epochs: usize,
    #[arg(long = "inner-epochs", default_value_t = experiment::DESK_EPOCHS)]
    inner_epochs: usize,
    #[arg(long = "outer-rounds", default_value_t = experiment::DESK_OUTER_ROUNDS)]
    outer_rounds: usize,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Comma-separated subset of flat, hsvm, nhsvm, ssvm.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e.class())
}

/// Parses a config file into `(key, value)` pairs; blank lines and lines
/// starting with `#` are skipped.
pub fn parse_config(text: &str) -> nhsvm::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key=value, got '{line}'"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.starts_with('-') {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("bad key '{k}'"),
            });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn flag_given(argv: &[OsString], key: &str) -> bool {
    let long = format!("--{key}");
    let with_value = format!("--{key}=");
    argv.iter().filter_map(|a| a.to_str()).any(|a| a == long || a.starts_with(&with_value))
}

/// Appends config-file entries as flags unless the same flag is already on
/// the command line. Unknown keys surface as clap usage errors.
fn merge_config(mut argv: Vec<OsString>) -> nhsvm::Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        match a.to_str() {
            Some("--config") => path = argv.get(i + 1).map(PathBuf::from),
            Some(s) if s.starts_with("--config=") => path = Some(PathBuf::from(&s[9..])),
            _ => {}
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let entries = parse_config(&std::fs::read_to_string(&path)?)?;
    let mut extra = Vec::new();
    for (k, v) in entries {
        if k == "config" || flag_given(&argv, &k) {
            continue;
        }
        if SWITCHES.contains(&k.as_str()) {
            match v.as_str() {
                "true" | "1" | "yes" => extra.push(OsString::from(format!("--{k}"))),
                "false" | "0" | "no" => {}
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "config key '{k}' expects true or false, got '{v}'"
                    )))
                }
            }
        } else {
            extra.push(OsString::from(format!("--{k}={v}")));
        }
    }
    argv.extend(extra);
    Ok(argv)
}

fn dispatch(cli: &Cli) -> nhsvm::Result<()> {
    let progress = |msg: &str| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Alpha(a) => cmd_alpha(a),
        Command::Train(a) => cmd_train(a, cli.seed, &progress),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Norms(a) => cmd_norms(a),
        Command::Bench(a) => cmd_bench(a, cli.seed, cli.threads, &progress),
    }
}

fn emit(out: Option<&Path>, text: &str) -> nhsvm::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn load_prefix(prefix: &Path, t: &Taxonomy, dim: Option<usize>) -> nhsvm::Result<Dataset> {
    data::load_dataset(&with_suffix(prefix, "features"), &with_suffix(prefix, "labels"), t, dim)
}

fn cmd_alpha(a: &AlphaArgs) -> nhsvm::Result<()> {
    let t = Taxonomy::read(&a.hierarchy)?;
    let w = a.alpha.config().compute(&t)?;
    let mut text = String::new();
    for n in 0..t.node_count() {
        text.push_str(&format!("{} {}\n", t.external_id(n), w.alpha[n]));
    }
    emit(a.out.as_deref(), &text)
}

fn cmd_train(a: &TrainArgs, seed: u64, progress: &dyn Fn(&str)) -> nhsvm::Result<()> {
    let t = Taxonomy::read(&a.hierarchy)?;
    let mut cfg = TrainConfig::new(a.objective, a.lambda.unwrap_or(1e-2));
    cfg.alpha = a.alpha.config();
    cfg.epochs = a.epochs;
    cfg.inner_epochs = a.inner_epochs;
    cfg.outer_rounds = a.outer_rounds;
    cfg.dag_mode = a.dag_mode;
    cfg.seed = seed;
    cfg.validate()?;
    let train = load_prefix(&a.train, &t, None)?;
    let model = match &a.holdout {
        None => training::train(&train, &t, &cfg)?,
        Some(h) => {
            let holdout = load_prefix(h, &t, Some(train.dim))?;
            let grid = match (a.lambda, &a.lambdas) {
                (Some(l), _) => vec![l],
                (None, Some(g)) => g.clone(),
                (None, None) => experiment::default_lambda_grid(),
            };
            let mut best: Option<(f64, f64)> = None;
            for &lambda in &grid {
                let c = TrainConfig { lambda, ..cfg.clone() };
                c.validate()?;
                let m = training::train(&train, &t, &c)?;
                let acc = training::evaluate(&m, &t, &holdout)?.accuracy;
                progress(&format!("lambda {lambda:e}: holdout accuracy {acc:.4}"));
                if best.is_none_or(|(_, b)| acc > b) {
                    best = Some((lambda, acc));
                }
            }
            let (lambda, acc) = best.expect("grid is non-empty");
            progress(&format!("selected lambda {lambda:e} (holdout accuracy {acc:.4}); retraining on train and holdout"));
            let all = train.concat(&holdout);
            training::train(&all, &t, &TrainConfig { lambda, ..cfg })?
        }
    };
    if let Some(last) = model.history.last() {
        progress(&format!("final objective {last:.6}"));
    }
    model.save(&a.out)
}

fn load_model(path: &Path, t: &Taxonomy) -> nhsvm::Result<Model> {
    let m = Model::load(path)?;
    m.check_taxonomy(t)?;
    Ok(m)
}

fn cmd_predict(a: &PredictArgs) -> nhsvm::Result<()> {
    let t = Taxonomy::read(&a.hierarchy)?;
    let m = load_model(&a.model, &t)?;
    let text = std::fs::read_to_string(with_suffix(&a.data, "features"))?;
    let (xs, _) = data::parse_features(&text, Some(m.weights.dim()))?;
    let mut out = String::new();
    for x in &xs {
        out.push_str(&data::format_label(&m.predict(&t, x)?, &t));
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)
}

fn cmd_evaluate(a: &EvaluateArgs) -> nhsvm::Result<()> {
    let t = Taxonomy::read(&a.hierarchy)?;
    let m = load_model(&a.model, &t)?;
    let d = load_prefix(&a.data, &t, Some(m.weights.dim()))?;
    let metrics = training::evaluate(&m, &t, &d)?;
    let text = match a.format {
        Format::Table => metrics.to_table(),
        Format::Kv => metrics.to_key_values(),
        Format::Json => to_json(&metrics)?,
    };
    emit(a.out.as_deref(), &text)
}

fn to_json<T: serde::Serialize>(v: &T) -> nhsvm::Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> nhsvm::Result<()> {
    let depth = a.depth.unwrap_or(match a.suite {
        Suite::Unbalanced => 8,
        Suite::Balanced => 4,
    });
    if depth < 2 || a.d == 0 || a.n == 0 {
        return Err(Error::InvalidConfig("synth needs depth >= 2, d >= 1 and n >= 1".into()));
    }
    let (t, d) = match a.suite {
        Suite::Unbalanced => {
            let (t, d, _) = data::generate_unbalanced(a.d, depth, a.n, seed)?;
            (t, d)
        }
        Suite::Balanced => {
            let (t, d, _) = data::generate_balanced(a.d, depth, a.n, seed)?;
            (t, d)
        }
    };
    std::fs::write(with_suffix(&a.out, "hierarchy"), t.to_text())?;
    let save = |d: &Dataset, prefix: &Path| {
        data::save_dataset(d, &t, &with_suffix(prefix, "features"), &with_suffix(prefix, "labels"))
    };
    match &a.split {
        None => save(&d, &a.out),
        Some(fracs) => {
            let names: &[&str] = match fracs.len() {
                2 => &["train", "test"],
                3 => &["train", "holdout", "test"],
                _ => return Err(Error::InvalidConfig("--split takes two or three fractions".into())),
            };
            if fracs.iter().any(|f| !(*f > 0.0)) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig("--split fractions must be positive and sum to 1".into()));
            }
            for (part, name) in d.split(fracs, seed).iter().zip(names) {
                save(part, &with_suffix(&a.out, name))?;
            }
            Ok(())
        }
    }
}

fn cmd_norms(a: &NormsArgs) -> nhsvm::Result<()> {
    let u = shared_norm::parse_matrix(&std::fs::read_to_string(&a.matrix)?)?;
    let t = a.hierarchy.as_deref().map(Taxonomy::read).transpose()?;
    if let Some(t) = &t {
        if t.leaves().len() != u.nrows() {
            return Err(Error::DimensionMismatch {
                expected: t.leaves().len(),
                got: u.nrows(),
            });
        }
    }
    let reports = shared_norm::norm_reports(&u, t.as_ref(), a.restarts)?;
    let mut text = format!("{:<24} {:>14} {:>14} {:>10}\n", "norm", "value", "lower", "iterations");
    for r in &reports {
        let lower = r.lower.map_or("-".to_string(), |l| format!("{l:.8}"));
        text.push_str(&format!(
            "{:<24} {:>14.8} {:>14} {:>10}\n",
            r.kind.to_string(),
            r.value,
            lower,
            r.iterations
        ));
    }
    emit(a.out.as_deref(), &text)
}

fn cmd_bench(a: &BenchArgs, seed: u64, threads: usize, progress: &(dyn Fn(&str) + Sync)) -> nhsvm::Result<()> {
    let mut cfg = BenchConfig::desk(a.suite, a.seeds);
    cfg.seeds = (seed..seed + a.seeds as u64).collect();
    cfg.d = a.d.unwrap_or(cfg.d);
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.depth = a.depth.unwrap_or(cfg.depth);
    cfg.threads = threads.max(1);
    if let Some(l) = &a.lambdas {
        cfg.lambdas = l.clone();
    }
    cfg.methods = experiment::default_methods(a.epochs, a.inner_epochs, a.outer_rounds);
    if let Some(keep) = &a.methods {
        for k in keep {
            if !cfg.methods.iter().any(|g| &g.name == k) {
                return Err(Error::InvalidConfig(format!("unknown method '{k}'")));
            }
        }
        cfg.methods.retain(|g| keep.contains(&g.name));
    }
    let result = experiment::run_bench(&cfg, progress)?;
    let text = match a.format {
        Format::Json => to_json(&result)?,
        Format::Table | Format::Kv => result.to_table(),
    };
    emit(a.out.as_deref(), &text)
}
