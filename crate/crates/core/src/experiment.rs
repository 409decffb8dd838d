//! Synthetic benchmark protocol: generate, split 50/25/25, select λ (and the
//! variant within a method group) on the holdout, retrain on train+holdout,
//! report test accuracy. Results are summarized by the median over seeds.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::alpha::AlphaConfig;
use crate::data::{generate_balanced, generate_unbalanced, Dataset};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;
use crate::training::{evaluate, train, Objective, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Unbalanced,
    Balanced,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbalanced" => Ok(Suite::Unbalanced),
            "balanced" => Ok(Suite::Balanced),
            _ => Err(Error::InvalidConfig(format!("unknown suite '{s}'"))),
        }
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Suite::Unbalanced => "unbalanced",
            Suite::Balanced => "balanced",
        })
    }
}

/// SGD epochs per training run at desk scale (also the SSVM inner epochs).
pub const DESK_EPOCHS: usize = 30;
/// SSVM outer rounds at desk scale.
pub const DESK_OUTER_ROUNDS: usize = 5;

/// `1e-8, 1e-7, ..., 1e2`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-8..=2).map(|e| 10f64.powi(e)).collect()
}

/// A named column of the results table; the holdout picks among its
/// candidate configurations as well as among λ values.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodGroup {
    pub name: String,
    pub candidates: Vec<(String, TrainConfig)>,
}

impl MethodGroup {
    fn single(name: &str, cfg: TrainConfig) -> Self {
        MethodGroup {
            name: name.into(),
            candidates: vec![(name.into(), cfg)],
        }
    }
}

/// Flat, HSVM, NHSVM (five normalization variants) and SSVM.
pub fn default_methods(epochs: usize, inner_epochs: usize, outer_rounds: usize) -> Vec<MethodGroup> {
    let base = |objective, alpha| TrainConfig {
        objective,
        epochs,
        alpha,
        track_objective: false,
        inner_epochs,
        outer_rounds,
        ..TrainConfig::default()
    };
    let rho = AlphaConfig::rho(2.0);
    let nhsvm = vec![
        ("rho2".to_string(), base(Objective::Nhsvm, rho.clone())),
        ("rho2_dir".to_string(), base(Objective::Nhsvm, rho.clone().with_directional(true))),
        ("maximin_dir".to_string(), base(Objective::Nhsvm, AlphaConfig::maximin(true))),
        ("rho2_margin".to_string(), base(Objective::NhsvmMargin, rho.clone())),
        ("maximin_margin".to_string(), base(Objective::NhsvmMargin, AlphaConfig::maximin(true))),
    ];
    vec![
        MethodGroup::single("flat", base(Objective::Flat, AlphaConfig::flat())),
        MethodGroup::single("hsvm", base(Objective::Hsvm, AlphaConfig::flat())),
        MethodGroup {
            name: "nhsvm".into(),
            candidates: nhsvm,
        },
        MethodGroup::single("ssvm", base(Objective::Ssvm, rho)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub suite: Suite,
    pub d: usize,
    pub depth: usize,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub methods: Vec<MethodGroup>,
    pub threads: usize,
}

impl BenchConfig {
    /// Desk-scale defaults: `d = 200`, `N = 3000`; depth 8 for the unbalanced
    /// suite and 4 for the balanced one.
    pub fn desk(suite: Suite, seeds: usize) -> Self {
        BenchConfig {
            suite,
            d: 200,
            depth: match suite {
                Suite::Unbalanced => 8,
                Suite::Balanced => 4,
            },
            n: 3000,
            seeds: (0..seeds as u64).collect(),
            lambdas: default_lambda_grid(),
            methods: default_methods(DESK_EPOCHS, DESK_EPOCHS, DESK_OUTER_ROUNDS),
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.lambdas.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidConfig("bench needs seeds, lambdas and methods".into()));
        }
        if self.n < 8 || self.d == 0 || self.depth < 2 {
            return Err(Error::InvalidConfig("bench needs n ≥ 8, d ≥ 1 and depth ≥ 2".into()));
        }
        for m in &self.methods {
            for (_, c) in &m.candidates {
                c.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub candidate: String,
    pub lambda: f64,
    pub holdout_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub name: String,
    pub per_seed: Vec<SeedResult>,
    pub median_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub suite: Suite,
    pub methods: Vec<MethodResult>,
}

impl BenchResult {
    pub fn median(&self, name: &str) -> Option<f64> {
        self.methods.iter().find(|m| m.name == name).map(|m| m.median_test_accuracy)
    }

    /// Plain-text table: one row per seed plus a median row, accuracies in
    /// percent.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8}", "seed");
        for m in &self.methods {
            out.push_str(&format!("{:>10}", m.name));
        }
        out.push('\n');
        let seeds: Vec<u64> = self.methods[0].per_seed.iter().map(|s| s.seed).collect();
        for (i, seed) in seeds.iter().enumerate() {
            out.push_str(&format!("{seed:<8}"));
            for m in &self.methods {
                out.push_str(&format!("{:>10.2}", 100.0 * m.per_seed[i].test_accuracy));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<8}", "median"));
        for m in &self.methods {
            out.push_str(&format!("{:>10.2}", 100.0 * m.median_test_accuracy));
        }
        out.push('\n');
        out
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Taxonomy and full dataset for one seed of the suite.
pub fn generate(cfg: &BenchConfig, seed: u64) -> Result<(Taxonomy, Dataset)> {
    Ok(match cfg.suite {
        Suite::Unbalanced => {
            let (t, d, _) = generate_unbalanced(cfg.d, cfg.depth, cfg.n, seed)?;
            (t, d)
        }
        Suite::Balanced => {
            let (t, d, _) = generate_balanced(cfg.d, cfg.depth, cfg.n, seed)?;
            (t, d)
        }
    })
}

/// Holdout selection followed by retraining for one method group.
pub fn select_and_test(
    group: &MethodGroup,
    lambdas: &[f64],
    t: &Taxonomy,
    train_set: &Dataset,
    holdout: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<SeedResult> {
    let mut best: Option<(f64, usize, f64)> = None;
    for (ci, (_, cfg)) in group.candidates.iter().enumerate() {
        for &lambda in lambdas {
            let cfg = TrainConfig { lambda, seed, ..cfg.clone() };
            let m = train(train_set, t, &cfg)?;
            let acc = evaluate(&m, t, holdout)?.accuracy;
            if best.is_none_or(|(b, _, _)| acc > b) {
                best = Some((acc, ci, lambda));
            }
        }
    }
    let (holdout_accuracy, ci, lambda) = best.expect("non-empty grid");
    let (name, cfg) = &group.candidates[ci];
    let cfg = TrainConfig { lambda, seed, ..cfg.clone() };
    let m = train(&train_set.concat(holdout), t, &cfg)?;
    Ok(SeedResult {
        seed,
        candidate: name.clone(),
        lambda,
        holdout_accuracy,
        test_accuracy: evaluate(&m, t, test)?.accuracy,
    })
}

fn run_seed(cfg: &BenchConfig, seed: u64) -> Result<Vec<SeedResult>> {
    let (t, data) = generate(cfg, seed)?;
    let parts = data.split(&[0.5, 0.25, 0.25], seed);
    cfg.methods
        .iter()
        .map(|g| select_and_test(g, &cfg.lambdas, &t, &parts[0], &parts[1], &parts[2], seed))
        .collect()
}

/// Runs every seed (on up to `threads` worker threads) and reports
/// `progress` messages as seeds finish.
pub fn run_bench(cfg: &BenchConfig, progress: &(dyn Fn(&str) + Sync)) -> Result<BenchResult> {
    cfg.validate()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<SeedResult>>>>> =
        Mutex::new(cfg.seeds.iter().map(|_| None).collect());
    let workers = cfg.threads.clamp(1, cfg.seeds.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cfg.seeds.len() {
                    break;
                }
                let r = run_seed(cfg, cfg.seeds[i]);
                progress(&format!("{} seed {} done", cfg.suite, cfg.seeds[i]));
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let per_seed: Vec<Vec<SeedResult>> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect::<Result<_>>()?;
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let rows: Vec<SeedResult> = per_seed.iter().map(|s| s[k].clone()).collect();
            let accs: Vec<f64> = rows.iter().map(|r| r.test_accuracy).collect();
            MethodResult {
                name: g.name.clone(),
                median_test_accuracy: median(&accs),
                per_seed: rows,
            }
        })
        .collect();
    Ok(BenchResult {
        suite: cfg.suite,
        methods,
    })
}
