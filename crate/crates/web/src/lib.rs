//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every entry point takes plain text (hierarchy as `parent child` lines,
//! per-node values as `id value` lines) and returns a JSON document. The
//! `*_json` functions carry the logic and are usable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use nhsvm::alpha::{AlphaConfig, AlphaScheme};
use nhsvm::inference::{argmax_multilabel, DagMode};
use nhsvm::ssvm::{alpha_objective_norms, optimal_alpha_from_norms};
use nhsvm::Taxonomy;

#[derive(Serialize)]
struct Node {
    id: u64,
    parents: Vec<u64>,
    leaf: bool,
    value: f64,
}

#[derive(Serialize)]
struct Weights {
    nodes: Vec<Node>,
    /// Largest root-to-leaf path sum.
    max_path_sum: f64,
}

#[derive(Serialize)]
struct SharedWeights {
    nodes: Vec<Node>,
    objective: f64,
}

#[derive(Serialize)]
struct Argmax {
    nodes: Vec<Node>,
    selected: Vec<u64>,
    leaves: Vec<u64>,
    value: f64,
}

fn parse_hierarchy(text: &str) -> Result<Taxonomy, String> {
    Taxonomy::parse(text).map_err(|e| format!("hierarchy: {e}"))
}

/// `id value` lines onto a dense per-node vector; absent nodes get 0.
fn parse_node_values(text: &str, t: &Taxonomy) -> Result<Vec<f64>, String> {
    let mut out = vec![0.0; t.node_count()];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| format!("values line {}: {msg}", i + 1);
        let mut it = line.split_whitespace();
        let (id, v) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(err("expected `id value`")),
        };
        let id: u64 = id.parse().map_err(|_| err("bad node id"))?;
        let v: f64 = v.parse().map_err(|_| err("bad number"))?;
        if !v.is_finite() {
            return Err(err("value is not finite"));
        }
        let n = t.node_of_external(id).ok_or_else(|| err(&format!("unknown node {id}")))?;
        out[n] = v;
    }
    Ok(out)
}

fn nodes(t: &Taxonomy, values: &[f64]) -> Vec<Node> {
    (0..t.node_count())
        .map(|n| Node {
            id: t.external_id(n),
            parents: t.parents(n).iter().map(|&p| t.external_id(p)).collect(),
            leaf: t.is_leaf(n),
            value: values[n],
        })
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Normalization weights under `scheme` (`rho`, `maximin` or `flat`).
pub fn alpha_weights_json(hierarchy: &str, scheme: &str, rho: f64, directional: bool) -> Result<String, String> {
    let t = parse_hierarchy(hierarchy)?;
    let scheme: AlphaScheme = scheme.parse().map_err(|e: nhsvm::Error| e.to_string())?;
    let cfg = AlphaConfig {
        scheme,
        rho,
        directional,
        range_t: 1.0,
    };
    let w = cfg.compute(&t).map_err(|e| e.to_string())?;
    let max_path_sum = nhsvm::alpha::path_sums(&t, &w.alpha).into_iter().fold(0.0, f64::max);
    to_json(&Weights {
        nodes: nodes(&t, &w.alpha),
        max_path_sum,
    })
}

/// Weights minimizing `Σ ‖U_n‖² / α_n` over the path-sum polytope, given
/// per-node norms `‖U_n‖`. Trees only.
pub fn shared_alpha_json(hierarchy: &str, norms: &str) -> Result<String, String> {
    let t = parse_hierarchy(hierarchy)?;
    let b: Vec<f64> = parse_node_values(norms, &t)?.iter().map(|v| v * v).collect();
    let w = optimal_alpha_from_norms(&b, &t).map_err(|e| e.to_string())?;
    to_json(&SharedWeights {
        objective: alpha_objective_norms(&b, &w.alpha),
        nodes: nodes(&t, &w.alpha),
    })
}

/// Highest-scoring ancestor-closed node set for per-node scores.
pub fn tree_argmax_json(hierarchy: &str, scores: &str) -> Result<String, String> {
    let t = parse_hierarchy(hierarchy)?;
    let r = parse_node_values(scores, &t)?;
    let (y, value) = argmax_multilabel(&r, &t, DagMode::Ip).map_err(|e| e.to_string())?;
    to_json(&Argmax {
        nodes: nodes(&t, &r),
        selected: y.nodes().iter().map(|&n| t.external_id(n)).collect(),
        leaves: y.leaves().iter().map(|&n| t.external_id(n)).collect(),
        value,
    })
}

#[wasm_bindgen]
pub fn alpha_weights(hierarchy: &str, scheme: &str, rho: f64, directional: bool) -> Result<String, JsValue> {
    alpha_weights_json(hierarchy, scheme, rho, directional).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn shared_alpha(hierarchy: &str, norms: &str) -> Result<String, JsValue> {
    shared_alpha_json(hierarchy, norms).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tree_argmax(hierarchy: &str, scores: &str) -> Result<String, JsValue> {
    tree_argmax_json(hierarchy, scores).map_err(|e| JsValue::from_str(&e))
}
