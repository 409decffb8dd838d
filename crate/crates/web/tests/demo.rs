use nhsvm_web::{alpha_weights_json, shared_alpha_json, tree_argmax_json};
use serde_json::Value;

const TREE: &str = "0 1\n0 2\n2 3\n2 4\n";

fn values(doc: &Value) -> Vec<(u64, f64)> {
    doc["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| (n["id"].as_u64().unwrap(), n["value"].as_f64().unwrap()))
        .collect()
}

#[test]
fn alpha_weights_respect_path_sums() {
    let doc: Value = serde_json::from_str(&alpha_weights_json(TREE, "rho", 2.0, false).unwrap()).unwrap();
    assert!(doc["max_path_sum"].as_f64().unwrap() <= 1.0 + 1e-9);
    assert_eq!(values(&doc).len(), 5);
    let flat: Value = serde_json::from_str(&alpha_weights_json(TREE, "flat", 2.0, false).unwrap()).unwrap();
    for n in flat["nodes"].as_array().unwrap() {
        let expect = if n["leaf"].as_bool().unwrap() { 1.0 } else { 0.0 };
        assert_eq!(n["value"].as_f64().unwrap(), expect);
    }
}

#[test]
fn alpha_weights_report_errors_as_text() {
    assert!(alpha_weights_json("0 1\n1 0\n", "rho", 2.0, false).unwrap_err().contains("hierarchy"));
    assert!(alpha_weights_json(TREE, "nope", 2.0, false).is_err());
    assert!(alpha_weights_json(TREE, "rho", 0.5, false).is_err());
}

#[test]
fn shared_alpha_on_a_chain_splits_by_norm() {
    // chain with norms 1 and 3: α ∝ norms, so 1/4 and 3/4
    let doc: Value = serde_json::from_str(&shared_alpha_json("5 6\n", "5 1\n6 3\n").unwrap()).unwrap();
    let v = values(&doc);
    assert!((v[0].1 - 0.25).abs() < 1e-9 && (v[1].1 - 0.75).abs() < 1e-9, "{v:?}");
    assert!((doc["objective"].as_f64().unwrap() - 16.0).abs() < 1e-9);
    assert!(shared_alpha_json(TREE, "9 1\n").unwrap_err().contains("unknown node"));
}

#[test]
fn tree_argmax_selects_positive_subtree() {
    let doc: Value = serde_json::from_str(&tree_argmax_json(TREE, "0 1\n1 -1\n2 0.5\n3 2\n4 -0.25\n").unwrap()).unwrap();
    let leaves: Vec<u64> = doc["leaves"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(leaves, vec![3]);
    assert!((doc["value"].as_f64().unwrap() - 3.5).abs() < 1e-12);
}
