//! Benchmark fixtures shared by the criterion targets.

use mpec_core::{load_problem, ProblemSpec};

const MICRO: &str = include_str!("../../../fixtures/micro.json");
const Q2: &str = include_str!("../../../fixtures/q2.json");
const KKT: &str = include_str!("../../../fixtures/kkt_example.json");

pub fn micro() -> ProblemSpec {
    load_problem(MICRO).expect("fixture parses")
}

pub fn q2() -> ProblemSpec {
    load_problem(Q2).expect("fixture parses")
}

pub fn kkt_example() -> ProblemSpec {
    load_problem(KKT).expect("fixture parses")
}

/// `m` decoupled degenerate pairs `0 ≤ y_i ⊥ x_i^2 + y_i ≥ 0` at the origin,
/// so every pair is biactive and the branch count is `2^m`.
pub fn biactive_chain(m: usize) -> ProblemSpec {
    let xs: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
    let ys: Vec<String> = (1..=m).map(|i| format!("y{i}")).collect();
    let objective = xs
        .iter()
        .map(|x| format!("{x}^2"))
        .chain(ys.iter().cloned())
        .collect::<Vec<_>>()
        .join(" + ");
    let lower: Vec<String> = xs.iter().zip(&ys).map(|(x, y)| format!("{x}^2 + {y}")).collect();
    let point: serde_json::Map<String, serde_json::Value> =
        xs.iter().chain(&ys).map(|v| (v.clone(), 0.0.into())).collect();
    let file = serde_json::json!({
        "kind": "ncp",
        "upper_vars": xs,
        "lower_vars": ys,
        "objective": objective,
        "F": lower,
        "point": point,
    });
    load_problem(&file.to_string()).expect("generated problem parses")
}
