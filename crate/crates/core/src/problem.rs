//! Problem kinds, the JSON problem file, and evaluation of all data at the
//! reference point.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{eval_jet, parse_expr, Expr, SecondOrderJet};
use crate::linalg::{self, DenseMatrix};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Ncp,
    Avi,
    Kkt,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Ncp => "ncp",
            ProblemKind::Avi => "avi",
            ProblemKind::Kkt => "kkt",
        })
    }
}

/// Polyhedral lower level `Dx + Ey + b ≤ 0` with VI map `Px + Qy + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AviData {
    pub d: DenseMatrix,
    pub e: DenseMatrix,
    pub b: Vec<f64>,
    pub p: DenseMatrix,
    pub q_mat: DenseMatrix,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// `aᵀz + c ≤ 0`
    Le,
    /// `aᵀz + c = 0`
    Eq,
}

/// One row of the upper-level polyhedron over `z = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub sense: Sense,
}

impl LinearConstraint {
    pub fn value(&self, z: &[f64]) -> f64 {
        linalg::dot(&self.coeffs, z) + self.constant
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub upper_vars: Vec<String>,
    pub lower_vars: Vec<String>,
    pub multiplier_vars: Vec<String>,
    /// `f(x, y)`; all expressions index variables in the order `x, y, λ`.
    pub objective: Expr,
    /// `F(x, y)` (NCP and KKT kinds).
    pub lower_map: Vec<Expr>,
    /// `g(x, y)` (KKT kind).
    pub lower_constraints: Vec<Expr>,
    pub avi: Option<AviData>,
    pub upper: Vec<LinearConstraint>,
    /// Reference `(x̄, ȳ)`.
    pub point: Vec<f64>,
    /// Reference `λ̄`, when supplied.
    pub multiplier_point: Option<Vec<f64>>,
    pub zero_tol: f64,
}

impl ProblemSpec {
    pub fn n(&self) -> usize {
        self.upper_vars.len()
    }

    pub fn m(&self) -> usize {
        self.lower_vars.len()
    }

    /// Number of lower-level constraints (multipliers).
    pub fn k(&self) -> usize {
        self.multiplier_vars.len()
    }

    /// Dimension of the direction space the cones live in.
    pub fn direction_dim(&self) -> usize {
        match self.kind {
            ProblemKind::Kkt => self.n() + self.m() + self.k(),
            _ => self.n() + self.m(),
        }
    }

    pub fn variable_names(&self) -> Vec<String> {
        let mut v = self.upper_vars.clone();
        v.extend(self.lower_vars.iter().cloned());
        if self.kind == ProblemKind::Kkt {
            v.extend(self.multiplier_vars.iter().cloned());
        }
        v
    }

    /// The reference point over every variable of the direction space.
    pub fn full_point(&self) -> Vec<f64> {
        let mut p = self.point.clone();
        if self.kind == ProblemKind::Kkt {
            p.extend(self.multiplier_point.clone().unwrap_or_default());
        }
        p
    }

    /// Lower-level stationarity map `F_j + Σ_i λ_i ∂g_i/∂y_j` (KKT kind).
    pub fn stationarity_exprs(&self) -> Vec<Expr> {
        let (n, m) = (self.n(), self.m());
        (0..m)
            .map(|j| {
                self.lower_constraints
                    .iter()
                    .enumerate()
                    .fold(self.lower_map[j].clone(), |acc, (i, g)| {
                        Expr::sum(acc, Expr::product(Expr::var(n + m + i), g.partial(n + j)))
                    })
            })
            .collect()
    }

    pub fn with_zero_tol(mut self, zero_tol: f64) -> Self {
        self.zero_tol = zero_tol;
        self
    }
}

// ---------------------------------------------------------------------------
// Problem file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kind: String,
    #[serde(default)]
    pub upper_vars: Vec<String>,
    #[serde(default)]
    pub lower_vars: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub multiplier_vars: Vec<String>,
    pub objective: String,
    #[serde(rename = "F", default, skip_serializing_if = "Vec::is_empty")]
    pub lower_map: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avi: Option<AviFile>,
    #[serde(default)]
    pub upper_constraints: Vec<String>,
    pub point: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier_point: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<FileOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct AviFile {
    pub D: Vec<Vec<f64>>,
    pub E: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub P: Vec<Vec<f64>>,
    pub Q: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn check_names(groups: &[(&str, &[String])]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (field, names) in groups {
        for name in names.iter() {
            if !is_identifier(name) {
                return Err(Error::schema(*field, format!("`{name}` is not an identifier")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::schema(*field, format!("variable `{name}` declared twice")));
            }
        }
    }
    Ok(())
}

fn parse_field(field: &str, src: &str, names: &[String]) -> Result<Expr> {
    if src.trim().is_empty() {
        return Err(Error::schema(field, "empty expression"));
    }
    Ok(parse_expr(src, names)?)
}

/// Split `lhs <= rhs` / `>=` / `==` and normalize to `expr (≤|=) 0`.
pub(crate) fn parse_relation(field: &str, src: &str, names: &[String]) -> Result<(Expr, Sense)> {
    let ops = ["<=", ">=", "=="];
    let found: Vec<(usize, &str)> = ops
        .iter()
        .flat_map(|op| src.match_indices(op).collect::<Vec<_>>())
        .collect();
    let [(at, op)] = found.as_slice() else {
        return Err(Error::schema(
            field,
            format!("`{src}` must contain exactly one of <=, >=, =="),
        ));
    };
    let lhs = parse_field(field, &src[..*at], names)?;
    let rhs = parse_field(field, &src[at + 2..], names)?;
    Ok(match *op {
        "<=" => (Expr::difference(lhs, rhs), Sense::Le),
        ">=" => (Expr::difference(rhs, lhs), Sense::Le),
        _ => (Expr::difference(lhs, rhs), Sense::Eq),
    })
}

fn affine_row(field: &str, e: &Expr, dim: usize, sense: Sense) -> Result<LinearConstraint> {
    match e.polynomial_degree() {
        Some(d) if d <= 1 => {}
        _ => return Err(Error::schema(field, "constraint is not affine")),
    }
    let jet = eval_jet(e, &vec![0.0; dim])?;
    Ok(LinearConstraint {
        coeffs: jet.gradient,
        constant: jet.value,
        sense,
    })
}

fn lookup_point(field: &str, map: &BTreeMap<String, f64>, names: &[String]) -> Result<Vec<f64>> {
    if let Some(extra) = map.keys().find(|k| !names.contains(k)) {
        return Err(Error::schema(field, format!("unknown variable `{extra}`")));
    }
    names
        .iter()
        .map(|n| match map.get(n) {
            Some(v) if v.is_finite() => Ok(*v),
            Some(_) => Err(Error::schema(field, format!("`{n}` is not finite"))),
            None => Err(Error::schema(field, format!("missing value for `{n}`"))),
        })
        .collect()
}

fn matrix(field: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<DenseMatrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension(format!("avi.{field} must be {r}x{c}")));
    }
    if r == 0 {
        return Ok(DenseMatrix::zeros(0, c));
    }
    DenseMatrix::from_rows(rows)
}

/// Parse and validate a problem file.
pub fn load_problem(content: &str) -> Result<ProblemSpec> {
    let file: ProblemFile = serde_json::from_str(content)?;
    spec_from_file(&file)
}

pub fn spec_from_file(file: &ProblemFile) -> Result<ProblemSpec> {
    let kind = match file.kind.as_str() {
        "ncp" => ProblemKind::Ncp,
        "avi" => ProblemKind::Avi,
        "kkt" => ProblemKind::Kkt,
        "nlp-branch" => {
            return Err(Error::schema(
                "kind",
                "nlp-branch files are export-only; load them as branch problems",
            ))
        }
        other => return Err(Error::schema("kind", format!("unknown kind `{other}`"))),
    };
    let n = file.upper_vars.len();
    let m = file.lower_vars.len();
    if m == 0 {
        return Err(Error::schema("lower_vars", "at least one lower variable is required"));
    }

    let k = match kind {
        ProblemKind::Ncp => 0,
        ProblemKind::Kkt => file.g.len(),
        ProblemKind::Avi => file.avi.as_ref().map_or(0, |a| a.b.len()),
    };
    let multiplier_vars: Vec<String> = if kind == ProblemKind::Ncp {
        if !file.multiplier_vars.is_empty() {
            return Err(Error::schema(
                "multiplier_vars",
                "only kkt and avi problems have multipliers",
            ));
        }
        Vec::new()
    } else if file.multiplier_vars.is_empty() {
        (1..=k).map(|i| format!("lambda{i}")).collect()
    } else {
        if file.multiplier_vars.len() != k {
            return Err(Error::Dimension(format!(
                "{} multiplier names for {k} lower-level constraints",
                file.multiplier_vars.len()
            )));
        }
        file.multiplier_vars.clone()
    };
    check_names(&[
        ("upper_vars", &file.upper_vars),
        ("lower_vars", &file.lower_vars),
        ("multiplier_vars", &multiplier_vars),
    ])?;
    let mut zy = file.upper_vars.clone();
    zy.extend(file.lower_vars.iter().cloned());

    let objective = parse_field("objective", &file.objective, &zy)?;
    let mut lower_map = Vec::new();
    let mut lower_constraints = Vec::new();
    let mut avi = None;
    match kind {
        ProblemKind::Ncp | ProblemKind::Kkt => {
            if file.avi.is_some() {
                return Err(Error::schema("avi", "only avi problems carry avi data"));
            }
            if file.lower_map.len() != m {
                return Err(Error::Dimension(format!(
                    "F has {} components for {m} lower variables",
                    file.lower_map.len()
                )));
            }
            for s in &file.lower_map {
                lower_map.push(parse_field("F", s, &zy)?);
            }
            if kind == ProblemKind::Ncp && !file.g.is_empty() {
                return Err(Error::schema("g", "only kkt problems carry lower constraints"));
            }
            if kind == ProblemKind::Kkt && file.g.is_empty() {
                return Err(Error::schema("g", "kkt problems need lower constraints"));
            }
            for s in &file.g {
                lower_constraints.push(parse_field("g", s, &zy)?);
            }
        }
        ProblemKind::Avi => {
            if !file.lower_map.is_empty() || !file.g.is_empty() {
                return Err(Error::schema("F", "avi problems take their data from `avi`"));
            }
            let a = file
                .avi
                .as_ref()
                .ok_or_else(|| Error::schema("avi", "missing avi data"))?;
            if a.q.len() != m {
                return Err(Error::Dimension(format!("avi.q must have length {m}")));
            }
            avi = Some(AviData {
                d: matrix("D", &a.D, k, n)?,
                e: matrix("E", &a.E, k, m)?,
                b: a.b.clone(),
                p: matrix("P", &a.P, m, n)?,
                q_mat: matrix("Q", &a.Q, m, m)?,
                q: a.q.clone(),
            });
        }
    }

    let mut upper = Vec::new();
    for s in &file.upper_constraints {
        let (e, sense) = parse_relation("upper_constraints", s, &zy)?;
        upper.push(affine_row("upper_constraints", &e, n + m, sense)?);
    }

    let point = lookup_point("point", &file.point, &zy)?;
    let multiplier_point = match &file.multiplier_point {
        None => None,
        Some(_) if kind == ProblemKind::Ncp => {
            return Err(Error::schema("multiplier_point", "ncp problems have no multipliers"))
        }
        Some(map) => Some(lookup_point("multiplier_point", map, &multiplier_vars)?),
    };
    if kind == ProblemKind::Kkt && multiplier_point.is_none() {
        return Err(Error::MissingMultiplier("kkt problems need `multiplier_point`".into()));
    }
    let zero_tol = file
        .options
        .as_ref()
        .and_then(|o| o.zero_tol)
        .unwrap_or(tol::DEFAULT_ZERO_TOL);
    if !(zero_tol > 0.0 && zero_tol.is_finite()) {
        return Err(Error::schema("options.zero_tol", "must be positive and finite"));
    }

    Ok(ProblemSpec {
        kind,
        upper_vars: file.upper_vars.clone(),
        lower_vars: file.lower_vars.clone(),
        multiplier_vars,
        objective,
        lower_map,
        lower_constraints,
        avi,
        upper,
        point,
        multiplier_point,
        zero_tol,
    })
}

/// Rewrite an AVI lower level as its KKT system.
pub fn kkt_reformulate_avi(spec: &ProblemSpec) -> Result<ProblemSpec> {
    if spec.kind != ProblemKind::Avi {
        return Err(Error::WrongKind {
            expected: "avi",
            actual: spec.kind.to_string(),
        });
    }
    let avi = spec
        .avi
        .as_ref()
        .ok_or_else(|| Error::schema("avi", "missing avi data"))?;
    let Some(lambda) = spec.multiplier_point.clone() else {
        return Err(Error::MissingMultiplier(
            "the avi stationarity system needs `multiplier_point`".into(),
        ));
    };
    let (n, m) = (spec.n(), spec.m());
    let row = |left: &DenseMatrix, right: &DenseMatrix, i: usize, c: f64| {
        let mut coeffs = left.row(i).to_vec();
        coeffs.extend_from_slice(right.row(i));
        debug_assert_eq!(coeffs.len(), n + m);
        Expr::affine(&coeffs, c)
    };
    let lower_map = (0..m).map(|j| row(&avi.p, &avi.q_mat, j, avi.q[j])).collect();
    let lower_constraints = (0..avi.b.len()).map(|i| row(&avi.d, &avi.e, i, avi.b[i])).collect();
    Ok(ProblemSpec {
        kind: ProblemKind::Kkt,
        lower_map,
        lower_constraints,
        avi: None,
        multiplier_point: Some(lambda),
        ..spec.clone()
    })
}

// ---------------------------------------------------------------------------
// Reference-point evaluation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStatus {
    /// Function side zero, variable positive.
    EquationActive,
    /// Variable zero, function side positive.
    VariableActive,
    BothActive,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub variable_value: f64,
    pub function_value: f64,
    pub status: PairStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperRowReport {
    pub value: f64,
    pub sense: Sense,
    pub active: bool,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub pairs: Vec<PairReport>,
    pub upper: Vec<UpperRowReport>,
    /// Max-norm of the lower stationarity residual (KKT kind).
    pub stationarity_residual: Option<f64>,
    pub feasible: bool,
    pub violations: Vec<String>,
}

/// Three-way sign under a zero tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

pub fn sign(v: f64, zero_tol: f64) -> Sign {
    if v > zero_tol {
        Sign::Positive
    } else if v < -zero_tol {
        Sign::Negative
    } else {
        Sign::Zero
    }
}

fn pair_status(v: f64, phi: f64, zero_tol: f64) -> PairStatus {
    match (sign(v, zero_tol), sign(phi, zero_tol)) {
        _ if (v * phi).abs() > zero_tol => PairStatus::Infeasible,
        (Sign::Negative, _) | (_, Sign::Negative) => PairStatus::Infeasible,
        (Sign::Zero, Sign::Zero) => PairStatus::BothActive,
        (Sign::Positive, Sign::Zero) => PairStatus::EquationActive,
        (Sign::Zero, Sign::Positive) => PairStatus::VariableActive,
        (Sign::Positive, Sign::Positive) => PairStatus::Infeasible,
    }
}

/// A complementarity pair `v ≥ 0`, `φ ≥ 0`, `v·φ = 0` in the direction space.
#[derive(Debug, Clone)]
pub struct ComplementarityPair {
    /// Index of `v` in the direction space.
    pub variable: usize,
    /// Jet of `φ` (`F_i` for NCP, `−g_i` for KKT).
    pub function: SecondOrderJet,
}

/// Every value, gradient and Hessian the analyses need at the reference point.
#[derive(Debug, Clone)]
pub struct PointEvaluation {
    pub kind: ProblemKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Reference point in the direction space.
    pub point: Vec<f64>,
    pub f_jet: SecondOrderJet,
    pub f_jets: Vec<SecondOrderJet>,
    pub g_jets: Vec<SecondOrderJet>,
    /// Lower stationarity map jets (KKT kind).
    pub stationarity_jets: Vec<SecondOrderJet>,
    pub upper: Vec<LinearConstraint>,
    pub feasibility: FeasibilityReport,
    pub zero_tol: f64,
}

impl PointEvaluation {
    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn pairs(&self) -> Vec<ComplementarityPair> {
        match self.kind {
            ProblemKind::Kkt => self
                .g_jets
                .iter()
                .enumerate()
                .map(|(i, g)| ComplementarityPair {
                    variable: self.n + self.m + i,
                    function: negate(g),
                })
                .collect(),
            _ => self
                .f_jets
                .iter()
                .enumerate()
                .map(|(i, f)| ComplementarityPair {
                    variable: self.n + i,
                    function: f.clone(),
                })
                .collect(),
        }
    }

    /// Linear constraints of the upper polyhedron, padded to the direction space.
    pub fn upper_rows(&self) -> Vec<(Vec<f64>, Sense, bool)> {
        let d = self.dim();
        self.upper
            .iter()
            .zip(&self.feasibility.upper)
            .map(|(c, r)| {
                let mut a = c.coeffs.clone();
                a.resize(d, 0.0);
                (a, c.sense, r.active)
            })
            .collect()
    }

    /// ∇_y F restricted to the lower variables (NCP kind).
    pub fn jacobian_y(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.m, self.m, |i, j| self.f_jets[i].gradient[self.n + j])
    }

    pub fn jacobian_x(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.m, self.n, |i, j| self.f_jets[i].gradient[j])
    }
}

fn negate(j: &SecondOrderJet) -> SecondOrderJet {
    let mut out = j.clone();
    out.value = -out.value;
    out.gradient.iter_mut().for_each(|g| *g = -*g);
    let d = out.dim();
    for a in 0..d {
        for b in a..d {
            out.hessian.set(a, b, -j.hessian.get(a, b));
        }
    }
    out
}

/// Evaluate with the default hard error on infeasibility.
pub fn evaluate_at_reference(spec: &ProblemSpec, zero_tol: f64) -> Result<PointEvaluation> {
    evaluate_at_reference_with(spec, zero_tol, false)
}

/// Evaluate; with `allow_infeasible` the report carries the violations
/// instead of aborting.
pub fn evaluate_at_reference_with(
    spec: &ProblemSpec,
    zero_tol: f64,
    allow_infeasible: bool,
) -> Result<PointEvaluation> {
    if !(zero_tol > 0.0 && zero_tol.is_finite()) {
        return Err(Error::schema("zero_tol", "must be positive and finite"));
    }
    let spec = match spec.kind {
        ProblemKind::Avi => kkt_reformulate_avi(spec)?,
        _ => spec.clone(),
    };
    let point = spec.full_point();
    let jets = |es: &[Expr]| -> Result<Vec<SecondOrderJet>> { es.iter().map(|e| eval_jet(e, &point)).collect() };
    let f_jet = eval_jet(&spec.objective, &point)?;
    let f_jets = jets(&spec.lower_map)?;
    let g_jets = jets(&spec.lower_constraints)?;
    let stationarity_jets = if spec.kind == ProblemKind::Kkt {
        jets(&spec.stationarity_exprs())?
    } else {
        Vec::new()
    };

    let mut violations = Vec::new();
    let (n, m) = (spec.n(), spec.m());
    let pair_values: Vec<(f64, f64)> = match spec.kind {
        ProblemKind::Kkt => g_jets
            .iter()
            .enumerate()
            .map(|(i, g)| (point[n + m + i], -g.value))
            .collect(),
        _ => f_jets
            .iter()
            .enumerate()
            .map(|(i, f)| (point[n + i], f.value))
            .collect(),
    };
    let pairs: Vec<PairReport> = pair_values
        .iter()
        .enumerate()
        .map(|(i, &(v, phi))| {
            let status = pair_status(v, phi, zero_tol);
            if status == PairStatus::Infeasible {
                violations.push(format!(
                    "complementarity pair {} violated (variable {v}, function {phi})",
                    i + 1
                ));
            }
            PairReport {
                variable_value: v,
                function_value: phi,
                status,
            }
        })
        .collect();
    let upper: Vec<UpperRowReport> = spec
        .upper
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let value = c.value(&point[..n + m]);
            let s = sign(value, zero_tol);
            let violated = match c.sense {
                Sense::Le => s == Sign::Positive,
                Sense::Eq => s != Sign::Zero,
            };
            if violated {
                violations.push(format!("upper constraint {} violated (value {value})", i + 1));
            }
            UpperRowReport {
                value,
                sense: c.sense,
                active: c.sense == Sense::Eq || s == Sign::Zero,
                violated,
            }
        })
        .collect();
    let stationarity_residual =
        (spec.kind == ProblemKind::Kkt).then(|| stationarity_jets.iter().fold(0.0f64, |r, j| r.max(j.value.abs())));
    if let Some(r) = stationarity_residual {
        if r > zero_tol {
            violations.push(format!("lower stationarity residual {r} exceeds tolerance"));
        }
    }
    let feasible = violations.is_empty();
    if !feasible && !allow_infeasible {
        return Err(Error::Infeasible(violations.join("; ")));
    }
    Ok(PointEvaluation {
        kind: spec.kind,
        n,
        m,
        k: spec.k(),
        point,
        f_jet,
        f_jets,
        g_jets,
        stationarity_jets,
        upper: spec.upper.clone(),
        feasibility: FeasibilityReport {
            pairs,
            upper,
            stationarity_residual,
            feasible,
            violations,
        },
        zero_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MICRO: &str = r#"{
        "kind": "ncp",
        "upper_vars": ["x"],
        "lower_vars": ["y"],
        "objective": "0.5*(x^2 - y^2)",
        "F": ["y^4 + y + x"],
        "upper_constraints": ["x >= 0"],
        "point": {"x": 0, "y": 0}
    }"#;

    fn ncp(f: &str, point: &str) -> String {
        format!(
            r#"{{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],"objective":"x",
               "F":["{f}"],"point":{point}}}"#
        )
    }

    #[test]
    fn micro_loads_and_evaluates() {
        let spec = load_problem(MICRO).unwrap();
        assert_eq!(spec.kind, ProblemKind::Ncp);
        assert_eq!(spec.upper.len(), 1);
        assert_eq!(spec.upper[0].coeffs, vec![-1.0, 0.0]);
        assert_eq!(spec.upper[0].sense, Sense::Le);
        let ev = evaluate_at_reference(&spec, 1e-9).unwrap();
        assert_eq!(ev.feasibility.pairs[0].status, PairStatus::BothActive);
        assert!(ev.feasibility.upper[0].active);
        assert_eq!(ev.f_jets[0].gradient, vec![1.0, 1.0]);
    }

    #[test]
    fn q2_loads() {
        let spec = load_problem(
            r#"{"kind":"ncp","upper_vars":["x1","x2"],"lower_vars":["y1","y2"],
                "objective":"x1 + x2","F":["x1^2 + y1","x2^2 + y2"],
                "point":{"x1":0,"x2":0,"y1":0,"y2":0}}"#,
        )
        .unwrap();
        assert_eq!((spec.n(), spec.m()), (2, 2));
    }

    #[test]
    fn schema_errors() {
        let bad = r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y1","y2"],
            "objective":"x","F":["y1"],"point":{"x":0,"y1":0,"y2":0}}"#;
        assert!(matches!(load_problem(bad), Err(Error::Dimension(_))));
        let unknown = MICRO.replace("\"kind\"", "\"colour\": 1, \"kind\"");
        assert!(matches!(load_problem(&unknown), Err(Error::Json(_))));
        let missing = ncp("y", r#"{"x":0}"#);
        assert!(matches!(load_problem(&missing), Err(Error::Schema { .. })));
        let undeclared = ncp("y + z", r#"{"x":0,"y":0}"#);
        assert!(matches!(load_problem(&undeclared), Err(Error::Parse(_))));
        let curved = MICRO.replace("x >= 0", "x^2 >= 0");
        assert!(matches!(load_problem(&curved), Err(Error::Schema { .. })));
        let dup = MICRO.replace(r#""lower_vars": ["y"]"#, r#""lower_vars": ["x"]"#);
        assert!(load_problem(&dup).is_err());
    }

    #[test]
    fn pair_classification() {
        let s = load_problem(&ncp("y + 2", r#"{"x":0,"y":0}"#)).unwrap();
        let ev = evaluate_at_reference(&s, 1e-9).unwrap();
        assert_eq!(ev.feasibility.pairs[0].status, PairStatus::VariableActive);
        let s = load_problem(&ncp("y - 1", r#"{"x":0,"y":1}"#)).unwrap();
        let ev = evaluate_at_reference(&s, 1e-9).unwrap();
        assert_eq!(ev.feasibility.pairs[0].status, PairStatus::EquationActive);
        let s = load_problem(&ncp("y - 1", r#"{"x":0,"y":0}"#)).unwrap();
        assert!(matches!(evaluate_at_reference(&s, 1e-9), Err(Error::Infeasible(_))));
        let ev = evaluate_at_reference_with(&s, 1e-9, true).unwrap();
        assert!(!ev.feasibility.feasible);
        assert_eq!(ev.feasibility.pairs[0].status, PairStatus::Infeasible);
    }

    const AVI: &str = r#"{
        "kind": "avi",
        "upper_vars": ["x"],
        "lower_vars": ["y"],
        "objective": "0.5*(x^2 - y^2)",
        "avi": {"D": [[0]], "E": [[1]], "b": [0], "P": [[0]], "Q": [[1]], "q": [0]},
        "point": {"x": 0, "y": 0},
        "multiplier_point": {"lambda1": 0}
    }"#;

    #[test]
    fn avi_reformulation() {
        let spec = load_problem(AVI).unwrap();
        let kkt = kkt_reformulate_avi(&spec).unwrap();
        assert_eq!(kkt.kind, ProblemKind::Kkt);
        let ev = evaluate_at_reference(&kkt, 1e-9).unwrap();
        assert_eq!(ev.feasibility.stationarity_residual, Some(0.0));
        for j in ev.f_jets.iter().chain(&ev.g_jets) {
            assert_eq!(j.hessian.to_dense().max_abs(), 0.0);
        }
        let h = ev.f_jet.hessian;
        assert_eq!((h.get(0, 0), h.get(1, 1), h.get(0, 1)), (1.0, -1.0, 0.0));
        // stationarity F + Eᵀλ = y + λ
        assert_eq!(ev.stationarity_jets[0].gradient, vec![0.0, 1.0, 1.0]);

        let no_mult = AVI.replace(
            "\"multiplier_point\": {\"lambda1\": 0}",
            "\"options\": {\"zero_tol\": 1e-9}",
        );
        let spec = load_problem(&no_mult).unwrap();
        assert!(matches!(kkt_reformulate_avi(&spec), Err(Error::MissingMultiplier(_))));
    }

    #[test]
    fn kkt_requires_multipliers_and_checks_stationarity() {
        let src = r#"{"kind":"kkt","upper_vars":["x"],"lower_vars":["y"],
            "objective":"(x+1)^2 + y^2","F":["y - x"],"g":["-y"],
            "point":{"x":-1,"y":0},"multiplier_point":{"lambda1":1}}"#;
        let spec = load_problem(src).unwrap();
        let ev = evaluate_at_reference(&spec, 1e-9).unwrap();
        assert_eq!(ev.feasibility.pairs[0].status, PairStatus::EquationActive);
        let wrong = src.replace(r#""lambda1":1"#, r#""lambda1":2"#);
        let spec = load_problem(&wrong).unwrap();
        assert!(matches!(evaluate_at_reference(&spec, 1e-9), Err(Error::Infeasible(_))));
        let none = src.replace(r#","multiplier_point":{"lambda1":1}"#, "");
        assert!(matches!(load_problem(&none), Err(Error::MissingMultiplier(_))));
        let uses_lambda = src.replace("(x+1)^2", "lambda1");
        assert!(matches!(load_problem(&uses_lambda), Err(Error::Parse(_))));
    }

    #[test]
    fn relation_forms() {
        let names = vec!["x".to_string(), "y".to_string()];
        let (e, s) = parse_relation("c", "x + 1 <= y", &names).unwrap();
        assert_eq!(s, Sense::Le);
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 1.0);
        let (e, s) = parse_relation("c", "2*x == 4", &names).unwrap();
        assert_eq!(s, Sense::Eq);
        assert_eq!(e.eval(&[2.0, 0.0]).unwrap(), 0.0);
        assert!(parse_relation("c", "x < 1", &names).is_err());
        assert!(parse_relation("c", "x <= 1 <= 2", &names).is_err());
    }

    proptest! {
        #[test]
        fn report_is_stable_below_smallest_residual(
            y in prop_oneof![Just(0.0), 0.5f64..2.0],
            shift in 0.5f64..2.0,
            t in 1e-6f64..0.4,
        ) {
            // F = y + shift when y = 0, F = y - y when y > 0.
            let f = if y == 0.0 { format!("y + {shift}") } else { format!("y - {y}") };
            let s = load_problem(&ncp(&f, &format!(r#"{{"x":0,"y":{y}}}"#))).unwrap();
            let a = evaluate_at_reference(&s, 1e-9).unwrap();
            let b = evaluate_at_reference(&s, t).unwrap();
            prop_assert_eq!(a.feasibility, b.feasibility);
        }
    }
}
