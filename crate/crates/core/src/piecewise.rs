//! Complementarity branches as smooth NLP pieces and the classical
//! second-order test on each.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cone::{copositivity_test, BranchPattern, CopositivityVerdict, IndexPartition, PolyhedralCone};
use crate::error::{Error, Result};
use crate::expr::{eval_jet, Expr, SecondOrderJet};
use crate::linalg::{self, DenseMatrix};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::problem::{
    check_names, kkt_reformulate_avi, parse_relation, PointEvaluation, ProblemFile, ProblemKind, ProblemSpec, Sense,
};
use crate::tol;
use crate::verdict::Verdict;

/// One piece: `min f` s.t. `h(w) = 0`, `g(w) ≤ 0`.
#[derive(Debug, Clone)]
pub struct BranchNlp {
    pub pattern: BranchPattern,
    pub variable_names: Vec<String>,
    pub objective: Expr,
    pub equalities: Vec<Expr>,
    /// Written as `g_i(w) ≤ 0`.
    pub inequalities: Vec<Expr>,
    pub point: Vec<f64>,
    /// Inequalities with `|g_i(w̄)| ≤ zero_tol`.
    pub active_set_at_reference: Vec<usize>,
    pub zero_tol: f64,
}

fn pair_exprs(spec: &ProblemSpec) -> Vec<(Expr, Expr)> {
    let (n, m) = (spec.n(), spec.m());
    match spec.kind {
        ProblemKind::Kkt => spec
            .lower_constraints
            .iter()
            .enumerate()
            .map(|(i, g)| (Expr::var(n + m + i), Expr::negation(g.clone())))
            .collect(),
        _ => spec
            .lower_map
            .iter()
            .enumerate()
            .map(|(i, f)| (Expr::var(n + i), f.clone()))
            .collect(),
    }
}

impl BranchNlp {
    fn finish(mut self) -> Result<Self> {
        let tol = self.zero_tol;
        for (i, h) in self.equalities.iter().enumerate() {
            let v = h.eval(&self.point)?;
            if v.abs() > tol {
                return Err(Error::Infeasible(format!("branch equality {} has value {v:e}", i + 1)));
            }
        }
        self.active_set_at_reference.clear();
        for (i, g) in self.inequalities.iter().enumerate() {
            let v = g.eval(&self.point)?;
            if v > tol {
                return Err(Error::Infeasible(format!(
                    "branch inequality {} has value {v:e}",
                    i + 1
                )));
            }
            if v.abs() <= tol {
                self.active_set_at_reference.push(i);
            }
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// Standalone problem file of kind `nlp-branch`.
    pub fn to_problem_file(&self) -> ProblemFile {
        let names = &self.variable_names;
        let mut constraints: Vec<String> = self
            .equalities
            .iter()
            .map(|h| format!("{} == 0", h.display(names)))
            .collect();
        constraints.extend(self.inequalities.iter().map(|g| format!("{} <= 0", g.display(names))));
        ProblemFile {
            kind: "nlp-branch".into(),
            upper_vars: names.clone(),
            lower_vars: Vec::new(),
            multiplier_vars: Vec::new(),
            objective: self.objective.display(names).to_string(),
            lower_map: Vec::new(),
            g: Vec::new(),
            avi: None,
            upper_constraints: constraints,
            point: names
                .iter()
                .cloned()
                .zip(self.point.iter().copied())
                .collect::<BTreeMap<_, _>>(),
            multiplier_point: None,
            options: Some(crate::problem::FileOptions {
                zero_tol: Some(self.zero_tol),
            }),
        }
    }

    /// Inverse of [`BranchNlp::to_problem_file`]; constraints may be nonlinear.
    pub fn from_problem_file(file: &ProblemFile, pattern: BranchPattern) -> Result<Self> {
        if file.kind != "nlp-branch" {
            return Err(Error::schema(
                "kind",
                format!("expected nlp-branch, found `{}`", file.kind),
            ));
        }
        let names = file.upper_vars.clone();
        check_names(&[("upper_vars", &names)])?;
        let objective =
            crate::expr::parse_expr(&file.objective, &names).map_err(|e| Error::schema("objective", e.to_string()))?;
        let mut equalities = Vec::new();
        let mut inequalities = Vec::new();
        for c in &file.upper_constraints {
            match parse_relation("upper_constraints", c, &names)? {
                (e, Sense::Eq) => equalities.push(e),
                (e, Sense::Le) => inequalities.push(e),
            }
        }
        let point = names
            .iter()
            .map(|n| {
                file.point
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::schema("point", format!("missing value for `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let zero_tol = file
            .options
            .as_ref()
            .and_then(|o| o.zero_tol)
            .unwrap_or(tol::DEFAULT_ZERO_TOL);
        BranchNlp {
            pattern,
            variable_names: names,
            objective,
            equalities,
            inequalities,
            point,
            active_set_at_reference: Vec::new(),
            zero_tol,
        }
        .finish()
    }
}

/// All `2^|β|` pieces in ascending mask order.
pub fn enumerate_branches(spec: &ProblemSpec, ev: &PointEvaluation, part: &IndexPartition) -> Result<Vec<BranchNlp>> {
    let spec = match spec.kind {
        ProblemKind::Avi => kkt_reformulate_avi(spec)?,
        _ => spec.clone(),
    };
    let d = ev.dim();
    let mut common_eq = Vec::new();
    let mut common_ineq = Vec::new();
    for row in &spec.upper {
        let mut a = row.coeffs.clone();
        a.resize(d, 0.0);
        let e = Expr::affine(&a, row.constant);
        match row.sense {
            Sense::Eq => common_eq.push(e),
            Sense::Le => common_ineq.push(e),
        }
    }
    if spec.kind == ProblemKind::Kkt {
        common_eq.extend(spec.stationarity_exprs());
    }
    let pairs = pair_exprs(&spec);
    BranchPattern::enumerate(&part.beta)?
        .into_iter()
        .map(|pattern| {
            let mut eq = common_eq.clone();
            let mut ineq = common_ineq.clone();
            for (i, (v, phi)) in pairs.iter().enumerate() {
                let function_side = part.alpha.contains(&i) || pattern.equation_side.contains(&i);
                if function_side {
                    eq.push(phi.clone());
                    ineq.push(Expr::negation(v.clone()));
                } else {
                    eq.push(v.clone());
                    ineq.push(Expr::negation(phi.clone()));
                }
            }
            BranchNlp {
                pattern,
                variable_names: spec.variable_names(),
                objective: spec.objective.clone(),
                equalities: eq,
                inequalities: ineq,
                point: ev.point.clone(),
                active_set_at_reference: Vec::new(),
                zero_tol: ev.zero_tol,
            }
            .finish()
        })
        .collect()
}

/// `∇f + Σ μ_e ∇h_e + Σ π_i ∇g_i = 0` with `π ≥ 0`, zero off the active set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchMultiplier {
    pub mu: Vec<f64>,
    pub pi: Vec<f64>,
}

struct BranchJets {
    f: SecondOrderJet,
    h: Vec<SecondOrderJet>,
    g: Vec<SecondOrderJet>,
}

fn jets(b: &BranchNlp) -> Result<BranchJets> {
    let all = |es: &[Expr]| es.iter().map(|e| eval_jet(e, &b.point)).collect::<Result<Vec<_>>>();
    Ok(BranchJets {
        f: eval_jet(&b.objective, &b.point)?,
        h: all(&b.equalities)?,
        g: all(&b.inequalities)?,
    })
}

fn stationarity_tol(j: &BranchJets) -> f64 {
    tol::STATIONARITY_TOL * (1.0 + linalg::norm_inf(&j.f.gradient))
}

fn residual(b: &BranchNlp, j: &BranchJets, m: &BranchMultiplier) -> Vec<f64> {
    let mut r = j.f.gradient.clone();
    for (mu, h) in m.mu.iter().zip(&j.h) {
        r.iter_mut().zip(&h.gradient).for_each(|(a, g)| *a += mu * g);
    }
    for &i in &b.active_set_at_reference {
        r.iter_mut().zip(&j.g[i].gradient).for_each(|(a, g)| *a += m.pi[i] * g);
    }
    r
}

fn verify(b: &BranchNlp, j: &BranchJets, m: &BranchMultiplier) -> Result<()> {
    if m.mu.len() != b.equalities.len() || m.pi.len() != b.inequalities.len() {
        return Err(Error::Multiplier("multiplier length does not match the branch".into()));
    }
    let tol = stationarity_tol(j);
    if let Some(i) =
        (0..m.pi.len()).find(|&i| m.pi[i] < -tol || (!b.active_set_at_reference.contains(&i) && m.pi[i].abs() > tol))
    {
        return Err(Error::Multiplier(format!(
            "sign condition fails for inequality {}",
            i + 1
        )));
    }
    let r = linalg::norm_inf(&residual(b, j, m));
    if r > tol {
        return Err(Error::Multiplier(format!("stationarity residual {r:e}")));
    }
    Ok(())
}

/// Multiplier LP over `(μ, π_active)`: stationarity rows with `π ≥ 0`.
fn multiplier_lp(b: &BranchNlp, j: &BranchJets) -> LinearProgram {
    let act = &b.active_set_at_reference;
    let (ne, na) = (j.h.len(), act.len());
    let mut lp = LinearProgram::free_vars(ne + na);
    for k in 0..na {
        lp.free[ne + k] = false;
    }
    for r in 0..b.dim() {
        let mut row: Vec<f64> = j.h.iter().map(|h| h.gradient[r]).collect();
        row.extend(act.iter().map(|&i| j.g[i].gradient[r]));
        lp.push(row, Relation::Eq, -j.f.gradient[r]);
    }
    lp
}

fn unpack(b: &BranchNlp, ne: usize, x: &[f64]) -> BranchMultiplier {
    let mut pi = vec![0.0; b.inequalities.len()];
    for (k, &i) in b.active_set_at_reference.iter().enumerate() {
        pi[i] = x[ne + k].max(0.0) + 0.0;
    }
    BranchMultiplier {
        mu: x[..ne].iter().map(|v| v + 0.0).collect(),
        pi,
    }
}

/// Least squares first, then an LP when the signs are wrong. `None` when the
/// reference point is not stationary on the branch.
pub fn branch_multiplier(b: &BranchNlp) -> Result<Option<(BranchMultiplier, bool)>> {
    let j = jets(b)?;
    let act = &b.active_set_at_reference;
    let ne = j.h.len();
    let cols = ne + act.len();
    let a = DenseMatrix::from_fn(b.dim(), cols, |r, c| {
        if c < ne {
            j.h[c].gradient[r]
        } else {
            j.g[act[c - ne]].gradient[r]
        }
    });
    let unique = linalg::rank(&a) == cols;
    let rhs: Vec<f64> = j.f.gradient.iter().map(|v| -v).collect();
    if cols > 0 {
        let x = linalg::least_squares(&a, &rhs)?;
        let m = unpack(b, ne, &x);
        let signs_ok = x[ne..].iter().all(|p| *p >= -stationarity_tol(&j));
        if signs_ok && verify(b, &j, &m).is_ok() {
            return Ok(Some((m, unique)));
        }
    } else if linalg::norm_inf(&j.f.gradient) <= stationarity_tol(&j) {
        return Ok(Some((unpack(b, 0, &[]), true)));
    }
    match multiplier_lp(b, &j).solve()? {
        LpOutcome::Optimal { x, .. } => {
            let m = unpack(b, ne, &x);
            verify(b, &j, &m)?;
            Ok(Some((m, unique)))
        }
        _ => Ok(None),
    }
}

fn lagrangian_hessian(j: &BranchJets, m: &BranchMultiplier) -> DenseMatrix {
    let d = j.f.dim();
    let mut h = j.f.hessian.to_dense();
    let terms = m.mu.iter().zip(&j.h).chain(m.pi.iter().zip(&j.g));
    for (w, jet) in terms {
        if *w != 0.0 {
            for r in 0..d {
                for c in 0..d {
                    h.set(r, c, h.get(r, c) + w * jet.hessian.get(r, c));
                }
            }
        }
    }
    h
}

fn linearized_cone(b: &BranchNlp, j: &BranchJets) -> PolyhedralCone {
    let mut c = PolyhedralCone::whole(b.dim());
    for h in &j.h {
        c.push_equality(h.gradient.clone());
    }
    for &i in &b.active_set_at_reference {
        c.push_inequality(j.g[i].gradient.iter().map(|v| -v).collect());
    }
    c
}

/// Branch critical cone: linearized active constraints and `∇fᵀd = 0`.
pub fn branch_critical_cone(b: &BranchNlp) -> Result<PolyhedralCone> {
    let j = jets(b)?;
    let mut c = linearized_cone(b, &j);
    if j.f.gradient.iter().any(|v| *v != 0.0) {
        c.push_equality(j.f.gradient.clone());
    }
    Ok(c)
}

/// MFCQ: independent equality gradients and a direction strictly
/// decreasing every active inequality.
pub fn mfcq_holds(b: &BranchNlp) -> Result<bool> {
    let j = jets(b)?;
    let ne = j.h.len();
    if ne > 0 {
        let a = DenseMatrix::from_fn(ne, b.dim(), |r, c| j.h[r].gradient[c]);
        if linalg::rank(&a) < ne {
            return Ok(false);
        }
    }
    let mut lp = LinearProgram::free_vars(b.dim());
    for h in &j.h {
        lp.push(h.gradient.clone(), Relation::Eq, 0.0);
    }
    for &i in &b.active_set_at_reference {
        lp.push(j.g[i].gradient.clone(), Relation::Le, -1.0);
    }
    crate::lp::feasible(&lp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCheck {
    pub mask: u32,
    pub multiplier: Option<BranchMultiplier>,
    pub multiplier_unique: bool,
    pub mfcq: bool,
    pub copositivity: Option<CopositivityVerdict>,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

/// Strict copositivity of the branch Lagrangian Hessian on the branch
/// critical cone for the given multiplier. A failing direction is rechecked
/// against the largest value over all multipliers.
pub fn classical_second_order_check(b: &BranchNlp, mult: &BranchMultiplier) -> Result<(Verdict, CopositivityVerdict)> {
    let j = jets(b)?;
    verify(b, &j, mult)?;
    let h = lagrangian_hessian(&j, mult);
    let cone = branch_critical_cone(b)?;
    let cop = copositivity_test(&h, &cone, true)?;
    if cop.holds {
        return Ok((Verdict::Holds, cop));
    }
    let d = cop.witness.clone().unwrap_or_default();
    let act = &b.active_set_at_reference;
    let mut obj: Vec<f64> = j.h.iter().map(|h| -h.hessian.quadratic_form(&d)).collect();
    obj.extend(act.iter().map(|&i| -j.g[i].hessian.quadratic_form(&d)));
    let base = j.f.hessian.quadratic_form(&d);
    let lp = multiplier_lp(b, &j).with_objective(obj);
    let verdict = match lp.solve()? {
        LpOutcome::Optimal { value, .. } => {
            let best = base - value;
            if best <= cop.tol {
                Verdict::Fails {
                    witness: d,
                    branch: Some(b.pattern.mask),
                    detail: format!("max over multipliers of the curvature is {best:e}"),
                }
            } else {
                Verdict::unverifiable(format!(
                    "the given multiplier fails but another multiplier gives curvature {best:e} at the witness"
                ))
            }
        }
        LpOutcome::Unbounded => Verdict::unverifiable("multiplier set is unbounded along the witness"),
        LpOutcome::Infeasible => Verdict::unverifiable("multiplier set became empty"),
    };
    Ok((verdict, cop))
}

/// Multiplier, MFCQ and second-order check for one piece.
pub fn check_branch(b: &BranchNlp) -> Result<BranchCheck> {
    let mfcq = mfcq_holds(b)?;
    let mut out = BranchCheck {
        mask: b.pattern.mask,
        multiplier: None,
        multiplier_unique: false,
        mfcq,
        copositivity: None,
        verdict: Verdict::Holds,
        warnings: Vec::new(),
    };
    match branch_multiplier(b)? {
        Some((m, unique)) => {
            if !unique {
                out.warnings.push(format!(
                    "branch {:#b}: multiplier not unique; checked one verifying multiplier",
                    b.pattern.mask
                ));
            }
            let (v, cop) = classical_second_order_check(b, &m)?;
            out.verdict = v;
            out.copositivity = Some(cop);
            out.multiplier = Some(m);
            out.multiplier_unique = unique;
        }
        None => {
            let j = jets(b)?;
            let mut lp = LinearProgram::free_vars(b.dim()).with_objective(j.f.gradient.clone());
            let c = linearized_cone(b, &j);
            for a in &c.equalities {
                lp.push(a.clone(), Relation::Eq, 0.0);
            }
            for a in &c.inequalities {
                lp.push(a.clone(), Relation::Ge, 0.0);
            }
            lp.push_box(1.0);
            out.verdict = match lp.solve()? {
                LpOutcome::Optimal { x, value } if value < -stationarity_tol(&j) => Verdict::Fails {
                    witness: x,
                    branch: Some(b.pattern.mask),
                    detail: "reference point is not stationary on this branch".into(),
                },
                _ => Verdict::unverifiable("no multiplier found although no descent direction exists"),
            };
        }
    }
    if !mfcq {
        match out.verdict {
            Verdict::Holds => out.warnings.push(format!(
                "branch {:#b}: MFCQ fails at the reference point",
                b.pattern.mask
            )),
            Verdict::Fails { .. } => {
                out.verdict = Verdict::unverifiable(format!(
                    "branch {:#b} fails the test but MFCQ does not hold there",
                    b.pattern.mask
                ))
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Holds iff every branch holds; the first failing branch is named.
pub fn piecewise_sufficient_aggregate(checks: &[BranchCheck]) -> Verdict {
    Verdict::all(checks.iter().map(|c| &c.verdict))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseResult {
    pub branches: Vec<BranchCheck>,
    pub aggregate: Verdict,
}

pub fn piecewise_analysis(spec: &ProblemSpec, ev: &PointEvaluation, part: &IndexPartition) -> Result<PiecewiseResult> {
    let branches = enumerate_branches(spec, ev, part)?
        .iter()
        .map(check_branch)
        .collect::<Result<Vec<_>>>()?;
    let aggregate = piecewise_sufficient_aggregate(&branches);
    Ok(PiecewiseResult { branches, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{classify_indices, tangent_cone_branches, upper_tangent_cone};
    use crate::problem::{evaluate_at_reference, load_problem};
    use proptest::prelude::*;

    const MICRO: &str = r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],
        "objective":"0.5*(x^2 - y^2)","F":["y^4 + y + x"],
        "upper_constraints":["x >= 0"],"point":{"x":0,"y":0}}"#;

    const Q2: &str = r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y1","y2"],
        "objective":"x^2 + y1 + y2","F":["y1","y2"],"point":{"x":0,"y1":0,"y2":0}}"#;

    fn setup(src: &str) -> (ProblemSpec, PointEvaluation, IndexPartition) {
        let s = load_problem(src).unwrap();
        let ev = evaluate_at_reference(&s, 1e-9).unwrap();
        let p = classify_indices(&ev).unwrap();
        (s, ev, p)
    }

    #[test]
    fn branch_counts() {
        let (s, ev, p) = setup(MICRO);
        assert_eq!(enumerate_branches(&s, &ev, &p).unwrap().len(), 2);
        let (s, ev, p) = setup(Q2);
        let b = enumerate_branches(&s, &ev, &p).unwrap();
        assert_eq!(b.iter().map(|b| b.pattern.mask).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let (s, ev, p) = setup(
            r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],
                "objective":"x^2","F":["y - x - 1"],"point":{"x":0,"y":1}}"#,
        );
        assert!(p.beta.is_empty());
        assert_eq!(enumerate_branches(&s, &ev, &p).unwrap().len(), 1);
    }

    #[test]
    fn micro_branches_hold() {
        let (s, ev, p) = setup(MICRO);
        let r = piecewise_analysis(&s, &ev, &p).unwrap();
        // mask 0: y = 0, F ≥ 0.
        let c0 = &r.branches[0];
        assert_eq!(c0.verdict, Verdict::Holds);
        assert!(c0.mfcq);
        assert_eq!(c0.copositivity.as_ref().unwrap().min_value, Some(1.0));
        // mask 1: F = 0, y ≥ 0 leaves only the zero direction.
        let c1 = &r.branches[1];
        assert_eq!(c1.verdict, Verdict::Holds);
        assert!(!c1.mfcq);
        assert_eq!(c1.copositivity.as_ref().unwrap().min_value, None);
        assert_eq!(r.aggregate, Verdict::Holds);
    }

    #[test]
    fn zero_objective_fails() {
        let (s, ev, p) = setup(
            r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],
                "objective":"0","F":["y + x"],"point":{"x":0,"y":0}}"#,
        );
        let r = piecewise_analysis(&s, &ev, &p).unwrap();
        assert!(r.branches.iter().all(|c| c.verdict.is_failure()));
        match &r.aggregate {
            Verdict::Fails { branch, witness, .. } => {
                assert_eq!(*branch, Some(0));
                assert!(witness[0].abs() > 0.5);
            }
            v => panic!("{v}"),
        }
    }

    #[test]
    fn one_failing_branch_is_named() {
        // Branch y = 0 is fine; branch F = 0 (y = x) has curvature −x² + ... along x = y.
        let (s, ev, p) = setup(
            r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],
                "objective":"x^2 - 3*y^2","F":["y - x"],"point":{"x":0,"y":0}}"#,
        );
        let r = piecewise_analysis(&s, &ev, &p).unwrap();
        assert_eq!(r.branches[0].verdict, Verdict::Holds);
        assert!(r.branches[1].verdict.is_failure());
        assert!(matches!(r.aggregate, Verdict::Fails { branch: Some(1), .. }));
    }

    #[test]
    fn nonstationary_branch_gets_descent_witness() {
        let (s, ev, p) = setup(
            r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],
                "objective":"-x + y","F":["y + x"],"point":{"x":0,"y":0}}"#,
        );
        let r = piecewise_analysis(&s, &ev, &p).unwrap();
        match &r.branches[0].verdict {
            Verdict::Fails { witness, .. } => assert!(witness[0] > 0.0),
            v => panic!("{v}"),
        }
    }

    #[test]
    fn multiplier_signs_and_max_over_multipliers() {
        // min x² s.t. the single branch; stationary with π = 0.
        let (s, ev, p) = setup(Q2);
        let bs = enumerate_branches(&s, &ev, &p).unwrap();
        let (m, _) = branch_multiplier(&bs[0]).unwrap().unwrap();
        assert!(m.pi.iter().all(|v| *v >= 0.0));
        let bad = BranchMultiplier {
            mu: m.mu.clone(),
            pi: m.pi.iter().map(|v| v - 1.0).collect(),
        };
        assert!(classical_second_order_check(&bs[0], &bad).is_err());
    }

    #[test]
    fn export_round_trip() {
        let (s, ev, p) = setup(MICRO);
        for b in enumerate_branches(&s, &ev, &p).unwrap() {
            let file = b.to_problem_file();
            let json = serde_json::to_string(&file).unwrap();
            let back: ProblemFile = serde_json::from_str(&json).unwrap();
            assert!(load_problem(&json).is_err());
            let b2 = BranchNlp::from_problem_file(&back, b.pattern.clone()).unwrap();
            assert_eq!(b2.active_set_at_reference, b.active_set_at_reference);
            for t in [[0.3, -0.2], [-1.0, 0.7]] {
                for (e1, e2) in b.equalities.iter().zip(&b2.equalities) {
                    assert_eq!(e1.eval(&t).unwrap(), e2.eval(&t).unwrap());
                }
                assert_eq!(b.objective.eval(&t).unwrap(), b2.objective.eval(&t).unwrap());
            }
        }
    }

    #[test]
    fn kkt_branches() {
        let (s, ev, p) = setup(
            r#"{"kind":"kkt","upper_vars":["x"],"lower_vars":["y"],
                "objective":"(x+1)^2 + y^2","F":["y - x"],"g":["-y"],
                "point":{"x":-1,"y":0},"multiplier_point":{"lambda1":1}}"#,
        );
        let bs = enumerate_branches(&s, &ev, &p).unwrap();
        assert_eq!(bs.len(), 1);
        assert_eq!(bs[0].dim(), 3);
        assert_eq!(check_branch(&bs[0]).unwrap().verdict, Verdict::Holds);
    }

    #[test]
    fn branch_critical_cones_sit_in_tangent_branches() {
        let (s, ev, p) = setup(MICRO);
        let t = tangent_cone_branches(&ev, &p, &upper_tangent_cone(&ev)).unwrap();
        for (b, tb) in enumerate_branches(&s, &ev, &p).unwrap().iter().zip(&t.branches) {
            let c = branch_critical_cone(b).unwrap();
            for k in 0..100 {
                let th = std::f64::consts::TAU * k as f64 / 100.0;
                let u = [th.cos(), th.sin()];
                if c.contains(&u, 1e-9) {
                    assert!(tb.cone.contains(&u, 1e-9));
                }
            }
        }
    }

    fn ncp_member(x: f64, y: f64, tol: f64) -> bool {
        let f = y.powi(4) + y + x;
        x >= -tol && y >= -tol && f >= -tol && y.min(f) <= tol
    }

    fn branch_member(b: &BranchNlp, z: &[f64], tol: f64) -> bool {
        b.equalities.iter().all(|h| h.eval(z).unwrap().abs() <= tol)
            && b.inequalities.iter().all(|g| g.eval(z).unwrap() <= tol)
    }

    proptest! {
        #[test]
        fn union_of_branches_is_ncp_set(r in 0.0f64..0.1, th in 0.0f64..std::f64::consts::TAU, on in 0usize..3) {
            let (s, ev, p) = setup(MICRO);
            let bs = enumerate_branches(&s, &ev, &p).unwrap();
            let x = r * th.cos();
            // Points on y = 0, on F = 0, or generic.
            let y = match on {
                0 => 0.0,
                1 => {
                    // y⁴ + y = −x has a root near −x for small |x|.
                    let mut y = -x;
                    for _ in 0..50 { y -= (y.powi(4) + y + x) / (4.0 * y.powi(3) + 1.0); }
                    y
                }
                _ => r * th.sin(),
            };
            let tol = 1e-9;
            let z = [x, y];
            prop_assert_eq!(ncp_member(x, y, tol), bs.iter().any(|b| branch_member(b, &z, tol)));
        }
    }
}
