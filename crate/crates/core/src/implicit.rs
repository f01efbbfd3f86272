//! Strong regularity, directional derivatives of the lower-level solution
//! map, and the implicit-programming second-order test (NCP kind).

use serde::{Deserialize, Serialize};

use crate::cone::IndexPartition;
use crate::error::{Error, Result};
use crate::expr::eval_jet;
use crate::lcp::{solve_mixed_lcp, LcpSolutionSet, MixedLcp, RowKind};
use crate::linalg::{self, DenseMatrix, PMatrixCertificate};
use crate::problem::{sign, PointEvaluation, ProblemKind, ProblemSpec, Sign};

fn require_ncp(kind: ProblemKind) -> Result<()> {
    if kind != ProblemKind::Ncp {
        return Err(Error::WrongKind {
            expected: "ncp",
            actual: kind.to_string(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub alpha_block_nonsingular: bool,
    /// `∇_βF_β − ∇_αF_β (∇_αF_α)⁻¹ ∇_βF_α`, absent when the α-block is singular.
    pub schur: Option<DenseMatrix>,
    pub schur_is_p: bool,
    pub p_certificate: Option<PMatrixCertificate>,
    pub src_holds: bool,
}

pub fn src_check(ev: &PointEvaluation, part: &IndexPartition) -> Result<RegularityReport> {
    require_ncp(ev.kind)?;
    let jy = ev.jacobian_y();
    let alpha_block = jy.select(&part.alpha, &part.alpha);
    let alpha_ok = part.alpha.is_empty() || linalg::solve_linear(&alpha_block, &vec![0.0; part.alpha.len()])?.is_some();
    let schur = if alpha_ok {
        linalg::schur_complement(&jy, &part.alpha, &part.beta)?
    } else {
        None
    };
    let cert = match &schur {
        Some(s) if s.rows() > 0 => Some(linalg::is_p_matrix(s)?),
        _ => None,
    };
    let schur_is_p = match (&schur, &cert) {
        (Some(_), Some(c)) => c.is_p_matrix,
        (Some(_), None) => true,
        (None, _) => false,
    };
    Ok(RegularityReport {
        alpha_block_nonsingular: alpha_ok,
        schur,
        schur_is_p,
        p_certificate: cert,
        src_holds: alpha_ok && schur_is_p,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionalIndexSets {
    pub d_beta_a: Vec<usize>,
    pub d_beta_b: Vec<usize>,
    pub d_beta_g: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrder {
    pub y_prime: Vec<f64>,
    pub index_sets: DirectionalIndexSets,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalDerivatives {
    pub dx: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub index_sets: DirectionalIndexSets,
    pub y_second: Option<Vec<f64>>,
    pub reduced_quadratic: Option<f64>,
    pub warnings: Vec<String>,
}

impl DirectionalDerivatives {
    pub fn dz(&self) -> Vec<f64> {
        let mut dz = self.dx.clone();
        dz.extend_from_slice(&self.y_prime);
        dz
    }
}

fn unique_solution(set: LcpSolutionSet) -> Result<Vec<f64>> {
    if set.is_unique() {
        return Ok(set.solutions.into_iter().next().expect("unique"));
    }
    Err(Error::Multiplicity {
        count: set.solutions.len(),
        continuum: set.has_continuum(),
        solutions: set.solutions,
    })
}

fn borderline(what: &str, i: usize, v: f64, tol: f64, out: &mut Vec<String>) {
    let a = v.abs();
    if a > tol && a < 10.0 * tol {
        out.push(format!(
            "{what} for index {} is {v:e}, within a factor 10 of the zero tolerance",
            i + 1
        ));
    }
}

/// Solve the first mixed LCP for `y′(x̄; dx)` and split β directionally.
pub fn first_directional_derivative(ev: &PointEvaluation, part: &IndexPartition, dx: &[f64]) -> Result<FirstOrder> {
    require_ncp(ev.kind)?;
    if dx.len() != ev.n {
        return Err(Error::Dimension(format!(
            "dx has length {}, expected {}",
            dx.len(),
            ev.n
        )));
    }
    let m = ev.m;
    let jy = ev.jacobian_y();
    let q = ev.jacobian_x().mul_vec(dx);
    let mut kinds = vec![RowKind::Complementary; m];
    part.alpha.iter().for_each(|&i| kinds[i] = RowKind::Equation);
    part.gamma.iter().for_each(|&i| kinds[i] = RowKind::FixedZero);
    let lcp = MixedLcp::new(jy, q, kinds)?;
    let y_prime = unique_solution(solve_mixed_lcp(&lcp)?)?;
    let slope = lcp.affine(&y_prime);
    let tol = ev.zero_tol;
    let mut sets = DirectionalIndexSets {
        d_beta_a: Vec::new(),
        d_beta_b: Vec::new(),
        d_beta_g: Vec::new(),
    };
    let mut warnings = Vec::new();
    for &i in &part.beta {
        borderline("∇F·dz", i, slope[i], tol, &mut warnings);
        borderline("dy", i, y_prime[i], tol, &mut warnings);
        match (sign(slope[i], tol), sign(y_prime[i], tol)) {
            (Sign::Zero, Sign::Positive) => sets.d_beta_a.push(i),
            (Sign::Zero, Sign::Zero) => sets.d_beta_b.push(i),
            (Sign::Positive, Sign::Zero) => sets.d_beta_g.push(i),
            (s, d) => {
                return Err(Error::Infeasible(format!(
                    "directional pair {} has signs {s:?}/{d:?}",
                    i + 1
                )))
            }
        }
    }
    Ok(FirstOrder {
        y_prime,
        index_sets: sets,
        warnings,
    })
}

/// Curvature constants `c_i = dzᵀ∇²F_i dz`.
fn curvature(ev: &PointEvaluation, dz: &[f64]) -> Vec<f64> {
    ev.f_jets.iter().map(|j| j.hessian.quadratic_form(dz)).collect()
}

/// Solve the second mixed LCP for `y⁽²⁾(x̄; dx)`.
///
/// Rows: `α ∪ dβ_a` equations `∇_yF_i v + c_i = 0`; `γ ∪ dβ_g` pinned to
/// zero; `dβ_b` complementary with the same affine part. This system is a
/// reconstruction from second-order Taylor feasibility of each branch.
pub fn second_directional_derivative(
    ev: &PointEvaluation,
    part: &IndexPartition,
    dx: &[f64],
    first: &FirstOrder,
) -> Result<Vec<f64>> {
    require_ncp(ev.kind)?;
    let mut dz = dx.to_vec();
    dz.extend_from_slice(&first.y_prime);
    let c = curvature(ev, &dz);
    let mut kinds = vec![RowKind::FixedZero; ev.m];
    let s = &first.index_sets;
    part.alpha
        .iter()
        .chain(&s.d_beta_a)
        .for_each(|&i| kinds[i] = RowKind::Equation);
    s.d_beta_b.iter().for_each(|&i| kinds[i] = RowKind::Complementary);
    let lcp = MixedLcp::new(ev.jacobian_y(), c, kinds)?;
    unique_solution(solve_mixed_lcp(&lcp)?)
}

/// Both derivatives plus the reduced quadratic along `dx`.
pub fn directional_derivatives(
    ev: &PointEvaluation,
    part: &IndexPartition,
    dx: &[f64],
) -> Result<DirectionalDerivatives> {
    let first = first_directional_derivative(ev, part, dx)?;
    let y_second = second_directional_derivative(ev, part, dx, &first)?;
    let mut dd = DirectionalDerivatives {
        dx: dx.to_vec(),
        y_prime: first.y_prime,
        index_sets: first.index_sets,
        y_second: Some(y_second),
        reduced_quadratic: None,
        warnings: first.warnings,
    };
    dd.reduced_quadratic = Some(reduced_quadratic(ev, &dd)?);
    Ok(dd)
}

fn reduced_quadratic(ev: &PointEvaluation, dd: &DirectionalDerivatives) -> Result<f64> {
    let y2 = dd
        .y_second
        .as_ref()
        .ok_or_else(|| Error::Dimension("second directional derivative undefined".into()))?;
    let dz = dd.dz();
    let grad_y = &ev.f_jet.gradient[ev.n..ev.n + ev.m];
    Ok(ev.f_jet.hessian.quadratic_form(&dz) + linalg::dot(grad_y, y2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedTest {
    pub value: f64,
    pub tol: f64,
    pub necessary_holds: bool,
    /// `value > tol`, or the direction is zero.
    pub sufficient_holds: bool,
    pub zero_direction: bool,
}

pub fn reduced_second_order_test(ev: &PointEvaluation, dd: &DirectionalDerivatives) -> Result<ReducedTest> {
    let value = reduced_quadratic(ev, dd)?;
    let tol = ev.zero_tol;
    let zero_direction = dd.dz().iter().all(|v| *v == 0.0);
    Ok(ReducedTest {
        value,
        tol,
        necessary_holds: value >= -tol,
        sufficient_holds: zero_direction || value > tol,
        zero_direction,
    })
}

// ---------------------------------------------------------------------------
// Finite-difference probe

pub const PROBE_MAX_LOWER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub tau: f64,
    pub y: Option<Vec<f64>>,
    /// `(y(τ) − ȳ)/τ`
    pub first_order: Option<Vec<f64>>,
    /// `2(y(τ) − ȳ − τy′)/τ²`
    pub second_order: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    pub dx: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub y_second: Option<Vec<f64>>,
    pub rows: Vec<ProbeRow>,
}

/// Solve the lower NCP at `x̄ + τ·dx` and report empirical expansions.
pub fn finite_difference_probe(spec: &ProblemSpec, dx: &[f64], taus: &[f64]) -> Result<ProbeTable> {
    require_ncp(spec.kind)?;
    if spec.m() > PROBE_MAX_LOWER {
        return Err(Error::CapExceeded {
            what: "probe lower dimension",
            actual: spec.m(),
            cap: PROBE_MAX_LOWER,
        });
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::Dimension(format!("probe step {t} is not positive")));
    }
    let ev = crate::problem::evaluate_at_reference(spec, spec.zero_tol)?;
    let part = crate::cone::classify_indices(&ev)?;
    let first = first_directional_derivative(&ev, &part, dx)?;
    let y_second = second_directional_derivative(&ev, &part, dx, &first).ok();
    let (n, m) = (spec.n(), spec.m());
    let y_bar = spec.point[n..].to_vec();
    let mut ordered = taus.to_vec();
    ordered.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let rows = ordered
        .into_iter()
        .map(|tau| {
            let x: Vec<f64> = (0..n).map(|j| spec.point[j] + tau * dx[j]).collect();
            match solve_lower_ncp(spec, &x, &y_bar) {
                Ok(y) => {
                    let first_order = (0..m).map(|i| (y[i] - y_bar[i]) / tau).collect();
                    let second_order = (0..m)
                        .map(|i| 2.0 * (y[i] - y_bar[i] - tau * first.y_prime[i]) / (tau * tau))
                        .collect();
                    ProbeRow {
                        tau,
                        y: Some(y),
                        first_order: Some(first_order),
                        second_order: Some(second_order),
                        error: None,
                    }
                }
                Err(e) => ProbeRow {
                    tau,
                    y: None,
                    first_order: None,
                    second_order: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(ProbeTable {
        dx: dx.to_vec(),
        y_prime: first.y_prime,
        y_second,
        rows,
    })
}

/// All sign-feasible pattern roots of the lower NCP at fixed `x`; returns
/// the one nearest `y_bar`.
fn solve_lower_ncp(spec: &ProblemSpec, x: &[f64], y_bar: &[f64]) -> Result<Vec<f64>> {
    let m = spec.m();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let free: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let starts = [y_bar.to_vec(), vec![0.0; m]];
        for start in starts {
            let Some(y) = newton(spec, x, &free, start)? else {
                continue;
            };
            let z: Vec<f64> = x.iter().chain(&y).copied().collect();
            let f: Vec<f64> = spec.lower_map.iter().map(|e| e.eval(&z)).collect::<Result<_>>()?;
            let scale = 1e-10 * (1.0 + linalg::norm_inf(&y));
            if y.iter().all(|v| *v >= -scale) && f.iter().all(|v| *v >= -scale) {
                let dist = linalg::norm_inf(&y.iter().zip(y_bar).map(|(a, b)| a - b).collect::<Vec<_>>());
                if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                    best = Some((dist, y));
                }
                break;
            }
        }
    }
    best.map(|(_, y)| y)
        .ok_or_else(|| Error::NonlinearSolve("no complementarity pattern admits a root".into()))
}

/// Damped Newton on `F_i(x, y) = 0 (i ∈ free)` with `y_j = 0` elsewhere.
fn newton(spec: &ProblemSpec, x: &[f64], free: &[usize], start: Vec<f64>) -> Result<Option<Vec<f64>>> {
    let (n, m) = (spec.n(), spec.m());
    let mut y = vec![0.0; m];
    free.iter().for_each(|&i| y[i] = start[i]);
    if free.is_empty() {
        return Ok(Some(y));
    }
    let residual = |y: &[f64]| -> Result<Vec<f64>> {
        let z: Vec<f64> = x.iter().chain(y).copied().collect();
        free.iter().map(|&i| spec.lower_map[i].eval(&z)).collect()
    };
    let mut r = residual(&y)?;
    for _ in 0..100 {
        let norm = linalg::norm_inf(&r);
        if norm <= 1e-14 {
            return Ok(Some(y));
        }
        let z: Vec<f64> = x.iter().chain(&y).copied().collect();
        let jac_rows: Vec<Vec<f64>> = free
            .iter()
            .map(|&i| {
                let g = eval_jet(&spec.lower_map[i], &z)?.gradient;
                Ok(free.iter().map(|&j| g[n + j]).collect())
            })
            .collect::<Result<_>>()?;
        let jac = DenseMatrix::from_rows(&jac_rows)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let Some(step) = linalg::solve_linear(&jac, &neg)? else {
            return Ok(None);
        };
        let mut t = 1.0;
        loop {
            let mut trial = y.clone();
            free.iter().zip(&step).for_each(|(&i, s)| trial[i] += t * s);
            let rt = residual(&trial)?;
            if linalg::norm_inf(&rt) < norm || t < 1e-6 {
                y = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    Ok((linalg::norm_inf(&r) <= 1e-10).then_some(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::classify_indices;
    use crate::problem::{evaluate_at_reference, load_problem};

    fn ncp(upper: &[&str], lower: &[&str], f: &str, map: &[&str], point: &str) -> ProblemSpec {
        let q = |v: &[&str]| v.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>().join(",");
        load_problem(&format!(
            r#"{{"kind":"ncp","upper_vars":[{}],"lower_vars":[{}],"objective":"{f}",
                "F":[{}],"point":{point}}}"#,
            q(upper),
            q(lower),
            q(map)
        ))
        .unwrap()
    }

    fn q3() -> ProblemSpec {
        ncp(&["x"], &["y"], "0.5*(x^2 - y^2)", &["x + y"], r#"{"x":0,"y":0}"#)
    }

    fn setup(s: &ProblemSpec) -> (PointEvaluation, IndexPartition) {
        let ev = evaluate_at_reference(s, 1e-9).unwrap();
        let part = classify_indices(&ev).unwrap();
        (ev, part)
    }

    #[test]
    fn src_examples() {
        let s = ncp(
            &["x1", "x2"],
            &["y1", "y2"],
            "x1",
            &["x1^2 + y1", "x2^2 + y2"],
            r#"{"x1":0,"x2":0,"y1":0,"y2":0}"#,
        );
        let (ev, part) = setup(&s);
        let r = src_check(&ev, &part).unwrap();
        assert!(r.src_holds);
        assert_eq!(r.schur, Some(DenseMatrix::identity(2)));

        let s = ncp(&["x"], &["y"], "x", &["x - y"], r#"{"x":0,"y":0}"#);
        let (ev, part) = setup(&s);
        let r = src_check(&ev, &part).unwrap();
        assert!(!r.schur_is_p && !r.src_holds);

        // α = {1}, β = {2}, ∇_yF = [[2,1],[1,1]]
        let s = ncp(
            &["x"],
            &["y1", "y2"],
            "x",
            &["2*y1 + y2 - 2", "y1 + y2 - 1"],
            r#"{"x":0,"y1":1,"y2":0}"#,
        );
        let (ev, part) = setup(&s);
        assert_eq!((part.alpha.clone(), part.beta.clone()), (vec![0], vec![1]));
        let r = src_check(&ev, &part).unwrap();
        assert!(r.alpha_block_nonsingular && r.src_holds);
        assert!((r.schur.unwrap().get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn q3_directions() {
        let (ev, part) = setup(&q3());
        let dd = directional_derivatives(&ev, &part, &[1.0]).unwrap();
        assert_eq!(dd.y_prime, vec![0.0]);
        assert_eq!(dd.index_sets.d_beta_g, vec![0]);
        assert_eq!(dd.y_second, Some(vec![0.0]));
        let t = reduced_second_order_test(&ev, &dd).unwrap();
        assert_eq!(t.value, 1.0);

        let dd = directional_derivatives(&ev, &part, &[-1.0]).unwrap();
        assert_eq!(dd.y_prime, vec![1.0]);
        assert_eq!(dd.index_sets.d_beta_a, vec![0]);

        let dd = directional_derivatives(&ev, &part, &[0.0]).unwrap();
        assert_eq!(dd.y_prime, vec![0.0]);
        assert_eq!(dd.index_sets.d_beta_b, vec![0]);
        let t = reduced_second_order_test(&ev, &dd).unwrap();
        assert!(t.necessary_holds && t.zero_direction && t.value == 0.0);
    }

    #[test]
    fn micro_second_derivative_vanishes() {
        let s = ncp(&["x"], &["y"], "0.5*(x^2 - y^2)", &["y^4 + y + x"], r#"{"x":0,"y":0}"#);
        let (ev, part) = setup(&s);
        let dd = directional_derivatives(&ev, &part, &[1.0]).unwrap();
        assert_eq!(dd.y_second, Some(vec![0.0]));
        assert_eq!(dd.reduced_quadratic, Some(1.0));
    }

    #[test]
    fn multiplicity_is_reported() {
        // ∇_yF = −1 on β: y′ is not unique for dx = −1... or infeasible for dx = 1.
        let s = ncp(&["x"], &["y"], "x", &["x - y"], r#"{"x":0,"y":0}"#);
        let (ev, part) = setup(&s);
        match first_directional_derivative(&ev, &part, &[1.0]) {
            Err(Error::Multiplicity { count, .. }) => assert_eq!(count, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classical_derivative_when_beta_empty() {
        // F = (2y1 + y2 - x - 2, y1 + 3y2 - 2x - 4) at a strictly complementary point with α = {1,2}.
        let s = ncp(
            &["x"],
            &["y1", "y2"],
            "x",
            &["2*y1 + y2 - x - 3", "y1 + 3*y2 - 2*x - 4"],
            r#"{"x":0,"y1":1,"y2":1}"#,
        );
        let (ev, part) = setup(&s);
        assert!(part.beta.is_empty());
        let first = first_directional_derivative(&ev, &part, &[1.0]).unwrap();
        let jy = ev.jacobian_y();
        let rhs: Vec<f64> = ev.jacobian_x().mul_vec(&[1.0]).iter().map(|v| -v).collect();
        let classical = linalg::solve_linear(&jy, &rhs).unwrap().unwrap();
        for (a, b) in first.y_prime.iter().zip(&classical) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn probe_matches_derivatives() {
        let s = q3();
        let t = finite_difference_probe(&s, &[-1.0], &[1e-3, 1e-2]).unwrap();
        assert_eq!(t.rows[0].tau, 1e-2);
        for r in &t.rows {
            assert!((r.first_order.as_ref().unwrap()[0] - 1.0).abs() < 1e-9);
            assert!(r.second_order.as_ref().unwrap()[0].abs() < 1e-4);
        }
        let t = finite_difference_probe(&s, &[1.0], &[1e-2]).unwrap();
        assert_eq!(t.rows[0].y, Some(vec![0.0]));

        // Curved map: F = y - x² at x̄ = 1, ȳ = 1, so y(x) = x².
        let s = ncp(&["x"], &["y"], "x", &["y - x^2"], r#"{"x":1,"y":1}"#);
        let t = finite_difference_probe(&s, &[1.0], &[1e-2, 1e-3]).unwrap();
        assert_eq!(t.y_second, Some(vec![2.0]));
        for r in &t.rows {
            assert!((r.second_order.as_ref().unwrap()[0] - 2.0).abs() < 1e-4);
        }
    }
}
