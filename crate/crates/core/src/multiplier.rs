//! Multiplier-form second-order tests for NCP constraints and the MPEC
//! Lagrangian machinery for KKT constraints.

use serde::{Deserialize, Serialize};

use crate::cone::{
    self, copositivity_test, generators, upper_tangent_cone, ConeUnion, CopositivityVerdict, IndexPartition,
    PolyhedralCone,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{self, DenseMatrix};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::problem::{PointEvaluation, ProblemKind, ProblemSpec, Sense};
use crate::tol;

/// Lagrangian Hessian over the direction space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianAssembly {
    pub hessian: DenseMatrix,
    /// Direction-space coordinates of `λ`, when present.
    pub multiplier_coords: Vec<usize>,
}

impl LagrangianAssembly {
    /// The `λλ` block.
    pub fn multiplier_block(&self) -> DenseMatrix {
        self.hessian.select(&self.multiplier_coords, &self.multiplier_coords)
    }
}

fn weighted_hessian(ev: &PointEvaluation, terms: &[(f64, &crate::expr::SecondOrderJet)]) -> DenseMatrix {
    let d = ev.dim();
    let mut h = ev.f_jet.hessian.to_dense();
    for (w, jet) in terms {
        if *w == 0.0 {
            continue;
        }
        for i in 0..d {
            for j in 0..d {
                h.set(i, j, h.get(i, j) + w * jet.hessian.get(i, j));
            }
        }
    }
    h
}

/// `∇²f − Σ_{α∪β} π_i ∇²F_i`; `pi` has one entry per lower variable and
/// entries on γ are ignored.
pub fn assemble_ncp_lagrangian_hessian(
    ev: &PointEvaluation,
    part: &IndexPartition,
    pi: &[f64],
) -> Result<LagrangianAssembly> {
    if ev.kind != ProblemKind::Ncp {
        return Err(Error::WrongKind {
            expected: "ncp",
            actual: ev.kind.to_string(),
        });
    }
    if pi.len() != ev.m {
        return Err(Error::Dimension(format!(
            "pi has length {}, expected {}",
            pi.len(),
            ev.m
        )));
    }
    let terms: Vec<(f64, &crate::expr::SecondOrderJet)> = part
        .alpha
        .iter()
        .chain(&part.beta)
        .map(|&i| (-pi[i], &ev.f_jets[i]))
        .collect();
    Ok(LagrangianAssembly {
        hessian: weighted_hessian(ev, &terms),
        multiplier_coords: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCopositivity {
    pub mask: u32,
    pub verdict: CopositivityVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierFormResult {
    pub strict: bool,
    pub restricted: bool,
    pub branches: Vec<BranchCopositivity>,
    pub holds: bool,
    /// First failing branch and its argmin direction.
    pub failing: Option<(u32, Vec<f64>)>,
    pub warnings: Vec<String>,
}

/// Branchwise copositivity of the NCP Lagrangian Hessian on `cone`.
///
/// With `restrict_strict_complementarity` each branch is intersected with
/// the closed region `dy_i + ∇F_iᵀdz ≥ 0` on β; directions on its boundary
/// are reported as warnings since the intended region is open.
pub fn multiplier_form_test(
    ev: &PointEvaluation,
    part: &IndexPartition,
    cone: &ConeUnion,
    assembly: &LagrangianAssembly,
    strict: bool,
    restrict_strict_complementarity: bool,
) -> Result<MultiplierFormResult> {
    let pairs = ev.pairs();
    let mut out = MultiplierFormResult {
        strict,
        restricted: restrict_strict_complementarity,
        branches: Vec::new(),
        holds: true,
        failing: None,
        warnings: Vec::new(),
    };
    for b in &cone.branches {
        let mut c = b.cone.clone();
        let mut region = Vec::new();
        if restrict_strict_complementarity {
            for &i in &part.beta {
                let mut a = pairs[i].function.gradient.clone();
                a[pairs[i].variable] += 1.0;
                c.push_inequality(a.clone());
                region.push((i, a));
            }
        }
        let verdict = copositivity_test(&assembly.hessian, &c, strict)?;
        if restrict_strict_complementarity {
            let gens = generators(&c)?;
            for (i, a) in &region {
                if gens
                    .directions()
                    .iter()
                    .any(|g| linalg::dot(a, g).abs() <= tol::CONE_FEAS_TOL)
                {
                    out.warnings.push(format!(
                        "branch {:#b}: directions with dy + ∇F·dz = 0 for index {} are included",
                        b.pattern.mask,
                        i + 1
                    ));
                }
            }
        }
        if !verdict.holds && out.holds {
            out.holds = false;
            out.failing = Some((b.pattern.mask, verdict.witness.clone().unwrap_or_default()));
        }
        out.branches.push(BranchCopositivity {
            mask: b.pattern.mask,
            verdict,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// KKT kind

/// Multipliers of the relaxed NLP at `w̄ = (x̄, ȳ, λ̄)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktMultiplier {
    /// One per upper row; zero on inactive inequalities.
    pub zeta: Vec<f64>,
    /// One per stationarity equation.
    pub pi: Vec<f64>,
    /// One per lower constraint `g_i`.
    pub eta: Vec<f64>,
    /// One per bound `λ_i ≥ 0` (linear in `w`, so absent from the Hessian).
    pub nu: Vec<f64>,
}

fn require_kkt(ev: &PointEvaluation) -> Result<()> {
    if ev.kind != ProblemKind::Kkt {
        return Err(Error::WrongKind {
            expected: "kkt",
            actual: ev.kind.to_string(),
        });
    }
    Ok(())
}

/// `∇²f − Σ π_j ∇²(F + ∇_ygᵀλ)_j + Σ η_i ∇²g_i` with the `λλ` block set to zero.
pub fn assemble_kkt_lagrangian_hessian(ev: &PointEvaluation, mult: &KktMultiplier) -> Result<LagrangianAssembly> {
    require_kkt(ev)?;
    if mult.pi.len() != ev.m || mult.eta.len() != ev.k {
        return Err(Error::Dimension("multiplier lengths do not match the problem".into()));
    }
    let mut terms: Vec<(f64, &crate::expr::SecondOrderJet)> = Vec::new();
    for (p, j) in mult.pi.iter().zip(&ev.stationarity_jets) {
        terms.push((-p, j));
    }
    for (e, j) in mult.eta.iter().zip(&ev.g_jets) {
        terms.push((*e, j));
    }
    let mut h = weighted_hessian(ev, &terms);
    let lam: Vec<usize> = (ev.n + ev.m..ev.dim()).collect();
    for &i in &lam {
        for &j in &lam {
            h.set(i, j, 0.0);
        }
    }
    Ok(LagrangianAssembly {
        hessian: h,
        multiplier_coords: lam,
    })
}

/// The scalar MPEC Lagrangian as an expression over `(x, y, λ)`.
pub fn kkt_lagrangian_expr(spec: &ProblemSpec, mult: &KktMultiplier) -> Result<Expr> {
    if spec.kind != ProblemKind::Kkt {
        return Err(Error::WrongKind {
            expected: "kkt",
            actual: spec.kind.to_string(),
        });
    }
    let mut acc = spec.objective.clone();
    for (z, row) in mult.zeta.iter().zip(&spec.upper) {
        acc = Expr::sum(
            acc,
            Expr::product(Expr::constant(*z), Expr::affine(&row.coeffs, row.constant)),
        );
    }
    for (p, l) in mult.pi.iter().zip(spec.stationarity_exprs()) {
        acc = Expr::difference(acc, Expr::product(Expr::constant(*p), l));
    }
    for (e, g) in mult.eta.iter().zip(&spec.lower_constraints) {
        acc = Expr::sum(acc, Expr::product(Expr::constant(*e), g.clone()));
    }
    Ok(acc)
}

/// Gradient of the relaxed-NLP Lagrangian at `w̄`.
pub fn kkt_stationarity_gradient(ev: &PointEvaluation, mult: &KktMultiplier) -> Vec<f64> {
    let d = ev.dim();
    let mut g = ev.f_jet.gradient.clone();
    for (z, (a, _, _)) in mult.zeta.iter().zip(ev.upper_rows()) {
        g.iter_mut().zip(&a).for_each(|(gi, ai)| *gi += z * ai);
    }
    for (p, j) in mult.pi.iter().zip(&ev.stationarity_jets) {
        g.iter_mut().zip(&j.gradient).for_each(|(gi, ji)| *gi -= p * ji);
    }
    for (e, j) in mult.eta.iter().zip(&ev.g_jets) {
        g.iter_mut().zip(&j.gradient).for_each(|(gi, ji)| *gi += e * ji);
    }
    for (i, nu) in mult.nu.iter().enumerate() {
        g[ev.n + ev.m + i] -= nu;
    }
    debug_assert_eq!(g.len(), d);
    g
}

/// Find relaxed-NLP multipliers with the sign pattern of each index class.
pub fn compute_kkt_multiplier(ev: &PointEvaluation, part: &IndexPartition) -> Result<KktMultiplier> {
    require_kkt(ev)?;
    let d = ev.dim();
    let rows = ev.upper_rows();
    let (nz, m, k) = (rows.len(), ev.m, ev.k);
    let nvar = nz + m + 2 * k;
    let mut lp = LinearProgram::free_vars(nvar);
    // Columns: ζ, π, η, ν.
    for r in 0..d {
        let mut coeffs = vec![0.0; nvar];
        for (c, (a, _, _)) in rows.iter().enumerate() {
            coeffs[c] = a[r];
        }
        for j in 0..m {
            coeffs[nz + j] = -ev.stationarity_jets[j].gradient[r];
        }
        for i in 0..k {
            coeffs[nz + m + i] = ev.g_jets[i].gradient[r];
            if r == ev.n + ev.m + i {
                coeffs[nz + m + k + i] = -1.0;
            }
        }
        lp.push(coeffs, Relation::Eq, -ev.f_jet.gradient[r]);
    }
    let fix = |lp: &mut LinearProgram, col: usize, rel: Relation| {
        lp.push(cone::unit(nvar, col), rel, 0.0);
    };
    for (c, (_, sense, active)) in rows.iter().enumerate() {
        match (sense, active) {
            (Sense::Eq, _) => {}
            (Sense::Le, true) => fix(&mut lp, c, Relation::Ge),
            (Sense::Le, false) => fix(&mut lp, c, Relation::Eq),
        }
    }
    for &i in &part.alpha {
        fix(&mut lp, nz + m + k + i, Relation::Eq);
    }
    for &i in &part.beta {
        fix(&mut lp, nz + m + i, Relation::Ge);
        fix(&mut lp, nz + m + k + i, Relation::Ge);
    }
    for &i in &part.gamma {
        fix(&mut lp, nz + m + i, Relation::Eq);
    }
    let LpOutcome::Optimal { x, .. } = lp.solve()? else {
        return Err(Error::Multiplier(
            "no multiplier satisfies the relaxed stationarity system".into(),
        ));
    };
    let mult = KktMultiplier {
        zeta: x[..nz].to_vec(),
        pi: x[nz..nz + m].to_vec(),
        eta: x[nz + m..nz + m + k].to_vec(),
        nu: x[nz + m + k..].to_vec(),
    };
    let res = linalg::norm_inf(&kkt_stationarity_gradient(ev, &mult));
    if res > tol::STATIONARITY_TOL * (1.0 + linalg::norm_inf(&ev.f_jet.gradient)) {
        return Err(Error::Multiplier(format!("stationarity residual {res:e}")));
    }
    Ok(mult)
}

/// Single polyhedron over `(dx, dy, dλ)` obtained from the relaxed bounds.
pub fn relaxed_critical_cone(ev: &PointEvaluation, part: &IndexPartition, grad_f: &[f64]) -> Result<PolyhedralCone> {
    require_kkt(ev)?;
    let d = ev.dim();
    if grad_f.len() != d {
        return Err(Error::Dimension("objective gradient length".into()));
    }
    let mut c = upper_tangent_cone(ev);
    for s in &ev.stationarity_jets {
        c.push_equality(s.gradient.clone());
    }
    let lam = |i: usize| cone::unit(d, ev.n + ev.m + i);
    for &i in &part.gamma {
        c.push_equality(lam(i));
    }
    for &i in &part.beta {
        c.push_inequality(lam(i));
        c.push_inequality(ev.g_jets[i].gradient.iter().map(|v| -v).collect());
    }
    for &i in &part.alpha {
        c.push_equality(ev.g_jets[i].gradient.clone());
    }
    if grad_f.iter().any(|g| *g != 0.0) {
        c.push_equality(grad_f.to_vec());
    }
    Ok(c)
}

pub fn kkt_sufficient_check(assembly: &LagrangianAssembly, cone: &PolyhedralCone) -> Result<CopositivityVerdict> {
    if assembly.hessian.rows() != cone.dim {
        return Err(Error::Dimension("assembly and cone differ in dimension".into()));
    }
    copositivity_test(&assembly.hessian, cone, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum UniquenessOutcome {
    /// The cone holds `(0, 0, dλ)` with `dλ ≠ 0`; strict copositivity fails there.
    PureMultiplierDirection {
        direction: Vec<f64>,
    },
    UniquenessImplied,
    /// No pure-multiplier direction, but the sufficient check does not hold.
    NotImplied {
        sufficient: CopositivityVerdict,
    },
}

pub fn multiplier_uniqueness_check(assembly: &LagrangianAssembly, cone: &PolyhedralCone) -> Result<UniquenessOutcome> {
    let d = cone.dim;
    let mut sub = cone.clone();
    for j in (0..d).filter(|j| !assembly.multiplier_coords.contains(j)) {
        sub.push_equality(cone::unit(d, j));
    }
    let gens = generators(&sub)?;
    if let Some(mut direction) = gens.directions().into_iter().next() {
        for j in (0..d).filter(|j| !assembly.multiplier_coords.contains(j)) {
            direction[j] = 0.0;
        }
        return Ok(UniquenessOutcome::PureMultiplierDirection { direction });
    }
    let sufficient = kkt_sufficient_check(assembly, cone)?;
    Ok(if sufficient.holds {
        UniquenessOutcome::UniquenessImplied
    } else {
        UniquenessOutcome::NotImplied { sufficient }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{classify_indices, critical_cone, tangent_cone_branches};
    use crate::expr::eval_jet;
    use crate::problem::{evaluate_at_reference, load_problem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(src: &str) -> (ProblemSpec, PointEvaluation, IndexPartition) {
        let s = load_problem(src).unwrap();
        let ev = evaluate_at_reference(&s, 1e-9).unwrap();
        let p = classify_indices(&ev).unwrap();
        (s, ev, p)
    }

    const MICRO: &str = r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],
        "objective":"0.5*(x^2 - y^2)","F":["y^4 + y + x"],
        "upper_constraints":["x >= 0"],"point":{"x":0,"y":0}}"#;

    const KKT: &str = r#"{"kind":"kkt","upper_vars":["x"],"lower_vars":["y"],
        "objective":"(x+1)^2 + y^2","F":["y - x"],"g":["-y"],
        "point":{"x":-1,"y":0},"multiplier_point":{"lambda1":1}}"#;

    #[test]
    fn ncp_assembly_examples() {
        let (_, ev, part) = setup(MICRO);
        for pi in [0.0, 1.0, 10.0] {
            let a = assemble_ncp_lagrangian_hessian(&ev, &part, &[pi]).unwrap();
            assert_eq!(a.hessian.to_rows(), vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        }
        let (_, ev, part) = setup(
            r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],
                "objective":"0.5*(x^2 + y^2)","F":["0.5*(x^2 + y^2) + y"],
                "point":{"x":0,"y":0}}"#,
        );
        let a = assemble_ncp_lagrangian_hessian(&ev, &part, &[1.0]).unwrap();
        assert_eq!(a.hessian.max_abs(), 0.0);
        assert!(assemble_ncp_lagrangian_hessian(&ev, &part, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn micro_multiplier_form_holds_for_any_pi() {
        let (_, ev, part) = setup(MICRO);
        let t = tangent_cone_branches(&ev, &part, &upper_tangent_cone(&ev)).unwrap();
        let c = critical_cone(&t, &ev.f_jet.gradient).unwrap();
        let verdicts: Vec<_> = [0.0, 1.0, 10.0]
            .iter()
            .map(|&pi| {
                let a = assemble_ncp_lagrangian_hessian(&ev, &part, &[pi]).unwrap();
                multiplier_form_test(&ev, &part, &c, &a, true, false).unwrap()
            })
            .collect();
        assert!(verdicts[0].holds);
        assert_eq!(verdicts[0], verdicts[1]);
        assert_eq!(verdicts[0], verdicts[2]);
        let a = assemble_ncp_lagrangian_hessian(&ev, &part, &[0.0]).unwrap();
        let r = multiplier_form_test(&ev, &part, &c, &a, true, true).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn orthant_failure_witness() {
        let (_, ev, part) = setup(MICRO);
        let a = assemble_ncp_lagrangian_hessian(&ev, &part, &[0.0]).unwrap();
        let orthant = ConeUnion {
            branches: vec![cone::Branch {
                pattern: cone::BranchPattern::from_mask(&[], 0),
                cone: PolyhedralCone::nonneg_orthant(2),
            }],
        };
        let r = multiplier_form_test(&ev, &part, &orthant, &a, false, false).unwrap();
        assert!(!r.holds);
        assert_eq!(r.failing, Some((0, vec![0.0, 1.0])));
    }

    #[test]
    fn kkt_example_pipeline() {
        let (_, ev, part) = setup(KKT);
        assert_eq!(part.alpha, vec![0]);
        let mult = compute_kkt_multiplier(&ev, &part).unwrap();
        let a = assemble_kkt_lagrangian_hessian(&ev, &mult).unwrap();
        assert_eq!(a.multiplier_block().max_abs(), 0.0);
        let c = relaxed_critical_cone(&ev, &part, &ev.f_jet.gradient).unwrap();
        let g = generators(&c).unwrap();
        assert_eq!(g.lineality.len(), 1);
        let l = &g.lineality[0];
        assert!((l[0] + l[2]).abs() < 1e-12 && l[1].abs() < 1e-12);
        assert!(kkt_sufficient_check(&a, &c).unwrap().holds);
        assert_eq!(
            multiplier_uniqueness_check(&a, &c).unwrap(),
            UniquenessOutcome::UniquenessImplied
        );
    }

    #[test]
    fn pure_multiplier_direction() {
        // Two identical constraints: λ can shift between them.
        let (_, ev, part) = setup(
            r#"{"kind":"kkt","upper_vars":["x"],"lower_vars":["y"],
                "objective":"(x+1)^2 + y^2","F":["y - x"],"g":["-y","-y"],
                "point":{"x":-1,"y":0},"multiplier_point":{"lambda1":0.5,"lambda2":0.5}}"#,
        );
        let mult = compute_kkt_multiplier(&ev, &part).unwrap();
        let a = assemble_kkt_lagrangian_hessian(&ev, &mult).unwrap();
        let c = relaxed_critical_cone(&ev, &part, &ev.f_jet.gradient).unwrap();
        match multiplier_uniqueness_check(&a, &c).unwrap() {
            UniquenessOutcome::PureMultiplierDirection { direction } => {
                assert_eq!(&direction[..2], &[0.0, 0.0]);
                assert!(direction[2].abs() > 0.1);
                assert!(a.hessian.quadratic_form(&direction).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(!kkt_sufficient_check(&a, &c).unwrap().holds);
    }

    #[test]
    fn kkt_cross_entry_from_quadratic_constraint() {
        // g = y² with π = 1 at λ = 1 gives −2 in the (y, λ) entry.
        let s = load_problem(
            r#"{"kind":"kkt","upper_vars":["x"],"lower_vars":["y"],
                "objective":"x^2","F":["x"],"g":["y^2"],
                "point":{"x":0,"y":0},"multiplier_point":{"lambda1":1}}"#,
        )
        .unwrap();
        let ev = crate::problem::evaluate_at_reference_with(&s, 1e-9, true).unwrap();
        let mult = KktMultiplier {
            zeta: vec![],
            pi: vec![1.0],
            eta: vec![0.0],
            nu: vec![0.0],
        };
        let a = assemble_kkt_lagrangian_hessian(&ev, &mult).unwrap();
        assert_eq!(a.hessian.get(1, 2), -2.0);
        assert_eq!(a.hessian.get(2, 1), -2.0);
        assert_eq!(a.hessian.get(1, 1), 0.0);
        let fd = fd_hessian(&kkt_lagrangian_expr(&s, &mult).unwrap(), &ev.point);
        assert!((fd.get(1, 2) + 2.0).abs() < 1e-4);
    }

    fn fd_hessian(e: &Expr, p: &[f64]) -> DenseMatrix {
        let h = 1e-4;
        let d = p.len();
        let f = |dv: &[(usize, f64)]| {
            let mut q = p.to_vec();
            dv.iter().for_each(|(i, s)| q[*i] += s);
            e.eval(&q).unwrap()
        };
        DenseMatrix::from_fn(d, d, |i, j| {
            (f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)]) + f(&[(i, -h), (j, -h)]))
                / (4.0 * h * h)
        })
    }

    #[test]
    fn kkt_hessian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let src = format!(
                r#"{{"kind":"kkt","upper_vars":["x"],"lower_vars":["y"],
                    "objective":"{}*x^2*y + {}*y^3","F":["{}*x*y + y^2"],
                    "g":["{}*y^2*x - y","{}*x^2 + {}*y^3"],
                    "point":{{"x":0.3,"y":-0.2}},
                    "multiplier_point":{{"lambda1":0.4,"lambda2":0.7}}}}"#,
                c[0], c[1], c[2], c[3], c[4], c[5]
            );
            let s = load_problem(&src).unwrap();
            let ev = crate::problem::evaluate_at_reference_with(&s, 1e-9, true).unwrap();
            let mult = KktMultiplier {
                zeta: vec![],
                pi: vec![rng.gen_range(-2.0..2.0)],
                eta: vec![rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)],
                nu: vec![0.0, 0.0],
            };
            let a = assemble_kkt_lagrangian_hessian(&ev, &mult).unwrap();
            let e = kkt_lagrangian_expr(&s, &mult).unwrap();
            let fd = fd_hessian(&e, &ev.point);
            let jet = eval_jet(&e, &ev.point).unwrap().hessian.to_dense();
            for i in 0..4 {
                for j in 0..4 {
                    let scale = 1.0 + jet.get(i, j).abs();
                    assert!((a.hessian.get(i, j) - jet.get(i, j)).abs() <= 1e-12 * scale);
                    assert!((fd.get(i, j) - jet.get(i, j)).abs() <= 1e-4 * scale);
                }
            }
        }
    }
}
