//! Condition report: every applicable check at the reference point, with
//! witnesses, warnings and the tolerances used.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cone::{
    classify_indices, copositivity_on_generators, critical_cone, generators, tangent_cone_branches, upper_tangent_cone,
    ConeUnion, IndexPartition,
};
use crate::error::{Error, Result};
use crate::implicit::{directional_derivatives, reduced_second_order_test, src_check, RegularityReport};
use crate::linalg;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::multiplier::{
    assemble_kkt_lagrangian_hessian, assemble_ncp_lagrangian_hessian, compute_kkt_multiplier, kkt_sufficient_check,
    multiplier_form_test, multiplier_uniqueness_check, relaxed_critical_cone, KktMultiplier, UniquenessOutcome,
};
use crate::piecewise::{piecewise_analysis, PiecewiseResult};
use crate::problem::{evaluate_at_reference, FeasibilityReport, PointEvaluation, ProblemKind, ProblemSpec};
use crate::tol;
use crate::verdict::Verdict;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub zero_tol: f64,
    /// Upper-level directions; empty means sweep the critical-cone rays.
    pub directions: Vec<Vec<f64>>,
    /// NCP multiplier over the lower variables; zero when absent.
    pub pi: Option<Vec<f64>>,
    pub restrict_strict_complementarity: bool,
    pub piecewise: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            zero_tol: tol::DEFAULT_ZERO_TOL,
            directions: Vec::new(),
            pi: None,
            restrict_strict_complementarity: false,
            piecewise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub kind: ProblemKind,
    pub upper_vars: Vec<String>,
    pub lower_vars: Vec<String>,
    pub multiplier_vars: Vec<String>,
    pub point: Vec<f64>,
    pub feasibility: FeasibilityReport,
}

/// Index sets, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSets {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub gamma: Vec<usize>,
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

impl From<&IndexPartition> for IndexSets {
    fn from(p: &IndexPartition) -> Self {
        IndexSets {
            alpha: one_based(&p.alpha),
            beta: one_based(&p.beta),
            gamma: one_based(&p.gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub dx: Vec<f64>,
    pub y_prime: Option<Vec<f64>>,
    /// 1-based directional split of β.
    pub d_beta_a: Vec<usize>,
    pub d_beta_b: Vec<usize>,
    pub d_beta_g: Vec<usize>,
    pub y_second: Option<Vec<f64>>,
    pub reduced_value: Option<f64>,
    /// `dzᵀ(∇²f − Σπ∇²F)dz` for the multiplier in use.
    pub multiplier_form_value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub b_stationarity: Verdict,
    pub avi_necessary: Verdict,
    pub avi_sufficient: Verdict,
    pub ncp_multiplier_necessary: Verdict,
    pub ncp_multiplier_sufficient: Verdict,
    pub implicit_necessary: Verdict,
    pub implicit_sufficient: Verdict,
    pub kkt_sufficient: Verdict,
    pub piecewise_sufficient: Verdict,
    pub multiplier_uniqueness: Verdict,
}

impl Verdicts {
    pub fn named(&self) -> [(&'static str, &Verdict); 10] {
        [
            ("b_stationarity", &self.b_stationarity),
            ("avi_necessary", &self.avi_necessary),
            ("avi_sufficient", &self.avi_sufficient),
            ("ncp_multiplier_necessary", &self.ncp_multiplier_necessary),
            ("ncp_multiplier_sufficient", &self.ncp_multiplier_sufficient),
            ("implicit_necessary", &self.implicit_necessary),
            ("implicit_sufficient", &self.implicit_sufficient),
            ("kkt_sufficient", &self.kkt_sufficient),
            ("piecewise_sufficient", &self.piecewise_sufficient),
            ("multiplier_uniqueness", &self.multiplier_uniqueness),
        ]
    }
}

pub fn description(key: &str) -> &'static str {
    match key {
        "b_stationarity" => "first order: no descent direction in the tangent cone",
        "avi_necessary" => "AVI necessary: objective Hessian copositive on the critical cone",
        "avi_sufficient" => "AVI sufficient: objective Hessian strictly copositive on the critical cone",
        "ncp_multiplier_necessary" => "NCP multiplier form necessary: Lagrangian Hessian copositive on each branch",
        "ncp_multiplier_sufficient" => "NCP multiplier form sufficient: strict copositivity on each branch",
        "implicit_necessary" => "implicit program necessary: reduced curvature nonnegative along swept directions",
        "implicit_sufficient" => "implicit program sufficient: reduced curvature positive along swept directions",
        "kkt_sufficient" => "KKT form sufficient: MPEC Lagrangian strictly copositive on the relaxed cone",
        "piecewise_sufficient" => "piecewise sufficient: classical strict second-order test on every branch",
        "multiplier_uniqueness" => "lower multiplier uniqueness implied by the KKT sufficient condition",
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub zero_tol: f64,
    pub lcp_sign_tol: f64,
    pub copositivity_rel_tol: f64,
    pub stationarity_tol: f64,
    pub cone_feas_tol: f64,
}

impl Tolerances {
    fn with_zero_tol(zero_tol: f64) -> Self {
        Tolerances {
            zero_tol,
            lcp_sign_tol: tol::LCP_SIGN_TOL,
            copositivity_rel_tol: tol::COPOSITIVITY_REL_TOL,
            stationarity_tol: tol::STATIONARITY_TOL,
            cone_feas_tol: tol::CONE_FEAS_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub report_version: u32,
    pub problem: ProblemSummary,
    pub index_sets: IndexSets,
    pub src: Option<RegularityReport>,
    /// NCP multiplier used by the multiplier-form checks.
    pub ncp_pi: Option<Vec<f64>>,
    pub kkt_multiplier: Option<KktMultiplier>,
    pub directions: Vec<DirectionResult>,
    pub verdicts: Verdicts,
    pub branches: Option<PiecewiseResult>,
    pub warnings: Vec<String>,
    pub tolerances: Tolerances,
}

impl ConditionReport {
    /// 0 all hold, 1 some fails, 3 some unverifiable; not-applicable is ignored.
    pub fn exit_code(&self) -> i32 {
        exit_code(self.verdicts.named().iter().map(|(_, v)| *v))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn exit_code<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> i32 {
    let mut code = 0;
    for v in verdicts {
        match v {
            Verdict::Fails { .. } => return 1,
            Verdict::Unverifiable { .. } => code = 3,
            _ => {}
        }
    }
    code
}

fn error_verdict(e: Error) -> Verdict {
    Verdict::unverifiable(e.to_string())
}

/// `∇fᵀd ≥ 0` on every tangent branch, by LP over the branch cone in a box.
pub fn b_stationarity(ev: &PointEvaluation, tangent: &ConeUnion) -> Result<Verdict> {
    let g = &ev.f_jet.gradient;
    let tol = tol::STATIONARITY_TOL * (1.0 + linalg::norm_inf(g));
    for b in &tangent.branches {
        let mut lp = LinearProgram::free_vars(ev.dim()).with_objective(g.clone());
        for a in &b.cone.equalities {
            lp.push(a.clone(), Relation::Eq, 0.0);
        }
        for a in &b.cone.inequalities {
            lp.push(a.clone(), Relation::Ge, 0.0);
        }
        lp.push_box(1.0);
        if let LpOutcome::Optimal { x, value } = lp.solve()? {
            if value < -tol {
                return Ok(Verdict::Fails {
                    witness: x,
                    branch: Some(b.pattern.mask),
                    detail: format!("descent rate {value:e}"),
                });
            }
        }
    }
    Ok(Verdict::Holds)
}

/// Unit x-parts of the critical-cone generators, deduplicated, in order.
pub fn sweep_directions(ev: &PointEvaluation, cone: &ConeUnion) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for b in &cone.branches {
        for d in generators(&b.cone)?.directions() {
            let x = &d[..ev.n];
            let nrm = linalg::norm2(x);
            if nrm <= 1e-12 {
                continue;
            }
            let u: Vec<f64> = x.iter().map(|v| v / nrm + 0.0).collect();
            if !out.iter().any(|w| w.iter().zip(&u).all(|(a, b)| (a - b).abs() <= 1e-9)) {
                out.push(u);
            }
        }
    }
    Ok(out)
}

fn na(reason: &str) -> Verdict {
    Verdict::not_applicable(reason)
}

/// Run every check that applies to the problem kind.
pub fn analyze(spec: &ProblemSpec, opts: &ReportOptions) -> Result<ConditionReport> {
    let ev = evaluate_at_reference(spec, opts.zero_tol)?;
    let part = classify_indices(&ev)?;
    let upper = upper_tangent_cone(&ev);
    let tangent = tangent_cone_branches(&ev, &part, &upper)?;
    let critical = critical_cone(&tangent, &ev.f_jet.gradient)?;
    let mut warnings = Vec::new();

    let mut verdicts = Verdicts {
        b_stationarity: b_stationarity(&ev, &tangent)?,
        avi_necessary: na("lower level is not an AVI"),
        avi_sufficient: na("lower level is not an AVI"),
        ncp_multiplier_necessary: na("lower level is not an NCP"),
        ncp_multiplier_sufficient: na("lower level is not an NCP"),
        implicit_necessary: na("lower level is not an NCP"),
        implicit_sufficient: na("lower level is not an NCP"),
        kkt_sufficient: na("lower level is not given by KKT conditions"),
        piecewise_sufficient: na("not requested"),
        multiplier_uniqueness: na("lower level is not given by KKT conditions"),
    };
    let mut src = None;
    let mut ncp_pi = None;
    let mut kkt_multiplier = None;
    let mut directions = Vec::new();

    match spec.kind {
        ProblemKind::Ncp => {
            let pi = opts.pi.clone().unwrap_or_else(|| vec![0.0; ev.m]);
            if opts.pi.is_none() {
                warnings.push("multiplier-form checks use pi = 0; supply pi to test another multiplier".into());
            }
            let asm = assemble_ncp_lagrangian_hessian(&ev, &part, &pi)?;
            for (strict, slot) in [
                (false, &mut verdicts.ncp_multiplier_necessary),
                (true, &mut verdicts.ncp_multiplier_sufficient),
            ] {
                *slot = match multiplier_form_test(
                    &ev,
                    &part,
                    &critical,
                    &asm,
                    strict,
                    opts.restrict_strict_complementarity,
                ) {
                    Ok(r) => {
                        if strict {
                            warnings.extend(r.warnings.iter().cloned());
                        }
                        match r.failing {
                            None => Verdict::Holds,
                            Some((mask, w)) => Verdict::Fails {
                                witness: w,
                                branch: Some(mask),
                                detail: "Lagrangian Hessian curvature not positive".into(),
                            },
                        }
                    }
                    Err(e) => error_verdict(e),
                };
            }
            let reg = src_check(&ev, &part)?;
            let dxs = if opts.directions.is_empty() {
                sweep_directions(&ev, &critical)?
            } else {
                opts.directions.clone()
            };
            for dx in &dxs {
                if dx.len() != ev.n {
                    return Err(Error::Dimension(format!(
                        "dx has length {}, expected {}",
                        dx.len(),
                        ev.n
                    )));
                }
            }
            let mut nec = Vec::new();
            let mut suf = Vec::new();
            for dx in &dxs {
                let mut row = DirectionResult {
                    dx: dx.clone(),
                    y_prime: None,
                    d_beta_a: Vec::new(),
                    d_beta_b: Vec::new(),
                    d_beta_g: Vec::new(),
                    y_second: None,
                    reduced_value: None,
                    multiplier_form_value: None,
                    error: None,
                };
                match directional_derivatives(&ev, &part, dx) {
                    Ok(dd) => {
                        warnings.extend(dd.warnings.iter().cloned());
                        let dz = dd.dz();
                        row.y_prime = Some(dd.y_prime.clone());
                        row.d_beta_a = one_based(&dd.index_sets.d_beta_a);
                        row.d_beta_b = one_based(&dd.index_sets.d_beta_b);
                        row.d_beta_g = one_based(&dd.index_sets.d_beta_g);
                        row.y_second = dd.y_second.clone();
                        let mf = asm.hessian.quadratic_form(&dz);
                        row.multiplier_form_value = Some(mf);
                        match reduced_second_order_test(&ev, &dd) {
                            Ok(t) => {
                                row.reduced_value = Some(t.value);
                                if t.value < mf - t.tol {
                                    warnings.push(format!(
                                        "dx = {dx:?}: reduced value {:e} is below the multiplier-form value {mf:e}",
                                        t.value
                                    ));
                                }
                                nec.push(if t.necessary_holds {
                                    Verdict::Holds
                                } else {
                                    Verdict::fails(dz.clone(), format!("reduced curvature {:e}", t.value))
                                });
                                suf.push(if t.sufficient_holds {
                                    Verdict::Holds
                                } else {
                                    Verdict::fails(dz, format!("reduced curvature {:e}", t.value))
                                });
                            }
                            Err(e) => {
                                row.error = Some(e.to_string());
                                nec.push(Verdict::unverifiable(e.to_string()));
                                suf.push(Verdict::unverifiable(e.to_string()));
                            }
                        }
                    }
                    Err(e) => {
                        row.error = Some(e.to_string());
                        nec.push(Verdict::unverifiable(e.to_string()));
                        suf.push(Verdict::unverifiable(e.to_string()));
                    }
                }
                directions.push(row);
            }
            if !reg.src_holds {
                let why = "strong regularity fails, so the implicit solution map is not guaranteed";
                verdicts.implicit_necessary = na(why);
                verdicts.implicit_sufficient = na(why);
            } else if dxs.is_empty() {
                warnings.push("critical cone has no nonzero upper-level direction".into());
                verdicts.implicit_necessary = Verdict::Holds;
                verdicts.implicit_sufficient = Verdict::Holds;
            } else {
                verdicts.implicit_necessary = Verdict::all(&nec);
                verdicts.implicit_sufficient = Verdict::all(&suf);
            }
            src = Some(reg);
            ncp_pi = Some(pi);
        }
        ProblemKind::Kkt | ProblemKind::Avi => {
            if spec.kind == ProblemKind::Avi {
                let xy: Vec<usize> = (0..ev.n + ev.m).collect();
                let h = ev.f_jet.hessian.to_dense().select(&xy, &xy);
                let mut nec = Vec::new();
                let mut suf = Vec::new();
                for b in &critical.branches {
                    let g = generators(&b.cone)?.project(&xy)?;
                    for (strict, out) in [(false, &mut nec), (true, &mut suf)] {
                        let c = copositivity_on_generators(&h, &g, strict)?;
                        out.push(if c.holds {
                            Verdict::Holds
                        } else {
                            Verdict::Fails {
                                witness: c.witness.unwrap_or_default(),
                                branch: Some(b.pattern.mask),
                                detail: format!("objective curvature {:e}", c.min_value.unwrap_or(0.0)),
                            }
                        });
                    }
                }
                verdicts.avi_necessary = Verdict::all(&nec);
                verdicts.avi_sufficient = Verdict::all(&suf);
            }
            match compute_kkt_multiplier(&ev, &part) {
                Ok(mult) => {
                    let asm = assemble_kkt_lagrangian_hessian(&ev, &mult)?;
                    let cone = relaxed_critical_cone(&ev, &part, &ev.f_jet.gradient)?;
                    verdicts.kkt_sufficient = match kkt_sufficient_check(&asm, &cone) {
                        Ok(c) if c.holds => Verdict::Holds,
                        Ok(c) => Verdict::fails(
                            c.witness.unwrap_or_default(),
                            format!("MPEC Lagrangian curvature {:e}", c.min_value.unwrap_or(0.0)),
                        ),
                        Err(e) => error_verdict(e),
                    };
                    verdicts.multiplier_uniqueness = match multiplier_uniqueness_check(&asm, &cone) {
                        Ok(UniquenessOutcome::UniquenessImplied) => Verdict::Holds,
                        Ok(UniquenessOutcome::PureMultiplierDirection { direction }) => {
                            Verdict::fails(direction, "relaxed cone contains a pure multiplier direction")
                        }
                        Ok(UniquenessOutcome::NotImplied { .. }) => {
                            Verdict::unverifiable("sufficient condition fails, so uniqueness is not implied")
                        }
                        Err(e) => error_verdict(e),
                    };
                    kkt_multiplier = Some(mult);
                }
                Err(e) => {
                    let v = Verdict::unverifiable(e.to_string());
                    verdicts.kkt_sufficient = v.clone();
                    verdicts.multiplier_uniqueness = v;
                }
            }
        }
    }

    let branches = if opts.piecewise {
        match piecewise_analysis(spec, &ev, &part) {
            Ok(r) => {
                for c in &r.branches {
                    warnings.extend(c.warnings.iter().cloned());
                }
                verdicts.piecewise_sufficient = r.aggregate.clone();
                Some(r)
            }
            Err(e) => {
                verdicts.piecewise_sufficient = error_verdict(e);
                None
            }
        }
    } else {
        None
    };

    Ok(ConditionReport {
        report_version: REPORT_VERSION,
        problem: ProblemSummary {
            kind: spec.kind,
            upper_vars: spec.upper_vars.clone(),
            lower_vars: spec.lower_vars.clone(),
            multiplier_vars: spec.multiplier_vars.clone(),
            point: ev.point.clone(),
            feasibility: ev.feasibility.clone(),
        },
        index_sets: IndexSets::from(&part),
        src,
        ncp_pi,
        kkt_multiplier,
        directions,
        verdicts,
        branches,
        warnings,
        tolerances: Tolerances::with_zero_tol(opts.zero_tol),
    })
}

pub fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{}", x + 0.0)).collect();
    format!("({})", parts.join(", "))
}

pub fn fmt_set(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

pub fn render_text(r: &ConditionReport) -> String {
    let mut s = String::new();
    let p = &r.problem;
    let _ = writeln!(
        s,
        "problem: {} with {} upper, {} lower, {} multiplier variables",
        p.kind,
        p.upper_vars.len(),
        p.lower_vars.len(),
        p.multiplier_vars.len()
    );
    let _ = writeln!(s, "reference point: {}", fmt_vec(&p.point));
    let _ = writeln!(
        s,
        "index sets: alpha = {}, beta = {}, gamma = {}",
        fmt_set(&r.index_sets.alpha),
        fmt_set(&r.index_sets.beta),
        fmt_set(&r.index_sets.gamma)
    );
    if let Some(reg) = &r.src {
        let _ = writeln!(
            s,
            "strong regularity: {} (alpha block nonsingular: {}, Schur complement P-matrix: {})",
            if reg.src_holds { "holds" } else { "fails" },
            reg.alpha_block_nonsingular,
            reg.schur_is_p
        );
    }
    if let Some(pi) = &r.ncp_pi {
        let _ = writeln!(s, "multiplier pi: {}", fmt_vec(pi));
    }
    if let Some(m) = &r.kkt_multiplier {
        let _ = writeln!(
            s,
            "MPEC multipliers: zeta = {}, pi = {}, eta = {}",
            fmt_vec(&m.zeta),
            fmt_vec(&m.pi),
            fmt_vec(&m.eta)
        );
    }
    for d in &r.directions {
        let _ = write!(s, "direction dx = {}:", fmt_vec(&d.dx));
        if let Some(y) = &d.y_prime {
            let _ = write!(
                s,
                " y' = {}, dbeta_a = {}, dbeta_b = {}, dbeta_g = {}",
                fmt_vec(y),
                fmt_set(&d.d_beta_a),
                fmt_set(&d.d_beta_b),
                fmt_set(&d.d_beta_g)
            );
        }
        if let Some(y) = &d.y_second {
            let _ = write!(s, ", y'' = {}", fmt_vec(y));
        }
        if let Some(v) = d.reduced_value {
            let _ = write!(s, ", reduced curvature = {v}");
        }
        if let Some(e) = &d.error {
            let _ = write!(s, " error: {e}");
        }
        let _ = writeln!(s);
    }
    if let Some(b) = &r.branches {
        for c in &b.branches {
            let _ = writeln!(s, "branch {:#b}: {}", c.mask, c.verdict);
        }
    }
    let _ = writeln!(s, "verdicts:");
    for (key, v) in r.verdicts.named() {
        let _ = writeln!(s, "  {key}: {v}");
        let _ = writeln!(s, "    {}", description(key));
    }
    if !r.warnings.is_empty() {
        let _ = writeln!(s, "warnings:");
        for w in &r.warnings {
            let _ = writeln!(s, "  - {w}");
        }
    }
    s
}
