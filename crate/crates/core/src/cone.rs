//! Index classification, branch cones, generators and copositivity.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::lp::{LinearProgram, Relation};
use crate::problem::{PairStatus, PointEvaluation, ProblemKind, Sense};
use crate::tol;

pub const MAX_BRANCH_BETA: usize = 16;
pub const MAX_GENERATORS: usize = 64;
pub const MAX_EFFECTIVE_DIM: usize = 8;
const SUBSET_BUDGET: u64 = 4_000_000;

/// α/β/γ split of the complementarity pairs (0-based pair indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexPartition {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub gamma: Vec<usize>,
}

impl IndexPartition {
    pub fn len(&self) -> usize {
        self.alpha.len() + self.beta.len() + self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn classify_indices(ev: &PointEvaluation) -> Result<IndexPartition> {
    let mut part = IndexPartition {
        alpha: Vec::new(),
        beta: Vec::new(),
        gamma: Vec::new(),
    };
    for (i, p) in ev.feasibility.pairs.iter().enumerate() {
        match p.status {
            PairStatus::EquationActive => part.alpha.push(i),
            PairStatus::BothActive => part.beta.push(i),
            PairStatus::VariableActive => part.gamma.push(i),
            PairStatus::Infeasible => {
                return Err(Error::Infeasible(format!(
                    "pair {} has a negative side or a nonzero product",
                    i + 1
                )))
            }
        }
    }
    Ok(part)
}

/// `{u : Aᵀu = 0 (equalities), Bᵀu ≥ 0 (inequalities)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralCone {
    pub dim: usize,
    pub equalities: Vec<Vec<f64>>,
    pub inequalities: Vec<Vec<f64>>,
}

impl PolyhedralCone {
    pub fn whole(dim: usize) -> Self {
        PolyhedralCone {
            dim,
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn nonneg_orthant(dim: usize) -> Self {
        let mut c = Self::whole(dim);
        for j in 0..dim {
            c.inequalities.push(unit(dim, j));
        }
        c
    }

    pub fn with_equality(mut self, a: Vec<f64>) -> Self {
        self.push_equality(a);
        self
    }

    pub fn with_inequality(mut self, a: Vec<f64>) -> Self {
        self.push_inequality(a);
        self
    }

    pub fn push_equality(&mut self, a: Vec<f64>) {
        debug_assert_eq!(a.len(), self.dim);
        self.equalities.push(a);
    }

    pub fn push_inequality(&mut self, a: Vec<f64>) {
        debug_assert_eq!(a.len(), self.dim);
        self.inequalities.push(a);
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        cone_membership(self, u, tol)
    }
}

pub fn unit(dim: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[j] = 1.0;
    e
}

pub fn cone_membership(cone: &PolyhedralCone, u: &[f64], tol: f64) -> bool {
    if u.len() != cone.dim {
        return false;
    }
    let slack = tol * (1.0 + linalg::norm2(u));
    cone.equalities.iter().all(|a| linalg::dot(a, u).abs() <= slack)
        && cone.inequalities.iter().all(|a| linalg::dot(a, u) >= -slack)
}

/// `B ⊆ β` encoded as a bitmask over the positions of `β`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchPattern {
    pub mask: u32,
    /// Pairs resolved on the function side (`φ_i = 0`).
    pub equation_side: Vec<usize>,
    /// Pairs resolved on the variable side (`v_i = 0`).
    pub variable_side: Vec<usize>,
}

impl BranchPattern {
    pub fn from_mask(beta: &[usize], mask: u32) -> Self {
        let (eq, var): (Vec<_>, Vec<_>) = beta
            .iter()
            .copied()
            .enumerate()
            .partition(|(j, _)| mask & (1 << j) != 0);
        BranchPattern {
            mask,
            equation_side: eq.into_iter().map(|(_, i)| i).collect(),
            variable_side: var.into_iter().map(|(_, i)| i).collect(),
        }
    }

    /// All `2^|β|` patterns in ascending mask order.
    pub fn enumerate(beta: &[usize]) -> Result<Vec<Self>> {
        if beta.len() > MAX_BRANCH_BETA {
            return Err(Error::CapExceeded {
                what: "degenerate index count",
                actual: beta.len(),
                cap: MAX_BRANCH_BETA,
            });
        }
        Ok((0u32..(1u32 << beta.len())).map(|m| Self::from_mask(beta, m)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub pattern: BranchPattern,
    pub cone: PolyhedralCone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeUnion {
    pub branches: Vec<Branch>,
}

impl ConeUnion {
    pub fn dim(&self) -> usize {
        self.branches.first().map_or(0, |b| b.cone.dim)
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        self.branches.iter().any(|b| b.cone.contains(u, tol))
    }
}

/// Linearized upper polyhedron at the reference point, in the direction space.
pub fn upper_tangent_cone(ev: &PointEvaluation) -> PolyhedralCone {
    let mut c = PolyhedralCone::whole(ev.dim());
    for (a, sense, active) in ev.upper_rows() {
        match sense {
            Sense::Eq => c.push_equality(a),
            Sense::Le if active => c.push_inequality(a.iter().map(|v| -v).collect()),
            Sense::Le => {}
        }
    }
    c
}

/// Rows shared by every branch: upper tangent, stationarity linearization,
/// α and γ pairs.
fn common_cone(ev: &PointEvaluation, part: &IndexPartition, upper: &PolyhedralCone) -> PolyhedralCone {
    let d = ev.dim();
    let mut c = upper.clone();
    if ev.kind == ProblemKind::Kkt {
        for s in &ev.stationarity_jets {
            c.push_equality(s.gradient.clone());
        }
    }
    let pairs = ev.pairs();
    for &i in &part.alpha {
        c.push_equality(pairs[i].function.gradient.clone());
    }
    for &i in &part.gamma {
        c.push_equality(unit(d, pairs[i].variable));
    }
    c
}

pub fn tangent_cone_branches(ev: &PointEvaluation, part: &IndexPartition, upper: &PolyhedralCone) -> Result<ConeUnion> {
    if upper.dim != ev.dim() {
        return Err(Error::Dimension("upper cone lives in the wrong space".into()));
    }
    let d = ev.dim();
    let pairs = ev.pairs();
    let common = common_cone(ev, part, upper);
    let branches = BranchPattern::enumerate(&part.beta)?
        .into_iter()
        .map(|pattern| {
            let mut cone = common.clone();
            for &i in &pattern.equation_side {
                cone.push_equality(pairs[i].function.gradient.clone());
                cone.push_inequality(unit(d, pairs[i].variable));
            }
            for &i in &pattern.variable_side {
                cone.push_equality(unit(d, pairs[i].variable));
                cone.push_inequality(pairs[i].function.gradient.clone());
            }
            Branch { pattern, cone }
        })
        .collect();
    Ok(ConeUnion { branches })
}

pub fn critical_cone(tangent: &ConeUnion, grad_f: &[f64]) -> Result<ConeUnion> {
    if grad_f.len() != tangent.dim() {
        return Err(Error::Dimension("objective gradient length".into()));
    }
    let vacuous = grad_f.iter().all(|g| *g == 0.0);
    Ok(ConeUnion {
        branches: tangent
            .branches
            .iter()
            .map(|b| {
                let mut cone = b.cone.clone();
                if !vacuous {
                    cone.push_equality(grad_f.to_vec());
                }
                Branch {
                    pattern: b.pattern.clone(),
                    cone,
                }
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Generators

/// `cone = span(lineality) + cone(rays)` with the rays orthogonal to the
/// lineality space; rays are extreme and unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSet {
    pub dim: usize,
    pub lineality: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
}

impl GeneratorSet {
    pub fn is_trivial(&self) -> bool {
        self.lineality.is_empty() && self.rays.is_empty()
    }

    /// Rays followed by `+l, −l` for each lineality vector.
    pub fn directions(&self) -> Vec<Vec<f64>> {
        let mut out = self.rays.clone();
        for l in &self.lineality {
            out.push(l.clone());
            out.push(l.iter().map(|v| -v).collect());
        }
        out
    }

    /// Reduce an arbitrary finite spanning set to lineality plus extreme rays.
    pub fn from_spanning(dim: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        let vs: Vec<Vec<f64>> = vectors
            .iter()
            .filter(|v| linalg::norm2(v) > 1e-12)
            .map(|v| normalize(v))
            .collect();
        let mut lin = Vec::new();
        let mut rest = Vec::new();
        for v in &vs {
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            if in_cone_of(&vs, &neg)? {
                lin.push(v.clone());
            } else {
                rest.push(v.clone());
            }
        }
        let lineality = linalg::orthonormalize(&lin);
        let mut rays: Vec<Vec<f64>> = Vec::new();
        for v in rest {
            let mut w = v;
            for l in &lineality {
                let c = linalg::dot(&w, l);
                w.iter_mut().zip(l).for_each(|(a, b)| *a -= c * b);
            }
            if linalg::norm2(&w) > 1e-9 {
                let w = normalize(&w);
                if !rays.iter().any(|r| linalg::norm_inf(&sub(r, &w)) < 1e-9) {
                    rays.push(w);
                }
            }
        }
        let mut i = 0;
        while i < rays.len() {
            let others: Vec<Vec<f64>> = rays
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, r)| r.clone())
                .collect();
            if in_cone_of(&others, &rays[i])? {
                rays.remove(i);
            } else {
                i += 1;
            }
        }
        Ok(GeneratorSet { dim, lineality, rays })
    }

    /// Coordinates `coords` of every generator, reduced again.
    pub fn project(&self, coords: &[usize]) -> Result<Self> {
        let pick = |v: &Vec<f64>| coords.iter().map(|&c| v[c]).collect::<Vec<f64>>();
        let spanning: Vec<Vec<f64>> = self.directions().iter().map(pick).collect();
        Self::from_spanning(coords.len(), &spanning)
    }

    pub fn effective_dim(&self) -> usize {
        self.lineality.len() + linalg::rank(&matrix_from_rows(self.dim, &self.rays))
    }
}

fn matrix_from_rows(dim: usize, rows: &[Vec<f64>]) -> DenseMatrix {
    if rows.is_empty() {
        return DenseMatrix::zeros(0, dim);
    }
    DenseMatrix::from_rows(rows).expect("uniform rows")
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = linalg::norm2(v);
    v.iter().map(|x| x / n).collect()
}

/// Scale so the first clearly nonzero coordinate has magnitude one.
fn lex_normalize(v: &[f64]) -> Vec<f64> {
    let scale = linalg::norm_inf(v);
    let first = v.iter().find(|x| x.abs() > 1e-9 * scale).copied().unwrap_or(1.0);
    v.iter().map(|x| x / first.abs()).collect()
}

fn in_cone_of(gens: &[Vec<f64>], target: &[f64]) -> Result<bool> {
    if gens.is_empty() {
        return Ok(linalg::norm_inf(target) <= 1e-12);
    }
    let d = target.len();
    let mut lp = LinearProgram::nonneg_vars(gens.len());
    for r in 0..d {
        lp.push(gens.iter().map(|g| g[r]).collect(), Relation::Eq, target[r]);
    }
    crate::lp::feasible(&lp)
}

fn rows_normalized(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .filter(|r| linalg::norm2(r) > 0.0)
        .map(|r| normalize(r))
        .collect()
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64) / (i as u64 + 1))
}

/// Generator representation of a cone given in half-space form.
pub fn generators(cone: &PolyhedralCone) -> Result<GeneratorSet> {
    let d = cone.dim;
    let eqs = rows_normalized(&cone.equalities);
    let ins = rows_normalized(&cone.inequalities);
    let span = linalg::null_space(&matrix_from_rows(d, &eqs));
    if span.len() > MAX_EFFECTIVE_DIM {
        return Err(Error::CapExceeded {
            what: "cone effective dimension",
            actual: span.len(),
            cap: MAX_EFFECTIVE_DIM,
        });
    }
    let mut all = eqs.clone();
    all.extend(ins.iter().cloned());
    let lineality = linalg::null_space(&matrix_from_rows(d, &all));
    let mut pin = eqs.clone();
    pin.extend(lineality.iter().cloned());
    // Orthonormal basis of the pointed part's linear hull.
    let basis = linalg::null_space(&matrix_from_rows(d, &pin));
    let r = basis.len();
    let to_space = |t: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|i| basis.iter().zip(t).map(|(b, ti)| b[i] * ti).sum())
            .collect()
    };
    // Inequalities in basis coordinates.
    let c: Vec<Vec<f64>> = ins
        .iter()
        .map(|a| basis.iter().map(|b| linalg::dot(a, b)).collect())
        .collect();
    let feasible = |t: &[f64]| c.iter().all(|row| linalg::dot(row, t) >= -tol::CONE_FEAS_TOL);

    let mut rays: Vec<Vec<f64>> = Vec::new();
    if r > 0 {
        let need = r - 1;
        if binomial(c.len(), need) > SUBSET_BUDGET {
            return Err(Error::CapExceeded {
                what: "extreme-ray candidate subsets",
                actual: binomial(c.len(), need).min(usize::MAX as u64) as usize,
                cap: SUBSET_BUDGET as usize,
            });
        }
        for subset in (0..c.len()).combinations(need) {
            let rows: Vec<Vec<f64>> = subset.iter().map(|&i| c[i].clone()).collect();
            let ns = linalg::null_space(&matrix_from_rows(r, &rows));
            if ns.len() != 1 {
                continue;
            }
            for s in [1.0, -1.0] {
                let t: Vec<f64> = ns[0].iter().map(|v| s * v).collect();
                if !feasible(&t) {
                    continue;
                }
                let u = normalize(&lex_normalize(&to_space(&t)));
                if !rays.iter().any(|q| linalg::norm_inf(&sub(q, &u)) < 1e-9) {
                    rays.push(u);
                }
            }
            if rays.len() + 2 * lineality.len() > MAX_GENERATORS {
                return Err(Error::CapExceeded {
                    what: "generator count",
                    actual: rays.len() + 2 * lineality.len(),
                    cap: MAX_GENERATORS,
                });
            }
        }
    }
    // Canonical order: lexicographically descending, so e₁ precedes e₂.
    rays.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(GeneratorSet {
        dim: d,
        lineality,
        rays,
    })
}

// ---------------------------------------------------------------------------
// Copositivity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopositivityVerdict {
    /// The requested verdict: strict or plain copositivity.
    pub holds: bool,
    pub strict: bool,
    pub copositive: bool,
    pub strictly_copositive: bool,
    /// Minimum of `uᵀQu` over the unit-generator simplex slice; `None` for
    /// the cone `{0}`.
    pub min_value: Option<f64>,
    /// Argmin direction (first found on ties).
    pub witness: Option<Vec<f64>>,
    pub tol: f64,
}

pub fn copositivity_test(q: &DenseMatrix, cone: &PolyhedralCone, strict: bool) -> Result<CopositivityVerdict> {
    if !q.is_square() || q.rows() != cone.dim {
        return Err(Error::Dimension("quadratic form and cone differ in dimension".into()));
    }
    copositivity_on_generators(q, &generators(cone)?, strict)
}

/// Exact minimization of `uᵀQu` over `{Gλ : λ ≥ 0, Σλ = 1}` by support enumeration.
pub fn copositivity_on_generators(q: &DenseMatrix, gens: &GeneratorSet, strict: bool) -> Result<CopositivityVerdict> {
    let tol = tol::COPOSITIVITY_REL_TOL * q.max_abs();
    let dirs = gens.directions();
    if dirs.is_empty() {
        return Ok(CopositivityVerdict {
            holds: true,
            strict,
            copositive: true,
            strictly_copositive: true,
            min_value: None,
            witness: None,
            tol,
        });
    }
    let nr = gens.rays.len();
    // Lineality pair id for each direction (rays have none).
    let pair_of = |i: usize| (i >= nr).then(|| (i - nr) / 2);
    let p = dirs.len();
    let qg: Vec<Vec<f64>> = dirs.iter().map(|g| q.mul_vec(g)).collect();
    let h = DenseMatrix::from_fn(p, p, |i, j| {
        0.5 * (linalg::dot(&dirs[i], &qg[j]) + linalg::dot(&dirs[j], &qg[i]))
    });
    let max_support = p.min(gens.effective_dim() + 1);
    let total: u64 = (1..=max_support).map(|s| binomial(p, s)).sum();
    if total > SUBSET_BUDGET {
        return Err(Error::CapExceeded {
            what: "copositivity support subsets",
            actual: total.min(usize::MAX as u64) as usize,
            cap: SUBSET_BUDGET as usize,
        });
    }
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for size in 1..=max_support {
        for support in (0..p).combinations(size) {
            let pairs: Vec<usize> = support.iter().filter_map(|&i| pair_of(i)).collect();
            if pairs.iter().duplicates().next().is_some() {
                continue;
            }
            let Some(lambda) = simplex_kkt_point(&h, &support)? else {
                continue;
            };
            let value = quad_on_support(&h, &support, &lambda);
            if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
                best = Some((value, support.clone(), lambda));
            }
        }
    }
    let (value, support, lambda) = best.expect("single-generator supports always solve");
    let mut witness = vec![0.0; gens.dim];
    for (&i, &l) in support.iter().zip(&lambda) {
        witness.iter_mut().zip(&dirs[i]).for_each(|(w, g)| *w += l * g);
    }
    let (copositive, strictly_copositive) = (value >= -tol, value > tol);
    Ok(CopositivityVerdict {
        holds: if strict { strictly_copositive } else { copositive },
        strict,
        copositive,
        strictly_copositive,
        min_value: Some(value),
        witness: Some(witness),
        tol,
    })
}

fn quad_on_support(h: &DenseMatrix, s: &[usize], l: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, &i) in s.iter().enumerate() {
        for (b, &j) in s.iter().enumerate() {
            acc += l[a] * h.get(i, j) * l[b];
        }
    }
    acc
}

/// Solve `H_SS λ = μ1`, `1ᵀλ = 1`; keep the point when `λ ≥ 0`.
fn simplex_kkt_point(h: &DenseMatrix, s: &[usize]) -> Result<Option<Vec<f64>>> {
    let k = s.len();
    let a = DenseMatrix::from_fn(k + 1, k + 1, |i, j| match (i < k, j < k) {
        (true, true) => h.get(s[i], s[j]),
        (true, false) => -1.0,
        (false, true) => 1.0,
        (false, false) => 0.0,
    });
    let mut rhs = vec![0.0; k + 1];
    rhs[k] = 1.0;
    let Some(sol) = linalg::solve_linear(&a, &rhs)? else {
        return Ok(None);
    };
    let lambda = &sol[..k];
    if lambda.iter().any(|&l| l < -1e-12) {
        return Ok(None);
    }
    let clipped: Vec<f64> = lambda.iter().map(|l| l.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    Ok(Some(clipped.iter().map(|l| l / sum).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{evaluate_at_reference, load_problem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { 0.0 })
    }

    fn micro() -> PointEvaluation {
        let s = load_problem(
            r#"{"kind":"ncp","upper_vars":["x"],"lower_vars":["y"],
                "objective":"0.5*(x^2 - y^2)","F":["y^4 + y + x"],
                "upper_constraints":["x >= 0"],"point":{"x":0,"y":0}}"#,
        )
        .unwrap();
        evaluate_at_reference(&s, 1e-9).unwrap()
    }

    #[test]
    fn micro_partition_and_branches() {
        let ev = micro();
        let part = classify_indices(&ev).unwrap();
        assert_eq!(
            part,
            IndexPartition {
                alpha: vec![],
                beta: vec![0],
                gamma: vec![]
            }
        );
        let t = tangent_cone_branches(&ev, &part, &upper_tangent_cone(&ev)).unwrap();
        assert_eq!(t.branches.len(), 2);
        let c = critical_cone(&t, &ev.f_jet.gradient).unwrap();
        assert_eq!(c, t);
        // Branch {1}: dx + dy = 0, dy ≥ 0, dx ≥ 0 is the origin only.
        assert!(generators(&t.branches[1].cone).unwrap().is_trivial());
        let g = generators(&t.branches[0].cone).unwrap();
        assert_eq!(g.rays, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn micro_union_matches_half_line() {
        let ev = micro();
        let part = classify_indices(&ev).unwrap();
        let t = tangent_cone_branches(&ev, &part, &upper_tangent_cone(&ev)).unwrap();
        for k in 0..100 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 100.0;
            let u = [th.cos(), th.sin()];
            let expected = u[1].abs() < 1e-12 && u[0] >= 0.0;
            assert_eq!(t.contains(&u, 1e-9), expected, "{u:?}");
        }
    }

    #[test]
    fn membership_examples() {
        let half = PolyhedralCone::whole(2)
            .with_equality(vec![0.0, 1.0])
            .with_inequality(vec![1.0, 0.0]);
        assert!(half.contains(&[0.0, 0.0], 1e-9));
        assert!(half.contains(&[1.0, 0.0], 1e-9));
        assert!(!half.contains(&[0.0, 1.0], 1e-9));
        assert!(!half.contains(&[-1.0, 0.0], 1e-9));
    }

    #[test]
    fn critical_cone_examples() {
        let t = ConeUnion {
            branches: vec![Branch {
                pattern: BranchPattern::from_mask(&[], 0),
                cone: PolyhedralCone::nonneg_orthant(2),
            }],
        };
        let c = critical_cone(&t, &[1.0, 0.0]).unwrap();
        let g = generators(&c.branches[0].cone).unwrap();
        assert_eq!(g.rays, vec![vec![0.0, 1.0]]);
        let c = critical_cone(&t, &[1.0, 1.0]).unwrap();
        assert!(generators(&c.branches[0].cone).unwrap().is_trivial());
    }

    #[test]
    fn copositivity_examples() {
        let half = PolyhedralCone::whole(2)
            .with_equality(vec![0.0, 1.0])
            .with_inequality(vec![1.0, 0.0]);
        let v = copositivity_test(&diag(&[1.0, -1.0]), &half, true).unwrap();
        assert!(v.strictly_copositive);
        assert_eq!(v.min_value, Some(1.0));

        let orthant = PolyhedralCone::nonneg_orthant(2);
        let v = copositivity_test(&diag(&[1.0, -1.0]), &orthant, false).unwrap();
        assert!(!v.copositive);
        assert_eq!(v.witness, Some(vec![0.0, 1.0]));

        let v = copositivity_test(&DenseMatrix::identity(3), &PolyhedralCone::whole(3), true).unwrap();
        assert!(v.strictly_copositive);

        let swap = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let v = copositivity_test(&swap, &orthant, true).unwrap();
        assert!(v.copositive && !v.strictly_copositive);
        assert_eq!(v.witness, Some(vec![1.0, 0.0]));

        let origin = PolyhedralCone::whole(2)
            .with_equality(vec![1.0, 0.0])
            .with_equality(vec![0.0, 1.0]);
        let v = copositivity_test(&diag(&[-1.0, -1.0]), &origin, true).unwrap();
        assert!(v.strictly_copositive && v.witness.is_none());
    }

    #[test]
    fn lineality_is_split_into_pairs() {
        // Half-plane y ≥ 0 in R²: lineality along x.
        let c = PolyhedralCone::whole(2).with_inequality(vec![0.0, 1.0]);
        let g = generators(&c).unwrap();
        assert_eq!(g.lineality.len(), 1);
        assert_eq!(g.rays.len(), 1);
        // xy is indefinite on the half-plane.
        let q = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let v = copositivity_on_generators(&q, &g, false).unwrap();
        assert!(!v.copositive);
        let w = v.witness.unwrap();
        assert!(q.quadratic_form(&w) < 0.0 && c.contains(&w, 1e-9));
        // x² is copositive but not strictly (zero along y).
        let v = copositivity_on_generators(&diag(&[1.0, 0.0]), &g, true).unwrap();
        assert!(v.copositive && !v.strictly_copositive);
    }

    #[test]
    fn generators_reproduce_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let mut c = PolyhedralCone::whole(3);
            for _ in 0..rng.gen_range(1..5) {
                c.push_inequality((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
            }
            let g = generators(&c).unwrap();
            for d in g.directions() {
                assert!(c.contains(&d, 1e-8));
            }
            // Random cone members are nonnegative combinations of generators.
            for _ in 0..20 {
                let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if c.contains(&u, 0.0) {
                    assert!(in_cone_of(&g.directions(), &u).unwrap());
                }
            }
        }
    }

    #[test]
    fn from_spanning_recovers_structure() {
        let g =
            GeneratorSet::from_spanning(2, &[vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(g.lineality.len(), 1);
        assert_eq!(g.rays, vec![vec![0.0, 1.0]]);
        let g = GeneratorSet::from_spanning(2, &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(g.rays.len(), 2);
    }

    #[test]
    fn copositivity_agrees_with_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let q = {
                let mut a = DenseMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
                let t = a.transpose();
                a = DenseMatrix::from_fn(3, 3, |i, j| 0.5 * (a.get(i, j) + t.get(i, j)));
                a
            };
            let cone = PolyhedralCone::nonneg_orthant(3);
            let g = generators(&cone).unwrap();
            let v = copositivity_on_generators(&q, &g, false).unwrap();
            if v.copositive {
                for _ in 0..500 {
                    let l: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let u: Vec<f64> = (0..3).map(|i| l[i]).collect();
                    assert!(q.quadratic_form(&u) >= -1e-6);
                }
            } else {
                assert!(q.quadratic_form(v.witness.as_ref().unwrap()) < 0.0);
            }
        }
    }
}
