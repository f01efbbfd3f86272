//! Mixed linear complementarity problems solved by exhaustive enumeration
//! of complementarity patterns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::tol;

pub const MAX_DIM: usize = 24;
pub const MAX_COMPLEMENTARY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    /// `(Mu + q)_i = 0`
    Equation,
    /// `u_i ≥ 0`, `(Mu + q)_i ≥ 0`, product zero.
    Complementary,
    /// `u_i = 0`
    FixedZero,
}

#[derive(Debug, Clone)]
pub struct MixedLcp {
    pub m: DenseMatrix,
    pub q: Vec<f64>,
    pub row_kind: Vec<RowKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcpSolutionSet {
    /// Isolated solutions ordered by the first pattern that produced them.
    pub solutions: Vec<Vec<f64>>,
    /// False when some pattern carries a continuum of solutions.
    pub exhaustive: bool,
    /// Pattern bitmasks whose pinned system has a feasible affine subset
    /// of positive dimension.
    pub continuum_patterns: Vec<u32>,
}

impl LcpSolutionSet {
    pub fn is_unique(&self) -> bool {
        self.exhaustive && self.solutions.len() == 1
    }

    pub fn has_continuum(&self) -> bool {
        !self.continuum_patterns.is_empty()
    }
}

impl MixedLcp {
    pub fn new(m: DenseMatrix, q: Vec<f64>, row_kind: Vec<RowKind>) -> Result<Self> {
        let n = q.len();
        if m.rows() != n || m.cols() != n || row_kind.len() != n {
            return Err(Error::Dimension(format!(
                "mixed LCP with {}x{} matrix, {} offsets, {} row kinds",
                m.rows(),
                m.cols(),
                n,
                row_kind.len()
            )));
        }
        Ok(MixedLcp { m, q, row_kind })
    }

    /// Plain LCP: every row complementary.
    pub fn standard(m: DenseMatrix, q: Vec<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(m, q, vec![RowKind::Complementary; n])
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn affine(&self, u: &[f64]) -> Vec<f64> {
        self.m.mul_vec(u).iter().zip(&self.q).map(|(a, b)| a + b).collect()
    }

    fn complementary_rows(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.row_kind[i] == RowKind::Complementary)
            .collect()
    }

    fn sign_tol(&self) -> f64 {
        tol::LCP_SIGN_TOL * linalg::norm_inf(&self.q).max(1.0)
    }

    /// The defining predicate, with slack `tol` on every condition.
    pub fn satisfies(&self, u: &[f64], tol: f64) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        let w = self.affine(u);
        self.row_kind.iter().enumerate().all(|(i, k)| match k {
            RowKind::Equation => w[i].abs() <= tol,
            RowKind::FixedZero => u[i].abs() <= tol,
            RowKind::Complementary => u[i] >= -tol && w[i] >= -tol && (u[i] * w[i]).abs() <= tol,
        })
    }

    /// Residual scale for [`MixedLcp::satisfies`] checks on reported solutions.
    pub fn residual_tol(&self) -> f64 {
        tol::LCP_RESIDUAL_TOL * (1.0 + linalg::norm_inf(&self.q)) * (1.0 + self.m.max_abs())
    }

    /// Pinned square system for a pattern: row `i` is either `M_i u = -q_i`
    /// or `u_i = 0`.
    fn pattern_system(&self, comp: &[usize], mask: u32) -> (DenseMatrix, Vec<f64>) {
        let n = self.dim();
        let mut a = DenseMatrix::zeros(n, n);
        let mut b = vec![0.0; n];
        for (i, (kind, rhs)) in self.row_kind.iter().zip(b.iter_mut()).enumerate() {
            let equation = match kind {
                RowKind::Equation => true,
                RowKind::FixedZero => false,
                RowKind::Complementary => {
                    let j = comp.iter().position(|&c| c == i).unwrap_or(0);
                    mask & (1 << j) != 0
                }
            };
            if equation {
                for k in 0..n {
                    a.set(i, k, self.m.get(i, k));
                }
                *rhs = -self.q[i];
            } else {
                a.set(i, i, 1.0);
            }
        }
        (a, b)
    }
}

enum PatternOutcome {
    None,
    Point(Vec<f64>),
    Continuum,
}

/// Enumerate all complementarity patterns and collect every solution.
pub fn solve_mixed_lcp(p: &MixedLcp) -> Result<LcpSolutionSet> {
    let n = p.dim();
    if n > MAX_DIM {
        return Err(Error::CapExceeded {
            what: "mixed LCP dimension",
            actual: n,
            cap: MAX_DIM,
        });
    }
    let comp = p.complementary_rows();
    if comp.len() > MAX_COMPLEMENTARY {
        return Err(Error::CapExceeded {
            what: "complementary rows",
            actual: comp.len(),
            cap: MAX_COMPLEMENTARY,
        });
    }
    let mut out = LcpSolutionSet {
        solutions: Vec::new(),
        exhaustive: true,
        continuum_patterns: Vec::new(),
    };
    for mask in 0u32..(1u32 << comp.len()) {
        match solve_pattern(p, &comp, mask)? {
            PatternOutcome::None => {}
            PatternOutcome::Continuum => {
                out.exhaustive = false;
                out.continuum_patterns.push(mask);
            }
            PatternOutcome::Point(u) => {
                let dup = out
                    .solutions
                    .iter()
                    .any(|s| linalg::norm_inf(&sub(s, &u)) <= tol::LCP_DEDUP_TOL);
                if !dup {
                    out.solutions.push(u);
                }
            }
        }
    }
    Ok(out)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn is_equation_side(comp_pos: usize, mask: u32) -> bool {
    mask & (1 << comp_pos) != 0
}

fn sign_ok(p: &MixedLcp, comp: &[usize], u: &[f64], tol: f64) -> bool {
    let w = p.affine(u);
    comp.iter().all(|&i| u[i] >= -tol && w[i] >= -tol)
}

/// Snap tiny sign violations created by round-off back onto the boundary.
fn polish(p: &MixedLcp, comp: &[usize], mask: u32, mut u: Vec<f64>) -> Vec<f64> {
    for (j, &i) in comp.iter().enumerate() {
        if is_equation_side(j, mask) && u[i] < 0.0 {
            u[i] = 0.0;
        }
    }
    for (i, k) in p.row_kind.iter().enumerate() {
        if *k == RowKind::FixedZero {
            u[i] = 0.0;
        }
    }
    u
}

fn solve_pattern(p: &MixedLcp, comp: &[usize], mask: u32) -> Result<PatternOutcome> {
    let (a, b) = p.pattern_system(comp, mask);
    let tol = p.sign_tol();
    if let Some(u) = linalg::solve_linear(&a, &b)? {
        if !sign_ok(p, comp, &u, tol) {
            return Ok(PatternOutcome::None);
        }
        let u = polish(p, comp, mask, u);
        return Ok(if p.satisfies(&u, p.residual_tol().max(tol)) {
            PatternOutcome::Point(u)
        } else {
            PatternOutcome::None
        });
    }
    let Some(sol) = linalg::solve_consistent(&a, &b)? else {
        return Ok(PatternOutcome::None);
    };
    // u = p0 + N t; sign rows become linear constraints on t.
    let n = p.dim();
    let k = sol.null_basis.len();
    let col = |i: usize| -> Vec<f64> { sol.null_basis.iter().map(|v| v[i]).collect() };
    let mut lp = LinearProgram::free_vars(k);
    let mn = p.m.mul_vec(&sol.particular);
    for (j, &i) in comp.iter().enumerate() {
        if is_equation_side(j, mask) {
            // u_i ≥ 0
            lp.push(col(i), Relation::Ge, -sol.particular[i] - tol);
        } else {
            // (M u + q)_i ≥ 0
            let row: Vec<f64> = sol.null_basis.iter().map(|v| linalg::dot(p.m.row(i), v)).collect();
            lp.push(row, Relation::Ge, -(mn[i] + p.q[i]) - tol);
        }
    }
    let anchor = match lp.solve()? {
        LpOutcome::Infeasible => return Ok(PatternOutcome::None),
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Unbounded => unreachable!("zero objective cannot be unbounded"),
    };
    // Range of each coordinate of u over the feasible slice.
    for i in 0..n {
        let c = col(i);
        if linalg::norm_inf(&c) <= tol::RANK_TOL {
            continue;
        }
        let lo = lp.clone().with_objective(c.clone());
        let hi = lp.clone().with_objective(c.iter().map(|v| -v).collect());
        let (Some((_, a)), Some((_, b))) = (lo.solve()?.optimal(), hi.solve()?.optimal()) else {
            return Ok(PatternOutcome::Continuum);
        };
        if -b - a > tol::LCP_DEDUP_TOL {
            return Ok(PatternOutcome::Continuum);
        }
    }
    let mut u = sol.particular.clone();
    for (t, v) in anchor.iter().zip(&sol.null_basis) {
        u.iter_mut().zip(v).for_each(|(ui, vi)| *ui += t * vi);
    }
    let u = polish(p, comp, mask, u);
    Ok(if p.satisfies(&u, p.residual_tol().max(tol)) {
        PatternOutcome::Point(u)
    } else {
        PatternOutcome::None
    })
}
