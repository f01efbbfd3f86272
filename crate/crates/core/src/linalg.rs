//! Small dense linear algebra: solves, determinants, principal minors,
//! Schur complements and null spaces. Everything is desk scale; no
//! factorization is cached.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix{:?}", self.to_rows())
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Build from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self.get(i, k) * other.get(k, j)).sum()
        }))
    }

    /// Submatrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> DenseMatrix {
        Self::from_fn(rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `uᵀ A u` for square `A`.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        dot(u, &self.mul_vec(u))
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// LU factorization with partial pivoting. `None` when a pivot falls below
/// `PIVOT_REL_TOL` times the original scale of its row.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    fn factor(a: &DenseMatrix) -> Option<Lu> {
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale: Vec<f64> = (0..n).map(|i| norm_inf(a.row(i))).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pivot <= tol::PIVOT_REL_TOL * scale[perm[p]] || pivot == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Some(Lu { n, lu, perm, sign })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    fn determinant(&self) -> f64 {
        (0..self.n).fold(self.sign, |d, i| d * self.lu[i * self.n + i])
    }
}

/// Solve `A x = b`. `Ok(None)` is the singular flag.
pub fn solve_linear(a: &DenseMatrix, b: &[f64]) -> Result<Option<Vec<f64>>> {
    if !a.is_square() || b.len() != a.rows {
        return Err(Error::Dimension(format!(
            "solve with {}x{} matrix and rhs of length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let Some(lu) = Lu::factor(a) else {
        return Ok(None);
    };
    let x = lu.solve(b);
    let residual = norm_inf(&a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| ax - bi).collect::<Vec<_>>());
    if !x.iter().all(|v| v.is_finite())
        || residual > tol::SOLVE_RESIDUAL_TOL * (1.0 + norm_inf(b)) * (1.0 + a.max_abs())
    {
        return Ok(None);
    }
    Ok(Some(x))
}

/// Determinant via LU; exactly zero when elimination meets a negligible pivot.
pub fn determinant(a: &DenseMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Dimension("determinant of a non-square matrix".into()));
    }
    if a.rows == 0 {
        return Ok(1.0);
    }
    Ok(Lu::factor(a).map_or(0.0, |lu| lu.determinant()))
}

pub const P_MATRIX_MAX_DIM: usize = 16;

/// Outcome of the principal-minor P-matrix test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PMatrixCertificate {
    pub is_p_matrix: bool,
    /// First principal index subset (ascending bitmask order) whose minor
    /// is not strictly positive.
    pub violating_subset: Option<Vec<usize>>,
    pub violating_minor: Option<f64>,
}

/// True iff every principal minor exceeds `MINOR_REL_TOL·‖A‖∞^k`.
pub fn is_p_matrix(a: &DenseMatrix) -> Result<PMatrixCertificate> {
    if !a.is_square() {
        return Err(Error::Dimension("P-matrix test needs a square matrix".into()));
    }
    let n = a.rows;
    if n > P_MATRIX_MAX_DIM {
        return Err(Error::CapExceeded {
            what: "P-matrix dimension",
            actual: n,
            cap: P_MATRIX_MAX_DIM,
        });
    }
    let scale = a.norm_inf();
    for mask in 1u32..(1u32 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let minor = determinant(&a.select(&idx, &idx))?;
        let threshold = tol::MINOR_REL_TOL * scale.powi(idx.len() as i32);
        if minor <= threshold {
            return Ok(PMatrixCertificate {
                is_p_matrix: false,
                violating_subset: Some(idx),
                violating_minor: Some(minor),
            });
        }
    }
    Ok(PMatrixCertificate {
        is_p_matrix: true,
        violating_subset: None,
        violating_minor: None,
    })
}

/// `A_bb − A_ba A_aa⁻¹ A_ab`; `Ok(None)` when `A_aa` is singular.
pub fn schur_complement(a: &DenseMatrix, rows_a: &[usize], rows_b: &[usize]) -> Result<Option<DenseMatrix>> {
    let overlap: Vec<usize> = rows_a.iter().copied().filter(|i| rows_b.contains(i)).collect();
    if !overlap.is_empty() {
        return Err(Error::OverlappingIndexSets(overlap));
    }
    if !a.is_square() || rows_a.iter().chain(rows_b).any(|&i| i >= a.rows) {
        return Err(Error::Dimension("Schur complement index out of range".into()));
    }
    let a_bb = a.select(rows_b, rows_b);
    if rows_a.is_empty() {
        return Ok(Some(a_bb));
    }
    let a_aa = a.select(rows_a, rows_a);
    let Some(lu) = Lu::factor(&a_aa) else {
        return Ok(None);
    };
    let a_ab = a.select(rows_a, rows_b);
    let a_ba = a.select(rows_b, rows_a);
    let mut out = a_bb;
    for j in 0..rows_b.len() {
        let col: Vec<f64> = (0..rows_a.len()).map(|i| a_ab.get(i, j)).collect();
        let z = lu.solve(&col);
        for i in 0..rows_b.len() {
            let v = out.get(i, j) - dot(a_ba.row(i), &z);
            out.set(i, j, v);
        }
    }
    Ok(Some(out))
}

/// Reduced row echelon form of `[A | b]` on row-normalized data.
struct Echelon {
    /// Reduced rows (only the nonzero ones), each of length cols (+1 if augmented).
    rows: Vec<Vec<f64>>,
    pivots: Vec<usize>,
    cols: usize,
    inconsistent: bool,
}

fn echelon(a: &DenseMatrix, rhs: Option<&[f64]>) -> Echelon {
    let cols = a.cols;
    let mut m: Vec<Vec<f64>> = (0..a.rows)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            if let Some(b) = rhs {
                r.push(b[i]);
            }
            let s = norm_inf(&r[..cols]);
            if s > 0.0 {
                r.iter_mut().for_each(|v| *v /= s);
            }
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == m.len() {
            break;
        }
        let (p, best) = (r..m.len())
            .map(|i| (i, m[i][c].abs()))
            .fold((r, 0.0), |b, x| if x.1 > b.1 { x } else { b });
        if best <= tol::RANK_TOL {
            for row in m.iter_mut().skip(r) {
                row[c] = 0.0;
            }
            continue;
        }
        m.swap(r, p);
        let d = m[r][c];
        m[r].iter_mut().for_each(|v| *v /= d);
        let pivot_row = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && row[c] != 0.0 {
                let f = row[c];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        pivots.push(c);
        r += 1;
    }
    let inconsistent = rhs.is_some() && m[r..].iter().any(|row| row[cols].abs() > tol::RANK_TOL * 10.0);
    m.truncate(r);
    Echelon {
        rows: m,
        pivots,
        cols,
        inconsistent,
    }
}

pub fn rank(a: &DenseMatrix) -> usize {
    echelon(a, None).pivots.len()
}

fn null_basis_from(e: &Echelon) -> Vec<Vec<f64>> {
    let free: Vec<usize> = (0..e.cols).filter(|c| !e.pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![0.0; e.cols];
            v[f] = 1.0;
            for (row, &p) in e.rows.iter().zip(&e.pivots) {
                v[p] = -row[f];
            }
            v
        })
        .collect()
}

/// Orthonormal basis of `{x : A x = 0}`.
pub fn null_space(a: &DenseMatrix) -> Vec<Vec<f64>> {
    if a.rows == 0 {
        return (0..a.cols)
            .map(|j| {
                let mut v = vec![0.0; a.cols];
                v[j] = 1.0;
                v
            })
            .collect();
    }
    orthonormalize(&null_basis_from(&echelon(a, None)))
}

/// Modified Gram-Schmidt; drops vectors dependent on earlier ones.
pub fn orthonormalize(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = norm2(&w);
        if n > 1e-9 * norm2(v).max(1e-300) && n > 1e-12 {
            out.push(w.iter().map(|x| x / n).collect());
        }
    }
    out
}

/// General solution of a possibly singular or rectangular system.
#[derive(Debug, Clone)]
pub struct AffineSolution {
    pub particular: Vec<f64>,
    /// Orthonormal basis of the null space of `A`.
    pub null_basis: Vec<Vec<f64>>,
}

/// Solve `A x = b` in the consistent case; `None` when inconsistent.
pub fn solve_consistent(a: &DenseMatrix, b: &[f64]) -> Result<Option<AffineSolution>> {
    if b.len() != a.rows {
        return Err(Error::Dimension("rhs length differs from row count".into()));
    }
    let e = echelon(a, Some(b));
    if e.inconsistent {
        return Ok(None);
    }
    let mut particular = vec![0.0; a.cols];
    for (row, &p) in e.rows.iter().zip(&e.pivots) {
        particular[p] = row[a.cols];
    }
    let residual: Vec<f64> = a.mul_vec(&particular).iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = (1.0 + norm_inf(b)) * (1.0 + a.max_abs());
    if norm_inf(&residual) > tol::SOLVE_RESIDUAL_TOL * scale {
        return Ok(None);
    }
    Ok(Some(AffineSolution {
        particular,
        null_basis: orthonormalize(&null_basis_from(&e)),
    }))
}

/// Minimum-norm least-squares solution of `A x ≈ b`.
pub fn least_squares(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let at = a.transpose();
    let ata = at.matmul(a)?;
    let atb = at.mul_vec(b);
    let sol = solve_consistent(&ata, &atb)?.ok_or_else(|| Error::Dimension("normal equations inconsistent".into()))?;
    // Project out the null space for the minimum-norm representative.
    let mut x = sol.particular;
    for q in &sol.null_basis {
        let c = dot(&x, q);
        x.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn solve_identity_and_singular() {
        let x = solve_linear(&DenseMatrix::identity(2), &[3.0, -1.0]).unwrap();
        assert_eq!(x, Some(vec![3.0, -1.0]));
        let s = solve_linear(&m(&[&[1.0, 1.0], &[1.0, 1.0]]), &[1.0, 2.0]).unwrap();
        assert_eq!(s, None);
        assert!(solve_linear(&DenseMatrix::identity(2), &[1.0]).is_err());
    }

    #[test]
    fn p_matrix_examples() {
        assert!(is_p_matrix(&DenseMatrix::identity(2)).unwrap().is_p_matrix);
        let c = is_p_matrix(&m(&[&[-1.0]])).unwrap();
        assert!(!c.is_p_matrix);
        assert_eq!(c.violating_subset, Some(vec![0]));
        // minors: 1, 1, det = 1
        assert!(is_p_matrix(&m(&[&[1.0, -3.0], &[0.0, 1.0]])).unwrap().is_p_matrix);
        assert!(matches!(
            is_p_matrix(&DenseMatrix::identity(17)),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn schur_examples() {
        let s = schur_complement(&DenseMatrix::identity(4), &[0, 1], &[2, 3]).unwrap();
        assert_eq!(s, Some(DenseMatrix::identity(2)));
        let a = m(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let s = schur_complement(&a, &[0], &[1]).unwrap().unwrap();
        assert!((s.get(0, 0) - 0.5).abs() < 1e-15);
        let s = schur_complement(&a, &[], &[0, 1]).unwrap().unwrap();
        assert_eq!(s, a);
        assert!(matches!(
            schur_complement(&a, &[0], &[0, 1]),
            Err(Error::OverlappingIndexSets(_))
        ));
        let sing = m(&[&[0.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(schur_complement(&sing, &[0], &[1]).unwrap(), None);
    }

    #[test]
    fn null_space_and_consistent_solve() {
        let a = m(&[&[1.0, 1.0, 0.0]]);
        let n = null_space(&a);
        assert_eq!(n.len(), 2);
        for v in &n {
            assert!(dot(a.row(0), v).abs() < 1e-12);
        }
        let sol = solve_consistent(&m(&[&[1.0, 1.0], &[2.0, 2.0]]), &[1.0, 2.0])
            .unwrap()
            .unwrap();
        assert_eq!(sol.null_basis.len(), 1);
        assert!(solve_consistent(&m(&[&[1.0, 1.0], &[2.0, 2.0]]), &[1.0, 3.0])
            .unwrap()
            .is_none());
        let ls = least_squares(&m(&[&[1.0], &[1.0]]), &[1.0, 3.0]).unwrap();
        assert!((ls[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn determinant_matches_cofactor_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = DenseMatrix::from_fn(3, 3, |_, _| rng.gen_range(-2.0..2.0));
            let g = |i, j| a.get(i, j);
            let cof = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
            assert!((determinant(&a).unwrap() - cof).abs() < 1e-12);
        }
    }

    #[test]
    fn p_matrix_is_hereditary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut found = 0;
        while found < 20 {
            let a = DenseMatrix::from_fn(4, 4, |i, j| {
                if i == j {
                    rng.gen_range(0.5..3.0)
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            });
            if !is_p_matrix(&a).unwrap().is_p_matrix {
                continue;
            }
            found += 1;
            for mask in 1u32..16 {
                let idx: Vec<usize> = (0..4).filter(|i| mask & (1 << i) != 0).collect();
                assert!(is_p_matrix(&a.select(&idx, &idx)).unwrap().is_p_matrix);
            }
        }
    }

    #[test]
    fn positive_definite_is_p_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let b = DenseMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
            let mut a = b.transpose().matmul(&b).unwrap();
            for i in 0..4 {
                a.set(i, i, a.get(i, i) + 1e-3);
            }
            assert!(is_p_matrix(&a).unwrap().is_p_matrix);
        }
    }
}
