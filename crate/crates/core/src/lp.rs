//! Dense two-phase simplex with Bland's rule for the small auxiliary linear
//! programs (cone feasibility, multiplier signs, range checks).

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-8;
const MAX_ITERATIONS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min cᵀx` subject to linear rows; variables are nonnegative unless marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub free: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, *value)),
            _ => None,
        }
    }
}

impl LinearProgram {
    /// All variables free.
    pub fn free_vars(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            free: vec![true; n],
        }
    }

    pub fn nonneg_vars(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            free: vec![false; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        debug_assert_eq!(coeffs.len(), self.dim());
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self
    }

    /// Box `-bound ≤ x_j ≤ bound` on every variable.
    pub fn push_box(&mut self, bound: f64) -> &mut Self {
        let n = self.dim();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            self.push(e.clone(), Relation::Le, bound);
            self.push(e, Relation::Ge, -bound);
        }
        self
    }

    pub fn with_objective(mut self, c: Vec<f64>) -> Self {
        self.objective = c;
        self
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        minimize(self)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, z: &mut [f64], r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    row.iter_mut().zip(&prow).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        let f = z[c];
        if f != 0.0 {
            z.iter_mut().zip(&prow).for_each(|(v, pv)| *v -= f * pv);
        }
        self.basis[r] = c;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut z = cost.to_vec();
        z.push(0.0);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                z.iter_mut().zip(row).for_each(|(v, a)| *v -= cb * a);
            }
        }
        z
    }

    /// Bland's-rule simplex on columns where `allowed` is true. `Ok(false)` if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<bool> {
        let mut z = self.reduced_costs(cost);
        for _ in 0..MAX_ITERATIONS {
            let Some(c) = (0..self.width).find(|&j| allowed[j] && z[j] < -PIVOT_EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > PIVOT_EPS {
                    let ratio = row[self.width] / row[c];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(&mut z, r, c);
        }
        Err(Error::LpIterationLimit)
    }
}

/// Solve the program with the two-phase method.
pub fn minimize(lp: &LinearProgram) -> Result<LpOutcome> {
    let n = lp.dim();
    if lp.free.len() != n || lp.constraints.iter().any(|c| c.coeffs.len() != n) {
        return Err(Error::Dimension("linear program rows differ in length".into()));
    }
    // Column layout: structural (free vars split), slacks, artificials.
    let mut col_of = Vec::with_capacity(n);
    let mut n_struct = 0;
    for &f in &lp.free {
        col_of.push(n_struct);
        n_struct += if f { 2 } else { 1 };
    }
    let n_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
    let m = lp.constraints.len();
    let width = n_struct + n_slack + m;
    let mut rows = Vec::with_capacity(m);
    let mut slack = n_struct;
    for (i, con) in lp.constraints.iter().enumerate() {
        let mut row = vec![0.0; width + 1];
        let max = con.coeffs.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let scale = if max > 0.0 { max } else { 1.0 };
        for j in 0..n {
            let a = con.coeffs[j] / scale;
            row[col_of[j]] = a;
            if lp.free[j] {
                row[col_of[j] + 1] = -a;
            }
        }
        match con.relation {
            Relation::Le => {
                row[slack] = 1.0;
                slack += 1;
            }
            Relation::Ge => {
                row[slack] = -1.0;
                slack += 1;
            }
            Relation::Eq => {}
        }
        row[width] = con.rhs / scale;
        if row[width] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        row[n_struct + n_slack + i] = 1.0;
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        basis: (0..m).map(|i| n_struct + n_slack + i).collect(),
        width,
    };

    let mut phase1 = vec![0.0; width];
    phase1[n_struct + n_slack..].iter_mut().for_each(|v| *v = 1.0);
    tab.optimize(&phase1, &vec![true; width])?;
    let infeas: f64 = tab
        .rows
        .iter()
        .zip(&tab.basis)
        .filter(|(_, &b)| b >= n_struct + n_slack)
        .map(|(r, _)| r[width])
        .sum();
    if infeas > FEAS_EPS {
        return Ok(LpOutcome::Infeasible);
    }
    // Drive zero-level artificials out of the basis or drop redundant rows.
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= n_struct + n_slack {
            let c = (0..n_struct + n_slack).find(|&j| tab.rows[i][j].abs() > PIVOT_EPS);
            match c {
                Some(c) => {
                    let mut dummy = vec![0.0; width + 1];
                    tab.pivot(&mut dummy, i, c);
                }
                None => {
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    let mut cost = vec![0.0; width];
    for j in 0..n {
        cost[col_of[j]] = lp.objective[j];
        if lp.free[j] {
            cost[col_of[j] + 1] = -lp.objective[j];
        }
    }
    let mut allowed = vec![true; width];
    allowed[n_struct + n_slack..].iter_mut().for_each(|a| *a = false);
    if !tab.optimize(&cost, &allowed)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut cols = vec![0.0; width];
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        cols[b] = row[width];
    }
    let x: Vec<f64> = (0..n)
        .map(|j| {
            let v = cols[col_of[j]];
            if lp.free[j] {
                v - cols[col_of[j] + 1]
            } else {
                v
            }
        })
        .collect();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { x, value })
}

/// True when the rows admit a solution.
pub fn feasible(lp: &LinearProgram) -> Result<bool> {
    let probe = LinearProgram {
        objective: vec![0.0; lp.dim()],
        ..lp.clone()
    };
    Ok(!matches!(minimize(&probe)?, LpOutcome::Infeasible))
}
