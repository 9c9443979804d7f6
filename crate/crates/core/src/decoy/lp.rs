//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Sized for the decoy problems: a few dozen variables and rows. Every
//! variable is nonnegative; finite upper bounds become explicit rows.

use serde::{Deserialize, Serialize};

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    /// Signed violation, scaled by the row magnitude. Zero or negative when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let diff = self.lhs(x) - self.rhs;
        let v = match self.relation {
            Relation::Le => diff,
            Relation::Ge => -diff,
            Relation::Eq => diff.abs(),
        };
        v / self.scale()
    }

    fn scale(&self) -> f64 {
        let s = if self.rhs != 0.0 { self.rhs.abs() } else { self.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs())) };
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// `optimize objective . x` subject to `rows`, `0 <= x_i <= upper_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub direction: Direction,
    pub rows: Vec<LinearConstraint>,
    pub upper: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(n_vars: usize, direction: Direction) -> Self {
        Self { objective: vec![0.0; n_vars], direction, rows: Vec::new(), upper: vec![None; n_vars] }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, row: LinearConstraint) {
        debug_assert_eq!(row.coeffs.len(), self.n_vars());
        self.rows.push(row);
    }

    pub fn is_feasible_point(&self, x: &[f64], tol: f64) -> bool {
        x.iter().zip(&self.upper).all(|(&v, u)| v >= -tol && u.is_none_or(|u| v <= u + tol))
            && self.rows.iter().all(|r| r.violation(x) <= tol)
    }

    pub fn solve(&self) -> LpSolution {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_cols: usize,
    artificial_start: usize,
    /// Column scale: the tableau works in `z_j = d_j x_j`.
    col_scale: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
        for r in &lp.rows {
            let s = r.scale();
            rows.push((r.coeffs.iter().map(|a| a / s).collect::<Vec<_>>(), r.relation, r.rhs / s));
        }
        let mut col_scale = vec![1.0; n];
        for (j, d) in col_scale.iter_mut().enumerate() {
            let m = rows.iter().fold(0.0f64, |m, r| m.max(r.0[j].abs()));
            if m > 0.0 {
                *d = m;
            }
        }
        for row in rows.iter_mut() {
            for (a, d) in row.0.iter_mut().zip(&col_scale) {
                *a /= d;
            }
        }
        for (i, u) in lp.upper.iter().enumerate() {
            if let Some(u) = *u {
                let mut c = vec![0.0; n];
                c[i] = 1.0;
                rows.push((c, Relation::Le, u * col_scale[i]));
            }
        }
        for row in rows.iter_mut() {
            if row.2 < 0.0 {
                row.0.iter_mut().for_each(|a| *a = -*a);
                row.2 = -row.2;
                row.1 = match row.1 {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let artificial_start = n + n_slack;
        let n_cols = artificial_start + n_art;
        let mut t = vec![vec![0.0; n_cols + 1]; m + 1];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, artificial_start);
        for (i, (coeffs, rel, rhs)) in rows.into_iter().enumerate() {
            t[i][..n].copy_from_slice(&coeffs);
            t[i][n_cols] = rhs;
            match rel {
                Relation::Le => {
                    t[i][slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    t[i][slack] = -1.0;
                    slack += 1;
                    t[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    t[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self { t, basis, n_struct: n, n_cols, artificial_start, col_scale }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn set_objective(&mut self, costs: &[f64]) {
        let m = self.m();
        let mut obj = vec![0.0; self.n_cols + 1];
        obj[..costs.len()].copy_from_slice(costs);
        for i in 0..m {
            let cb = costs.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&self.t[i]) {
                    *o -= cb * v;
                }
            }
        }
        self.t[m] = obj;
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Minimizes the current objective row over columns `< allowed`.
    fn iterate(&mut self, allowed: usize, iterations: &mut usize) -> LpStatus {
        let m = self.m();
        loop {
            if *iterations >= MAX_ITERATIONS {
                return LpStatus::IterationLimit;
            }
            let Some(col) = (0..allowed).find(|&j| self.t[m][j] < -COST_EPS) else {
                return LpStatus::Optimal;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][col];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][self.n_cols] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14 * br.abs().max(1.0)
                                || (ratio <= br + 1e-14 * br.abs().max(1.0) && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = best else {
                return LpStatus::Unbounded;
            };
            self.pivot(row, col);
            *iterations += 1;
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpSolution {
        let n = self.n_struct;
        let m = self.m();
        let mut iterations = 0;
        let fail = |status, iterations| LpSolution { status, value: f64::NAN, x: vec![f64::NAN; n], iterations };

        if self.artificial_start < self.n_cols {
            let mut costs = vec![0.0; self.n_cols];
            costs[self.artificial_start..].iter_mut().for_each(|c| *c = 1.0);
            self.set_objective(&costs);
            match self.iterate(self.n_cols, &mut iterations) {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => return fail(LpStatus::Infeasible, iterations),
                s => return fail(s, iterations),
            }
            if -self.t[m][self.n_cols] > FEAS_EPS {
                return fail(LpStatus::Infeasible, iterations);
            }
            for i in 0..m {
                if self.basis[i] >= self.artificial_start {
                    if let Some(col) = (0..self.artificial_start).find(|&j| self.t[i][j].abs() > PIVOT_EPS) {
                        self.pivot(i, col);
                        iterations += 1;
                    }
                }
            }
        }

        let sign = match lp.direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let costs: Vec<f64> = lp.objective.iter().zip(&self.col_scale).map(|(c, d)| sign * c / d).collect();
        self.set_objective(&costs);
        let status = self.iterate(self.artificial_start, &mut iterations);
        if status != LpStatus::Optimal {
            return fail(status, iterations);
        }
        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.t[i][self.n_cols].max(0.0) / self.col_scale[b];
            }
        }
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution { status, value, x, iterations }
    }
}
