//! Dense two-phase simplex for the small linear programs behind the
//! expenditure bounds.
//!
//! Problems have the form `min/max c·x` subject to `G x ≥ g`, `E x = e` and
//! `x ≥ 0`. Pivoting follows Bland's rule, so results are deterministic and
//! degenerate problems cannot cycle.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

/// Absolute tolerance on constraint residuals.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Relative tolerance on objective comparisons.
pub const OBJECTIVE_TOL: f64 = 1e-8;

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub ge_rows: Vec<Vec<f64>>,
    pub ge_rhs: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// Dual multipliers of the `≥` rows, in the sign convention of `sense`.
    pub ge_duals: Vec<f64>,
    pub eq_duals: Vec<f64>,
    /// `g·y_ge + e·y_eq`, equal to `value` at an optimum.
    pub dual_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        LinearProgram {
            sense,
            objective,
            ge_rows: Vec::new(),
            ge_rhs: Vec::new(),
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
        }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn ge(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.push_ge(row, rhs);
        self
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn push_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.ge_rows.push(row);
        self.ge_rhs.push(rhs);
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let rows = self.ge_rows.iter().chain(self.eq_rows.iter());
        for (i, row) in rows.enumerate() {
            if row.len() != n {
                return Err(Error::Structural(format!(
                    "LP row {i} has {} columns, objective has {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("LP row {i} has a non-finite entry")));
            }
        }
        if self.ge_rows.len() != self.ge_rhs.len() || self.eq_rows.len() != self.eq_rhs.len() {
            return Err(Error::Structural("LP row/rhs count mismatch".into()));
        }
        if self
            .ge_rhs
            .iter()
            .chain(self.eq_rhs.iter())
            .chain(self.objective.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Validation("LP objective or rhs is not finite".into()));
        }
        Ok(())
    }

    /// Largest violation of any constraint (including `x ≥ 0`) at `x`.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let ge = self
            .ge_rows
            .iter()
            .zip(&self.ge_rhs)
            .map(|(r, b)| (b - dot(r)).max(0.0));
        let eq = self
            .eq_rows
            .iter()
            .zip(&self.eq_rhs)
            .map(|(r, b)| (dot(r) - b).abs());
        let nonneg = x.iter().map(|v| (-v).max(0.0));
        ge.chain(eq).chain(nonneg).fold(0.0, f64::max)
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        self.validate()?;
        Tableau::build(self).run(self)
    }

    /// Plain-text dump, one constraint per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let sense = match self.sense {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        };
        let _ = writeln!(out, "{sense} {}", linear_form(&self.objective));
        let _ = writeln!(out, "s.t.");
        for (row, b) in self.ge_rows.iter().zip(&self.ge_rhs) {
            let _ = writeln!(out, "  {} >= {b}", linear_form(row));
        }
        for (row, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            let _ = writeln!(out, "  {} = {b}", linear_form(row));
        }
        let _ = writeln!(out, "  x >= 0");
        out
    }
}

impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

fn linear_form(coeffs: &[f64]) -> String {
    let terms: Vec<String> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| format!("{c}*x{}", j + 1))
        .collect();
    if terms.is_empty() {
        "0".to_string()
    } else {
        terms.join(" + ")
    }
}

struct Tableau {
    m: usize,
    n: usize,
    n_ge: usize,
    /// Row-major `m × (cols + 1)`; last column is the rhs.
    t: Vec<f64>,
    basis: Vec<usize>,
    /// +1 or −1: the factor each original row was multiplied by.
    row_sign: Vec<f64>,
}

impl Tableau {
    fn cols(&self) -> usize {
        self.n + self.n_ge + self.m
    }

    fn width(&self) -> usize {
        self.cols() + 1
    }

    fn art(&self, i: usize) -> usize {
        self.n + self.n_ge + i
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols())
    }

    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let n_ge = lp.ge_rows.len();
        let m = n_ge + lp.eq_rows.len();
        let width = n + n_ge + m + 1;
        let mut t = vec![0.0; m * width];
        let mut row_sign = vec![1.0; m];
        let rows = lp
            .ge_rows
            .iter()
            .zip(&lp.ge_rhs)
            .chain(lp.eq_rows.iter().zip(&lp.eq_rhs));
        for (i, (row, &b)) in rows.enumerate() {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            row_sign[i] = sign;
            let base = i * width;
            for (j, &a) in row.iter().enumerate() {
                t[base + j] = sign * a;
            }
            if i < n_ge {
                t[base + n + i] = -sign;
            }
            t[base + n + n_ge + i] = 1.0;
            t[base + width - 1] = sign * b;
        }
        let basis = (0..m).map(|i| n + n_ge + i).collect();
        Tableau {
            m,
            n,
            n_ge,
            t,
            basis,
            row_sign,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * self.t[r * w + j];
                }
                self.t[i * w + c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs `c_j − c_B·B⁻¹A_j` for every column.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut r = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, rj) in r.iter_mut().enumerate() {
                    *rj -= cb * self.at(i, j);
                }
            }
        }
        r
    }

    /// Bland's-rule simplex on `cost`; columns with `allowed[j] == false` never enter.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<bool> {
        let scale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
        let cost_eps = 1e-11 * scale;
        for _ in 0..MAX_PIVOTS {
            let r = self.reduced_costs(cost);
            let entering = (0..self.cols()).find(|&j| allowed[j] && r[j] < -cost_eps);
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    let candidate = (ratio, self.basis[i], i);
                    best = match best {
                        None => Some(candidate),
                        Some(b) => {
                            let tie = (ratio - b.0).abs() <= 1e-12 * (1.0 + b.0.abs());
                            if ratio < b.0 && !tie || tie && candidate.1 < b.1 {
                                Some(candidate)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            match best {
                None => return Ok(false),
                Some((_, _, row)) => self.pivot(row, c),
            }
        }
        Err(Error::Numerical(format!(
            "simplex exceeded {MAX_PIVOTS} pivots"
        )))
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let cols = self.cols();
        // phase 1
        let mut phase1 = vec![0.0; cols];
        for i in 0..self.m {
            phase1[self.art(i)] = 1.0;
        }
        let all = vec![true; cols];
        self.optimize(&phase1, &all)?;
        let infeas: f64 = (0..self.m)
            .filter(|&i| self.basis[i] >= self.n + self.n_ge)
            .map(|i| self.rhs(i))
            .sum();
        let rhs_scale = (0..self.m).fold(1.0_f64, |a, i| a.max(self.rhs(i).abs()));
        if infeas > RESIDUAL_TOL * rhs_scale.max(1.0) {
            return Ok(LpOutcome::Infeasible);
        }
        for i in 0..self.m {
            if self.basis[i] >= self.n + self.n_ge {
                let col = (0..self.n + self.n_ge).find(|&j| self.at(i, j).abs() > 1e-9);
                if let Some(j) = col {
                    self.pivot(i, j);
                }
            }
        }

        // phase 2
        let flip = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; cols];
        for (j, c) in lp.objective.iter().enumerate() {
            cost[j] = flip * c;
        }
        let allowed: Vec<bool> = (0..cols).map(|j| j < self.n + self.n_ge).collect();
        if !self.optimize(&cost, &allowed)? {
            return Ok(LpOutcome::Unbounded);
        }

        let mut x = vec![0.0; self.n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                x[b] = self.rhs(i).max(0.0);
            }
        }
        let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

        let r = self.reduced_costs(&cost);
        let duals: Vec<f64> = (0..self.m)
            .map(|i| -flip * self.row_sign[i] * r[self.art(i)])
            .collect();
        let (ge_duals, eq_duals) = duals.split_at(self.n_ge);
        let dual_value = ge_duals
            .iter()
            .zip(&lp.ge_rhs)
            .chain(eq_duals.iter().zip(&lp.eq_rhs))
            .map(|(y, b)| y * b)
            .sum();
        Ok(LpOutcome::Optimal(LpSolution {
            value,
            x,
            ge_duals: ge_duals.to_vec(),
            eq_duals: eq_duals.to_vec(),
            dual_value,
        }))
    }
}
