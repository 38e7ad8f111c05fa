//! Dense two-phase tableau simplex for small linear programs.
//!
//! Pivoting uses Dantzig's rule and falls back to Bland's rule once a run of
//! degenerate pivots is observed, which rules out cycling.

use serde::Serialize;

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-9;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A linear constraint `sum coeffs[k].1 * x[coeffs[k].0]  (rel)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }

    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Le, rhs)
    }

    pub fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Ge, rhs)
    }

    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Eq, rhs)
    }

    fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.lhs(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Objective, constraints and per-variable `(lower, upper)` bounds, either
/// of which may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A program over `n` variables, each bounded to `[0, +inf)`.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest constraint or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x));
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    fn check(&self) -> Result<()> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch {
                what: "variable bounds",
                expected: n,
                actual: self.bounds.len(),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Lp("objective coefficients must be finite".into()));
        }
        for c in &self.constraints {
            if let Some(&(j, _)) = c.coeffs.iter().find(|&&(j, _)| j >= n) {
                return Err(Error::DimensionMismatch {
                    what: "constraint variable index bound",
                    expected: n,
                    actual: j + 1,
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(Error::Lp("constraint coefficients must be finite".into()));
            }
        }
        for &(lo, hi) in &self.bounds {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::Lp(format!("invalid bound ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    pub value: f64,
}

/// How an original variable is expressed in non-negative tableau columns:
/// `x = offset + sum sign * column`.
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

struct Tableau {
    rows: usize,
    cols: usize, // excluding the rhs column
    data: Vec<f64>, // (rows + 1) x (cols + 1); the last row is the objective
    basis: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width();
        let inv = 1.0 / self.data[pr * w + pc];
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let nz: Vec<usize> = (0..w).filter(|&c| self.data[pr * w + c] != 0.0).collect();
        let pivot_row: Vec<f64> = nz.iter().map(|&c| self.data[pr * w + c]).collect();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let factor = self.data[r * w + pc];
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.data[r * w..(r + 1) * w];
            for (&c, &p) in nz.iter().zip(&pivot_row) {
                row[c] -= factor * p;
            }
            row[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Minimizes the objective row over columns `< allowed`. Returns false
    /// when the problem is unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        let obj = self.rows * self.width();
        let mut degenerate = 0;
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = -PIVOT_EPS;
            for c in 0..allowed {
                let d = self.data[obj + c];
                if d < best {
                    entering = Some(c);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(pc) = entering else {
                return true;
            };

            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((pr, ratio)) = leaving else {
                return false;
            };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
        }
    }

    /// Loads `costs` as the objective row, priced out against the basis.
    fn set_objective(&mut self, costs: &[f64]) {
        let w = self.width();
        let obj = self.rows * w;
        for c in 0..w {
            self.data[obj + c] = if c < costs.len() { costs[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    self.data[obj + c] -= cb * self.data[r * w + c];
                }
            }
        }
    }
}

/// Solves `lp` exactly up to floating tolerance. Optimal points satisfy all
/// constraints and bounds within 1e-9.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let n = lp.n_vars();
    let infeasible = LpSolution {
        status: LpStatus::Infeasible,
        x: Vec::new(),
        value: f64::NAN,
    };

    // Substitute bounded variables by non-negative columns.
    let mut maps = Vec::with_capacity(n);
    let mut n_struct = 0;
    let mut rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();
    for &(lo, hi) in &lp.bounds {
        if lo > hi {
            return Ok(infeasible);
        }
        let map = if lo.is_finite() {
            if hi.is_finite() {
                rows.push((vec![(n_struct, 1.0)], Relation::Le, hi - lo));
            }
            VarMap { offset: lo, terms: vec![(n_struct, 1.0)] }
        } else if hi.is_finite() {
            VarMap { offset: hi, terms: vec![(n_struct, -1.0)] }
        } else {
            n_struct += 1;
            VarMap { offset: 0.0, terms: vec![(n_struct - 1, 1.0), (n_struct, -1.0)] }
        };
        n_struct += 1;
        maps.push(map);
    }
    for c in &lp.constraints {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        let mut rhs = c.rhs;
        for &(j, a) in &c.coeffs {
            rhs -= a * maps[j].offset;
            for &(col, sign) in &maps[j].terms {
                coeffs.push((col, a * sign));
            }
        }
        rows.push((coeffs, c.relation, rhs));
    }

    // Normalize to non-negative right-hand sides.
    for row in &mut rows {
        if row.2 < 0.0 {
            row.0.iter_mut().for_each(|(_, a)| *a = -*a);
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
    let cols = n_struct + n_slack + n_art;
    let mut t = Tableau {
        rows: m,
        cols,
        data: vec![0.0; (m + 1) * (cols + 1)],
        basis: vec![0; m],
    };
    let w = cols + 1;
    let (mut slack, mut art) = (n_struct, n_struct + n_slack);
    for (r, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        for &(col, a) in coeffs {
            t.data[r * w + col] += a;
        }
        t.data[r * w + cols] = *rhs;
        match rel {
            Relation::Le => {
                t.data[r * w + slack] = 1.0;
                t.basis[r] = slack;
                slack += 1;
            }
            Relation::Ge => {
                t.data[r * w + slack] = -1.0;
                slack += 1;
                t.data[r * w + art] = 1.0;
                t.basis[r] = art;
                art += 1;
            }
            Relation::Eq => {
                t.data[r * w + art] = 1.0;
                t.basis[r] = art;
                art += 1;
            }
        }
    }
    let first_art = n_struct + n_slack;

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[first_art..].iter_mut().for_each(|c| *c = 1.0);
        t.set_objective(&phase1);
        t.optimize(cols);
        if -t.at(m, cols) > FEAS_EPS {
            return Ok(infeasible);
        }
        // Drive zero-valued artificials out of the basis where possible.
        for r in 0..m {
            if t.basis[r] >= first_art {
                if let Some(c) = (0..first_art).find(|&c| t.at(r, c).abs() > PIVOT_EPS) {
                    t.pivot(r, c);
                }
            }
        }
    }

    let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let mut costs = vec![0.0; cols];
    for (j, map) in maps.iter().enumerate() {
        for &(col, sign) in &map.terms {
            costs[col] += flip * lp.objective[j] * sign;
        }
    }
    t.set_objective(&costs);
    if !t.optimize(first_art) {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            value: flip * f64::NEG_INFINITY,
        });
    }

    let mut column_values = vec![0.0; cols];
    for r in 0..m {
        column_values[t.basis[r]] = t.rhs(r);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| {
            map.offset
                + map
                    .terms
                    .iter()
                    .map(|&(col, sign)| sign * column_values[col])
                    .sum::<f64>()
        })
        .collect();
    let value = lp.objective_value(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
    })
}
