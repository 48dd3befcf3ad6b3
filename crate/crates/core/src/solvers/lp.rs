//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Problems are `min c'x` over equality and inequality rows with per-variable
//! lower bounds (`-inf` marks a free variable). Internally everything is moved
//! to standard form `A x = b, x ≥ 0, b ≥ 0` with slack, split and artificial
//! columns.

use crate::error::{Error, Result};
use crate::numerics::{Mat, Vector};

use super::{SolveReport, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
}

impl LpProblem {
    /// `n` variables, zero objective, all bounded below by zero.
    pub fn new(n: usize) -> Self {
        Self { objective: vec![0.0; n], rows: Vec::new(), lower: vec![0.0; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) {
        self.rows.push(LpRow { coeffs, kind, rhs });
    }

    pub fn set_free(&mut self, var: usize) {
        self.lower[var] = f64::NEG_INFINITY;
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n {
            return Err(Error::DimensionMismatch(format!("{} lower bounds for {n} variables", self.lower.len())));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite objective coefficient".into()));
        }
        if self.lower.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::Validation("invalid lower bound".into()));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|(j, v)| *j >= n || !v.is_finite()) {
                return Err(Error::Validation(format!("row {r} is malformed")));
            }
        }
        Ok(())
    }

    /// Row activity `a_r·x`.
    pub fn activity(&self, row: usize, x: &Vector) -> f64 {
        self.rows[row].coeffs.iter().map(|(j, v)| v * x[*j]).sum()
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn residual(&self, x: &Vector) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            let ax = self.activity(r, x);
            let v = match row.kind {
                RowKind::Eq => (ax - row.rhs).abs(),
                RowKind::Le => (ax - row.rhs).max(0.0),
                RowKind::Ge => (row.rhs - ax).max(0.0),
            };
            worst = worst.max(v);
        }
        for (j, l) in self.lower.iter().enumerate() {
            worst = worst.max(l - x[j]);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub report: SolveReport,
    /// Row multipliers of the final basis, sign convention of `min c'x`:
    /// `c - A'y` is nonnegative on the structural columns at optimality.
    pub duals: Option<Vector>,
}

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-10;

struct Tableau {
    t: Mat,
    cost: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

enum Phase {
    Done,
    Unbounded,
    Limit,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let width = self.t.ncols();
        let piv = self.t[(r, e)];
        for j in 0..width {
            self.t[(r, j)] /= piv;
        }
        for i in 0..self.t.nrows() {
            if i == r {
                continue;
            }
            let f = self.t[(i, e)];
            if f != 0.0 {
                for j in 0..width {
                    let v = self.t[(r, j)];
                    if v != 0.0 {
                        self.t[(i, j)] -= f * v;
                    }
                }
                self.t[(i, e)] = 0.0;
            }
        }
        let f = self.cost[e];
        if f != 0.0 {
            for j in 0..width {
                self.cost[j] -= f * self.t[(r, j)];
            }
            self.cost[e] = 0.0;
        }
        self.basis[r] = e;
        self.iterations += 1;
    }

    /// Loads `c` as the objective and prices out the basis. The last entry of
    /// `cost` holds minus the objective value.
    fn set_objective(&mut self, c: &[f64]) {
        let width = self.t.ncols();
        self.cost = vec![0.0; width];
        self.cost[..c.len()].copy_from_slice(c);
        for r in 0..self.t.nrows() {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                for j in 0..width {
                    self.cost[j] -= cb * self.t[(r, j)];
                }
            }
        }
    }

    fn run(&mut self, allowed: usize, limit: usize) -> Phase {
        let rhs = self.rhs_col();
        loop {
            if self.iterations >= limit {
                return Phase::Limit;
            }
            let Some(e) = (0..allowed).find(|&j| self.cost[j] < -COST_EPS) else {
                return Phase::Done;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.nrows() {
                let a = self.t[(i, e)];
                if a > PIVOT_EPS {
                    let ratio = self.t[(i, rhs)] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, e),
                None => return Phase::Unbounded,
            }
        }
    }
}

/// Minimizes `p`; `tol` bounds the primal residual and the phase-one optimum
/// accepted as feasible.
pub fn solve_lp(p: &LpProblem, tol: f64) -> Result<LpSolution> {
    p.validate()?;
    let n = p.num_vars();
    let m = p.rows.len();

    // structural columns
    let mut col_of = Vec::with_capacity(n);
    let mut ncols = 0;
    for l in &p.lower {
        if l.is_finite() {
            col_of.push((ncols, None));
            ncols += 1;
        } else {
            col_of.push((ncols, Some(ncols + 1)));
            ncols += 2;
        }
    }
    let structural = ncols;
    let slack_count = p.rows.iter().filter(|r| r.kind != RowKind::Eq).count();
    let total_real = structural + slack_count;

    let mut a = Mat::zeros(m, total_real);
    let mut b = Vector::zeros(m);
    let mut c = vec![0.0; total_real];
    for j in 0..n {
        let (plus, minus) = col_of[j];
        c[plus] = p.objective[j];
        if let Some(mi) = minus {
            c[mi] = -p.objective[j];
        }
    }
    let mut flipped = vec![false; m];
    let mut slack_col = vec![None; m];
    let mut next_slack = structural;
    for (r, row) in p.rows.iter().enumerate() {
        let mut rhs = row.rhs;
        for &(j, v) in &row.coeffs {
            let (plus, minus) = col_of[j];
            a[(r, plus)] += v;
            match minus {
                Some(mi) => a[(r, mi)] -= v,
                None => rhs -= v * p.lower[j],
            }
        }
        match row.kind {
            RowKind::Eq => {}
            RowKind::Le => {
                a[(r, next_slack)] = 1.0;
                slack_col[r] = Some(next_slack);
                next_slack += 1;
            }
            RowKind::Ge => {
                a[(r, next_slack)] = -1.0;
                slack_col[r] = Some(next_slack);
                next_slack += 1;
            }
        }
        if rhs < 0.0 {
            flipped[r] = true;
            rhs = -rhs;
            for j in 0..total_real {
                a[(r, j)] = -a[(r, j)];
            }
        }
        b[r] = rhs;
    }

    // initial basis: slack with +1 coefficient where possible, else artificial
    let mut basis = vec![usize::MAX; m];
    let mut artificial_rows = Vec::new();
    for r in 0..m {
        match slack_col[r] {
            Some(s) if a[(r, s)] > 0.0 => basis[r] = s,
            _ => artificial_rows.push(r),
        }
    }
    let width = total_real + artificial_rows.len() + 1;
    let mut t = Mat::zeros(m, width);
    t.view_mut((0, 0), (m, total_real)).copy_from(&a);
    for (k, &r) in artificial_rows.iter().enumerate() {
        t[(r, total_real + k)] = 1.0;
        basis[r] = total_real + k;
    }
    for r in 0..m {
        t[(r, width - 1)] = b[r];
    }
    let mut tab = Tableau { t, cost: Vec::new(), basis, iterations: 0 };
    let limit = 200 * (m + width) + 1000;

    let scale = 1.0 + b.amax();
    if !artificial_rows.is_empty() {
        let mut w = vec![0.0; width - 1];
        for k in 0..artificial_rows.len() {
            w[total_real + k] = 1.0;
        }
        tab.set_objective(&w);
        match tab.run(width - 1, limit) {
            Phase::Done => {}
            Phase::Limit => return Ok(failure(SolveStatus::IterationLimit, n, tab.iterations)),
            Phase::Unbounded => return Ok(failure(SolveStatus::NumericalFailure, n, tab.iterations)),
        }
        let infeas = -tab.cost[width - 1];
        if infeas > tol * scale {
            return Ok(failure(SolveStatus::Infeasible, n, tab.iterations));
        }
        // drive artificials out of the basis, dropping redundant rows
        let mut r = 0;
        while r < tab.t.nrows() {
            if tab.basis[r] >= total_real {
                match (0..total_real).find(|&j| tab.t[(r, j)].abs() > PIVOT_EPS) {
                    Some(j) => tab.pivot(r, j),
                    None => {
                        tab.t = tab.t.clone().remove_row(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }
    let mut cfull = c.clone();
    cfull.resize(width - 1, 0.0);
    tab.set_objective(&cfull);
    match tab.run(total_real, limit) {
        Phase::Done => {}
        Phase::Limit => return Ok(failure(SolveStatus::IterationLimit, n, tab.iterations)),
        Phase::Unbounded => return Ok(failure(SolveStatus::Unbounded, n, tab.iterations)),
    }

    // basic solution, refined against the original standard-form data
    let rhs = tab.rhs_col();
    let mut xs = vec![0.0; total_real];
    for (r, &j) in tab.basis.iter().enumerate() {
        xs[j] = tab.t[(r, rhs)];
    }
    // redundant rows were dropped, so solve against all original rows in the least-squares sense
    let k = tab.basis.len();
    let bmat = Mat::from_fn(m, k, |i, jj| a[(i, tab.basis[jj])]);
    if k > 0 {
        if let Ok(xb) = bmat.clone().svd(true, true).solve(&b, 1e-13) {
            if xb.iter().all(|v| *v >= -tol) && (&bmat * &xb - &b).amax() <= (tol * scale).min(1e-10) {
                for (i, &j) in tab.basis.iter().enumerate() {
                    xs[j] = xb[i].max(0.0);
                }
            }
        }
    }
    let duals = if k == 0 {
        Some(Vector::zeros(m))
    } else {
        let cb = Vector::from_fn(k, |i, _| c[tab.basis[i]]);
        bmat.transpose().svd(true, true).solve(&cb, 1e-13).ok().map(|ys| {
            Vector::from_fn(m, |r, _| if flipped[r] { -ys[r] } else { ys[r] })
        })
    };

    let x = Vector::from_fn(n, |j, _| {
        let (plus, minus) = col_of[j];
        match minus {
            Some(mi) => xs[plus] - xs[mi],
            None => p.lower[j] + xs[plus],
        }
    });
    let objective = p.objective.iter().zip(x.iter()).map(|(c, x)| c * x).sum::<f64>();
    let residual = p.residual(&x);
    let status = if residual <= tol * scale { SolveStatus::Optimal } else { SolveStatus::NumericalFailure };
    Ok(LpSolution {
        report: SolveReport { status, y: x, objective, residual, iterations: tab.iterations },
        duals: if status == SolveStatus::Optimal { duals } else { None },
    })
}

fn failure(status: SolveStatus, n: usize, iterations: usize) -> LpSolution {
    LpSolution {
        report: SolveReport { status, y: Vector::zeros(n), objective: f64::NAN, residual: f64::INFINITY, iterations },
        duals: None,
    }
}
