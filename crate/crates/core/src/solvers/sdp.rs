//! Log-barrier interior-point method for small LMI problems.
//!
//! Decision variables are scalars; symmetric matrix unknowns are stored as
//! packed upper triangles ([`SymVar`]) and enter blocks through congruence
//! terms `scale · B X B'`, which keeps gradient and Hessian assembly cheap.
//! Besides LMI blocks the solver understands second-order cones, linear
//! inequalities and linear equalities.

use nalgebra::Cholesky;

use crate::numerics::{self, Mat, Vector};

use super::{SolveReport, SolveStatus};

/// `constant + Σ coef · y[var]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn var(var: usize) -> Self {
        Self { constant: 0.0, terms: vec![(var, 1.0)] }
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn plus(mut self, var: usize, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    pub fn eval(&self, y: &Vector) -> f64 {
        self.constant + self.terms.iter().map(|(j, c)| c * y[*j]).sum::<f64>()
    }
}

/// Symmetric `dim × dim` unknown stored as its packed upper triangle
/// starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymVar {
    pub offset: usize,
    pub dim: usize,
}

impl SymVar {
    pub fn packed_len(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    pub fn len(&self) -> usize {
        Self::packed_len(self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.offset + a * self.dim - a * (a + 1) / 2 + b
    }

    pub fn to_mat(&self, y: &Vector) -> Mat {
        let n = self.dim;
        let mut m = Mat::zeros(n, n);
        let mut k = self.offset;
        for a in 0..n {
            for b in a..n {
                m[(a, b)] = y[k];
                m[(b, a)] = y[k];
                k += 1;
            }
        }
        m
    }

    pub fn write(&self, m: &Mat, y: &mut Vector) {
        let mut k = self.offset;
        for a in 0..self.dim {
            for b in a..self.dim {
                y[k] = 0.5 * (m[(a, b)] + m[(b, a)]);
                k += 1;
            }
        }
    }

    /// `(a, b)` pairs in storage order.
    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim).flat_map(move |a| (a..self.dim).map(move |b| (a, b)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockTerm {
    /// `y[var] · coef`, `coef` symmetric.
    Scalar { var: usize, coef: Mat },
    /// `scale · left · X · left'`.
    Congruence { var: SymVar, left: Mat, scale: f64 },
}

/// `constant + Σ terms ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub constant: Mat,
    pub terms: Vec<BlockTerm>,
}

impl LmiBlock {
    pub fn new(constant: Mat) -> Self {
        Self { constant, terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn scalar(mut self, var: usize, coef: Mat) -> Self {
        self.terms.push(BlockTerm::Scalar { var, coef });
        self
    }

    pub fn congruence(mut self, var: SymVar, left: Mat, scale: f64) -> Self {
        self.terms.push(BlockTerm::Congruence { var, left, scale });
        self
    }

    pub fn eval(&self, y: &Vector) -> Mat {
        let mut f = self.constant.clone();
        for t in &self.terms {
            match t {
                BlockTerm::Scalar { var, coef } => f += coef * y[*var],
                BlockTerm::Congruence { var, left, scale } => {
                    let x = var.to_mat(y);
                    f += (left * x * left.transpose()) * *scale;
                }
            }
        }
        f
    }
}

/// `‖x‖₂ ≤ t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub t: Affine,
    pub x: Vec<Affine>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    nvars: usize,
    objective: Vec<(usize, f64)>,
    pub blocks: Vec<LmiBlock>,
    pub socs: Vec<SocConstraint>,
    /// `a(y) ≥ 0`.
    pub linear: Vec<Affine>,
    /// `a(y) = 0`.
    pub equalities: Vec<Affine>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn scalar(&mut self) -> usize {
        self.nvars += 1;
        self.nvars - 1
    }

    pub fn sym(&mut self, dim: usize) -> SymVar {
        let v = SymVar { offset: self.nvars, dim };
        self.nvars += v.len();
        v
    }

    /// Adds `coef · y[var]` to the minimized objective.
    pub fn minimize(&mut self, var: usize, coef: f64) {
        self.objective.push((var, coef));
    }

    pub fn objective_vector(&self) -> Vector {
        let mut c = Vector::zeros(self.nvars);
        for (j, v) in &self.objective {
            c[*j] += v;
        }
        c
    }

    pub fn add_block(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    pub fn add_soc(&mut self, soc: SocConstraint) {
        self.socs.push(soc);
    }

    pub fn add_linear(&mut self, a: Affine) {
        self.linear.push(a);
    }

    pub fn add_equality(&mut self, a: Affine) {
        self.equalities.push(a);
    }

    pub fn lower_bound(&mut self, var: usize, lb: f64) {
        self.linear.push(Affine { constant: -lb, terms: vec![(var, 1.0)] });
    }

    pub fn upper_bound(&mut self, var: usize, ub: f64) {
        self.linear.push(Affine { constant: ub, terms: vec![(var, -1.0)] });
    }

    /// Barrier parameter: total block dimension, two per cone, one per linear row.
    fn nu(&self) -> f64 {
        (self.blocks.iter().map(LmiBlock::dim).sum::<usize>() + 2 * self.socs.len() + self.linear.len()) as f64
    }

    /// Largest constraint violation at `y`.
    pub fn residual(&self, y: &Vector) -> f64 {
        let mut worst: f64 = 0.0;
        for b in &self.blocks {
            let lam = numerics::min_sym_eigenvalue(&b.eval(y)).unwrap_or(f64::NEG_INFINITY);
            worst = worst.max(-lam);
        }
        for s in &self.socs {
            let t = s.t.eval(y);
            let nx = s.x.iter().map(|a| a.eval(y).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(nx - t);
        }
        for l in &self.linear {
            worst = worst.max(-l.eval(y));
        }
        for e in &self.equalities {
            worst = worst.max(e.eval(y).abs());
        }
        worst
    }

    fn strictly_feasible(&self, y: &Vector) -> bool {
        barrier_value(self, y).is_some()
            && self.equalities.iter().all(|e| e.eval(y).abs() <= 1e-9 * (1.0 + e.constant.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct SdpOptions {
    /// Target for the barrier duality-gap bound `ν / t`.
    pub gap_tol: f64,
    /// A point counts as strictly feasible once every constraint holds with this slack.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Strictly feasible starting point; phase one is skipped when it qualifies.
    pub initial: Option<Vector>,
    /// Bound on `|y_i|` used only while searching for a feasible point.
    pub phase1_box: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-7, feas_tol: 1e-9, max_iter: 3000, initial: None, phase1_box: 1e7 }
    }
}

const BARRIER_STEP: f64 = 5.0;

fn barrier_value(p: &SdpProblem, y: &Vector) -> Option<f64> {
    let mut v = 0.0;
    for b in &p.blocks {
        let chol = Cholesky::new(b.eval(y))?;
        v -= 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    for s in &p.socs {
        let t = s.t.eval(y);
        let u = t * t - s.x.iter().map(|a| a.eval(y).powi(2)).sum::<f64>();
        if !(t > 0.0 && u > 0.0) {
            return None;
        }
        v -= u.ln();
    }
    for l in &p.linear {
        let a = l.eval(y);
        if !(a > 0.0) {
            return None;
        }
        v -= a.ln();
    }
    v.is_finite().then_some(v)
}

enum Pre<'a> {
    Scalar { var: usize, coef: &'a Mat, sgs: Mat },
    Cong { var: SymVar, left: &'a Mat, scale: f64, sb: Mat },
}

/// Adds `scale · Σ sym-expanded Q[β,γ]·R[α,δ]` over the packed pairs of
/// `v1 × v2` into `h`, where `(α,β)` ranges over the symmetric expansion of
/// `(a,b)` and `(γ,δ)` over that of `(c,d)`.
fn add_cong_pair(h: &mut Mat, v1: SymVar, v2: SymVar, c: &Mat, scale: f64, mirror: bool) {
    let p1: Vec<(usize, usize)> = v1.pairs().collect();
    let p2: Vec<(usize, usize)> = v2.pairs().collect();
    for (k1, &(a, b)) in p1.iter().enumerate() {
        let i1 = v1.offset + k1;
        for (k2, &(cc, d)) in p2.iter().enumerate() {
            let i2 = v2.offset + k2;
            let mut val = c[(b, cc)] * c[(a, d)];
            if cc != d {
                val += c[(b, d)] * c[(a, cc)];
            }
            if a != b {
                val += c[(a, cc)] * c[(b, d)];
                if cc != d {
                    val += c[(a, d)] * c[(b, cc)];
                }
            }
            let v = scale * val;
            h[(i1, i2)] += v;
            if mirror {
                h[(i2, i1)] += v;
            }
        }
    }
}

/// Gradient and Hessian of the barrier at a strictly feasible `y`.
fn barrier_derivatives(p: &SdpProblem, y: &Vector) -> Option<(Vector, Mat)> {
    let nv = p.nvars;
    let mut g = Vector::zeros(nv);
    let mut h = Mat::zeros(nv, nv);

    for block in &p.blocks {
        let s = Cholesky::new(block.eval(y))?.inverse();
        let pre: Vec<Pre> = block
            .terms
            .iter()
            .map(|t| match t {
                BlockTerm::Scalar { var, coef } => Pre::Scalar { var: *var, coef, sgs: &s * coef * &s },
                BlockTerm::Congruence { var, left, scale } => {
                    Pre::Cong { var: *var, left, scale: *scale, sb: &s * left }
                }
            })
            .collect();
        for t in &pre {
            match t {
                Pre::Scalar { var, coef, .. } => g[*var] -= s.component_mul(coef).sum(),
                Pre::Cong { var, left, scale, sb } => {
                    let d = left.transpose() * sb;
                    for (k, (a, b)) in var.pairs().enumerate() {
                        let v = if a == b { d[(a, a)] } else { d[(a, b)] + d[(b, a)] };
                        g[var.offset + k] -= scale * v;
                    }
                }
            }
        }
        for (i1, t1) in pre.iter().enumerate() {
            for (i2, t2) in pre.iter().enumerate().skip(i1) {
                let mirror = i1 != i2;
                match (t1, t2) {
                    (Pre::Scalar { var: v1, sgs, .. }, Pre::Scalar { var: v2, coef: g2, .. }) => {
                        let val = sgs.component_mul(g2).sum();
                        h[(*v1, *v2)] += val;
                        if mirror {
                            h[(*v2, *v1)] += val;
                        }
                    }
                    (Pre::Scalar { var: vs, sgs, .. }, Pre::Cong { var, left, scale, .. })
                    | (Pre::Cong { var, left, scale, .. }, Pre::Scalar { var: vs, sgs, .. }) => {
                        let e = left.transpose() * sgs * *left;
                        for (k, (a, b)) in var.pairs().enumerate() {
                            let v = scale * if a == b { e[(a, a)] } else { e[(a, b)] + e[(b, a)] };
                            let iv = var.offset + k;
                            h[(*vs, iv)] += v;
                            h[(iv, *vs)] += v;
                        }
                    }
                    (
                        Pre::Cong { var: va, left: la, scale: ca, .. },
                        Pre::Cong { var: vb, sb: sbb, scale: cb, .. },
                    ) => {
                        let c = la.transpose() * sbb;
                        add_cong_pair(&mut h, *va, *vb, &c, ca * cb, mirror);
                    }
                }
            }
        }
    }

    let mut scratch = vec![0.0; nv];
    let mut touched: Vec<usize> = Vec::new();
    for soc in &p.socs {
        let t = soc.t.eval(y);
        let xs: Vec<f64> = soc.x.iter().map(|a| a.eval(y)).collect();
        let u = t * t - xs.iter().map(|v| v * v).sum::<f64>();
        touched.clear();
        let add = |j: usize, v: f64, scratch: &mut Vec<f64>, touched: &mut Vec<usize>| {
            if scratch[j] == 0.0 {
                touched.push(j);
            }
            scratch[j] += v;
            if scratch[j] == 0.0 {
                scratch[j] = f64::MIN_POSITIVE;
            }
        };
        for &(j, c) in &soc.t.terms {
            add(j, 2.0 * t * c, &mut scratch, &mut touched);
        }
        for (a, xv) in soc.x.iter().zip(&xs) {
            for &(j, c) in &a.terms {
                add(j, -2.0 * xv * c, &mut scratch, &mut touched);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for &j in &touched {
            g[j] -= scratch[j] / u;
        }
        let u2 = u * u;
        for &i in &touched {
            for &j in &touched {
                h[(i, j)] += scratch[i] * scratch[j] / u2;
            }
        }
        for &(i, ci) in &soc.t.terms {
            for &(j, cj) in &soc.t.terms {
                h[(i, j)] -= 2.0 * ci * cj / u;
            }
        }
        for a in &soc.x {
            for &(i, ci) in &a.terms {
                for &(j, cj) in &a.terms {
                    h[(i, j)] += 2.0 * ci * cj / u;
                }
            }
        }
        for &j in &touched {
            scratch[j] = 0.0;
        }
    }

    for l in &p.linear {
        let v = l.eval(y);
        for &(i, ci) in &l.terms {
            g[i] -= ci / v;
            for &(j, cj) in &l.terms {
                h[(i, j)] += ci * cj / (v * v);
            }
        }
    }
    Some((g, h))
}

/// Independent rows of the equality system and their right-hand sides.
fn equality_system(p: &SdpProblem) -> (Mat, Vector, Mat, Vector) {
    let nv = p.nvars;
    let m = p.equalities.len();
    let full = Mat::from_fn(m, nv, |r, j| p.equalities[r].terms.iter().filter(|(k, _)| *k == j).map(|(_, c)| c).sum());
    let rhs = Vector::from_fn(m, |r, _| -p.equalities[r].constant);
    let mut kept = Vec::new();
    let mut ortho: Vec<Vector> = Vec::new();
    for r in 0..m {
        let row = full.row(r).transpose();
        let mut v = row.clone();
        for q in &ortho {
            let d = q.dot(&v);
            v -= q * d;
        }
        let nrm = v.norm();
        if nrm > 1e-10 * (1.0 + row.norm()) {
            ortho.push(v / nrm);
            kept.push(r);
        }
    }
    let a = Mat::from_fn(kept.len(), nv, |i, j| full[(kept[i], j)]);
    let b = Vector::from_fn(kept.len(), |i, _| rhs[kept[i]]);
    (a, b, full, rhs)
}

fn newton_direction(h: &Mat, g: &Vector, a: &Mat) -> Option<Vector> {
    let n = h.nrows();
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    let chol = loop {
        let mut hh = h.clone();
        if reg > 0.0 {
            for i in 0..n {
                hh[(i, i)] += reg;
            }
        }
        if let Some(c) = Cholesky::new(hh) {
            break c;
        }
        reg = if reg == 0.0 { 1e-12 * scale } else { reg * 100.0 };
        if reg > 1e-2 * scale {
            return None;
        }
    };
    let hg = chol.solve(g);
    if a.nrows() == 0 {
        return Some(-hg);
    }
    let hat = chol.solve(&a.transpose());
    let s = a * &hat;
    let rhs = -(a * &hg);
    let nu = match Cholesky::new(s.clone()) {
        Some(c) => c.solve(&rhs),
        None => s.lu().solve(&rhs)?,
    };
    Some(-hg - hat * nu)
}

struct Outcome {
    status: SolveStatus,
    y: Vector,
    iterations: usize,
}

/// Barrier method from a strictly feasible `y`. Returns early with
/// `Feasible` when `stop` holds after a Newton step.
fn barrier_method(
    p: &SdpProblem,
    mut y: Vector,
    a_eq: &Mat,
    opts: &SdpOptions,
    t0: f64,
    stop: Option<&dyn Fn(&Vector) -> bool>,
    bound_above: Option<f64>,
) -> Outcome {
    let c = p.objective_vector();
    let nu = p.nu().max(1.0);
    let mut t = t0;
    let mut iterations = 0;
    if let Some(f) = stop {
        if f(&y) {
            return Outcome { status: SolveStatus::Feasible, y, iterations };
        }
    }
    loop {
        // centering
        let mut stalled = false;
        for _ in 0..200 {
            if iterations >= opts.max_iter {
                return Outcome { status: SolveStatus::IterationLimit, y, iterations };
            }
            let Some((gb, h)) = barrier_derivatives(p, &y) else {
                return Outcome { status: SolveStatus::NumericalFailure, y, iterations };
            };
            let g = &c * t + gb;
            let Some(dy) = newton_direction(&h, &g, a_eq) else {
                return Outcome { status: SolveStatus::NumericalFailure, y, iterations };
            };
            let slope = g.dot(&dy);
            if -slope / 2.0 <= 1e-9 {
                break;
            }
            let f0 = t * c.dot(&y) + barrier_value(p, &y).unwrap_or(f64::INFINITY);
            let mut step = 1.0;
            let accepted = loop {
                let trial = &y + &dy * step;
                if let Some(phi) = barrier_value(p, &trial) {
                    if t * c.dot(&trial) + phi <= f0 + 0.25 * step * slope {
                        break Some(trial);
                    }
                }
                step *= 0.5;
                if step < 1e-14 {
                    break None;
                }
            };
            iterations += 1;
            match accepted {
                Some(next) => y = next,
                None => {
                    stalled = true;
                    break;
                }
            }
            if let Some(f) = stop {
                if f(&y) {
                    return Outcome { status: SolveStatus::Feasible, y, iterations };
                }
            }
        }
        let gap = nu / t;
        // the optimum is provably above the cut once centered
        if bound_above.is_some_and(|cut| c.dot(&y) - gap > cut) {
            return Outcome { status: SolveStatus::Optimal, y, iterations };
        }
        if gap < opts.gap_tol {
            return Outcome { status: SolveStatus::Optimal, y, iterations };
        }
        if stalled {
            // numerical floor reached; accept if already close
            let status = if gap < 1e3 * opts.gap_tol { SolveStatus::Optimal } else { SolveStatus::NumericalFailure };
            return Outcome { status, y, iterations };
        }
        t *= BARRIER_STEP;
    }
}

fn report(p: &SdpProblem, status: SolveStatus, y: Vector, iterations: usize) -> SolveReport {
    let objective = p.objective_vector().dot(&y);
    let residual = p.residual(&y);
    SolveReport { status, y, objective, residual, iterations }
}

/// Searches for a strictly feasible point by minimizing a uniform shift `s`.
fn phase_one(p: &SdpProblem, a_eq: &Mat, b_eq: &Vector, opts: &SdpOptions) -> Result<(Vector, usize), SolveStatus> {
    let nv = p.nvars;
    let y0 = if a_eq.nrows() == 0 {
        Vector::zeros(nv)
    } else {
        a_eq.clone().svd(true, true).solve(b_eq, 1e-14).map_err(|_| SolveStatus::NumericalFailure)?
    };
    let mut aug = p.clone();
    aug.objective.clear();
    let s = aug.scalar();
    aug.minimize(s, 1.0);
    let mut shift: f64 = 0.0;
    for b in &mut aug.blocks {
        let dim = b.dim();
        shift = shift.max(-numerics::min_sym_eigenvalue(&b.eval(&y0)).unwrap_or(0.0));
        b.terms.push(BlockTerm::Scalar { var: s, coef: Mat::identity(dim, dim) });
    }
    for soc in &mut aug.socs {
        let t = soc.t.eval(&y0);
        let nx = soc.x.iter().map(|a| a.eval(&y0).powi(2)).sum::<f64>().sqrt();
        shift = shift.max(nx - t);
        soc.t.terms.push((s, 1.0));
    }
    for l in &mut aug.linear {
        shift = shift.max(-l.eval(&y0));
        l.terms.push((s, 1.0));
    }
    aug.lower_bound(s, -1.0);
    for j in 0..nv {
        let r = opts.phase1_box.max(2.0 * y0[j].abs());
        aug.lower_bound(j, -r);
        aug.upper_bound(j, r);
    }
    let mut y = Vector::zeros(nv + 1);
    y.rows_mut(0, nv).copy_from(&y0);
    y[nv] = shift.max(0.0) + 1.0;
    let a_aug = a_eq.clone().insert_column(nv, 0.0);
    let feas = opts.feas_tol;
    let stop = move |z: &Vector| z[nv] < -feas;
    let out = barrier_method(&aug, y, &a_aug, opts, 1.0, Some(&stop), Some(feas));
    match out.status {
        SolveStatus::Feasible => Ok((out.y.rows(0, nv).into_owned(), out.iterations)),
        SolveStatus::Optimal => Err(SolveStatus::Infeasible),
        other => {
            // a stalled or exhausted search whose shift stays positive is reported infeasible
            if out.y[nv] > feas && other == SolveStatus::NumericalFailure {
                Err(SolveStatus::Infeasible)
            } else {
                Err(other)
            }
        }
    }
}

/// Minimizes the objective of `p`. Problems with an all-zero objective stop
/// at the first strictly feasible point.
pub fn solve_sdp(p: &SdpProblem, opts: &SdpOptions) -> SolveReport {
    solve_sdp_until(p, opts, None)
}

/// As [`solve_sdp`], stopping with `Feasible` once `stop` accepts an iterate.
pub fn solve_sdp_until(p: &SdpProblem, opts: &SdpOptions, stop: Option<&dyn Fn(&Vector) -> bool>) -> SolveReport {
    let nv = p.nvars;
    let (a_eq, b_eq, full_eq, full_rhs) = equality_system(p);
    let (y, mut iterations) = match opts.initial.as_ref().filter(|y0| y0.len() == nv && p.strictly_feasible(y0)) {
        Some(y0) => (y0.clone(), 0),
        None => match phase_one(p, &a_eq, &b_eq, opts) {
            Ok(v) => v,
            Err(status) => return report(p, status, Vector::zeros(nv), 0),
        },
    };
    // the dropped equality rows must agree with the kept ones
    if (&full_eq * &y - &full_rhs).amax() > 1e-7 * (1.0 + full_rhs.amax()) {
        return report(p, SolveStatus::Infeasible, y, iterations);
    }
    if p.objective.iter().all(|(_, c)| *c == 0.0) {
        return report(p, SolveStatus::Feasible, y, iterations);
    }
    if let Some(f) = stop {
        if f(&y) {
            return report(p, SolveStatus::Feasible, y, iterations);
        }
    }
    let out = barrier_method(p, y, &a_eq, opts, 1.0, stop, None);
    iterations += out.iterations;
    report(p, out.status, out.y, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn packed_indexing() {
        let v = SymVar { offset: 3, dim: 3 };
        let expect = [(0, 0, 3), (0, 1, 4), (0, 2, 5), (1, 1, 6), (1, 2, 7), (2, 2, 8)];
        for (a, b, k) in expect {
            assert_eq!(v.index(a, b), k);
            assert_eq!(v.index(b, a), k);
        }
        let mut y = Vector::zeros(9);
        let m = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        v.write(&m, &mut y);
        assert_eq!(v.to_mat(&y), m);
    }

    #[test]
    fn eigenvalue_bound() {
        // maximize y  s.t.  I - yI ⪰ 0, y ≥ 0
        let mut p = SdpProblem::new();
        let y = p.scalar();
        p.minimize(y, -1.0);
        p.add_block(LmiBlock::new(Mat::identity(2, 2)).scalar(y, -Mat::identity(2, 2)));
        p.lower_bound(y, 0.0);
        let r = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.y[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn feasibility_mode() {
        // yI ⪰ I with y free
        let mut p = SdpProblem::new();
        let y = p.scalar();
        p.add_block(LmiBlock::new(-Mat::identity(2, 2)).scalar(y, Mat::identity(2, 2)));
        let r = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(r.status, SolveStatus::Feasible);
        assert!(r.y[0] > 1.0);

        // yI ⪰ I and y ≤ 0.5 is infeasible
        p.upper_bound(y, 0.5);
        assert_eq!(solve_sdp(&p, &SdpOptions::default()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn analytic_optimum_from_diagonal_constraints() {
        // min y0  s.t. diag(y0 - 0.5, 1 + y1) ⪰ 0, y0 + y1 = 2  →  y = (0.5, 1.5)
        let mut p = SdpProblem::new();
        let a = p.scalar();
        let b = p.scalar();
        p.minimize(a, 1.0);
        let e00 = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let e11 = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        p.add_block(
            LmiBlock::new(Mat::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 1.0])).scalar(a, e00.clone()).scalar(b, e11),
        );
        p.add_equality(Affine::constant(-2.0).plus(a, 1.0).plus(b, 1.0));
        let r = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.y[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(r.y[1], 1.5, epsilon = 1e-6);
    }

    #[test]
    fn matrix_variable_trace_minimization() {
        // min tr X  s.t.  X ⪰ C  has optimum X = C
        let c = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mut p = SdpProblem::new();
        let x = p.sym(2);
        for i in 0..2 {
            p.minimize(x.index(i, i), 1.0);
        }
        p.add_block(LmiBlock::new(-c.clone()).congruence(x, Mat::identity(2, 2), 1.0));
        let r = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(x.to_mat(&r.y), c, epsilon = 1e-5);
    }

    #[test]
    fn second_order_cone() {
        // min t  s.t. ‖(y0 - 3, y1 + 4)‖ ≤ t, y0 ≤ 0  →  t = 5 at y = (0, -4)
        let mut p = SdpProblem::new();
        let y0 = p.scalar();
        let y1 = p.scalar();
        let t = p.scalar();
        p.minimize(t, 1.0);
        p.add_soc(SocConstraint {
            t: Affine::var(t),
            x: vec![Affine::constant(-3.0).plus(y0, 1.0), Affine::constant(4.0).plus(y1, 1.0)],
        });
        p.upper_bound(y0, 0.0);
        let r = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.y[t], 3.0, epsilon = 1e-5);
        assert_relative_eq!(r.y[y1], -4.0, epsilon = 1e-4);
    }

    /// Finite-difference check of the assembled gradient and Hessian.
    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = SdpProblem::new();
        let x = p.sym(2);
        let z = p.sym(2);
        let s = p.scalar();
        let b1 = Mat::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let b2 = Mat::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let g = Mat::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 1.0, 0.1, 0.0, 0.1, 1.0]);
        p.add_block(
            LmiBlock::new(Mat::identity(3, 3) * 5.0)
                .congruence(x, b1.clone(), 0.7)
                .congruence(z, b2, -0.3)
                .congruence(x, b1, 0.2)
                .scalar(s, g),
        );
        p.add_soc(SocConstraint { t: Affine::constant(4.0).plus(s, 1.0), x: vec![Affine::var(x.index(0, 1))] });
        p.add_linear(Affine::constant(2.0).plus(z.index(1, 1), 1.0).plus(s, -0.5));
        let y = Vector::from_fn(p.num_vars(), |_, _| rng.random_range(-0.3..0.3));
        let (gr, h) = barrier_derivatives(&p, &y).unwrap();
        let eps = 1e-6;
        for i in 0..p.num_vars() {
            let mut yp = y.clone();
            yp[i] += eps;
            let mut ym = y.clone();
            ym[i] -= eps;
            let fd = (barrier_value(&p, &yp).unwrap() - barrier_value(&p, &ym).unwrap()) / (2.0 * eps);
            assert!((fd - gr[i]).abs() < 1e-6, "grad {i}: {fd} vs {}", gr[i]);
            let (gp, _) = barrier_derivatives(&p, &yp).unwrap();
            let (gm, _) = barrier_derivatives(&p, &ym).unwrap();
            let col = (gp - gm) / (2.0 * eps);
            for j in 0..p.num_vars() {
                assert!((col[j] - h[(j, i)]).abs() < 1e-5, "hess ({j},{i}): {} vs {}", col[j], h[(j, i)]);
            }
        }
    }

    #[test]
    fn deterministic_reports() {
        let mut p = SdpProblem::new();
        let x = p.sym(2);
        p.minimize(x.index(0, 0), 1.0);
        p.minimize(x.index(1, 1), 1.0);
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.4]);
        p.add_block(LmiBlock::new(-Mat::identity(2, 2)).congruence(x, Mat::identity(2, 2), 1.0));
        p.add_block(
            LmiBlock::new(Mat::zeros(2, 2))
                .congruence(x, Mat::identity(2, 2), 0.9)
                .congruence(x, a.transpose(), -1.0),
        );
        let r1 = solve_sdp(&p, &SdpOptions::default());
        let r2 = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(r1, r2);
        for b in &p.blocks {
            assert!(numerics::is_psd(&b.eval(&r1.y), numerics::SymTol::with_psd(1e-9)).unwrap());
        }
    }
}
