//! Per-mode quadratic Lyapunov functions `V_s(x) = x'M_s x` with decay
//! coefficients `α_s` and jump coefficients `μ_{s,s'}`.

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SwitchedSystem;
use crate::numerics::{self, Mat, SymTol};
use crate::solvers::sdp::{solve_sdp, LmiBlock, SdpOptions, SdpProblem, SymVar};

/// Grid spacing of the α bisection.
pub const DEFAULT_BISECT_TOL: f64 = 1.0 / 128.0;

/// Smallest reported jump coefficient.
pub const MU_FLOOR: f64 = 1.0 + 1e-9;

/// Slack granted to both LMIs of the α problem. The inequalities are
/// non-strict, so the grid point `1 - ρ(A)²` itself is accepted.
pub const LMI_SLACK: f64 = 1e-8;

/// Modes with spectral radius at or above this are rejected.
const UNSTABLE_RHO: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Trace-minimal `M` at the returned α.
    pub m: Mat,
    pub bisect_tol: f64,
    /// Every `(α, feasible)` probe in bisection order.
    pub probes: Vec<(f64, bool)>,
}

fn alpha_problem(a: &Mat, alpha: f64) -> (SdpProblem, SymVar) {
    let n = a.nrows();
    let mut p = SdpProblem::new();
    let m = p.sym(n);
    let id = Mat::identity(n, n);
    p.add_block(LmiBlock::new(&id * (LMI_SLACK - 1.0)).congruence(m, id.clone(), 1.0));
    p.add_block(
        LmiBlock::new(&id * LMI_SLACK).congruence(m, id.clone(), 1.0 - alpha).congruence(m, a.transpose(), -1.0),
    );
    (p, m)
}

/// Witness `M` for `{M ⪰ I, A'MA ⪯ (1-α)M}` (up to [`LMI_SLACK`]), if one exists.
pub fn alpha_feasible(a: &Mat, alpha: f64) -> Result<Option<Mat>> {
    // an eigenvector of A with |λ|² > (1-α) + ε/(1-ε) rules out every witness
    let rho = numerics::spectral_radius(a)?;
    if rho * rho - (1.0 - alpha) > 2.0 * LMI_SLACK {
        return Ok(None);
    }
    let (p, m) = alpha_problem(a, alpha);
    let r = solve_sdp(&p, &SdpOptions::default());
    use crate::solvers::SolveStatus::*;
    match r.status {
        Feasible | Optimal => Ok(Some(m.to_mat(&r.y))),
        Infeasible => Ok(None),
        other => Err(Error::SolverFailure(format!("α feasibility at {alpha}: {other:?}"))),
    }
}

/// Largest grid point `k·tol < 1` at which the decay LMI is feasible.
pub fn compute_alpha(a: &Mat, bisect_tol: f64) -> Result<AlphaResult> {
    if !(bisect_tol > 0.0 && bisect_tol < 0.5) {
        return Err(Error::Domain(format!("bisection tolerance must lie in (0, 0.5), got {bisect_tol}")));
    }
    let rho = numerics::spectral_radius(a)?;
    if rho >= UNSTABLE_RHO {
        return Err(Error::UnstableMode { mode: 0, rho });
    }
    let mut tol = bisect_tol;
    loop {
        let mut probes = Vec::new();
        let mut witness = alpha_feasible(a, 0.0)?
            .ok_or_else(|| Error::SolverFailure("decay LMI infeasible at α = 0 for a stable mode".into()))?;
        probes.push((0.0, true));
        // first grid point at or beyond α = 1, which is excluded
        let (mut lo, mut hi) = (0i64, (1.0 / tol).ceil() as i64);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let alpha = mid as f64 * tol;
            match alpha_feasible(a, alpha)? {
                Some(m) => {
                    probes.push((alpha, true));
                    lo = mid;
                    witness = m;
                }
                None => {
                    probes.push((alpha, false));
                    hi = mid;
                }
            }
        }
        if lo > 0 {
            let alpha = lo as f64 * tol;
            let m = minimize_trace(a, alpha, &witness).unwrap_or(witness);
            return Ok(AlphaResult { alpha, m, bisect_tol: tol, probes });
        }
        tol *= 0.5;
        if tol < 1e-7 {
            return Err(Error::SolverFailure("no positive decay coefficient on the bisection grid".into()));
        }
    }
}

fn minimize_trace(a: &Mat, alpha: f64, witness: &Mat) -> Option<Mat> {
    let (mut p, m) = alpha_problem(a, alpha);
    for i in 0..a.nrows() {
        p.minimize(m.index(i, i), 1.0);
    }
    let mut y0 = crate::numerics::Vector::zeros(p.num_vars());
    m.write(witness, &mut y0);
    let opts = SdpOptions { initial: Some(y0), gap_tol: 1e-9, ..SdpOptions::default() };
    let r = solve_sdp(&p, &opts);
    r.status.has_solution().then(|| m.to_mat(&r.y))
}

/// Smallest `μ ≥ 1 + 1e-9` with `M_s ⪯ μ M_t`: the top generalized eigenvalue.
pub fn compute_mu(m_s: &Mat, m_t: &Mat) -> Result<f64> {
    if m_s.shape() != m_t.shape() || !m_s.is_square() {
        return Err(Error::DimensionMismatch("μ needs two square matrices of equal size".into()));
    }
    if Cholesky::new(numerics::symmetrize(m_s)).is_none() {
        return Err(Error::NotPositiveDefinite("M_s".into()));
    }
    let chol = Cholesky::new(numerics::symmetrize(m_t)).ok_or_else(|| Error::NotPositiveDefinite("M_t".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("M_t is numerically singular".into()))?;
    let w = &l_inv * m_s * l_inv.transpose();
    Ok(numerics::max_sym_eigenvalue(&w)?.max(MU_FLOOR))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub m: Vec<Mat>,
    pub alpha: Vec<f64>,
    /// `mu_pair[(s, t)]` bounds `V_s ≤ μ V_t` (jump from `t` into `s`); diagonal is 1.
    pub mu_pair: Mat,
    pub alpha_uniform: f64,
    pub mu_uniform: f64,
    /// `max_{t≠s} mu_pair[(s, t)]`.
    pub mu_mode: Vec<f64>,
    pub bisect_tol: f64,
}

impl LyapunovCertificate {
    /// Assembles aggregates from per-mode data.
    pub fn from_parts(m: Vec<Mat>, alpha: Vec<f64>, bisect_tol: f64) -> Result<Self> {
        let n = m.len();
        let pairs: Vec<((usize, usize), f64)> = (0..n)
            .flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(s, t)| compute_mu(&m[s], &m[t]).map(|mu| ((s, t), mu)))
            .collect::<Result<_>>()?;
        let mut mu_pair = Mat::identity(n, n);
        for ((s, t), mu) in pairs {
            mu_pair[(s, t)] = mu;
        }
        let mu_mode: Vec<f64> = (0..n)
            .map(|s| (0..n).filter(|&t| t != s).map(|t| mu_pair[(s, t)]).fold(MU_FLOOR, f64::max))
            .collect();
        let mu_uniform = mu_mode.iter().copied().fold(MU_FLOOR, f64::max);
        let alpha_uniform = alpha.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { m, alpha, mu_pair, alpha_uniform, mu_uniform, mu_mode, bisect_tol })
    }

    pub fn num_modes(&self) -> usize {
        self.alpha.len()
    }

    /// Rechecks `M_s ⪰ I`, `A_s'M_sA_s ⪯ (1-α_s)M_s` and `M_s ⪯ μ_{s,t}M_t` at `tol`.
    pub fn verify(&self, system: &SwitchedSystem, tol: f64) -> Result<bool> {
        let st = SymTol { psd_tol: tol, sym_tol: 1e-6 };
        let n = system.state_dim();
        let id = Mat::identity(n, n);
        for (s, a) in system.matrices().enumerate() {
            let m = &self.m[s];
            if !(self.alpha[s] > 0.0 && self.alpha[s] < 1.0) {
                return Ok(false);
            }
            if !numerics::is_psd(&numerics::symmetrize(&(m - &id)), st)? {
                return Ok(false);
            }
            let decay = m * (1.0 - self.alpha[s]) - a.transpose() * m * a;
            if !numerics::is_psd(&numerics::symmetrize(&decay), st)? {
                return Ok(false);
            }
            for t in 0..self.num_modes() {
                if t != s {
                    let mu = self.mu_pair[(s, t)];
                    if mu <= 1.0 || !numerics::is_psd(&numerics::symmetrize(&(&self.m[t] * mu - m)), st)? {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

/// Coefficients for every mode of `system`.
pub fn certify(system: &SwitchedSystem, bisect_tol: f64) -> Result<LyapunovCertificate> {
    let results: Vec<AlphaResult> = system
        .matrices()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .map(|(s, a)| {
            compute_alpha(a, bisect_tol).map_err(|e| match e {
                Error::UnstableMode { rho, .. } => Error::UnstableMode { mode: s, rho },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let tol = results.iter().map(|r| r.bisect_tol).fold(bisect_tol, f64::min);
    let alpha = results.iter().map(|r| r.alpha).collect();
    let m = results.into_iter().map(|r| r.m).collect();
    LyapunovCertificate::from_parts(m, alpha, tol)
}

/// `ln(1/(1-α)) / ln μ`, the admissible jump probability.
pub fn threshold(alpha: f64, mu: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("α must lie in (0, 1), got {alpha}")));
    }
    if !(mu > 1.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("μ must exceed 1, got {mu}")));
    }
    Ok(-(1.0 - alpha).ln() / mu.ln())
}

/// `Σ_s →p_s ln μ_s + p∞_s ln(1-α_s)`; negative values certify stability.
pub fn mode_dependent_lhs(inbound: &[f64], p_inf: &[f64], alpha: &[f64], mu: &[f64]) -> f64 {
    (0..alpha.len()).map(|s| inbound[s] * mu[s].ln() + p_inf[s] * (1.0 - alpha[s]).ln()).sum()
}

/// Serialized certificate, as written by `coefficients` and read via `--cert`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub alpha: Vec<f64>,
    pub mu_pair: Vec<Vec<f64>>,
    pub mu_mode: Vec<f64>,
    pub alpha_uniform: f64,
    pub mu_uniform: f64,
    pub m: Vec<Vec<Vec<f64>>>,
    pub bisect_tol: f64,
}

impl From<&LyapunovCertificate> for CertificateDoc {
    fn from(c: &LyapunovCertificate) -> Self {
        Self {
            alpha: c.alpha.clone(),
            mu_pair: numerics::to_rows(&c.mu_pair),
            mu_mode: c.mu_mode.clone(),
            alpha_uniform: c.alpha_uniform,
            mu_uniform: c.mu_uniform,
            m: c.m.iter().map(numerics::to_rows).collect(),
            bisect_tol: c.bisect_tol,
        }
    }
}

impl CertificateDoc {
    pub fn into_certificate(self) -> Result<LyapunovCertificate> {
        let n = self.alpha.len();
        if self.mu_pair.len() != n || self.mu_mode.len() != n || self.m.len() != n {
            return Err(Error::Validation("certificate arrays disagree on the number of modes".into()));
        }
        let m = self.m.iter().map(|r| numerics::from_rows(r)).collect::<Result<Vec<_>>>()?;
        Ok(LyapunovCertificate {
            m,
            alpha: self.alpha,
            mu_pair: numerics::from_rows(&self.mu_pair)?,
            alpha_uniform: self.alpha_uniform,
            mu_uniform: self.mu_uniform,
            mu_mode: self.mu_mode,
            bisect_tol: self.bisect_tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_alpha() {
        for (a, expect) in [(0.6, 0.64), (0.5, 0.75)] {
            let r = compute_alpha(&scalar(a), DEFAULT_BISECT_TOL).unwrap();
            assert!(r.alpha <= expect + 1e-12 && r.alpha > expect - DEFAULT_BISECT_TOL, "{a}: {}", r.alpha);
            assert!(r.m[(0, 0)] >= 1.0 - 1e-7);
        }
        assert_eq!(compute_alpha(&scalar(0.5), DEFAULT_BISECT_TOL).unwrap().alpha, 0.75);
    }

    #[test]
    fn unstable_mode_is_rejected() {
        assert!(matches!(compute_alpha(&scalar(1.0), DEFAULT_BISECT_TOL), Err(Error::UnstableMode { .. })));
        let sys = SwitchedSystem::from_matrices(vec![scalar(0.5), scalar(1.2)]).unwrap();
        assert!(matches!(certify(&sys, DEFAULT_BISECT_TOL), Err(Error::UnstableMode { mode: 1, .. })));
    }

    #[test]
    fn mu_examples() {
        let i = Mat::identity(3, 3);
        assert_relative_eq!(compute_mu(&(&i * 2.0), &i).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(compute_mu(&i, &i).unwrap(), MU_FLOOR);
        assert!(matches!(compute_mu(&-&i, &i), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn single_and_identical_modes() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.6]);
        let one = certify(&SwitchedSystem::from_matrices(vec![a.clone()]).unwrap(), DEFAULT_BISECT_TOL).unwrap();
        assert_eq!(one.mu_uniform, MU_FLOOR);
        let two = certify(&SwitchedSystem::from_matrices(vec![a.clone(), a]).unwrap(), DEFAULT_BISECT_TOL).unwrap();
        assert_eq!(two.alpha[0], two.alpha[1]);
        assert!((two.mu_pair[(0, 1)] - two.mu_pair[(1, 0)]).abs() < 1e-7);
    }

    #[test]
    fn threshold_values() {
        assert_relative_eq!(threshold(0.5, 2.0).unwrap(), 1.0, epsilon = 1e-15);
        let direct = (1.0 / (1.0 - 0.21875f64)).ln() / 1.682f64.ln();
        assert_relative_eq!(threshold(0.21875, 1.682).unwrap(), direct, epsilon = 1e-15);
        assert!((threshold(0.21875, 1.682).unwrap() - 0.47474).abs() < 5e-5);
        assert!(threshold(1e-12, 2.0).unwrap() < 1e-11);
        assert!(threshold(0.0, 2.0).is_err() && threshold(0.5, 1.0).is_err());
    }

    #[test]
    fn uniform_coefficients_reduce_to_jump_probability() {
        let inbound = [0.1, 0.05, 0.2];
        let p = [0.3, 0.5, 0.2];
        let (alpha, mu) = (0.2, 1.7);
        let p_jump: f64 = inbound.iter().sum();
        let lhs = mode_dependent_lhs(&inbound, &p, &[alpha; 3], &[mu; 3]);
        assert!((lhs - (p_jump * mu.ln() + (1.0 - alpha).ln())).abs() < 1e-12);
    }

    fn spd(n: usize) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let g = Mat::from_row_slice(n, n, &v);
            g.transpose() * g + Mat::identity(n, n) * 0.1
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn mu_matches_bisection(ms in spd(3), mt in spd(3)) {
            let mu = compute_mu(&ms, &mt).unwrap();
            let st = SymTol { psd_tol: 0.0, sym_tol: 1e-6 };
            let feasible = |m: f64| numerics::is_psd(&numerics::symmetrize(&(&mt * m - &ms)), st).unwrap();
            if mu > MU_FLOOR {
                let (mut lo, mut hi) = (0.0, mu * 2.0 + 1.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid) { hi = mid } else { lo = mid }
                }
                prop_assert!((hi - mu).abs() < 1e-8 * mu.max(1.0));
                prop_assert!(!feasible(mu - 2.0 * DEFAULT_BISECT_TOL));
            }
        }

        #[test]
        fn threshold_monotone(a1 in 0.01f64..0.99, a2 in 0.01f64..0.99, m1 in 1.01f64..5.0, m2 in 1.01f64..5.0) {
            let (alo, ahi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let (mlo, mhi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(threshold(alo, mlo).unwrap() <= threshold(ahi, mlo).unwrap());
            prop_assert!(threshold(alo, mhi).unwrap() <= threshold(alo, mlo).unwrap());
        }
    }
}
