//! Probability-one policy synthesis through occupation-measure LPs, robust
//! verification under Δ-approximation and a verified robust-synthesis loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{self, LyapunovCertificate};
use crate::markov::{
    delta_bounds_with, group_inverse_with, stationary_distribution, Classification, StationaryAnalysis,
};
use crate::model::{induce_chain, Dtmc, Mdp, MdpJls, Policy};
use crate::numerics::{self, Mat, Vector};
use crate::solvers::lp::{solve_lp, LpProblem, RowKind};
use crate::solvers::SolveStatus;

pub const DEFAULT_GAMMA0: f64 = 1e-7;
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Agreement demanded between LP values and quantities recomputed from the recovered chain.
pub const CONSISTENCY_TOL: f64 = 1e-8;
const LP_TOL: f64 = 1e-10;
/// Extra tightening so that rounding in the recovery cannot eat into `γ₀`.
const ROW_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ms-sdp")]
    MsSdp,
    #[serde(rename = "ms-cd")]
    MsCd,
    #[serde(rename = "p1-ind")]
    P1Independent,
    #[serde(rename = "p1-dep")]
    P1Dependent,
    #[serde(rename = "p1-robust")]
    P1Robust,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MsSdp => "ms-sdp",
            Self::MsCd => "ms-cd",
            Self::P1Independent => "p1-ind",
            Self::P1Dependent => "p1-dep",
            Self::P1Robust => "p1-robust",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::MsSdp, Self::MsCd, Self::P1Independent, Self::P1Dependent, Self::P1Robust]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Jump-rate coefficients driving the probability-one conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Uniform { alpha: f64, mu: f64 },
    PerMode(LyapunovCertificate),
}

impl Coefficients {
    fn validate(&self, modes: usize) -> Result<()> {
        match self {
            Self::Uniform { alpha, mu } => lyapunov::threshold(*alpha, *mu).map(|_| ()),
            Self::PerMode(c) => {
                if c.num_modes() != modes {
                    return Err(Error::DimensionMismatch(format!(
                        "certificate has {} modes, model has {modes}",
                        c.num_modes()
                    )));
                }
                for (a, m) in c.alpha.iter().zip(&c.mu_mode) {
                    lyapunov::threshold(*a, *m)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Options {
    /// Lower bound `ε` on every stationary probability.
    pub epsilon: f64,
    /// Margin `γ₀` enforcing strict inequalities.
    pub gamma0: f64,
}

impl Default for P1Options {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, gamma0: DEFAULT_GAMMA0 }
    }
}

/// `π̂ = diag(p∞)π`, `P̂ = diag(p∞)P`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationSolution {
    pub pi_hat: Mat,
    pub p_inf: Vector,
    pub p_hat: Mat,
    pub epsilon: f64,
}

impl OccupationSolution {
    pub fn from_parts(mdp: &Mdp, pi_hat: Mat, p_inf: Vector, epsilon: f64) -> Self {
        let n = mdp.num_states();
        let p_hat = Mat::from_fn(n, n, |i, j| {
            mdp.available_actions(i).map(|a| mdp.t(i, a, j) * pi_hat[(i, a)]).sum()
        });
        Self { pi_hat, p_inf, p_hat, epsilon }
    }

    /// Largest violation among the defining identities.
    pub fn identity_residual(&self, mdp: &Mdp) -> f64 {
        let n = mdp.num_states();
        let mut r: f64 = (self.p_inf.sum() - 1.0).abs();
        for i in 0..n {
            r = r.max(self.epsilon - self.p_inf[i]);
            r = r.max((self.pi_hat.row(i).sum() - self.p_inf[i]).abs());
            r = r.max((self.p_hat.column(i).sum() - self.p_inf[i]).abs());
            for a in 0..mdp.num_actions() {
                r = r.max(-self.pi_hat[(i, a)]);
            }
            for j in 0..n {
                let direct: f64 = mdp.available_actions(i).map(|a| mdp.t(i, a, j) * self.pi_hat[(i, a)]).sum();
                r = r.max((self.p_hat[(i, j)] - direct).abs());
            }
        }
        r
    }

    /// `π = diag(p∞)⁻¹π̂` and the induced chain.
    pub fn recover(&self, mdp: &Mdp) -> Result<(Policy, Dtmc)> {
        let n = mdp.num_states();
        let mut probs = Mat::zeros(n, mdp.num_actions());
        for i in 0..n {
            if self.p_inf[i] <= 0.0 {
                return Err(Error::ConsistencyFailure(format!("stationary mass of state {i} is not positive")));
            }
            let total: f64 = (0..mdp.num_actions()).map(|a| self.pi_hat[(i, a)].max(0.0)).sum();
            for a in 0..mdp.num_actions() {
                probs[(i, a)] = self.pi_hat[(i, a)].max(0.0) / total;
            }
        }
        let policy = Policy::new(probs, mdp)?;
        let chain = induce_chain(mdp, &policy)?;
        Ok((policy, chain))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustMode {
    Independent,
    Dependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustVerdict {
    pub mode: RobustMode,
    pub delta: f64,
    pub nominal_lhs: f64,
    pub robust_lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl RobustVerdict {
    pub fn margin(&self) -> f64 {
        self.rhs - self.robust_lhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub method: Method,
    pub policy: Policy,
    pub chain: Dtmc,
    /// Absent when the chain has several closed classes (allowed for mean-square results).
    pub analysis: Option<StationaryAnalysis>,
    /// Positive slack of the condition that certified the policy.
    pub margin: f64,
    pub objective: Option<f64>,
    pub ms_rho: Option<f64>,
    /// `V_i` with `V_i ≻ 0` and `V_j - 𝒯_j(V) ≻ 0`.
    pub lmi_certificate: Option<Vec<Mat>>,
    pub coefficients: Option<Coefficients>,
    pub robust: Option<RobustVerdict>,
    pub warnings: Vec<String>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthesisOutcome {
    Stabilized(Box<SynthesisResult>),
    Infeasible(String),
    NotCertified { iterations: usize, best_gamma: f64 },
}

impl SynthesisOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Self::Stabilized(_))
    }

    pub fn result(&self) -> Option<&SynthesisResult> {
        match self {
            Self::Stabilized(r) => Some(r),
            _ => None,
        }
    }
}

enum StabilityRow<'a> {
    Independent { threshold: f64 },
    Dependent { alpha: &'a [f64], mu: &'a [f64] },
}

struct OccupationLp {
    lp: LpProblem,
    /// `π̂` variable per available (state, action).
    pi_vars: Vec<Vec<Option<usize>>>,
    p_vars: Vec<usize>,
    /// Index of the stability row.
    stability: usize,
    slack: Option<usize>,
}

fn occupation_lp(jls: &MdpJls, row: &StabilityRow, opts: &P1Options, tighten: f64, maximize_slack: bool) -> OccupationLp {
    let mdp = &jls.mdp;
    let n = mdp.num_states();
    let mut nvars = 0;
    let pi_vars: Vec<Vec<Option<usize>>> = (0..n)
        .map(|i| {
            (0..mdp.num_actions())
                .map(|a| {
                    mdp.is_available(i, a).then(|| {
                        nvars += 1;
                        nvars - 1
                    })
                })
                .collect()
        })
        .collect();
    let p_vars: Vec<usize> = (0..n).map(|k| nvars + k).collect();
    nvars += n;
    let slack = maximize_slack.then_some(nvars);
    if maximize_slack {
        nvars += 1;
    }
    let mut lp = LpProblem::new(nvars);
    for &v in &p_vars {
        lp.lower[v] = opts.epsilon;
    }
    for i in 0..n {
        let mut c = Vector::zeros(nvars);
        for v in pi_vars[i].iter().flatten() {
            c[*v] = 1.0;
        }
        c[p_vars[i]] = -1.0;
        lp.add_row(sparse(&c), RowKind::Eq, 0.0);
    }
    let mut c = Vector::zeros(nvars);
    for &v in &p_vars {
        c[v] = 1.0;
    }
    lp.add_row(sparse(&c), RowKind::Eq, 1.0);
    // P̂'1 = p∞ with P̂_ij = Σ_σ T(i,σ,j) π̂(i,σ)
    let phat = |i: usize, j: usize, c: &mut Vector, scale: f64| {
        for (a, v) in pi_vars[i].iter().enumerate() {
            if let Some(v) = v {
                c[*v] += scale * mdp.t(i, a, j);
            }
        }
    };
    for j in 0..n {
        let mut c = Vector::zeros(nvars);
        for i in 0..n {
            phat(i, j, &mut c, 1.0);
        }
        c[p_vars[j]] -= 1.0;
        lp.add_row(sparse(&c), RowKind::Eq, 0.0);
    }
    let mut c = Vector::zeros(nvars);
    let rhs = match row {
        StabilityRow::Independent { threshold } => {
            // 1 - Tr P̂ ≤ threshold - margin
            for i in 0..n {
                phat(i, i, &mut c, -1.0);
            }
            threshold - 1.0 - tighten
        }
        StabilityRow::Dependent { alpha, mu } => {
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    phat(j, i, &mut c, mu[i].ln());
                }
                c[p_vars[i]] += (1.0 - alpha[i]).ln();
            }
            -tighten
        }
    };
    if let Some(s) = slack {
        c[s] = 1.0;
        lp.set_free(s);
        lp.add_row(vec![(s, 1.0)], RowKind::Le, 1e3);
        lp.objective[s] = -1.0;
    } else {
        for (i, &v) in p_vars.iter().enumerate() {
            lp.objective[v] = jls.costs[i];
        }
    }
    lp.add_row(sparse(&c), RowKind::Le, rhs);
    let stability = lp.rows.len() - 1;
    OccupationLp { lp, pi_vars, p_vars, stability, slack }
}

impl OccupationLp {
    fn solution(&self, mdp: &Mdp, x: &Vector, epsilon: f64) -> OccupationSolution {
        let n = mdp.num_states();
        let mut pi_hat = Mat::zeros(n, mdp.num_actions());
        for (i, row) in self.pi_vars.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    pi_hat[(i, a)] = x[*v];
                }
            }
        }
        let p_inf = Vector::from_fn(n, |i, _| x[self.p_vars[i]]);
        OccupationSolution::from_parts(mdp, pi_hat, p_inf, epsilon)
    }
}

fn sparse(c: &Vector) -> Vec<(usize, f64)> {
    c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect()
}

fn check_opts(opts: &P1Options) -> Result<()> {
    if !(opts.epsilon > 0.0 && opts.epsilon < 1.0 && opts.gamma0 >= 0.0) {
        return Err(Error::Domain(format!("need 0 < ε < 1 and γ₀ ≥ 0, got ε = {}, γ₀ = {}", opts.epsilon, opts.gamma0)));
    }
    Ok(())
}

/// Mode-dependent left-hand side from a recomputed analysis.
fn dependent_lhs(a: &StationaryAnalysis, alpha: &[f64], mu: &[f64]) -> f64 {
    lyapunov::mode_dependent_lhs(a.inbound.as_slice(), a.p_inf.as_slice(), alpha, mu)
}

/// Solves the occupation LP and re-derives everything from the recovered policy.
fn solve_and_recover(
    jls: &MdpJls,
    row: &StabilityRow,
    opts: &P1Options,
    tighten: f64,
) -> Result<Option<(OccupationSolution, Policy, Dtmc, StationaryAnalysis)>> {
    let problem = occupation_lp(jls, row, opts, tighten + ROW_GUARD, false);
    let sol = solve_lp(&problem.lp, LP_TOL)?;
    match sol.report.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Ok(None),
        other => return Err(Error::SolverFailure(format!("occupation LP: {other:?}"))),
    }
    let occ = problem.solution(&jls.mdp, &sol.report.y, opts.epsilon);
    let res = occ.identity_residual(&jls.mdp);
    if res > CONSISTENCY_TOL {
        return Err(Error::ConsistencyFailure(format!("occupation identities violated by {res:e}")));
    }
    let (policy, chain) = occ.recover(&jls.mdp)?;
    let analysis = stationary_distribution(&chain).map_err(|e| match e {
        Error::NonUnichain { closed_classes } => {
            Error::ConsistencyFailure(format!("recovered chain has {closed_classes} closed classes"))
        }
        other => other,
    })?;
    let dev = (&analysis.p_inf - &occ.p_inf).amax();
    if dev > CONSISTENCY_TOL {
        return Err(Error::ConsistencyFailure(format!("recomputed stationary distribution deviates by {dev:e}")));
    }
    Ok(Some((occ, policy, chain, analysis)))
}

fn base_warnings(a: &StationaryAnalysis) -> Vec<String> {
    match a.classification {
        Classification::UnichainPeriodic => {
            vec!["induced chain is periodic; jump frequencies are long-run averages only".into()]
        }
        _ => Vec::new(),
    }
}

fn independent_result(
    jls: &MdpJls,
    alpha: f64,
    mu: f64,
    opts: &P1Options,
    tighten: f64,
) -> Result<Option<SynthesisResult>> {
    let threshold = lyapunov::threshold(alpha, mu)?;
    let row = StabilityRow::Independent { threshold };
    let Some((_, policy, chain, analysis)) = solve_and_recover(jls, &row, opts, opts.gamma0.max(tighten))? else {
        return Ok(None);
    };
    if analysis.p_jump >= threshold {
        return Err(Error::ConsistencyFailure(format!(
            "recovered jump probability {} does not beat the threshold {threshold}",
            analysis.p_jump
        )));
    }
    Ok(Some(SynthesisResult {
        method: Method::P1Independent,
        margin: threshold - analysis.p_jump,
        objective: Some(analysis.p_inf.dot(&jls.costs)),
        warnings: base_warnings(&analysis),
        policy,
        chain,
        analysis: Some(analysis),
        ms_rho: None,
        lmi_certificate: None,
        coefficients: Some(Coefficients::Uniform { alpha, mu }),
        robust: None,
        iterations: 1,
    }))
}

fn dependent_result(
    jls: &MdpJls,
    cert: &LyapunovCertificate,
    opts: &P1Options,
    tighten: f64,
) -> Result<Option<SynthesisResult>> {
    let row = StabilityRow::Dependent { alpha: &cert.alpha, mu: &cert.mu_mode };
    let Some((_, policy, chain, analysis)) = solve_and_recover(jls, &row, opts, opts.gamma0.max(tighten))? else {
        return Ok(None);
    };
    let lhs = dependent_lhs(&analysis, &cert.alpha, &cert.mu_mode);
    if lhs >= 0.0 {
        return Err(Error::ConsistencyFailure(format!("recovered mode-dependent condition evaluates to {lhs}")));
    }
    Ok(Some(SynthesisResult {
        method: Method::P1Dependent,
        margin: -lhs,
        objective: Some(analysis.p_inf.dot(&jls.costs)),
        warnings: base_warnings(&analysis),
        policy,
        chain,
        analysis: Some(analysis),
        ms_rho: None,
        lmi_certificate: None,
        coefficients: Some(Coefficients::PerMode(cert.clone())),
        robust: None,
        iterations: 1,
    }))
}

fn wrap(r: Option<SynthesisResult>) -> SynthesisOutcome {
    match r {
        Some(r) => SynthesisOutcome::Stabilized(Box::new(r)),
        None => SynthesisOutcome::Infeasible("no policy satisfies the jump-frequency condition".into()),
    }
}

/// Minimizes `Σ c(s)p∞_s` subject to `P_jump ≤ threshold(α, μ) - γ₀`.
pub fn synthesize_p1_independent(jls: &MdpJls, alpha: f64, mu: f64, opts: &P1Options) -> Result<SynthesisOutcome> {
    check_opts(opts)?;
    Ok(wrap(independent_result(jls, alpha, mu, opts, 0.0)?))
}

/// Minimizes `Σ c(s)p∞_s` subject to `Σ_i →p_i ln μ_i + p∞_i ln(1-α_i) ≤ -γ₀`.
pub fn synthesize_p1_dependent(jls: &MdpJls, cert: &LyapunovCertificate, opts: &P1Options) -> Result<SynthesisOutcome> {
    check_opts(opts)?;
    Coefficients::PerMode(cert.clone()).validate(jls.num_modes())?;
    Ok(wrap(dependent_result(jls, cert, opts, 0.0)?))
}

fn estimate_analysis(jls: &MdpJls, policy: &Policy) -> Result<(Dtmc, StationaryAnalysis)> {
    policy.validate(&jls.mdp)?;
    let chain = induce_chain(&jls.mdp, policy)?;
    let analysis = stationary_distribution(&chain)?;
    Ok((chain, analysis))
}

/// Jump-frequency condition for every chain within Δ of the estimate.
pub fn verify_robust_independent(
    policy: &Policy,
    jls_estimate: &MdpJls,
    delta: f64,
    alpha: f64,
    mu: f64,
) -> Result<RobustVerdict> {
    let threshold = lyapunov::threshold(alpha, mu)?;
    let (chain, a) = estimate_analysis(jls_estimate, policy)?;
    let gi = group_inverse_with(&chain, &a)?;
    let bound = delta_bounds_with(&chain.p, &a, &gi, delta)?;
    let robust_lhs = a.p_jump + bound.pjump_excess;
    Ok(RobustVerdict {
        mode: RobustMode::Independent,
        delta,
        nominal_lhs: a.p_jump,
        robust_lhs,
        rhs: threshold,
        satisfied: robust_lhs < threshold,
    })
}

/// Mode-dependent condition for every chain within Δ of the estimate: inbound
/// frequencies are raised by their excess and occupancies lowered by their deviation.
pub fn verify_robust_dependent(
    policy: &Policy,
    jls_estimate: &MdpJls,
    delta: f64,
    cert: &LyapunovCertificate,
) -> Result<RobustVerdict> {
    Coefficients::PerMode(cert.clone()).validate(jls_estimate.num_modes())?;
    let (chain, a) = estimate_analysis(jls_estimate, policy)?;
    let gi = group_inverse_with(&chain, &a)?;
    let bound = delta_bounds_with(&chain.p, &a, &gi, delta)?;
    let nominal_lhs = dependent_lhs(&a, &cert.alpha, &cert.mu_mode);
    let robust_lhs = (0..a.p_inf.len())
        .map(|i| {
            let inbound = a.inbound[i] + bound.inbound_excess[i];
            let occupancy = (a.p_inf[i] - bound.stationary_dev[i]).max(0.0);
            inbound * cert.mu_mode[i].ln() + occupancy * (1.0 - cert.alpha[i]).ln()
        })
        .sum();
    Ok(RobustVerdict {
        mode: RobustMode::Dependent,
        delta,
        nominal_lhs,
        robust_lhs,
        rhs: 0.0,
        satisfied: robust_lhs < 0.0,
    })
}

pub fn verify_robust(policy: &Policy, jls_estimate: &MdpJls, delta: f64, coeffs: &Coefficients) -> Result<RobustVerdict> {
    match coeffs {
        Coefficients::Uniform { alpha, mu } => verify_robust_independent(policy, jls_estimate, delta, *alpha, *mu),
        Coefficients::PerMode(c) => verify_robust_dependent(policy, jls_estimate, delta, c),
    }
}

/// Largest achievable slack of the stability row.
fn max_slack(jls: &MdpJls, coeffs: &Coefficients, opts: &P1Options) -> Result<Option<f64>> {
    let problem = match coeffs {
        Coefficients::Uniform { alpha, mu } => occupation_lp(
            jls,
            &StabilityRow::Independent { threshold: lyapunov::threshold(*alpha, *mu)? },
            opts,
            0.0,
            true,
        ),
        Coefficients::PerMode(c) => {
            occupation_lp(jls, &StabilityRow::Dependent { alpha: &c.alpha, mu: &c.mu_mode }, opts, 0.0, true)
        }
    };
    let sol = solve_lp(&problem.lp, LP_TOL)?;
    let _ = problem.stability;
    match sol.report.status {
        SolveStatus::Optimal => Ok(problem.slack.map(|s| sol.report.y[s])),
        SolveStatus::Infeasible => Ok(None),
        other => Err(Error::SolverFailure(format!("slack LP: {other:?}"))),
    }
}

/// Tightening budgets tried by [`synthesize_p1_robust`], ascending.
pub fn tightening_grid(max_slack: f64) -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend((1..=10).rev().map(|k| max_slack * 0.5f64.powi(k)));
    g.push(max_slack * (1.0 - 0.5f64.powi(10)));
    g
}

/// Tightens the nominal stability row by increasing budgets and returns the
/// first policy whose robust verdict holds.
pub fn synthesize_p1_robust(
    jls_estimate: &MdpJls,
    delta: f64,
    coeffs: &Coefficients,
    opts: &P1Options,
) -> Result<SynthesisOutcome> {
    check_opts(opts)?;
    coeffs.validate(jls_estimate.num_modes())?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Domain(format!("Δ must lie in [0, 1], got {delta}")));
    }
    let Some(m_star) = max_slack(jls_estimate, coeffs, opts)? else {
        return Ok(SynthesisOutcome::Infeasible("nominal condition has no feasible policy".into()));
    };
    if m_star <= opts.gamma0 {
        return Ok(SynthesisOutcome::Infeasible(format!("largest nominal margin {m_star:e} is below γ₀")));
    }
    let grid = tightening_grid(m_star);
    let mut last_lhs = None;
    for (k, &tau) in grid.iter().enumerate() {
        if tau > 0.0 && tau <= opts.gamma0 {
            continue;
        }
        let nominal = match coeffs {
            Coefficients::Uniform { alpha, mu } => independent_result(jls_estimate, *alpha, *mu, opts, tau),
            Coefficients::PerMode(c) => dependent_result(jls_estimate, c, opts, tau),
        };
        let mut res = match nominal {
            Ok(Some(r)) => r,
            Ok(None) | Err(Error::ConsistencyFailure(_)) => continue,
            Err(e) => return Err(e),
        };
        let verdict = verify_robust(&res.policy, jls_estimate, delta, coeffs)?;
        last_lhs = Some(verdict.robust_lhs);
        if verdict.satisfied {
            res.method = Method::P1Robust;
            res.margin = verdict.margin();
            res.iterations = k + 1;
            res.robust = Some(verdict);
            return Ok(SynthesisOutcome::Stabilized(Box::new(res)));
        }
    }
    Ok(SynthesisOutcome::Infeasible(match last_lhs {
        Some(l) => format!("no tightening budget verified; last robust left-hand side {l}"),
        None => "no tightening budget produced a policy".into(),
    }))
}

/// Serialized coefficients attached to a synthesis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsDoc {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_pair: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustDoc {
    pub delta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub nominal_lhs: f64,
}

/// Report written by `synthesize --out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub method: Method,
    pub policy: Vec<Vec<f64>>,
    #[serde(rename = "induced_P")]
    pub induced_p: Vec<Vec<f64>>,
    pub stationary: Option<Vec<f64>>,
    pub p_jump: Option<f64>,
    pub margin: f64,
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms_rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust: Option<RobustDoc>,
    pub warnings: Vec<String>,
}

impl From<&SynthesisResult> for SynthesisReport {
    fn from(r: &SynthesisResult) -> Self {
        let coefficients = r.coefficients.as_ref().map(|c| match c {
            Coefficients::Uniform { alpha, mu } => CoefficientsDoc { alpha: vec![*alpha], mu: vec![*mu], mu_pair: None },
            Coefficients::PerMode(c) => CoefficientsDoc {
                alpha: c.alpha.clone(),
                mu: c.mu_mode.clone(),
                mu_pair: Some(numerics::to_rows(&c.mu_pair)),
            },
        });
        Self {
            method: r.method,
            policy: numerics::to_rows(&r.policy.probs),
            induced_p: numerics::to_rows(&r.chain.p),
            stationary: r.analysis.as_ref().map(|a| a.p_inf.iter().copied().collect()),
            p_jump: r.analysis.as_ref().map(|a| a.p_jump),
            margin: r.margin,
            objective: r.objective,
            ms_rho: r.ms_rho,
            coefficients,
            robust: r.robust.as_ref().map(|v| RobustDoc {
                delta: v.delta,
                lhs: v.robust_lhs,
                rhs: v.rhs,
                nominal_lhs: v.nominal_lhs,
            }),
            warnings: r.warnings.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SwitchedSystem;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn jls(modes: usize, actions: Vec<Mat>) -> MdpJls {
        let sys = SwitchedSystem::from_matrices(vec![Mat::identity(1, 1) * 0.5; modes]).unwrap();
        let names = |p: &str, k: usize| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let mdp = Mdp::new(names("s", modes), 0, names("a", actions.len()), actions).unwrap();
        MdpJls::new(sys, mdp, None).unwrap()
    }

    fn stay_move() -> MdpJls {
        jls(
            2,
            vec![
                Mat::from_row_slice(2, 2, &[0.99, 0.01, 0.01, 0.99]),
                Mat::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
            ],
        )
    }

    fn cert(alpha: Vec<f64>, mu: Vec<f64>) -> LyapunovCertificate {
        let n = alpha.len();
        let m = vec![Mat::identity(1, 1); n];
        let mut c = LyapunovCertificate::from_parts(m, alpha, 1.0 / 128.0).unwrap();
        c.mu_mode = mu;
        c.mu_uniform = c.mu_mode.iter().copied().fold(1.0, f64::max);
        c
    }

    /// Smallest jump probability over randomized policies on a 0.01 grid.
    fn grid_min_pjump(j: &MdpJls) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..=100 {
            for b in 0..=100 {
                let (x, y) = (a as f64 / 100.0, b as f64 / 100.0);
                let p = Policy::new(Mat::from_row_slice(2, 2, &[x, 1.0 - x, y, 1.0 - y]), &j.mdp).unwrap();
                let c = induce_chain(&j.mdp, &p).unwrap();
                if let Ok(a) = stationary_distribution(&c) {
                    best = best.min(a.p_jump);
                }
            }
        }
        best
    }

    #[test]
    fn trivial_single_state() {
        let j = jls(1, vec![Mat::identity(1, 1)]);
        let r = synthesize_p1_independent(&j, 0.5, 2.0, &P1Options::default()).unwrap();
        let r = r.result().unwrap();
        assert_eq!(r.policy.probs[(0, 0)], 1.0);
        assert_eq!(r.analysis.as_ref().unwrap().p_jump, 0.0);
    }

    #[test]
    fn feasibility_boundary_matches_grid() {
        let j = stay_move();
        let floor = grid_min_pjump(&j);
        assert_relative_eq!(floor, 0.01, epsilon = 1e-12);
        // μ chosen so the threshold sits on either side of the smallest achievable jump rate
        for (thr, feasible) in [(0.2, true), (0.0105, true), (0.0095, false)] {
            let alpha: f64 = 0.5;
            let mu = (-(1.0 - alpha).ln() / thr).exp();
            let out = synthesize_p1_independent(&j, alpha, mu, &P1Options::default()).unwrap();
            assert_eq!(out.is_success(), feasible, "threshold {thr}");
            if let Some(r) = out.result() {
                assert!(r.analysis.as_ref().unwrap().p_jump < thr);
                assert!(r.policy.probs[(0, 0)] > 0.5);
            }
        }
    }

    #[test]
    fn uniform_coefficients_reduce_to_independent() {
        let j = stay_move();
        for thr in [0.2, 0.0105, 0.0095, 0.5] {
            let alpha: f64 = 0.3;
            let mu = (-(1.0 - alpha).ln() / thr).exp();
            let ind = synthesize_p1_independent(&j, alpha, mu, &P1Options::default()).unwrap();
            let dep = synthesize_p1_dependent(&j, &cert(vec![alpha; 2], vec![mu; 2]), &P1Options::default()).unwrap();
            assert_eq!(ind.is_success(), dep.is_success(), "threshold {thr}");
        }
    }

    #[test]
    fn dependent_beats_independent_when_one_mode_absorbs_jumps() {
        // mode 1 decays fast and barely grows on entry, mode 0 is the opposite
        let j = jls(
            2,
            vec![
                Mat::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
                Mat::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.7]),
            ],
        );
        let c = cert(vec![0.05, 0.6], vec![3.0, 1.05]);
        let dep = synthesize_p1_dependent(&j, &c, &P1Options::default()).unwrap();
        let ind = synthesize_p1_independent(&j, c.alpha_uniform, 3.0, &P1Options::default()).unwrap();
        assert!(dep.is_success());
        assert!(!ind.is_success());
        let r = dep.result().unwrap();
        let a = r.analysis.as_ref().unwrap();
        assert!(dependent_lhs(a, &c.alpha, &c.mu_mode) <= -DEFAULT_GAMMA0 + 1e-12);
    }

    #[test]
    fn robust_reductions() {
        let j = stay_move();
        let p = Policy::new(Mat::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]), &j.mdp).unwrap();
        let a = stationary_distribution(&induce_chain(&j.mdp, &p).unwrap()).unwrap();
        let v = verify_robust_independent(&p, &j, 0.0, 0.5, 2.0).unwrap();
        assert_eq!(v.robust_lhs, a.p_jump);
        assert_eq!(v.nominal_lhs, a.p_jump);
        let c = cert(vec![0.3, 0.5], vec![1.5, 2.0]);
        let v = verify_robust_dependent(&p, &j, 0.0, &c).unwrap();
        assert_eq!(v.robust_lhs, v.nominal_lhs);
        assert!(!verify_robust_independent(&p, &j, 1.0, 0.5, 2.0).unwrap().satisfied);
    }

    #[test]
    fn robust_synthesis_zero_delta_is_nominal() {
        let j = stay_move();
        let coeffs = Coefficients::Uniform { alpha: 0.5, mu: 2.0 };
        let out = synthesize_p1_robust(&j, 0.0, &coeffs, &P1Options::default()).unwrap();
        let r = out.result().unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.robust.as_ref().unwrap().satisfied);
        // Δ alone beyond the threshold
        let thr = lyapunov::threshold(0.5, 2.0).unwrap();
        let big = Coefficients::Uniform { alpha: 0.5, mu: 2.0 };
        let out = synthesize_p1_robust(&j, (thr * 1.01).min(1.0), &big, &P1Options::default()).unwrap();
        assert!(!out.is_success());
    }

    #[test]
    fn tightening_grid_shape() {
        let g = tightening_grid(1.0);
        assert_eq!(g.len(), 12);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.5f64.powi(10));
        assert_eq!(g[10], 0.5);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    fn random_instance() -> impl Strategy<Value = (MdpJls, Mat)> {
        (2usize..=4).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.05f64..1.0, 2 * n * n),
                proptest::collection::vec(0.05f64..1.0, 2 * n),
            )
                .prop_map(move |(t, pi)| {
                    let mats: Vec<Mat> = (0..2)
                        .map(|a| {
                            let mut m = Mat::from_row_slice(n, n, &t[a * n * n..(a + 1) * n * n]);
                            for mut r in m.row_iter_mut() {
                                let s = r.sum();
                                r /= s;
                            }
                            m
                        })
                        .collect();
                    let mut probs = Mat::from_row_slice(n, 2, &pi);
                    for mut r in probs.row_iter_mut() {
                        let s = r.sum();
                        r /= s;
                    }
                    (jls(n, mats), probs)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn occupation_round_trip((j, probs) in random_instance()) {
            let policy = Policy::new(probs, &j.mdp).unwrap();
            let chain = induce_chain(&j.mdp, &policy).unwrap();
            let a = stationary_distribution(&chain).unwrap();
            let n = j.mdp.num_states();
            let pi_hat = Mat::from_fn(n, 2, |i, k| a.p_inf[i] * policy.probs[(i, k)]);
            let occ = OccupationSolution::from_parts(&j.mdp, pi_hat, a.p_inf.clone(), 1e-9);
            prop_assert!(occ.identity_residual(&j.mdp) < 1e-10);
            let (p2, c2) = occ.recover(&j.mdp).unwrap();
            prop_assert!((&p2.probs - &policy.probs).amax() < 1e-12);
            let left = &a.p_inf.transpose() * &c2.p;
            prop_assert!((left.transpose() - &a.p_inf).amax() < 1e-10);
            // stability-row expressions agree with the recomputed statistics
            prop_assert!(((1.0 - occ.p_hat.trace()) - a.p_jump).abs() < 1e-10);
            for i in 0..n {
                let inbound: f64 = (0..n).filter(|&k| k != i).map(|k| occ.p_hat[(k, i)]).sum();
                prop_assert!((inbound - a.inbound[i]).abs() < 1e-10);
            }
        }

        #[test]
        fn robust_verdicts_monotone_in_delta((j, probs) in random_instance()) {
            let policy = Policy::new(probs, &j.mdp).unwrap();
            let n = j.mdp.num_states();
            let c = cert((0..n).map(|i| 0.1 + 0.1 * i as f64).collect(), (0..n).map(|i| 1.2 + 0.3 * i as f64).collect());
            let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for k in 0..=10 {
                let d = 0.002 * k as f64;
                let vi = verify_robust_independent(&policy, &j, d, 0.3, 1.5).unwrap();
                let vd = verify_robust_dependent(&policy, &j, d, &c).unwrap();
                prop_assert!(vi.robust_lhs >= vi.nominal_lhs && vd.robust_lhs >= vd.nominal_lhs);
                prop_assert!(vi.robust_lhs >= prev.0 && vd.robust_lhs >= prev.1);
                prev = (vi.robust_lhs, vd.robust_lhs);
            }
        }
    }
}
