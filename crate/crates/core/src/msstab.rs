//! Mean-square stability: the augmented-matrix test, the LMI condition,
//! the deterministic-policy study, the convex relaxation and coordinate descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::stationary_distribution;
use crate::model::{enumerate_deterministic_policies, induce_chain, Dtmc, MdpJls, Policy, SwitchedSystem};
use crate::numerics::{self, Mat, Vector};
use crate::solvers::sdp::{solve_sdp_until, Affine, LmiBlock, SdpOptions, SdpProblem, SocConstraint, SymVar};
use crate::solvers::SolveStatus;
use crate::synth::{Method, SynthesisOutcome, SynthesisResult};

/// Stability is declared when `ρ < 1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Strictness margin of the LMI condition.
pub const LMI_MARGIN: f64 = 1e-9;

/// Above this augmented dimension the radius is computed iteratively on the second-moment map.
pub const DENSE_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusMethod {
    Dense,
    PowerIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsVerdict {
    pub rho: f64,
    pub stable: bool,
    pub mode_of_failure: Option<String>,
    pub method: RadiusMethod,
}

fn check_dims(system: &SwitchedSystem, chain: &Dtmc) -> Result<()> {
    if system.num_modes() != chain.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "{} modes but the chain has {} states",
            system.num_modes(),
            chain.num_states()
        )));
    }
    Ok(())
}

/// `(P' ⊗ I_{n²}) · blockdiag(A_i ⊗ A_i)`.
pub fn build_augmented(system: &SwitchedSystem, chain: &Dtmc) -> Result<Mat> {
    check_dims(system, chain)?;
    let n2 = system.state_dim().pow(2);
    let big = system.num_modes() * n2;
    let kr: Vec<Mat> = system.matrices().map(|a| numerics::kron(a, a)).collect();
    let mut out = Mat::zeros(big, big);
    for j in 0..chain.num_states() {
        for i in 0..chain.num_states() {
            let pij = chain.p[(i, j)];
            if pij != 0.0 {
                out.view_mut((j * n2, i * n2), (n2, n2)).copy_from(&(&kr[i] * pij));
            }
        }
    }
    Ok(out)
}

/// `𝒯_j(Q) = Σ_i P_ij A_i Q_i A_i'`.
pub fn second_moment_step(system: &SwitchedSystem, chain: &Dtmc, q: &[Mat]) -> Result<Vec<Mat>> {
    check_dims(system, chain)?;
    let n = system.state_dim();
    if q.len() != system.num_modes() || q.iter().any(|m| m.shape() != (n, n)) {
        return Err(Error::DimensionMismatch("one n×n matrix per mode expected".into()));
    }
    let aqa: Vec<Mat> = system.matrices().zip(q).map(|(a, qi)| a * qi * a.transpose()).collect();
    Ok((0..system.num_modes())
        .map(|j| {
            let mut acc = Mat::zeros(n, n);
            for (i, m) in aqa.iter().enumerate() {
                let pij = chain.p[(i, j)];
                if pij != 0.0 {
                    acc += m * pij;
                }
            }
            acc
        })
        .collect())
}

/// Bounds on `ρ(𝒯)` from `Q ≻ 0`: `min_j λ_min` and `max_j λ_max` of `Q_j^{-1/2} 𝒯_j(Q) Q_j^{-1/2}`.
fn collatz_bounds(q: &[Mat], tq: &[Mat]) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (qj, tj) in q.iter().zip(tq) {
        let l = nalgebra::Cholesky::new(numerics::symmetrize(qj))?.l();
        let li = l.try_inverse()?;
        let w = numerics::symmetrize(&(&li * tj * li.transpose()));
        let ev = numerics::sym_eigenvalues(&w).ok()?;
        lo = lo.min(ev[0]);
        hi = hi.max(ev[ev.len() - 1]);
    }
    Some((lo.max(0.0), hi))
}

/// Spectral radius of the second-moment map by power iteration with
/// two-sided cone bounds; stops once the bounds decide stability and agree to `1e-10`.
fn iterative_radius(system: &SwitchedSystem, chain: &Dtmc) -> Result<f64> {
    let n = system.state_dim();
    let mut q: Vec<Mat> = vec![Mat::identity(n, n); system.num_modes()];
    let mut best_hi = f64::INFINITY;
    let mut best_lo: f64 = 0.0;
    for k in 0..20_000 {
        let tq = second_moment_step(system, chain, &q)?;
        if k % 8 == 0 {
            if let Some((lo, hi)) = collatz_bounds(&q, &tq) {
                best_lo = best_lo.max(lo);
                best_hi = best_hi.min(hi);
            }
            if best_hi - best_lo <= 1e-10 * best_hi.max(1.0) {
                break;
            }
        }
        let total: f64 = tq.iter().map(|m| m.trace()).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Ok(0.0);
        }
        q = tq.into_iter().map(|m| numerics::symmetrize(&(m / total)) + Mat::identity(n, n) * 1e-14).collect();
    }
    Ok(0.5 * (best_lo + best_hi))
}

pub fn mean_square_radius(system: &SwitchedSystem, chain: &Dtmc) -> Result<(f64, RadiusMethod)> {
    check_dims(system, chain)?;
    if system.num_modes() * system.state_dim().pow(2) <= DENSE_LIMIT {
        Ok((numerics::spectral_radius(&build_augmented(system, chain)?)?, RadiusMethod::Dense))
    } else {
        Ok((iterative_radius(system, chain)?, RadiusMethod::PowerIteration))
    }
}

pub fn check_ms(system: &SwitchedSystem, chain: &Dtmc) -> Result<MsVerdict> {
    let (rho, method) = mean_square_radius(system, chain)?;
    let stable = rho < 1.0 - STABILITY_MARGIN;
    let mode_of_failure = (!stable).then(|| format!("second-moment spectral radius {rho:.6} is not below 1"));
    Ok(MsVerdict { rho, stable, mode_of_failure, method })
}

/// `V_i ≻ 0` and `V_j - 𝒯_j(V) ≻ 0` for all modes, with margin [`LMI_MARGIN`].
pub fn check_lmi_condition(system: &SwitchedSystem, chain: &Dtmc, v: &[Mat]) -> Result<bool> {
    let tv = second_moment_step(system, chain, v)?;
    for (vi, ti) in v.iter().zip(&tv) {
        if numerics::asymmetry(vi) > 1e-8 {
            return Err(Error::AsymmetricInput { asymmetry: numerics::asymmetry(vi), tol: 1e-8 });
        }
        if numerics::min_sym_eigenvalue(vi)? <= LMI_MARGIN || numerics::min_sym_eigenvalue(&(vi - ti))? <= LMI_MARGIN {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicStudy {
    /// Chosen action per state and the resulting radius, in enumeration order.
    pub table: Vec<(Vec<usize>, f64)>,
    pub best: usize,
    pub best_rho: f64,
}

impl DeterministicStudy {
    pub fn best_policy(&self) -> &[usize] {
        &self.table[self.best].0
    }
}

pub fn deterministic_study(jls: &MdpJls) -> Result<DeterministicStudy> {
    let policies: Vec<Policy> = enumerate_deterministic_policies(&jls.mdp)?.collect();
    let table: Vec<(Vec<usize>, f64)> = policies
        .par_iter()
        .map(|p| {
            let chain = induce_chain(&jls.mdp, p)?;
            Ok((p.argmax(), mean_square_radius(&jls.system, &chain)?.0))
        })
        .collect::<Result<_>>()?;
    let best = (0..table.len()).min_by(|&a, &b| table[a].1.total_cmp(&table[b].1)).unwrap_or(0);
    let best_rho = table[best].1;
    Ok(DeterministicStudy { table, best, best_rho })
}

/// Margin demanded of `α_j I - 𝒯_j(αI)` in the relaxation.
pub const RELAXATION_MARGIN: f64 = 1e-7;
/// Upper bound on the scale variables, keeping the relaxation bounded.
pub const RELAXATION_ALPHA_MAX: f64 = 1e4;

fn finish(
    jls: &MdpJls,
    method: Method,
    policy: Policy,
    certificate: Vec<Mat>,
    iterations: usize,
) -> Result<Option<SynthesisResult>> {
    let chain = induce_chain(&jls.mdp, &policy)?;
    let verdict = check_ms(&jls.system, &chain)?;
    if !verdict.stable {
        return Ok(None);
    }
    let mut warnings = Vec::new();
    if !check_lmi_condition(&jls.system, &chain, &certificate)? {
        warnings.push("LMI certificate does not hold at the recovered policy; radius test used".into());
    }
    let analysis = stationary_distribution(&chain).ok();
    if analysis.is_none() {
        warnings.push("induced chain has several closed classes".into());
    }
    let objective = analysis.as_ref().map(|a| a.p_inf.dot(&jls.costs));
    Ok(Some(SynthesisResult {
        method,
        policy,
        chain,
        analysis,
        margin: 1.0 - verdict.rho,
        objective,
        ms_rho: Some(verdict.rho),
        lmi_certificate: Some(certificate),
        coefficients: None,
        robust: None,
        warnings,
        iterations,
    }))
}

/// Relaxation with `V_j = α_j I` and `K_{iσ} = π(i,σ) α_i`.
pub fn synthesize_ms_sdp(jls: &MdpJls) -> Result<SynthesisOutcome> {
    let (sys, mdp) = (&jls.system, &jls.mdp);
    let (nm, n) = (mdp.num_states(), sys.state_dim());
    let mut p = SdpProblem::new();
    let alpha: Vec<usize> = (0..nm).map(|_| p.scalar()).collect();
    let k: Vec<Vec<Option<usize>>> = (0..nm)
        .map(|i| (0..mdp.num_actions()).map(|a| mdp.is_available(i, a).then(|| p.scalar())).collect())
        .collect();
    let id = Mat::identity(n, n);
    let aat: Vec<Mat> = sys.matrices().map(|a| a * a.transpose()).collect();
    for i in 0..nm {
        p.lower_bound(alpha[i], 1.0);
        p.upper_bound(alpha[i], RELAXATION_ALPHA_MAX);
        let mut eq = Affine::var(alpha[i]);
        eq.terms[0].1 = -1.0;
        for v in k[i].iter().flatten() {
            p.lower_bound(*v, 0.0);
            eq = eq.plus(*v, 1.0);
        }
        p.add_equality(eq);
    }
    for j in 0..nm {
        let mut block = LmiBlock::new(&id * -RELAXATION_MARGIN).scalar(alpha[j], id.clone());
        for i in 0..nm {
            for (a, var) in k[i].iter().enumerate() {
                let t = mdp.t(i, a, j);
                if let (Some(v), true) = (var, t > 0.0) {
                    block = block.scalar(*v, &aat[i] * -t);
                }
            }
        }
        p.add_block(block);
    }
    let r = solve_sdp_until(&p, &SdpOptions::default(), None);
    match r.status {
        SolveStatus::Feasible | SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Ok(SynthesisOutcome::Infeasible("relaxation has no solution".into())),
        other => return Err(Error::SolverFailure(format!("relaxation: {other:?}"))),
    }
    let mut probs = Mat::zeros(nm, mdp.num_actions());
    for i in 0..nm {
        let total: f64 = k[i].iter().flatten().map(|v| r.y[*v].max(0.0)).sum();
        for (a, var) in k[i].iter().enumerate() {
            if let Some(v) = var {
                probs[(i, a)] = r.y[*v].max(0.0) / total;
            }
        }
    }
    let policy = Policy::new(probs, mdp)?;
    let cert: Vec<Mat> = alpha.iter().map(|v| &id * r.y[*v]).collect();
    match finish(jls, Method::MsSdp, policy, cert, r.iterations)? {
        Some(res) => Ok(SynthesisOutcome::Stabilized(Box::new(res))),
        None => Ok(SynthesisOutcome::Infeasible("recovered policy fails the radius test".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdOptions {
    pub max_iter: usize,
    /// Weight `L` of the proximal terms.
    pub prox_weight: f64,
    pub gamma_margin: f64,
    /// Half-width `δ` of the per-iteration policy perturbation.
    pub perturb: f64,
    pub seed: u64,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self { max_iter: 500, prox_weight: 1e-3, gamma_margin: 1e-8, perturb: 1e-3, seed: 0 }
    }
}

/// Iterate of the coordinate descent.
#[derive(Debug, Clone, PartialEq)]
pub struct CdState {
    pub iteration: usize,
    pub v: Vec<Mat>,
    pub policy: Policy,
    pub gamma: f64,
}

fn frobenius_soc(var: SymVar, center: &Mat, radius: usize) -> SocConstraint {
    let mut x = Vec::with_capacity(var.len());
    for a in 0..var.dim {
        for b in a..var.dim {
            let w = if a == b { 1.0 } else { std::f64::consts::SQRT_2 };
            x.push(Affine { constant: -w * center[(a, b)], terms: vec![(var.index(a, b), w)] });
        }
    }
    SocConstraint { t: Affine::var(radius), x }
}

fn min_gap(system: &SwitchedSystem, chain: &Dtmc, v: &[Mat]) -> Result<f64> {
    let tv = second_moment_step(system, chain, v)?;
    let mut g = f64::INFINITY;
    for (vi, ti) in v.iter().zip(&tv) {
        g = g.min(numerics::min_sym_eigenvalue(&(vi - ti))?);
    }
    Ok(g)
}

/// `min -γ + L Σ‖V_i - V_i⁻‖_F` s.t. `V_i ⪰ I`, `V - 𝒯(V) ⪰ γI`, `γ ≤ 1`.
fn v_step(jls: &MdpJls, chain: &Dtmc, prev: &[Mat], opts: &CdOptions) -> Result<(Vec<Mat>, f64, usize)> {
    let sys = &jls.system;
    let (nm, n) = (sys.num_modes(), sys.state_dim());
    let id = Mat::identity(n, n);
    let mut p = SdpProblem::new();
    let vars: Vec<SymVar> = (0..nm).map(|_| p.sym(n)).collect();
    let gamma = p.scalar();
    let radii: Vec<usize> = (0..nm).map(|_| p.scalar()).collect();
    p.minimize(gamma, -1.0);
    for (i, v) in vars.iter().enumerate() {
        // the conditions are homogeneous in V, so V_i ⪰ I is a normalization of V_i ≻ 0
        p.add_block(LmiBlock::new(-id.clone()).congruence(*v, id.clone(), 1.0));
        p.add_soc(frobenius_soc(*v, &prev[i], radii[i]));
        p.minimize(radii[i], opts.prox_weight);
    }
    for j in 0..nm {
        let mut block = LmiBlock::new(Mat::zeros(n, n)).congruence(vars[j], id.clone(), 1.0);
        for i in 0..nm {
            let pij = chain.p[(i, j)];
            if pij != 0.0 {
                block = block.congruence(vars[i], sys.a(i).clone(), -pij);
            }
        }
        p.add_block(block.scalar(gamma, -id.clone()));
    }
    p.upper_bound(gamma, 1.0);

    let start: Vec<Mat> = prev
        .iter()
        .map(|m| {
            let lift = (1e-3 + 1.0 - numerics::min_sym_eigenvalue(m)?).max(0.0);
            Ok(m + &id * lift)
        })
        .collect::<Result<_>>()?;
    let mut y0 = Vector::zeros(p.num_vars());
    for (v, m) in vars.iter().zip(&start) {
        v.write(m, &mut y0);
    }
    y0[gamma] = (min_gap(sys, chain, &start)?.min(1.0)) - 1.0;
    for (r, (a, b)) in radii.iter().zip(start.iter().zip(prev)) {
        y0[*r] = (a - b).norm() + 1.0;
    }
    let margin = opts.gamma_margin;
    let stop = move |y: &Vector| y[gamma] > margin;
    let r = solve_sdp_until(&p, &SdpOptions { initial: Some(y0), ..SdpOptions::default() }, Some(&stop));
    if !r.status.has_solution() && !(r.residual <= 0.0) {
        return Err(Error::SolverFailure(format!("V-step: {:?}", r.status)));
    }
    Ok((vars.iter().map(|v| v.to_mat(&r.y)).collect(), r.y[gamma], r.iterations))
}

/// `min -γ + L Σ‖π_i - π_i⁻‖` s.t. `V_j - 𝒯_j(V) ⪰ γV_j` over policies at fixed `V`;
/// the relative margin makes `γ` the contraction rate of `V` under the new policy.
fn pi_step(jls: &MdpJls, v: &[Mat], prev: &Policy, opts: &CdOptions) -> Result<(Policy, f64, usize)> {
    let (sys, mdp) = (&jls.system, &jls.mdp);
    let (nm, na) = (mdp.num_states(), mdp.num_actions());
    let mut p = SdpProblem::new();
    let vars: Vec<Vec<Option<usize>>> =
        (0..nm).map(|i| (0..na).map(|a| mdp.is_available(i, a).then(|| p.scalar())).collect()).collect();
    let gamma = p.scalar();
    let radii: Vec<usize> = (0..nm).map(|_| p.scalar()).collect();
    p.minimize(gamma, -1.0);
    for i in 0..nm {
        let mut eq = Affine::constant(-1.0);
        let mut x = Vec::new();
        for (a, var) in vars[i].iter().enumerate() {
            if let Some(var) = var {
                p.lower_bound(*var, 0.0);
                eq = eq.plus(*var, 1.0);
                x.push(Affine { constant: -prev.probs[(i, a)], terms: vec![(*var, 1.0)] });
            }
        }
        p.add_equality(eq);
        p.add_soc(SocConstraint { t: Affine::var(radii[i]), x });
        p.minimize(radii[i], opts.prox_weight);
    }
    let avat: Vec<Mat> = sys.matrices().zip(v).map(|(a, vi)| a * vi * a.transpose()).collect();
    for j in 0..nm {
        let mut block = LmiBlock::new(v[j].clone()).scalar(gamma, -v[j].clone());
        for i in 0..nm {
            for (a, var) in vars[i].iter().enumerate() {
                let t = mdp.t(i, a, j);
                if let (Some(var), true) = (var, t > 0.0) {
                    block = block.scalar(*var, &avat[i] * -t);
                }
            }
        }
        p.add_block(block);
    }
    p.upper_bound(gamma, 1.0);

    // strictly interior start: shrink the previous policy toward uniform
    let uniform = Policy::uniform(mdp);
    let start = &prev.probs * 0.99 + &uniform.probs * 0.01;
    let mut y0 = Vector::zeros(p.num_vars());
    for i in 0..nm {
        let mut d2 = 0.0;
        for (a, var) in vars[i].iter().enumerate() {
            if let Some(var) = var {
                y0[*var] = start[(i, a)];
                d2 += (start[(i, a)] - prev.probs[(i, a)]).powi(2);
            }
        }
        y0[radii[i]] = d2.sqrt() + 1.0;
    }
    let chain = induce_chain(mdp, &Policy { probs: start.clone() })?;
    let floor = v.iter().map(numerics::min_sym_eigenvalue).collect::<Result<Vec<_>>>()?.into_iter().fold(f64::INFINITY, f64::min);
    if floor <= 0.0 {
        return Err(Error::NotPositiveDefinite("Lyapunov iterate".into()));
    }
    y0[gamma] = min_gap(sys, &chain, v)?.min(0.0) / floor - 1.0;
    let margin = opts.gamma_margin;
    let stop = move |y: &Vector| y[gamma] > margin;
    let r = solve_sdp_until(&p, &SdpOptions { initial: Some(y0), ..SdpOptions::default() }, Some(&stop));
    if !r.status.has_solution() && !(r.residual <= 0.0) {
        return Err(Error::SolverFailure(format!("policy step: {:?}", r.status)));
    }
    Ok((Policy { probs: policy_from(mdp, &vars, &r.y) }, r.y[gamma], r.iterations))
}

fn policy_from(mdp: &crate::model::Mdp, vars: &[Vec<Option<usize>>], y: &Vector) -> Mat {
    let mut probs = Mat::zeros(mdp.num_states(), mdp.num_actions());
    for (i, row) in vars.iter().enumerate() {
        let total: f64 = row.iter().flatten().map(|v| y[*v].max(0.0)).sum();
        for (a, var) in row.iter().enumerate() {
            if let Some(v) = var {
                probs[(i, a)] = y[*v].max(0.0) / total;
            }
        }
    }
    probs
}

fn perturb(mdp: &crate::model::Mdp, policy: &Policy, delta: f64, rng: &mut ChaCha8Rng) -> Policy {
    let mut probs = policy.probs.clone();
    for i in 0..mdp.num_states() {
        let avail: Vec<usize> = mdp.available_actions(i).collect();
        for &a in &avail {
            let noise = if delta > 0.0 { rng.random_range(-delta..=delta) } else { 0.0 };
            probs[(i, a)] = (probs[(i, a)] + noise).max(0.0);
        }
        let total: f64 = avail.iter().map(|&a| probs[(i, a)]).sum();
        for &a in &avail {
            probs[(i, a)] = if total > 0.0 { probs[(i, a)] / total } else { 1.0 / avail.len() as f64 };
        }
    }
    Policy { probs }
}

/// Alternating convex steps on `V` and `π` with proximal terms.
pub fn synthesize_ms_cd(jls: &MdpJls, opts: &CdOptions) -> Result<SynthesisOutcome> {
    synthesize_ms_cd_traced(jls, opts, |_| {})
}

/// As [`synthesize_ms_cd`], reporting every iterate to `observe`.
pub fn synthesize_ms_cd_traced(
    jls: &MdpJls,
    opts: &CdOptions,
    mut observe: impl FnMut(&CdState),
) -> Result<SynthesisOutcome> {
    if !(opts.prox_weight >= 0.0 && opts.gamma_margin >= 0.0 && opts.perturb >= 0.0) {
        return Err(Error::Domain("CD weights and margins must be nonnegative".into()));
    }
    let (sys, mdp) = (&jls.system, &jls.mdp);
    let n = sys.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut policy = Policy::uniform(mdp);
    let mut v: Vec<Mat> = vec![Mat::identity(n, n); sys.num_modes()];
    let mut best_gamma = f64::NEG_INFINITY;
    let mut iterations = 0;
    for k in 0..opts.max_iter {
        let chain = induce_chain(mdp, &policy)?;
        let (nv, g, it) = v_step(jls, &chain, &v, opts)?;
        iterations += it;
        v = nv;
        best_gamma = best_gamma.max(g);
        observe(&CdState { iteration: k, v: v.clone(), policy: policy.clone(), gamma: g });
        if g > opts.gamma_margin {
            if let Some(res) = finish(jls, Method::MsCd, policy.clone(), v.clone(), k + 1)? {
                return Ok(SynthesisOutcome::Stabilized(Box::new(res)));
            }
        }
        let (np, g, it) = pi_step(jls, &v, &policy, opts)?;
        iterations += it;
        best_gamma = best_gamma.max(g);
        observe(&CdState { iteration: k, v: v.clone(), policy: np.clone(), gamma: g });
        if g > opts.gamma_margin {
            if let Some(res) = finish(jls, Method::MsCd, np.clone(), v.clone(), k + 1)? {
                return Ok(SynthesisOutcome::Stabilized(Box::new(res)));
            }
        }
        policy = perturb(mdp, &np, opts.perturb, &mut rng);
    }
    let _ = iterations;
    Ok(SynthesisOutcome::NotCertified { iterations: opts.max_iter, best_gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mdp;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single(a: Mat) -> MdpJls {
        let sys = SwitchedSystem::from_matrices(vec![a]).unwrap();
        let mdp = Mdp::new(vec!["s".into()], 0, vec!["a".into()], vec![Mat::identity(1, 1)]).unwrap();
        MdpJls::new(sys, mdp, None).unwrap()
    }

    fn one_chain() -> Dtmc {
        Dtmc::new(Mat::identity(1, 1), 0).unwrap()
    }

    #[test]
    fn single_mode_radius_is_squared() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.7]);
        let sys = SwitchedSystem::from_matrices(vec![a.clone()]).unwrap();
        let rho = numerics::spectral_radius(&build_augmented(&sys, &one_chain()).unwrap()).unwrap();
        assert_relative_eq!(rho, numerics::spectral_radius(&a).unwrap().powi(2), epsilon = 1e-10);
        let v = check_ms(&SwitchedSystem::from_matrices(vec![Mat::identity(2, 2) * 0.5]).unwrap(), &one_chain())
            .unwrap();
        assert!(v.stable);
        assert_relative_eq!(v.rho, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn lmi_condition_examples() {
        let c = one_chain();
        let zero = SwitchedSystem::from_matrices(vec![Mat::zeros(2, 2)]).unwrap();
        assert!(check_lmi_condition(&zero, &c, &[Mat::identity(2, 2)]).unwrap());
        let id = SwitchedSystem::from_matrices(vec![Mat::identity(2, 2)]).unwrap();
        assert!(!check_lmi_condition(&id, &c, &[Mat::identity(2, 2) * 3.0]).unwrap());
    }

    #[test]
    fn second_moment_examples() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.7]);
        let sys = SwitchedSystem::from_matrices(vec![a.clone()]).unwrap();
        let z = second_moment_step(&sys, &one_chain(), &[Mat::zeros(2, 2)]).unwrap();
        assert_eq!(z[0], Mat::zeros(2, 2));
        let q = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let out = second_moment_step(&sys, &one_chain(), &[q.clone()]).unwrap();
        assert_relative_eq!(out[0], &a * q * a.transpose(), epsilon = 1e-15);
    }

    #[test]
    fn relaxation_trivial_cases() {
        match synthesize_ms_sdp(&single(Mat::identity(2, 2) * 0.5)).unwrap() {
            SynthesisOutcome::Stabilized(r) => {
                assert_relative_eq!(r.ms_rho.unwrap(), 0.25, epsilon = 1e-12);
                assert_eq!(r.policy.probs[(0, 0)], 1.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            synthesize_ms_sdp(&single(Mat::identity(2, 2) * 1.1)).unwrap(),
            SynthesisOutcome::Infeasible(_)
        ));
    }

    #[test]
    fn cd_trivial_cases() {
        match synthesize_ms_cd(&single(Mat::identity(2, 2) * 0.5), &CdOptions::default()).unwrap() {
            SynthesisOutcome::Stabilized(r) => assert!(r.iterations <= 1),
            other => panic!("{other:?}"),
        }
        let opts = CdOptions { max_iter: 20, ..CdOptions::default() };
        assert!(matches!(
            synthesize_ms_cd(&single(Mat::identity(2, 2) * 1.05), &opts).unwrap(),
            SynthesisOutcome::NotCertified { .. }
        ));
    }

    #[test]
    fn iterative_radius_matches_dense() {
        let a1 = Mat::from_row_slice(2, 2, &[0.99, -0.56, -0.19, 0.73]);
        let a2 = Mat::from_row_slice(2, 2, &[0.38, -0.98, -0.66, -0.66]);
        let sys = SwitchedSystem::from_matrices(vec![a1, a2]).unwrap();
        let chain = Dtmc::new(Mat::from_row_slice(2, 2, &[0.21, 0.79, 0.9, 0.1]), 0).unwrap();
        let dense = numerics::spectral_radius(&build_augmented(&sys, &chain).unwrap()).unwrap();
        assert_relative_eq!(iterative_radius(&sys, &chain).unwrap(), dense, epsilon = 1e-8);
    }

    fn instance() -> impl Strategy<Value = (SwitchedSystem, Dtmc)> {
        (1usize..=3, 1usize..=4).prop_flat_map(|(n, nm)| {
            (
                proptest::collection::vec(-0.8f64..0.8, nm * n * n),
                proptest::collection::vec(0.0f64..1.0, nm * nm),
            )
                .prop_map(move |(a, p)| {
                    let mats = (0..nm).map(|i| Mat::from_row_slice(n, n, &a[i * n * n..(i + 1) * n * n])).collect();
                    let mut pm = Mat::from_row_slice(nm, nm, &p);
                    for mut r in pm.row_iter_mut() {
                        let s = r.sum() + 1e-3;
                        r.add_scalar_mut(1e-3 / nm as f64);
                        r /= s;
                    }
                    (SwitchedSystem::from_matrices(mats).unwrap(), Dtmc::new(pm, 0).unwrap())
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn operator_matrix_has_same_radius((sys, chain) in instance()) {
            let n = sys.state_dim();
            let nm = sys.num_modes();
            // probe the map with the standard basis of (ℝ^{n×n})^N
            let dim = nm * n * n;
            let mut m = Mat::zeros(dim, dim);
            for col in 0..dim {
                let (i, rest) = (col / (n * n), col % (n * n));
                let mut q = vec![Mat::zeros(n, n); nm];
                q[i][(rest % n, rest / n)] = 1.0;
                let out = second_moment_step(&sys, &chain, &q).unwrap();
                for (j, oj) in out.iter().enumerate() {
                    for k in 0..n * n {
                        m[(j * n * n + k, col)] = oj[(k % n, k / n)];
                    }
                }
            }
            let r1 = numerics::spectral_radius(&build_augmented(&sys, &chain).unwrap()).unwrap();
            let r2 = numerics::spectral_radius(&m).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-9, "{} vs {}", r1, r2);
        }
    }
}
