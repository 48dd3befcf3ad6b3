use std::path::{Path, PathBuf};

use mdpjls_core::lyapunov::{self, CertificateDoc};
use mdpjls_core::model::{parse_model_with, parse_policy};
use mdpjls_core::msstab::{self, CdOptions};
use mdpjls_core::simulate::{empirical_frequency_check, simulate_with_certificate, SimConfig};
use mdpjls_core::synth::{self, Coefficients, P1Options, SynthesisReport};
use mdpjls_core::{
    check_ms, induce_chain, numerics, stationary_distribution, study, Discretization, Error, LyapunovCertificate,
    Method, MdpJls, Policy, SynthesisOutcome, SynthesisResult,
};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::Command;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NEGATIVE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Usage(String),

    #[error("re-verification failed: {0}")]
    Unverified(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } | Self::Usage(_) => EXIT_INPUT,
            Self::Unverified(_) => EXIT_NUMERICAL,
            Self::Core(e) => match e {
                Error::NonSquareBlock { .. }
                | Error::AsymmetricInput { .. }
                | Error::DimensionMismatch(_)
                | Error::Schema { .. }
                | Error::Validation(_)
                | Error::PolicyMismatch(_)
                | Error::TooManyPolicies { .. }
                | Error::Domain(_)
                | Error::Io(_)
                | Error::Json(_) => EXIT_INPUT,
                Error::UnstableMode { .. } => EXIT_NEGATIVE,
                Error::EigenFailure { .. }
                | Error::NonUnichain { .. }
                | Error::NotPositiveDefinite(_)
                | Error::SolverFailure(_)
                | Error::ConsistencyFailure(_) => EXIT_NUMERICAL,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load_model(path: &Path, disc: Option<Discretization>) -> Result<MdpJls> {
    Ok(parse_model_with(&read(path)?, disc)?)
}

fn load_policy(path: &Path, jls: &MdpJls) -> Result<Policy> {
    Ok(parse_policy(&read(path)?, &jls.mdp)?)
}

fn load_cert(path: &Path, jls: &MdpJls) -> Result<LyapunovCertificate> {
    let doc: CertificateDoc = serde_json::from_str(&read(path)?).map_err(Error::from)?;
    let cert = doc.into_certificate()?;
    if cert.num_modes() != jls.num_modes() {
        return Err(CliError::Usage(format!(
            "certificate has {} modes, model has {}",
            cert.num_modes(),
            jls.num_modes()
        )));
    }
    Ok(cert)
}

/// Coefficients from `--alpha/--mu`, a certificate file, or a fresh certification.
fn coefficients(
    jls: &MdpJls,
    uniform: Option<(f64, f64)>,
    cert: Option<&Path>,
    bisect_tol: f64,
) -> Result<Coefficients> {
    Ok(match (uniform, cert) {
        (Some((alpha, mu)), _) => Coefficients::Uniform { alpha, mu },
        (None, Some(path)) => Coefficients::PerMode(load_cert(path, jls)?),
        (None, None) => Coefficients::PerMode(lyapunov::certify(&jls.system, bisect_tol)?),
    })
}

fn emit(json: bool, value: &Value, human: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
    } else {
        println!("{}", human());
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn run(command: Command, json: bool) -> Result<u8> {
    match command {
        Command::Validate { model } => validate(&model, json),
        Command::Analyze { model, policy } => analyze(&model, &policy, json),
        Command::Coefficients { model, bisect_tol, discretization, out } => {
            coefficients_cmd(&model, bisect_tol, discretization, out.as_deref(), json)
        }
        Command::Synthesize {
            model,
            method,
            alpha,
            mu,
            cert,
            delta,
            epsilon,
            seed,
            max_iter,
            bisect_tol,
            discretization,
            out,
        } => {
            let jls = load_model(&model, discretization)?;
            let req = SynthesisRequest {
                method,
                uniform: alpha.zip(mu),
                cert,
                delta,
                epsilon,
                seed,
                max_iter,
                bisect_tol,
            };
            synthesize(&jls, &req, out.as_deref(), json)
        }
        Command::VerifyRobust { model, policy, delta, cert, alpha, mu, bisect_tol } => {
            let jls = load_model(&model, None)?;
            let policy = load_policy(&policy, &jls)?;
            let coeffs = coefficients(&jls, alpha.zip(mu), cert.as_deref(), bisect_tol)?;
            let v = synth::verify_robust(&policy, &jls, delta, &coeffs)?;
            emit(json, &serde_json::to_value(&v).map_err(Error::from)?, || {
                format!(
                    "robust {:?} condition at Δ = {delta}: LHS {:.6e} (nominal {:.6e}) vs RHS {:.6e}: {}",
                    v.mode,
                    v.robust_lhs,
                    v.nominal_lhs,
                    v.rhs,
                    if v.satisfied { "satisfied" } else { "not satisfied" }
                )
            });
            Ok(if v.satisfied { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Simulate { model, policy, steps, runs, seed, stride, traces, cert, out } => {
            let jls = load_model(&model, None)?;
            let policy = load_policy(&policy, &jls)?;
            let cert = cert.as_deref().map(|p| load_cert(p, &jls)).transpose()?;
            let cfg = SimConfig { steps, runs, seed, x0: None, record_stride: stride, keep_traces: traces.is_some() };
            simulate_cmd(&jls, &policy, &cfg, cert.as_ref(), traces.as_deref(), out.as_deref(), json)
        }
        Command::Study { spec, out } => study_cmd(&spec, out.as_deref(), json),
    }
}

fn validate(path: &Path, json: bool) -> Result<u8> {
    let jls = load_model(path, None)?;
    let rho = jls.system.matrices().map(numerics::spectral_radius).collect::<mdpjls_core::Result<Vec<_>>>()?;
    let value = json!({
        "status": "valid",
        "state_dim": jls.system.state_dim(),
        "modes": jls.mdp.states(),
        "actions": jls.mdp.actions(),
        "initial_mode": jls.mdp.states()[jls.mdp.initial_state()],
        "mode_spectral_radius": rho,
    });
    emit(json, &value, || {
        format!(
            "valid: n = {}, {} modes {:?}, {} actions {:?}, mode spectral radii {}",
            jls.system.state_dim(),
            jls.num_modes(),
            jls.mdp.states(),
            jls.mdp.num_actions(),
            jls.mdp.actions(),
            fmt_vec(&rho)
        )
    });
    Ok(EXIT_OK)
}

fn analyze(model: &Path, policy: &Path, json: bool) -> Result<u8> {
    let jls = load_model(model, None)?;
    let policy = load_policy(policy, &jls)?;
    let chain = induce_chain(&jls.mdp, &policy)?;
    let verdict = check_ms(&jls.system, &chain)?;
    let analysis = stationary_distribution(&chain);
    let mut value = json!({
        "induced_P": numerics::to_rows(&chain.p),
        "ms_rho": verdict.rho,
        "ms_stable": verdict.stable,
        "radius_method": format!("{:?}", verdict.method),
    });
    let mut lines = vec![format!(
        "ρ(𝒜) = {:.6}: {}",
        verdict.rho,
        if verdict.stable { "mean-square stable" } else { "not mean-square stable" }
    )];
    match &analysis {
        Ok(a) => {
            value["classification"] = serde_json::to_value(a.classification).map_err(Error::from)?;
            value["stationary"] = json!(a.p_inf.as_slice());
            value["inbound"] = json!(a.inbound.as_slice());
            value["p_jump"] = json!(a.p_jump);
            lines.push(format!("stationary {}", fmt_vec(a.p_inf.as_slice())));
            lines.push(format!("inbound jump frequencies {}", fmt_vec(a.inbound.as_slice())));
            lines.push(format!("P_jump = {:.6}", a.p_jump));
        }
        Err(e) => {
            value["stationary_error"] = json!(e.to_string());
            lines.push(format!("no unique stationary distribution: {e}"));
        }
    }
    emit(json, &value, || lines.join("\n"));
    Ok(EXIT_OK)
}

fn coefficients_cmd(
    model: &Path,
    bisect_tol: f64,
    disc: Option<Discretization>,
    out: Option<&Path>,
    json: bool,
) -> Result<u8> {
    let jls = load_model(model, disc)?;
    let cert = lyapunov::certify(&jls.system, bisect_tol)?;
    if !cert.verify(&jls.system, 1e-7)? {
        return Err(CliError::Unverified("certificate LMIs do not hold at 1e-7".into()));
    }
    let doc = CertificateDoc::from(&cert);
    if let Some(path) = out {
        write_json(path, &doc)?;
    }
    let value = serde_json::to_value(&doc).map_err(Error::from)?;
    emit(json, &value, || {
        let mut lines: Vec<String> = jls
            .mdp
            .states()
            .iter()
            .enumerate()
            .map(|(s, name)| format!("{name}: α = {:.6}, μ = {:.6}", cert.alpha[s], cert.mu_mode[s]))
            .collect();
        lines.push(format!(
            "uniform: α = {:.6}, μ = {:.6}, bisection step {}",
            cert.alpha_uniform, cert.mu_uniform, cert.bisect_tol
        ));
        lines.join("\n")
    });
    Ok(EXIT_OK)
}

struct SynthesisRequest {
    method: Method,
    uniform: Option<(f64, f64)>,
    cert: Option<PathBuf>,
    delta: Option<f64>,
    epsilon: Option<f64>,
    seed: u64,
    max_iter: Option<usize>,
    bisect_tol: f64,
}

fn synthesize(jls: &MdpJls, req: &SynthesisRequest, out: Option<&Path>, json: bool) -> Result<u8> {
    let mut p1 = P1Options::default();
    if let Some(e) = req.epsilon {
        p1.epsilon = e;
    }
    let coeffs = || coefficients(jls, req.uniform, req.cert.as_deref(), req.bisect_tol);
    let outcome = match req.method {
        Method::MsSdp => msstab::synthesize_ms_sdp(jls)?,
        Method::MsCd => {
            let mut opts = CdOptions { seed: req.seed, ..CdOptions::default() };
            if let Some(m) = req.max_iter {
                opts.max_iter = m;
            }
            msstab::synthesize_ms_cd(jls, &opts)?
        }
        Method::P1Independent => match coeffs()? {
            Coefficients::Uniform { alpha, mu } => synth::synthesize_p1_independent(jls, alpha, mu, &p1)?,
            Coefficients::PerMode(c) => synth::synthesize_p1_independent(jls, c.alpha_uniform, c.mu_uniform, &p1)?,
        },
        Method::P1Dependent => match coeffs()? {
            Coefficients::PerMode(c) => synth::synthesize_p1_dependent(jls, &c, &p1)?,
            Coefficients::Uniform { .. } => {
                return Err(CliError::Usage("p1-dep needs per-mode coefficients (--cert or none)".into()));
            }
        },
        Method::P1Robust => {
            let delta = req.delta.ok_or_else(|| CliError::Usage("p1-robust needs --delta".into()))?;
            synth::synthesize_p1_robust(jls, delta, &coeffs()?, &p1)?
        }
    };
    match outcome {
        SynthesisOutcome::Stabilized(r) => {
            reverify(jls, &r, req.delta)?;
            let report = SynthesisReport::from(r.as_ref());
            if let Some(path) = out {
                write_json(path, &report)?;
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let mut value = serde_json::to_value(&report).map_err(Error::from)?;
            value["status"] = json!("stabilized");
            emit(json, &value, || {
                let mut lines = vec![format!("{}: stabilizing policy found (margin {:.6e})", r.method, r.margin)];
                for (s, row) in report.policy.iter().enumerate() {
                    lines.push(format!("  {}: {}", jls.mdp.states()[s], fmt_vec(row)));
                }
                if let Some(rho) = r.ms_rho {
                    lines.push(format!("ρ(𝒜) = {rho:.6}"));
                }
                if let Some(a) = &r.analysis {
                    lines.push(format!("P_jump = {:.6}, stationary {}", a.p_jump, fmt_vec(a.p_inf.as_slice())));
                }
                lines.join("\n")
            });
            Ok(EXIT_OK)
        }
        SynthesisOutcome::Infeasible(reason) => {
            eprintln!("{}: infeasible: {reason}", req.method);
            if json {
                println!("{}", json!({ "status": "infeasible", "method": req.method, "reason": reason }));
            }
            Ok(EXIT_NEGATIVE)
        }
        SynthesisOutcome::NotCertified { iterations, best_gamma } => {
            eprintln!("{}: not certified after {iterations} iterations (best γ {best_gamma:e})", req.method);
            if json {
                println!(
                    "{}",
                    json!({ "status": "not-certified", "method": req.method, "iterations": iterations, "best_gamma": best_gamma })
                );
            }
            Ok(EXIT_NEGATIVE)
        }
    }
}

/// Rechecks a synthesized policy with the checker matching its method.
fn reverify(jls: &MdpJls, r: &SynthesisResult, delta: Option<f64>) -> Result<()> {
    let chain = induce_chain(&jls.mdp, &r.policy)?;
    match r.method {
        Method::MsSdp | Method::MsCd => {
            let v = check_ms(&jls.system, &chain)?;
            if !v.stable {
                return Err(CliError::Unverified(format!("ρ(𝒜) = {}", v.rho)));
            }
        }
        Method::P1Independent | Method::P1Dependent => {
            let a = stationary_distribution(&chain)?;
            match &r.coefficients {
                Some(Coefficients::Uniform { alpha, mu }) => {
                    let threshold = lyapunov::threshold(*alpha, *mu)?;
                    if a.p_jump >= threshold {
                        return Err(CliError::Unverified(format!("P_jump {} ≥ {threshold}", a.p_jump)));
                    }
                }
                Some(Coefficients::PerMode(c)) => {
                    let lhs = lyapunov::mode_dependent_lhs(a.inbound.as_slice(), a.p_inf.as_slice(), &c.alpha, &c.mu_mode);
                    if lhs >= 0.0 {
                        return Err(CliError::Unverified(format!("mode-dependent condition {lhs}")));
                    }
                }
                None => return Err(CliError::Unverified("result carries no coefficients".into())),
            }
        }
        Method::P1Robust => {
            let coeffs = r.coefficients.as_ref().ok_or_else(|| CliError::Unverified("no coefficients".into()))?;
            let delta = delta.unwrap_or(0.0);
            let v = synth::verify_robust(&r.policy, jls, delta, coeffs)?;
            if !v.satisfied {
                return Err(CliError::Unverified(format!("robust LHS {} vs RHS {}", v.robust_lhs, v.rhs)));
            }
        }
    }
    Ok(())
}

fn simulate_cmd(
    jls: &MdpJls,
    policy: &Policy,
    cfg: &SimConfig,
    cert: Option<&LyapunovCertificate>,
    traces: Option<&Path>,
    out: Option<&Path>,
    json: bool,
) -> Result<u8> {
    let report = simulate_with_certificate(jls, policy, cfg, cert)?;
    if let Some(dir) = traces {
        report.write_traces(dir)?;
    }
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    let chain = induce_chain(&jls.mdp, policy)?;
    let check = stationary_distribution(&chain).ok().map(|a| empirical_frequency_check(&report, &a));
    let diverged = report.runs.iter().filter(|r| r.diverged).count();
    let value = json!({
        "steps": cfg.steps,
        "runs": cfg.runs,
        "seed": cfg.seed,
        "decaying_runs": report.decaying_runs(),
        "diverged_runs": diverged,
        "median_slope": report.median_slope(),
        "shadow_violations": cert.map(|_| report.total_shadow_violations()),
        "frequencies": check,
    });
    emit(json, &value, || {
        let mut lines = vec![format!(
            "{} of {} runs decay, {diverged} diverged, median log-norm slope {}",
            report.decaying_runs(),
            cfg.runs,
            report.median_slope().map_or("n/a".into(), |s| format!("{s:.6}"))
        )];
        if cert.is_some() {
            lines.push(format!("certificate violations: {}", report.total_shadow_violations()));
        }
        if let Some(c) = &check {
            lines.push(format!(
                "jump frequency {:.6} vs P_jump {:.6}; max |z| over all frequencies {:.2}",
                c.jump.estimate,
                c.jump.expected,
                c.max_abs_z()
            ));
        }
        lines.join("\n")
    });
    Ok(EXIT_OK)
}

fn study_cmd(path: &Path, out: Option<&Path>, json: bool) -> Result<u8> {
    let spec = study::parse_spec(&read(path)?)?;
    let report = study::run_study(&spec)?;
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    let value = serde_json::to_value(&report).map_err(Error::from)?;
    emit(json, &value, || {
        let mut lines = vec![format!("{} instances, seed {}", spec.instances, spec.seed)];
        lines.push(format!("{:<10} {:>9} {:>12}", "method", "successes", "mean time/s"));
        for m in &spec.methods {
            lines.push(format!(
                "{:<10} {:>9} {:>12.4}",
                m.as_str(),
                report.count(*m),
                report.mean_seconds.get(m).copied().unwrap_or(0.0)
            ));
        }
        lines.join("\n")
    });
    Ok(EXIT_OK)
}
