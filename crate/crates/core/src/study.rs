//! Randomized method comparison on generated transportation-network instances.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{self, LyapunovCertificate};
use crate::model::{Mdp, MdpJls, SwitchedSystem};
use crate::msstab::{self, CdOptions};
use crate::numerics::{self, Mat};
use crate::synth::{self, Method, P1Options, SynthesisOutcome};

/// Action matrices of the four-buffer transportation MDP.
pub fn transport_actions() -> Vec<Mat> {
    vec![
        Mat::from_row_slice(4, 4, &[
            0.1, 0.7, 0.1, 0.1, //
            0.1, 0.8, 0.05, 0.05, //
            0.2, 0.6, 0.1, 0.1, //
            0.1, 0.05, 0.05, 0.8,
        ]),
        Mat::from_row_slice(4, 4, &[
            0.8, 0.05, 0.05, 0.1, //
            0.3, 0.15, 0.4, 0.15, //
            0.1, 0.1, 0.7, 0.1, //
            0.1, 0.7, 0.1, 0.1,
        ]),
    ]
}

/// Continuous-time four-buffer network; `l = [l31, l12, l32, l23, l43, l34]`.
pub fn transport_dynamics(l: &[f64; 6]) -> Mat {
    let [l31, l12, l32, l23, l43, l34] = *l;
    Mat::from_row_slice(4, 4, &[
        -1.0 - l31, l12, 0.0, 0.0, //
        0.0, 2.0 - l12 - l32, l23, 0.0, //
        l31, l32, 3.0 - l23 - l43, l34, //
        0.0, 0.0, l43, -4.0 - l34,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// Blocks of four-buffer networks linked by random transfers, Euler-discretized.
    Transport,
    /// Gaussian matrices.
    Dense,
}

fn default_seed() -> u64 {
    1
}
fn default_instances() -> usize {
    20
}
fn default_dim() -> usize {
    4
}
fn default_modes() -> usize {
    4
}
fn default_rho() -> [f64; 2] {
    [0.63, 0.98]
}
fn default_dt() -> f64 {
    0.1
}
fn default_generator() -> Generator {
    Generator::Transport
}
fn default_methods() -> Vec<Method> {
    vec![Method::MsCd, Method::MsSdp, Method::P1Dependent, Method::P1Independent]
}
fn default_bisect() -> f64 {
    lyapunov::DEFAULT_BISECT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_generator")]
    pub generator: Generator,
    #[serde(default = "default_dim")]
    pub state_dim: usize,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Target spectral radius of each mode, drawn uniformly from this range.
    #[serde(default = "default_rho")]
    pub rho_range: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub cd: CdOptions,
    #[serde(default)]
    pub p1: P1Options,
    #[serde(default = "default_bisect")]
    pub bisect_tol: f64,
}

impl Default for StudySpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.rho_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::Validation(format!("rho_range must satisfy 0 < lo ≤ hi < 1, got [{lo}, {hi}]")));
        }
        if self.instances == 0 || self.modes == 0 || self.state_dim == 0 {
            return Err(Error::Validation("instances, modes and state_dim must be positive".into()));
        }
        if self.generator == Generator::Transport && self.state_dim % 4 != 0 {
            return Err(Error::Validation("the transport generator needs a state dimension divisible by 4".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Validation("dt must be positive".into()));
        }
        if self.methods.contains(&Method::P1Robust) {
            return Err(Error::Validation("the study compares ms-cd, ms-sdp, p1-dep and p1-ind".into()));
        }
        Ok(())
    }
}

pub fn parse_spec(text: &str) -> Result<StudySpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: StudySpec = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    spec.validate()?;
    Ok(spec)
}

fn scaled(b: Mat, target: f64) -> Result<Mat> {
    let r = numerics::spectral_radius(&b)?;
    if r <= 0.0 {
        return Err(Error::Validation("generated mode is nilpotent".into()));
    }
    Ok(b * (target / r))
}

fn transport_mode(n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Mat {
    let blocks = n / 4;
    let mut ac = Mat::zeros(n, n);
    for b in 0..blocks {
        let l: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..5.0));
        ac.view_mut((4 * b, 4 * b), (4, 4)).copy_from(&transport_dynamics(&l));
    }
    // one random transfer between consecutive blocks, conserving content
    for b in 1..blocks {
        let from = 4 * (b - 1) + rng.random_range(0..4);
        let to = 4 * b + rng.random_range(0..4);
        let rate: f64 = rng.random_range(0.0..1.0);
        ac[(to, from)] += rate;
        ac[(from, from)] -= rate;
    }
    Mat::identity(n, n) + ac * dt
}

fn random_stochastic(n: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut m = Mat::from_fn(n, n, |_, _| rng.random_range(0.01..1.0));
    for mut r in m.row_iter_mut() {
        let s = r.sum();
        r /= s;
    }
    m
}

fn study_mdp(spec: &StudySpec) -> Result<Mdp> {
    let actions = if spec.modes == 4 {
        transport_actions()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::MAX);
        vec![random_stochastic(spec.modes, &mut rng), random_stochastic(spec.modes, &mut rng)]
    };
    let states = (0..spec.modes).map(|i| format!("m{}", i + 1)).collect();
    Mdp::new(states, 0, vec!["sigma1".into(), "sigma2".into()], actions)
}

/// Instance `index` of the study; identical for identical `(spec, index)`.
pub fn generate_instance(spec: &StudySpec, index: usize) -> Result<MdpJls> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let n = spec.state_dim;
    let [lo, hi] = spec.rho_range;
    let mats = (0..spec.modes)
        .map(|_| {
            let target = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let b = match spec.generator {
                Generator::Transport => transport_mode(n, spec.dt, &mut rng),
                Generator::Dense => Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)),
            };
            scaled(b, target)
        })
        .collect::<Result<Vec<_>>>()?;
    MdpJls::new(SwitchedSystem::from_matrices(mats)?, study_mdp(spec)?, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub success: bool,
    pub seconds: f64,
    /// Failure reason or the certified margin.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub index: usize,
    pub mode_rho: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub certify_seconds: Option<f64>,
    pub runs: BTreeMap<Method, MethodRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub spec: StudySpec,
    pub instances: Vec<InstanceReport>,
    pub successes: BTreeMap<Method, usize>,
    pub mean_seconds: BTreeMap<Method, f64>,
}

impl StudyReport {
    /// Per-instance success flags, the part of the report that is reproducible.
    pub fn success_table(&self) -> Vec<Vec<bool>> {
        self.instances
            .iter()
            .map(|i| self.spec.methods.iter().map(|m| i.runs.get(m).is_some_and(|r| r.success)).collect())
            .collect()
    }

    pub fn count(&self, m: Method) -> usize {
        self.successes.get(&m).copied().unwrap_or(0)
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn describe(out: Result<SynthesisOutcome>, seconds: f64) -> MethodRun {
    match out {
        Ok(SynthesisOutcome::Stabilized(r)) => {
            MethodRun { success: true, seconds, detail: format!("margin {:.3e}", r.margin) }
        }
        Ok(SynthesisOutcome::Infeasible(why)) => MethodRun { success: false, seconds, detail: why },
        Ok(SynthesisOutcome::NotCertified { iterations, best_gamma }) => MethodRun {
            success: false,
            seconds,
            detail: format!("not certified after {iterations} iterations, best γ {best_gamma:.3e}"),
        },
        Err(e) => MethodRun { success: false, seconds, detail: format!("error: {e}") },
    }
}

/// Runs one synthesis method; probability-one methods need coefficients.
pub fn run_method(
    jls: &MdpJls,
    method: Method,
    cert: Option<&LyapunovCertificate>,
    spec: &StudySpec,
    index: usize,
) -> MethodRun {
    let cd = CdOptions { seed: spec.cd.seed.wrapping_add(index as u64), ..spec.cd.clone() };
    let (out, secs) = match (method, cert) {
        (Method::MsCd, _) => timed(|| msstab::synthesize_ms_cd(jls, &cd)),
        (Method::MsSdp, _) => timed(|| msstab::synthesize_ms_sdp(jls)),
        (Method::P1Dependent, Some(c)) => timed(|| synth::synthesize_p1_dependent(jls, c, &spec.p1)),
        (Method::P1Independent, Some(c)) => {
            timed(|| synth::synthesize_p1_independent(jls, c.alpha_uniform, c.mu_uniform, &spec.p1))
        }
        (Method::P1Dependent | Method::P1Independent, None) => {
            return MethodRun { success: false, seconds: 0.0, detail: "no Lyapunov coefficients".into() };
        }
        (Method::P1Robust, _) => {
            return MethodRun { success: false, seconds: 0.0, detail: "not part of the study".into() };
        }
    };
    describe(out, secs)
}

pub fn run_instance(spec: &StudySpec, index: usize) -> Result<InstanceReport> {
    let jls = generate_instance(spec, index)?;
    let mode_rho = jls.system.matrices().map(numerics::spectral_radius).collect::<Result<Vec<_>>>()?;
    let needs_cert = spec.methods.iter().any(|m| matches!(m, Method::P1Dependent | Method::P1Independent));
    let (cert, certify_seconds) = if needs_cert {
        let (c, s) = timed(|| lyapunov::certify(&jls.system, spec.bisect_tol));
        (c.ok(), Some(s))
    } else {
        (None, None)
    };
    let runs = spec.methods.iter().map(|&m| (m, run_method(&jls, m, cert.as_ref(), spec, index))).collect();
    Ok(InstanceReport {
        index,
        mode_rho,
        alpha: cert.as_ref().map(|c| c.alpha.clone()),
        mu: cert.as_ref().map(|c| c.mu_mode.clone()),
        certify_seconds,
        runs,
    })
}

pub fn run_study(spec: &StudySpec) -> Result<StudyReport> {
    spec.validate()?;
    let instances: Vec<InstanceReport> =
        (0..spec.instances).into_par_iter().map(|i| run_instance(spec, i)).collect::<Result<_>>()?;
    let mut successes = BTreeMap::new();
    let mut mean_seconds = BTreeMap::new();
    for &m in &spec.methods {
        let runs: Vec<&MethodRun> = instances.iter().filter_map(|i| i.runs.get(&m)).collect();
        successes.insert(m, runs.iter().filter(|r| r.success).count());
        mean_seconds.insert(m, runs.iter().map(|r| r.seconds).sum::<f64>() / runs.len().max(1) as f64);
    }
    Ok(StudyReport { spec: spec.clone(), instances, successes, mean_seconds })
}
