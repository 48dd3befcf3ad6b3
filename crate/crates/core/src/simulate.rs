//! Monte Carlo simulation of the closed loop with per-run reproducible streams.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{LyapunovCertificate, LMI_SLACK};
use crate::markov::StationaryAnalysis;
use crate::model::{induce_chain, Dtmc, MdpJls, Policy};
use crate::numerics::{Mat, Vector};

/// `ln(1e150)`; runs whose log-norm exceeds it are flagged as diverged.
pub const DIVERGENCE_LOG_NORM: f64 = 345.387_763_949_107_0;
/// Batches per run used for standard errors.
pub const BATCHES_PER_RUN: usize = 32;
/// Relative tolerance of the certificate shadowing checks.
pub const SHADOW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    /// Initial state; all ones when absent.
    pub x0: Option<Vec<f64>>,
    pub record_stride: usize,
    pub keep_traces: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { steps: 1000, runs: 100, seed: 0, x0: None, record_stride: 1, keep_traces: false }
    }
}

impl SimConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.steps == 0 || self.runs == 0 || self.record_stride == 0 {
            return Err(Error::Validation("steps, runs and record stride must be at least 1".into()));
        }
        if let Some(x) = &self.x0 {
            if x.len() != n {
                return Err(Error::DimensionMismatch(format!("x0 has {} entries, state dimension is {n}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("x0 must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Per-batch counts, used for batch-means standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub steps: usize,
    pub jumps: usize,
    pub occupancy: Vec<usize>,
    pub inbound: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub mode: usize,
    pub log_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    /// `log‖x(k)‖∞` at every recorded step; `None` once the state is exactly zero.
    pub log_norms: Vec<Option<f64>>,
    pub jumps: usize,
    /// `k_s`: steps spent in each mode.
    pub occupancy: Vec<usize>,
    /// `m_s`: jumps into each mode.
    pub inbound: Vec<usize>,
    /// Least-squares slope of the log-norm over the second half of the horizon.
    pub slope: Option<f64>,
    /// The state reached zero exactly, i.e. slope −∞.
    pub zeroed: bool,
    pub diverged: bool,
    pub batches: Vec<Batch>,
    /// Certificate shadowing violations (zero when no certificate was supplied).
    pub shadow_violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

impl RunReport {
    pub fn jump_frequency(&self, steps: usize) -> f64 {
        self.jumps as f64 / steps as f64
    }

    pub fn decays(&self) -> bool {
        self.zeroed || self.slope.is_some_and(|s| s < 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub steps: usize,
    pub seed: u64,
    pub record_stride: usize,
    pub runs: Vec<RunReport>,
    /// `ln tr E[x(k)x(k)']` pooled over runs at every recorded step.
    pub log_second_moment: Vec<Option<f64>>,
    pub certificate_checked: bool,
}

impl SimReport {
    pub fn median_slope(&self) -> Option<f64> {
        let mut s: Vec<f64> = self
            .runs
            .iter()
            .map(|r| if r.zeroed { f64::NEG_INFINITY } else { r.slope.unwrap_or(f64::NAN) })
            .filter(|v| !v.is_nan())
            .collect();
        if s.is_empty() {
            return None;
        }
        s.sort_by(f64::total_cmp);
        Some(s[s.len() / 2])
    }

    pub fn decaying_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.decays()).count()
    }

    pub fn total_shadow_violations(&self) -> usize {
        self.runs.iter().map(|r| r.shadow_violations).sum()
    }

    /// One CSV per run with columns `k,mode,log_norm`.
    pub fn write_traces(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.runs {
            let Some(trace) = &r.trace else { continue };
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("run_{:05}.csv", r.run)))?);
            writeln!(f, "k,mode,log_norm")?;
            for row in trace {
                match row.log_norm {
                    Some(v) => writeln!(f, "{},{},{v}", row.k, row.mode)?,
                    None => writeln!(f, "{},{},-inf", row.k, row.mode)?,
                }
            }
        }
        Ok(())
    }
}

fn sample_next(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

fn quad(m: &Mat, x: &Vector) -> f64 {
    x.dot(&(m * x))
}

struct SlopeFit {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
}

impl SlopeFit {
    fn new() -> Self {
        Self { n: 0.0, sx: 0.0, sy: 0.0, sxx: 0.0, sxy: 0.0 }
    }

    fn add(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.sxy += x * y;
    }

    fn slope(&self) -> Option<f64> {
        let d = self.n * self.sxx - self.sx * self.sx;
        (self.n >= 2.0 && d > 0.0).then(|| (self.n * self.sxy - self.sx * self.sy) / d)
    }
}

fn run_one(
    jls: &MdpJls,
    chain: &Dtmc,
    cfg: &SimConfig,
    run: usize,
    cert: Option<&LyapunovCertificate>,
) -> (RunReport, Vec<Option<f64>>) {
    let sys = &jls.system;
    let (n, nm) = (sys.state_dim(), sys.num_modes());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run as u64);
    let rows: Vec<Vec<f64>> = chain.p.row_iter().map(|r| r.iter().copied().collect()).collect();

    let x0 = cfg.x0.clone().map(Vector::from_vec).unwrap_or_else(|| Vector::from_element(n, 1.0));
    let norm0 = x0.amax();
    let (mut x, mut log_scale, mut zeroed) =
        if norm0 > 0.0 { (x0 / norm0, norm0.ln(), false) } else { (Vector::zeros(n), f64::NEG_INFINITY, true) };

    let steps = cfg.steps;
    let batch_len = steps.div_ceil(BATCHES_PER_RUN.min(steps));
    let mut batches: Vec<Batch> = Vec::new();
    let mut occupancy = vec![0usize; nm];
    let mut inbound = vec![0usize; nm];
    let mut jumps = 0;
    let mut log_norms = Vec::with_capacity(steps / cfg.record_stride + 1);
    let mut sq_norms = Vec::with_capacity(steps / cfg.record_stride + 1);
    let mut trace = cfg.keep_traces.then(Vec::new);
    let mut fit = SlopeFit::new();
    let mut diverged = false;
    let mut violations = 0;
    let mut mode = chain.initial_state;

    let mut record = |k: usize, mode: usize, x: &Vector, log_scale: f64, zeroed: bool| {
        let ln = (!zeroed).then_some(log_scale);
        log_norms.push(ln);
        sq_norms.push((!zeroed).then(|| 2.0 * log_scale + x.norm_squared().ln()));
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow { k, mode, log_norm: ln });
        }
    };
    record(0, mode, &x, log_scale, zeroed);

    for k in 0..steps {
        if k % batch_len == 0 {
            batches.push(Batch { steps: 0, jumps: 0, occupancy: vec![0; nm], inbound: vec![0; nm] });
        }
        let b = batches.last_mut().expect("batch opened above");
        occupancy[mode] += 1;
        b.occupancy[mode] += 1;
        b.steps += 1;

        let next_x = sys.a(mode) * &x;
        let next_mode = sample_next(&rows[mode], &mut rng);
        if let (Some(c), false) = (cert, zeroed) {
            // pathwise decrease within a mode and bounded growth at a jump
            let v_now = quad(&c.m[mode], &x);
            let v_next = quad(&c.m[mode], &next_x);
            let slack = LMI_SLACK * next_x.norm_squared().max(x.norm_squared());
            if v_next > (1.0 - c.alpha[mode]) * v_now * (1.0 + SHADOW_TOL) + slack {
                violations += 1;
            }
            if next_mode != mode {
                let into = quad(&c.m[next_mode], &next_x);
                let from = quad(&c.m[mode], &next_x);
                if into > c.mu_mode[next_mode] * from * (1.0 + SHADOW_TOL) {
                    violations += 1;
                }
            }
        }
        if next_mode != mode {
            jumps += 1;
            inbound[next_mode] += 1;
            b.jumps += 1;
            b.inbound[next_mode] += 1;
        }
        mode = next_mode;

        if !zeroed {
            let m = next_x.amax();
            if m > 0.0 && m.is_finite() {
                x = next_x / m;
                log_scale += m.ln();
            } else {
                x = Vector::zeros(n);
                zeroed = true;
            }
            if log_scale > DIVERGENCE_LOG_NORM {
                diverged = true;
            }
        }
        let kk = k + 1;
        if 2 * kk >= steps && !zeroed {
            fit.add(kk as f64, log_scale);
        }
        if kk % cfg.record_stride == 0 {
            record(kk, mode, &x, log_scale, zeroed);
        }
    }
    let report = RunReport {
        run,
        log_norms,
        jumps,
        occupancy,
        inbound,
        slope: fit.slope(),
        zeroed,
        diverged,
        batches,
        shadow_violations: violations,
        trace,
    };
    (report, sq_norms)
}

fn log_mean_exp(values: &[Option<f64>]) -> Option<f64> {
    let finite: Vec<f64> = values.iter().flatten().copied().collect();
    let m = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let s: f64 = finite.iter().map(|v| (v - m).exp()).sum();
    Some(m + (s / values.len() as f64).ln())
}

pub fn simulate(jls: &MdpJls, policy: &Policy, cfg: &SimConfig) -> Result<SimReport> {
    simulate_with_certificate(jls, policy, cfg, None)
}

/// As [`simulate`]; with a certificate every step is checked against its
/// decrease and jump inequalities.
pub fn simulate_with_certificate(
    jls: &MdpJls,
    policy: &Policy,
    cfg: &SimConfig,
    cert: Option<&LyapunovCertificate>,
) -> Result<SimReport> {
    cfg.validate(jls.system.state_dim())?;
    policy.validate(&jls.mdp)?;
    if let Some(c) = cert {
        if c.num_modes() != jls.num_modes() {
            return Err(Error::DimensionMismatch("certificate and model disagree on the number of modes".into()));
        }
    }
    let chain = induce_chain(&jls.mdp, policy)?;
    let results: Vec<(RunReport, Vec<Option<f64>>)> =
        (0..cfg.runs).into_par_iter().map(|r| run_one(jls, &chain, cfg, r, cert)).collect();
    let samples = results[0].1.len();
    let log_second_moment = (0..samples)
        .map(|i| log_mean_exp(&results.iter().map(|(_, s)| s[i]).collect::<Vec<_>>()))
        .collect();
    Ok(SimReport {
        steps: cfg.steps,
        seed: cfg.seed,
        record_stride: cfg.record_stride,
        runs: results.into_iter().map(|(r, _)| r).collect(),
        log_second_moment,
        certificate_checked: cert.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub estimate: f64,
    pub expected: f64,
    pub std_err: f64,
    pub z: f64,
}

impl ZScore {
    fn new(samples: &[(f64, f64)], expected: f64) -> Self {
        // samples are (count, steps) per batch
        let total: f64 = samples.iter().map(|s| s.1).sum();
        let estimate = samples.iter().map(|s| s.0).sum::<f64>() / total;
        let nb = samples.len() as f64;
        let var = if nb > 1.0 {
            samples.iter().map(|s| (s.1 / total * nb).powi(2) * (s.0 / s.1 - estimate).powi(2)).sum::<f64>()
                / (nb - 1.0)
        } else {
            0.0
        };
        let std_err = (var / nb).sqrt();
        let diff = estimate - expected;
        let z = if std_err > 0.0 {
            diff / std_err
        } else if diff.abs() <= 1e-12 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        Self { estimate, expected, std_err, z }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z.abs() <= sigmas
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCheck {
    /// `m/k` against `P_jump`.
    pub jump: ZScore,
    /// `k_s/k` against `p∞_s`.
    pub occupancy: Vec<ZScore>,
    /// `m_s/k` against `→p_s`.
    pub inbound: Vec<ZScore>,
}

impl FrequencyCheck {
    pub fn all_within(&self, sigmas: f64) -> bool {
        self.jump.within(sigmas) && self.occupancy.iter().chain(&self.inbound).all(|z| z.within(sigmas))
    }

    pub fn max_abs_z(&self) -> f64 {
        std::iter::once(&self.jump).chain(&self.occupancy).chain(&self.inbound).map(|z| z.z.abs()).fold(0.0, f64::max)
    }
}

/// z-scores of the empirical jump statistics, with batch-means standard errors.
pub fn empirical_frequency_check(report: &SimReport, analysis: &StationaryAnalysis) -> FrequencyCheck {
    let batches: Vec<&Batch> = report.runs.iter().flat_map(|r| &r.batches).collect();
    let series = |f: &dyn Fn(&Batch) -> usize| -> Vec<(f64, f64)> {
        batches.iter().map(|b| (f(b) as f64, b.steps as f64)).collect()
    };
    let nm = analysis.p_inf.len();
    FrequencyCheck {
        jump: ZScore::new(&series(&|b| b.jumps), analysis.p_jump),
        occupancy: (0..nm).map(|s| ZScore::new(&series(&|b| b.occupancy[s]), analysis.p_inf[s])).collect(),
        inbound: (0..nm).map(|s| ZScore::new(&series(&|b| b.inbound[s]), analysis.inbound[s])).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::stationary_distribution;
    use crate::model::{Mdp, SwitchedSystem};
    use proptest::prelude::*;

    fn model(mats: Vec<Mat>, p: Mat) -> MdpJls {
        let nm = mats.len();
        let sys = SwitchedSystem::from_matrices(mats).unwrap();
        let states = (0..nm).map(|i| format!("s{i}")).collect();
        let mdp = Mdp::new(states, 0, vec!["a".into()], vec![p]).unwrap();
        MdpJls::new(sys, mdp, None).unwrap()
    }

    fn only(j: &MdpJls) -> Policy {
        Policy::uniform(&j.mdp)
    }

    #[test]
    fn zero_dynamics() {
        let j = model(vec![Mat::zeros(2, 2)], Mat::identity(1, 1));
        let r = simulate(&j, &only(&j), &SimConfig { steps: 10, runs: 2, ..SimConfig::default() }).unwrap();
        for run in &r.runs {
            assert!(run.zeroed);
            assert_eq!(run.jumps, 0);
            assert!(run.log_norms[1..].iter().all(Option::is_none));
        }
        assert_eq!(r.median_slope(), Some(f64::NEG_INFINITY));
    }

    #[test]
    fn deterministic_decay_rate() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.3, 0.1, 0.7]);
        let rho = crate::numerics::spectral_radius(&a).unwrap();
        let j = model(vec![a], Mat::identity(1, 1));
        let r = simulate(&j, &only(&j), &SimConfig { steps: 400, runs: 1, ..SimConfig::default() }).unwrap();
        let s = r.runs[0].slope.unwrap();
        assert!(s <= rho.ln() + 1e-6 && s >= rho.ln() - 1e-3, "{s} vs {}", rho.ln());
    }

    #[test]
    fn frozen_chain_never_jumps() {
        let j = model(vec![Mat::identity(1, 1) * 0.5; 2], Mat::identity(2, 2));
        let r = simulate(&j, &only(&j), &SimConfig { steps: 50, runs: 3, ..SimConfig::default() }).unwrap();
        assert!(r.runs.iter().all(|run| run.jumps == 0 && run.occupancy[0] == 50));
    }

    #[test]
    fn frequencies_match_stationary_statistics() {
        for p in [Mat::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]), Mat::from_element(2, 2, 0.5)] {
            let j = model(vec![Mat::identity(1, 1) * 0.9; 2], p);
            let pol = only(&j);
            let r = simulate(&j, &pol, &SimConfig { steps: 100_000, runs: 1, seed: 3, ..SimConfig::default() })
                .unwrap();
            let a = stationary_distribution(&induce_chain(&j.mdp, &pol).unwrap()).unwrap();
            let c = empirical_frequency_check(&r, &a);
            assert!(c.all_within(3.0), "{c:?}");
        }
    }

    #[test]
    fn traces_and_stride() {
        let j = model(vec![Mat::identity(1, 1) * 0.9; 2], Mat::from_element(2, 2, 0.5));
        let cfg = SimConfig { steps: 10, runs: 2, record_stride: 3, keep_traces: true, ..SimConfig::default() };
        let r = simulate(&j, &only(&j), &cfg).unwrap();
        let t = r.runs[0].trace.as_ref().unwrap();
        assert_eq!(t.iter().map(|row| row.k).collect::<Vec<_>>(), vec![0, 3, 6, 9]);
        let dir = std::env::temp_dir().join(format!("mdpjls-traces-{}", std::process::id()));
        r.write_traces(&dir).unwrap();
        let text = std::fs::read_to_string(dir.join("run_00001.csv")).unwrap();
        assert!(text.starts_with("k,mode,log_norm\n0,0,0\n"));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn invalid_configs() {
        let j = model(vec![Mat::identity(1, 1)], Mat::identity(1, 1));
        let p = only(&j);
        assert!(simulate(&j, &p, &SimConfig { steps: 0, ..SimConfig::default() }).is_err());
        assert!(simulate(&j, &p, &SimConfig { x0: Some(vec![1.0, 2.0]), ..SimConfig::default() }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bookkeeping_and_determinism(
            p in proptest::collection::vec(0.01f64..1.0, 9),
            seed in any::<u64>(),
            steps in 1usize..300,
        ) {
            let mut pm = Mat::from_row_slice(3, 3, &p);
            for mut r in pm.row_iter_mut() {
                let s = r.sum();
                r /= s;
            }
            let mats = vec![Mat::identity(2, 2) * 0.9, Mat::identity(2, 2) * 1.1, Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])];
            let j = model(mats, pm);
            let cfg = SimConfig { steps, runs: 3, seed, ..SimConfig::default() };
            let a = simulate(&j, &only(&j), &cfg).unwrap();
            let b = simulate(&j, &only(&j), &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            for run in &a.runs {
                prop_assert_eq!(run.occupancy.iter().sum::<usize>(), steps);
                prop_assert_eq!(run.inbound.iter().sum::<usize>(), run.jumps);
                prop_assert_eq!(run.batches.iter().map(|b| b.steps).sum::<usize>(), steps);
                prop_assert!(run.jump_frequency(steps) <= 1.0);
            }
        }
    }
}
