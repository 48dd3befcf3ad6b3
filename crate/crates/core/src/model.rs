//! Switched dynamics, the governing MDP, policies and induced chains, plus
//! the JSON model document.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Discretization, Mat, Vector};

/// Row sums of stochastic matrices must be exact to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Upper limit on the number of deterministic policies we are willing to enumerate.
pub const MAX_DETERMINISTIC_POLICIES: u128 = 1 << 20;

/// How a mode's discrete-time matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModeSource {
    Discrete,
    Continuous { dt: f64, method: Discretization },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub name: String,
    pub a: Mat,
    pub source: ModeSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    state_dim: usize,
    modes: Vec<Mode>,
}

impl SwitchedSystem {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        let first = modes.first().ok_or_else(|| Error::Validation("at least one mode is required".into()))?;
        let n = first.a.nrows();
        if n == 0 {
            return Err(Error::Validation("state dimension must be positive".into()));
        }
        for (i, m) in modes.iter().enumerate() {
            if m.a.shape() != (n, n) {
                return Err(Error::Validation(format!(
                    "mode {i} (`{}`) is {}x{}, expected {n}x{n}",
                    m.name,
                    m.a.nrows(),
                    m.a.ncols()
                )));
            }
            if !numerics::all_finite(&m.a) {
                return Err(Error::Validation(format!("mode {i} (`{}`) has non-finite entries", m.name)));
            }
        }
        Ok(Self { state_dim: n, modes })
    }

    /// Convenience constructor for discrete-time matrices named `m1, m2, ...`.
    pub fn from_matrices(mats: Vec<Mat>) -> Result<Self> {
        Self::new(
            mats.into_iter()
                .enumerate()
                .map(|(i, a)| Mode { name: format!("m{}", i + 1), a, source: ModeSource::Discrete })
                .collect(),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn a(&self, mode: usize) -> &Mat {
        &self.modes[mode].a
    }

    pub fn matrices(&self) -> impl Iterator<Item = &Mat> {
        self.modes.iter().map(|m| &m.a)
    }
}

/// Markov decision process over the modes. `transition[σ]` is the `N×N`
/// matrix `T_σ`; an all-zero row marks `σ` unavailable at that state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    states: Vec<String>,
    initial_state: usize,
    actions: Vec<String>,
    transition: Vec<Mat>,
    available: Vec<Vec<bool>>,
}

impl Mdp {
    pub fn new(states: Vec<String>, initial_state: usize, actions: Vec<String>, transition: Vec<Mat>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::Validation("MDP needs at least one state".into()));
        }
        if actions.is_empty() {
            return Err(Error::Validation("MDP needs at least one action".into()));
        }
        if transition.len() != actions.len() {
            return Err(Error::Validation(format!(
                "{} transition matrices for {} actions",
                transition.len(),
                actions.len()
            )));
        }
        if initial_state >= n {
            return Err(Error::Validation(format!("initial state {initial_state} out of range")));
        }
        let mut available = vec![vec![false; actions.len()]; n];
        for (a, t) in transition.iter().enumerate() {
            if t.shape() != (n, n) {
                return Err(Error::Validation(format!(
                    "transition matrix for action `{}` is {}x{}, expected {n}x{n}",
                    actions[a],
                    t.nrows(),
                    t.ncols()
                )));
            }
            for s in 0..n {
                let row = t.row(s);
                if let Some(bad) = row.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
                    return Err(Error::Validation(format!(
                        "transition row for action `{}` at state `{}` has entry {bad} outside [0, 1]",
                        actions[a], states[s]
                    )));
                }
                let sum: f64 = row.iter().sum();
                if sum == 0.0 {
                    continue;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Validation(format!(
                        "transition row for action `{}` at state `{}` sums to {sum}",
                        actions[a], states[s]
                    )));
                }
                available[s][a] = true;
            }
        }
        for (s, avail) in available.iter().enumerate() {
            if !avail.iter().any(|&b| b) {
                return Err(Error::Validation(format!("state `{}` has no available action", states[s])));
            }
        }
        Ok(Self { states, initial_state, actions, transition, available })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// `T(s, σ, s')`.
    pub fn t(&self, s: usize, action: usize, next: usize) -> f64 {
        self.transition[action][(s, next)]
    }

    pub fn action_matrix(&self, action: usize) -> &Mat {
        &self.transition[action]
    }

    pub fn is_available(&self, s: usize, action: usize) -> bool {
        self.available[s][action]
    }

    pub fn available_actions(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_actions()).filter(move |&a| self.available[s][a])
    }

    /// Same MDP with different transition matrices (e.g. an estimated model).
    pub fn with_transitions(&self, transition: Vec<Mat>) -> Result<Self> {
        Self::new(self.states.clone(), self.initial_state, self.actions.clone(), transition)
    }
}

/// Randomized policy, `probs[(s, σ)] = π(s, σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub probs: Mat,
}

impl Policy {
    pub fn new(probs: Mat, mdp: &Mdp) -> Result<Self> {
        let p = Self { probs };
        p.validate(mdp)?;
        Ok(p)
    }

    /// Uniform over the available actions of each state.
    pub fn uniform(mdp: &Mdp) -> Self {
        let mut probs = Mat::zeros(mdp.num_states(), mdp.num_actions());
        for s in 0..mdp.num_states() {
            let avail: Vec<usize> = mdp.available_actions(s).collect();
            for &a in &avail {
                probs[(s, a)] = 1.0 / avail.len() as f64;
            }
        }
        Self { probs }
    }

    pub fn deterministic(mdp: &Mdp, choice: &[usize]) -> Result<Self> {
        if choice.len() != mdp.num_states() {
            return Err(Error::PolicyMismatch(format!(
                "{} choices for {} states",
                choice.len(),
                mdp.num_states()
            )));
        }
        let mut probs = Mat::zeros(mdp.num_states(), mdp.num_actions());
        for (s, &a) in choice.iter().enumerate() {
            if a >= mdp.num_actions() {
                return Err(Error::PolicyMismatch(format!("action index {a} out of range")));
            }
            probs[(s, a)] = 1.0;
        }
        Self::new(probs, mdp)
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        let (n, m) = (mdp.num_states(), mdp.num_actions());
        if self.probs.shape() != (n, m) {
            return Err(Error::PolicyMismatch(format!(
                "policy is {}x{}, MDP has {n} states and {m} actions",
                self.probs.nrows(),
                self.probs.ncols()
            )));
        }
        for s in 0..n {
            let mut sum = 0.0;
            for a in 0..m {
                let p = self.probs[(s, a)];
                if !(p.is_finite() && p >= 0.0) {
                    return Err(Error::PolicyMismatch(format!("π({s}, {a}) = {p} is not a probability")));
                }
                if p > 0.0 && !mdp.is_available(s, a) {
                    return Err(Error::PolicyMismatch(format!(
                        "policy puts mass {p} on unavailable action `{}` at state `{}`",
                        mdp.actions[a], mdp.states[s]
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::PolicyMismatch(format!("policy row for state `{}` sums to {sum}", mdp.states[s])));
            }
        }
        Ok(())
    }

    /// Index of the most likely action per state.
    pub fn argmax(&self) -> Vec<usize> {
        self.probs.row_iter().map(|r| r.transpose().iamax()).collect()
    }
}

/// Discrete-time Markov chain with row-stochastic `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dtmc {
    pub p: Mat,
    pub initial_state: usize,
}

impl Dtmc {
    pub fn new(p: Mat, initial_state: usize) -> Result<Self> {
        if !p.is_square() || p.nrows() == 0 {
            return Err(Error::Validation(format!("transition matrix is {}x{}", p.nrows(), p.ncols())));
        }
        if initial_state >= p.nrows() {
            return Err(Error::Validation(format!("initial state {initial_state} out of range")));
        }
        for (i, row) in p.row_iter().enumerate() {
            if row.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
                return Err(Error::Validation(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { p, initial_state })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(numerics::from_rows(rows)?, 0)
    }

    pub fn num_states(&self) -> usize {
        self.p.nrows()
    }
}

/// Switched system whose mode switching follows an MDP, with per-mode costs.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpJls {
    pub system: SwitchedSystem,
    pub mdp: Mdp,
    pub costs: Vector,
}

impl MdpJls {
    pub fn new(system: SwitchedSystem, mdp: Mdp, costs: Option<Vector>) -> Result<Self> {
        let n = mdp.num_states();
        if system.num_modes() != n {
            return Err(Error::Validation(format!("{} modes but {n} MDP states", system.num_modes())));
        }
        let costs = costs.unwrap_or_else(|| Vector::zeros(n));
        if costs.len() != n {
            return Err(Error::Validation(format!("{} costs for {n} states", costs.len())));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("costs must be finite".into()));
        }
        Ok(Self { system, mdp, costs })
    }

    pub fn num_modes(&self) -> usize {
        self.mdp.num_states()
    }

    /// The same system under an alternative (estimated) MDP.
    pub fn with_mdp(&self, mdp: Mdp) -> Result<Self> {
        Self::new(self.system.clone(), mdp, Some(self.costs.clone()))
    }
}

/// `P(i, j) = Σ_σ T(i, σ, j) π(i, σ)`.
pub fn induce_chain(mdp: &Mdp, policy: &Policy) -> Result<Dtmc> {
    policy.validate(mdp)?;
    let n = mdp.num_states();
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        for a in mdp.available_actions(i) {
            let w = policy.probs[(i, a)];
            if w == 0.0 {
                continue;
            }
            for j in 0..n {
                p[(i, j)] += w * mdp.t(i, a, j);
            }
        }
    }
    Dtmc::new(p, mdp.initial_state())
}

/// Every deterministic policy, first state most significant, action indices ascending.
pub fn enumerate_deterministic_policies(mdp: &Mdp) -> Result<DeterministicPolicies<'_>> {
    let choices: Vec<Vec<usize>> = (0..mdp.num_states()).map(|s| mdp.available_actions(s).collect()).collect();
    let count = choices.iter().try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128)).unwrap_or(u128::MAX);
    if count > MAX_DETERMINISTIC_POLICIES {
        return Err(Error::TooManyPolicies { count, limit: MAX_DETERMINISTIC_POLICIES });
    }
    Ok(DeterministicPolicies { mdp, cursor: Some(vec![0; choices.len()]), choices })
}

#[derive(Debug)]
pub struct DeterministicPolicies<'a> {
    mdp: &'a Mdp,
    choices: Vec<Vec<usize>>,
    cursor: Option<Vec<usize>>,
}

impl Iterator for DeterministicPolicies<'_> {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        let cur = self.cursor.as_mut()?;
        let mut probs = Mat::zeros(self.mdp.num_states(), self.mdp.num_actions());
        for (s, &k) in cur.iter().enumerate() {
            probs[(s, self.choices[s][k])] = 1.0;
        }
        // odometer, last state fastest
        let mut pos = cur.len();
        loop {
            if pos == 0 {
                self.cursor = None;
                break;
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < self.choices[pos].len() {
                break;
            }
            cur[pos] = 0;
        }
        Some(Policy { probs })
    }
}

// ---------------------------------------------------------------------------
// Documents

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixDoc {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixDoc {
    fn to_mat(&self, rows: usize, cols: usize, path: &str) -> Result<Mat> {
        let schema = |message: String| Error::Schema { path: path.to_string(), message };
        match self {
            MatrixDoc::Rows(r) => {
                if r.len() != rows || r.iter().any(|row| row.len() != cols) {
                    return Err(schema(format!("expected a {rows}x{cols} matrix")));
                }
                numerics::from_rows(r)
            }
            MatrixDoc::Flat(v) => {
                if v.len() != rows * cols {
                    return Err(schema(format!("expected {} row-major entries, got {}", rows * cols, v.len())));
                }
                Ok(Mat::from_row_slice(rows, cols, v))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeDoc {
    Discrete {
        name: String,
        #[serde(rename = "A")]
        a: MatrixDoc,
    },
    Continuous {
        name: String,
        #[serde(rename = "A_cont")]
        a_cont: MatrixDoc,
        dt: f64,
        #[serde(default)]
        discretization: Discretization,
    },
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub state_dim: usize,
    pub modes: Vec<ModeDoc>,
    pub actions: Vec<String>,
    pub transitions: BTreeMap<String, MatrixDoc>,
    pub initial_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

pub fn parse_model(document: &str) -> Result<MdpJls> {
    parse_model_with(document, None)
}

/// Parses a model document; `override_method` replaces the declared
/// discretization of every continuous-time mode.
pub fn parse_model_with(document: &str, override_method: Option<Discretization>) -> Result<MdpJls> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let doc: ModelDoc = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    doc.into_model(override_method)
}

impl ModelDoc {
    pub fn into_model(self, override_method: Option<Discretization>) -> Result<MdpJls> {
        let n = self.state_dim;
        if n == 0 {
            return Err(Error::Schema { path: "state_dim".into(), message: "must be positive".into() });
        }
        let mut names = HashSet::new();
        let mut modes = Vec::with_capacity(self.modes.len());
        for (i, m) in self.modes.iter().enumerate() {
            let path = format!("modes[{i}]");
            let mode = match m {
                ModeDoc::Discrete { name, a } => {
                    Mode { name: name.clone(), a: a.to_mat(n, n, &format!("{path}.A"))?, source: ModeSource::Discrete }
                }
                ModeDoc::Continuous { name, a_cont, dt, discretization } => {
                    let method = override_method.unwrap_or(*discretization);
                    let ac = a_cont.to_mat(n, n, &format!("{path}.A_cont"))?;
                    if !numerics::all_finite(&ac) {
                        return Err(Error::Validation(format!("mode `{name}` has non-finite entries")));
                    }
                    let a = numerics::discretize(&ac, *dt, method)
                        .map_err(|e| Error::Schema { path: format!("{path}.dt"), message: e.to_string() })?;
                    Mode { name: name.clone(), a, source: ModeSource::Continuous { dt: *dt, method } }
                }
            };
            if !names.insert(mode.name.clone()) {
                return Err(Error::Validation(format!("duplicate mode name `{}`", mode.name)));
            }
            modes.push(mode);
        }
        let system = SwitchedSystem::new(modes)?;
        let num = system.num_modes();

        let mut seen = HashSet::new();
        for a in &self.actions {
            if !seen.insert(a) {
                return Err(Error::Validation(format!("duplicate action name `{a}`")));
            }
        }
        for key in self.transitions.keys() {
            if !seen.contains(key) {
                return Err(Error::Schema {
                    path: format!("transitions.{key}"),
                    message: "action not declared in `actions`".into(),
                });
            }
        }
        let mut transition = Vec::with_capacity(self.actions.len());
        for a in &self.actions {
            let path = format!("transitions.{a}");
            let doc = self
                .transitions
                .get(a)
                .ok_or_else(|| Error::Schema { path: path.clone(), message: "missing transition matrix".into() })?;
            transition.push(doc.to_mat(num, num, &path)?);
        }
        let states: Vec<String> = system.modes().iter().map(|m| m.name.clone()).collect();
        let initial = states.iter().position(|s| *s == self.initial_mode).ok_or_else(|| Error::Schema {
            path: "initial_mode".into(),
            message: format!("unknown mode `{}`", self.initial_mode),
        })?;
        let mdp = Mdp::new(states, initial, self.actions, transition)?;
        MdpJls::new(system, mdp, self.costs.map(Vector::from_vec))
    }

    /// Document holding the discrete-time matrices of `model`.
    pub fn from_model(model: &MdpJls) -> Self {
        let mdp = &model.mdp;
        Self {
            state_dim: model.system.state_dim(),
            modes: model
                .system
                .modes()
                .iter()
                .map(|m| ModeDoc::Discrete { name: m.name.clone(), a: MatrixDoc::Rows(numerics::to_rows(&m.a)) })
                .collect(),
            actions: mdp.actions().to_vec(),
            transitions: mdp
                .actions()
                .iter()
                .enumerate()
                .map(|(i, a)| (a.clone(), MatrixDoc::Rows(numerics::to_rows(mdp.action_matrix(i)))))
                .collect(),
            initial_mode: mdp.states()[mdp.initial_state()].clone(),
            costs: Some(model.costs.iter().copied().collect()),
        }
    }
}

pub fn serialize_model(model: &MdpJls) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDoc::from_model(model))?)
}

/// Policy files hold either a bare `N×|Σ|` array or an object with a `policy` key
/// (which makes synthesis reports directly usable as policy files).
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PolicyFile {
    Bare(Vec<Vec<f64>>),
    Keyed { policy: Vec<Vec<f64>> },
}

pub fn parse_policy(document: &str, mdp: &Mdp) -> Result<Policy> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let file: PolicyFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    let rows = match file {
        PolicyFile::Bare(r) | PolicyFile::Keyed { policy: r } => r,
    };
    let probs = numerics::from_rows(&rows)
        .map_err(|e| Error::Schema { path: "policy".into(), message: e.to_string() })?;
    Policy::new(probs, mdp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_mdp() -> Mdp {
        Mdp::new(
            vec!["s1".into(), "s2".into()],
            0,
            vec!["a".into(), "b".into()],
            vec![
                Mat::from_row_slice(2, 2, &[0.21, 0.79, 0.90, 0.10]),
                Mat::from_row_slice(2, 2, &[0.71, 0.29, 0.13, 0.87]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_selection_copies_rows() {
        let mdp = two_state_mdp();
        let p = induce_chain(&mdp, &Policy::deterministic(&mdp, &[0, 0]).unwrap()).unwrap();
        assert_eq!(p.p, *mdp.action_matrix(0));
    }

    #[test]
    fn randomized_row_is_convex_combination() {
        let mdp = two_state_mdp();
        let probs = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.27, 0.73]);
        let chain = induce_chain(&mdp, &Policy::new(probs, &mdp).unwrap()).unwrap();
        for j in 0..2 {
            let expect = 0.27 * mdp.t(1, 0, j) + 0.73 * mdp.t(1, 1, j);
            assert!((chain.p[(1, j)] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_on_identical_actions() {
        let t = Mat::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        let mdp = Mdp::new(vec!["x".into(), "y".into()], 0, vec!["a".into(), "b".into()], vec![t.clone(), t.clone()])
            .unwrap();
        let chain = induce_chain(&mdp, &Policy::uniform(&mdp)).unwrap();
        assert!((chain.p - t).amax() < 1e-15);
    }

    #[test]
    fn enumeration_counts() {
        let mdp = two_state_mdp();
        let all: Vec<_> = enumerate_deterministic_policies(&mdp).unwrap().collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[1].argmax(), vec![0, 1]);

        let single = Mdp::new(vec!["s".into()], 0, vec!["a".into()], vec![Mat::identity(1, 1)]).unwrap();
        assert_eq!(enumerate_deterministic_policies(&single).unwrap().count(), 1);

        // action `b` unavailable at the third state
        let ta = Mat::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5]);
        let tb = Mat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let mdp3 = Mdp::new(vec!["1".into(), "2".into(), "3".into()], 0, vec!["a".into(), "b".into()], vec![ta, tb])
            .unwrap();
        let all: Vec<_> = enumerate_deterministic_policies(&mdp3).unwrap().collect();
        assert_eq!(all.len(), 4);
        for p in &all {
            p.validate(&mdp3).unwrap();
        }
    }

    #[test]
    fn too_many_policies_is_refused() {
        let n = 21;
        let t = Mat::from_element(n, n, 1.0 / n as f64);
        let mdp = Mdp::new((0..n).map(|i| i.to_string()).collect(), 0, vec!["a".into(), "b".into()], vec![t.clone(), t])
            .unwrap();
        assert!(matches!(enumerate_deterministic_policies(&mdp), Err(Error::TooManyPolicies { .. })));
    }

    #[test]
    fn policy_mass_on_unavailable_action_is_rejected() {
        let t = Mat::identity(2, 2);
        let z = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let mdp = Mdp::new(vec!["x".into(), "y".into()], 0, vec!["a".into(), "b".into()], vec![t, z]).unwrap();
        let bad = Mat::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(Policy::new(bad, &mdp), Err(Error::PolicyMismatch(_))));
    }

    #[test]
    fn trivial_document() {
        let doc = r#"{"state_dim": 1, "modes": [{"name": "only", "A": [[0.5]]}],
            "actions": ["stay"], "transitions": {"stay": [[1.0]]}, "initial_mode": "only"}"#;
        let m = parse_model(doc).unwrap();
        assert_eq!(m.num_modes(), 1);
        assert_eq!(m.costs[0], 0.0);
    }

    #[test]
    fn short_row_names_the_row() {
        let doc = r#"{"state_dim": 1, "modes": [{"name": "p", "A": [[0.5]]}, {"name": "q", "A": [0.1]}],
            "actions": ["go"], "transitions": {"go": [[0.5, 0.5], [0.48, 0.5]]}, "initial_mode": "p"}"#;
        let err = parse_model(doc).unwrap_err().to_string();
        assert!(err.contains("`go`") && err.contains("`q`") && err.contains("0.98"), "{err}");
    }

    #[test]
    fn schema_errors_carry_a_path() {
        let doc = r#"{"state_dim": 2, "modes": [{"name": "p", "A": [[0.5, 0.0]]}],
            "actions": ["go"], "transitions": {"go": [[1.0]]}, "initial_mode": "p"}"#;
        match parse_model(doc).unwrap_err() {
            Error::Schema { path, .. } => assert_eq!(path, "modes[0].A"),
            e => panic!("unexpected {e}"),
        }
        let doc = r#"{"state_dim": "two"}"#;
        match parse_model(doc).unwrap_err() {
            Error::Schema { path, .. } => assert_eq!(path, "state_dim"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn continuous_modes_are_discretized() {
        let doc = r#"{"state_dim": 1, "modes": [{"name": "c", "A_cont": [[-1.0]], "dt": 0.1, "discretization": "exact"}],
            "actions": ["stay"], "transitions": {"stay": [[1.0]]}, "initial_mode": "c"}"#;
        let m = parse_model(doc).unwrap();
        assert!((m.system.a(0)[(0, 0)] - (-0.1f64).exp()).abs() < 1e-12);
        let m = parse_model_with(doc, Some(Discretization::Euler)).unwrap();
        assert!((m.system.a(0)[(0, 0)] - 0.9).abs() < 1e-15);
    }
}
