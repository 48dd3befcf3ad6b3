//! Synthesis and verification of stabilizing policies for switched linear
//! systems whose mode is driven by a Markov decision process.

pub mod error;
pub mod lyapunov;
pub mod markov;
pub mod model;
pub mod msstab;
pub mod numerics;
pub mod simulate;
pub mod solvers;
pub mod study;
pub mod synth;

pub use error::{Error, Result};
pub use lyapunov::{certify, LyapunovCertificate};
pub use markov::{stationary_distribution, Classification, StationaryAnalysis};
pub use model::{induce_chain, parse_model, Dtmc, Mdp, MdpJls, Policy, SwitchedSystem};
pub use msstab::{check_ms, MsVerdict};
pub use numerics::{Discretization, Mat, Vector};
pub use synth::{Coefficients, Method, SynthesisOutcome, SynthesisResult};
