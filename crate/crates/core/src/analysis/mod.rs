//! Closed-form adversary success probabilities, sampling estimators and
//! empirical correlation attacks on execution traces.

mod attack;
mod formulas;

pub use attack::{best_modulus, trace_attack, AttackReport, Correlator};
pub use formulas::*;
