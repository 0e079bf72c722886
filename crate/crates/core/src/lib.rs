//! Instruction-decorrelating obfuscation for predicated programs.

pub mod analysis;
pub mod compiler;
pub mod eval;
pub mod harness;
pub mod ir;
pub mod lang;
pub mod layout;
pub mod samples;
pub mod semantics;
pub mod tee;
