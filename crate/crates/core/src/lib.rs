//! Core building blocks for adaptive variational quantum optimization:
//! QUBO/Ising encodings, benchmark parsers and exact oracles, a dense
//! statevector simulator, variational solver families, declarative
//! controller policies and the decomposed CVRP pipeline.

pub mod bits;
pub mod cvrp;
pub mod generate;
pub mod instance;
pub mod oracle;
pub mod policy;
pub mod problem;
pub mod seed;
pub mod simulator;
pub mod solvers;
pub mod tasks;

pub use bits::{Bitstring, Counts};
