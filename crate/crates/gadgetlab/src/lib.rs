//! Numerical toolkit for Hamiltonian gadgets: construction, verification and
//! error-scaling experiments at exact-diagonalization scale.
//!
//! The crate is organized around dense operator algebra ([`operators`]),
//! local Hamiltonians with interaction hypergraphs ([`hamiltonians`]),
//! the direct-rotation / spectral-perturbation lemma suite ([`rotations`]),
//! perturbative gadget constructions and their verifiers ([`gadgets`]),
//! measurement-based Zeno gadgets ([`zeno`]), Lieb-Robinson window
//! truncation ([`lightcone`]) and a batch experiment runner ([`cli`]).

pub mod cli;
pub mod error;
pub mod gadgets;
pub mod hamiltonians;
pub mod lightcone;
pub mod operators;
pub mod rotations;
pub mod sampling;
pub mod zeno;

pub use error::{GadgetError, Result};
