//! Particle-based laboratory for conservative kinetic transport.
//!
//! The crate evolves weighted particle ensembles under free streaming plus
//! pluggable collision kernels that conserve mass, momentum, and energy per
//! cell, evaluates single- and two-particle phase-space functionals over the
//! trajectory, and certifies a set of transport identities and bounds
//! (conservation, linear growth of angular momentum, pair dispersion bounds,
//! blind-cone concentration) as machine-checkable reports.
//!
//! Modules:
//! - [`phase`]: ensembles, initial conditions, moments
//! - [`dynamics`]: streaming, collision kernels, local-conservation verifier
//! - [`functionals`]: single/pair functionals, cone geometry, pair reduction
//! - [`harness`]: scripted experiments and per-claim reports
//! - [`cli`]: `run` / `check` / `sweep` front end

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod harness;
pub mod phase;
pub mod reduce;
pub mod rng;

pub use error::{Error, Result};
