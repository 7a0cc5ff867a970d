//! Quantum trajectories in truncated infinite phase space.
//!
//! A particle carries its position together with every spatial derivative of the complex
//! action `p = (ħ/i) ln ψ` up to a truncation order. The crate integrates the resulting ODE
//! hierarchy, checks it against symbolic prolongation and grid solutions of the
//! Schrödinger equation, and runs ensemble, measurement, one-step and spin experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod jetstate;
pub mod measurement;
pub mod multiindex;
pub mod onestep;
pub mod potential;
pub mod reference;
pub mod series;
pub mod spin;
pub mod symjet;
pub mod verify;

pub use error::{Error, Result};
pub use jetstate::{ActionPair, JetLayout, JetState, Units};
pub use multiindex::MultiIndex;
pub use potential::PotentialSpec;
