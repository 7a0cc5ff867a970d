//! Independent references: closed-form states, a grid Schrödinger solver and spectral
//! extraction of momentums.

pub mod analytic;
pub mod continuity;
pub mod grid;
pub mod io;
pub mod oracle;

pub use analytic::{AnalyticState, CubicPhase, FreeGaussian, FrozenVelocity, HoCoherent};
pub use continuity::{continuity_residual, ContinuityResidual};
pub use grid::{evolve, Grid, GridFft, GridWave, SpectralSnapshot, SplitStepper, VelocityGrid};
pub use oracle::{GridHistory, MomentumOracle};

use num_complex::Complex64;

use crate::error::Result;
use crate::jetstate::{JetLayout, JetState, Units, DEFAULT_NODE_FLOOR};

/// Read a full jet state off a momentum source at `(q, t)`.
pub fn jacobi_extract(source: &dyn MomentumOracle, q: &[f64], t: f64, order: u32, units: &Units) -> Result<JetState> {
    let layout = JetLayout::new(q.len(), order);
    let values: Vec<Complex64> = source.momentums(q, t, &layout.indices()[..=layout.n_state()], units)?;
    let mut state = JetState::zeros(layout, units.clone(), t, q.to_vec());
    state.p0 = values[0];
    state.p.copy_from_slice(&values[1..]);
    Ok(state)
}

/// Jacobi extraction from a single grid wave at its own time.
pub fn jacobi_extract_grid(w: &GridWave, q: &[f64], order: u32, units: &Units) -> Result<JetState> {
    let layout = JetLayout::new(q.len(), order);
    let snap = w.snapshot(&GridFft::new(&w.grid));
    let values = snap.momentums(q, &layout.indices()[..=layout.n_state()], units, DEFAULT_NODE_FLOOR)?;
    let mut state = JetState::zeros(layout, units.clone(), w.t, q.to_vec());
    state.p0 = values[0];
    state.p.copy_from_slice(&values[1..]);
    Ok(state)
}
