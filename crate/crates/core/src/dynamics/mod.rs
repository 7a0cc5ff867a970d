//! Equations of motion of the momentum hierarchy.

mod integrate;
mod stationarity;

pub use integrate::{action_via_quadrature, integrate, simpson, IntegrateOptions, Method, TrajectoryRecord};
pub use stationarity::{stationarity_probe, StationarityProbe};

use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::Result;
use crate::jetstate::{JetState, Units};
use crate::multiindex::MultiIndex;
use crate::potential::PotentialSpec;
use crate::reference::MomentumOracle;
use crate::symjet::{GaussRat, Poly};

/// Arithmetic needed to evaluate prolonged Hamiltonians, exact or floating.
pub trait JetScalar: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn zero() -> Self;
    fn from_count(c: u64) -> Self;
}

impl JetScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_count(c: u64) -> Self {
        Complex64::new(c as f64, 0.0)
    }
}

impl JetScalar for GaussRat {
    fn zero() -> Self {
        GaussRat::zero()
    }
    fn from_count(c: u64) -> Self {
        GaussRat::int(c as i64)
    }
}

impl JetScalar for Poly {
    fn zero() -> Self {
        Poly::zero()
    }
    fn from_count(c: u64) -> Self {
        Poly::constant(GaussRat::int(c as i64))
    }
}

/// `H_σ = Σ_j [ (1/2m_j) Σ_{ν⊂σ} C_σ^ν p_{jν} p_{j(σ∖ν)} + (ħ/2im_j) p_{jjσ} ] + U_σ`.
///
/// `inv_two_m[j] = 1/2m_j` and `quantum[j] = ħ/2im_j`.
pub fn h_sigma_with<S: JetScalar>(
    sigma: &MultiIndex,
    p: &dyn Fn(&MultiIndex) -> S,
    u_sigma: S,
    inv_two_m: &[S],
    quantum: &[S],
) -> S {
    let subs = sigma.subindices();
    let mut total = u_sigma;
    for (j, (k, q)) in inv_two_m.iter().zip(quantum).enumerate() {
        let mut pairs = S::zero();
        for s in &subs {
            pairs = pairs + S::from_count(s.count) * p(&s.sub.extend(j)) * p(&s.complement.extend(j));
        }
        total = total + k.clone() * pairs + q.clone() * p(&sigma.extend(j).extend(j));
    }
    total
}

fn kinetic_factors(units: &Units) -> (Vec<Complex64>, Vec<Complex64>) {
    let inv_two_m = units.masses.iter().map(|m| Complex64::new(0.5 / m, 0.0)).collect();
    let quantum = units.masses.iter().map(|m| Complex64::new(0.0, -units.hbar / (2.0 * m))).collect();
    (inv_two_m, quantum)
}

/// Source of momentums above the truncation order.
#[derive(Clone)]
pub enum ClosurePolicy {
    /// Treat every `p_σ` with `|σ| > N` as zero.
    Zero,
    /// Read them off a reference solution at the current `(q, t)`.
    Oracle(Arc<dyn MomentumOracle>),
}

impl ClosurePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ClosurePolicy::Zero => "zero",
            ClosurePolicy::Oracle(_) => "oracle",
        }
    }
}

impl std::fmt::Debug for ClosurePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Momentums of every order known to the layout: `∅`, the stored ones, then the closure.
pub fn extended_momentums(state: &JetState, closure: &ClosurePolicy) -> Result<Vec<Complex64>> {
    let layout = state.layout();
    let mut ext = Vec::with_capacity(layout.len());
    ext.push(state.p0);
    ext.extend_from_slice(&state.p);
    match closure {
        ClosurePolicy::Zero => ext.resize(layout.len(), Complex64::new(0.0, 0.0)),
        ClosurePolicy::Oracle(oracle) => {
            let extra = oracle.momentums(&state.q, state.t, layout.closure_indices(), &state.units)?;
            ext.extend(extra);
        }
    }
    Ok(ext)
}

/// `H_σ` at the state, with momentums beyond `N` supplied by the closure.
pub fn h_sigma(
    state: &JetState,
    pot: &PotentialSpec,
    sigma: &MultiIndex,
    closure: &ClosurePolicy,
) -> Result<Complex64> {
    let ext = extended_momentums(state, closure)?;
    let layout = state.layout();
    let lookup = |m: &MultiIndex| layout.position(m).map_or(Complex64::new(0.0, 0.0), |k| ext[k]);
    let (inv_two_m, quantum) = kinetic_factors(&state.units);
    let u = Complex64::new(pot.derivative(&state.q, sigma), 0.0);
    Ok(h_sigma_with(sigma, &lookup, u, &inv_two_m, &quantum))
}

/// Time derivative of a jet state.
#[derive(Clone, Debug, PartialEq)]
pub struct JetRate {
    pub q: Vec<f64>,
    pub p: Vec<Complex64>,
    pub p0: Complex64,
}

/// Right-hand side of the coupled system for `q`, every stored `p_σ` and `p0`.
pub fn rhs(state: &JetState, pot: &PotentialSpec, closure: &ClosurePolicy) -> Result<JetRate> {
    let ext = extended_momentums(state, closure)?;
    Ok(rhs_from_extended(state, pot, &ext))
}

pub(crate) fn rhs_from_extended(state: &JetState, pot: &PotentialSpec, ext: &[Complex64]) -> JetRate {
    let layout = state.layout();
    let n = layout.dim();
    let (inv_two_m, quantum) = kinetic_factors(&state.units);
    let u = pot.derivatives(&state.q, &layout.indices()[..=layout.n_state()]);
    let first: Vec<Complex64> = (0..n).map(|j| ext[1 + j]).collect();
    let drift: Vec<Complex64> = first.iter().zip(&inv_two_m).map(|(pj, k)| k * (pj.conj() - pj)).collect();

    let mut p_rate = Vec::with_capacity(layout.n_state());
    for k in 1..=layout.n_state() {
        let table = &layout.tables[k];
        let mut v = Complex64::new(-u[k], 0.0);
        for j in 0..n {
            v += drift[j] * ext[table.first[j]] - quantum[j] * ext[table.second[j]];
        }
        for &(c, j, a, b) in &table.pairs {
            v -= inv_two_m[j] * c * ext[a] * ext[b];
        }
        p_rate.push(v);
    }
    let base = &layout.tables[0];
    let mut p0 = Complex64::new(-u[0], 0.0);
    for j in 0..n {
        p0 += inv_two_m[j] * first[j].norm_sqr() - quantum[j] * ext[base.second[j]];
    }
    JetRate { q: state.velocity(), p: p_rate, p0 }
}
