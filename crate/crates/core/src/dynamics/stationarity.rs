use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::integrate::simpson;
use crate::error::{Error, Result};
use crate::jetstate::Units;
use crate::multiindex::MultiIndex;
use crate::potential::PotentialSpec;
use crate::reference::MomentumOracle;

/// Action differences for a bump of size `δ` and `δ/2` around the true trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct StationarityProbe {
    pub delta: f64,
    pub full: f64,
    pub half: f64,
    pub ratio: f64,
}

struct Curve {
    times: Vec<f64>,
    q: Vec<Vec<f64>>,
    velocity: Vec<Vec<f64>>,
}

fn field(oracle: &dyn MomentumOracle, q: &[f64], t: f64, units: &Units) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let n = q.len();
    let mut idx: Vec<MultiIndex> = (0..n).map(|i| MultiIndex::unit(n, i)).collect();
    idx.extend((0..n).map(|i| MultiIndex::unit(n, i).extend(i)));
    let p = oracle.momentums(q, t, &idx, units)?;
    let v = (0..n).map(|j| p[j].re / units.masses[j]).collect();
    Ok((v, p))
}

fn true_curve(
    oracle: &dyn MomentumOracle,
    q0: &[f64],
    t0: f64,
    t_final: f64,
    intervals: usize,
    units: &Units,
) -> Result<Curve> {
    let h = (t_final - t0) / intervals as f64;
    let vel = |q: &[f64], t: f64| field(oracle, q, t, units).map(|f| f.0);
    let shift = |q: &[f64], k: &[f64], s: f64| -> Vec<f64> { q.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let mut curve = Curve { times: vec![t0], q: vec![q0.to_vec()], velocity: vec![vel(q0, t0)?] };
    let mut q = q0.to_vec();
    for k in 0..intervals {
        let t = t0 + k as f64 * h;
        let k1 = vel(&q, t)?;
        let k2 = vel(&shift(&q, &k1, h / 2.0), t + h / 2.0)?;
        let k3 = vel(&shift(&q, &k2, h / 2.0), t + h / 2.0)?;
        let k4 = vel(&shift(&q, &k3, h), t + h)?;
        for j in 0..q.len() {
            q[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let tn = t0 + (k + 1) as f64 * h;
        curve.times.push(tn);
        curve.velocity.push(vel(&q, tn)?);
        curve.q.push(q.clone());
    }
    Ok(curve)
}

/// `∫ [Σ m q̇²/2 − U + Σ (ħ²/2m)(R_j² + R_jj)] dt` along the base curve displaced by
/// `δ sin(π (t − t₀)/T)` in the first coordinate.
fn action(oracle: &dyn MomentumOracle, pot: &PotentialSpec, units: &Units, curve: &Curve, delta: f64) -> Result<f64> {
    let t0 = curve.times[0];
    let span = curve.times.last().unwrap() - t0;
    let hbar = units.hbar;
    let mut integrand = Vec::with_capacity(curve.times.len());
    for (i, &t) in curve.times.iter().enumerate() {
        let phase = PI * (t - t0) / span;
        let mut q = curve.q[i].clone();
        let mut qdot = curve.velocity[i].clone();
        q[0] += delta * phase.sin();
        qdot[0] += delta * PI / span * phase.cos();
        let (_, p) = field(oracle, &q, t, units)?;
        let n = q.len();
        let mut l = -pot.value(&q);
        for j in 0..n {
            let m = units.masses[j];
            let rj = -p[j].im / hbar;
            let rjj = -p[n + j].im / hbar;
            l += 0.5 * m * qdot[j] * qdot[j] + hbar * hbar / (2.0 * m) * (rj * rj + rjj);
        }
        integrand.push(Complex64::new(l, 0.0));
    }
    Ok(simpson(&integrand, curve.times[1] - curve.times[0]).re)
}

/// Compare the action of the true trajectory with two perturbed curves.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_probe(
    oracle: &dyn MomentumOracle,
    pot: &PotentialSpec,
    units: &Units,
    q0: &[f64],
    t0: f64,
    t_final: f64,
    delta: f64,
    intervals: usize,
) -> Result<StationarityProbe> {
    if intervals < 2 || intervals % 2 == 1 {
        return Err(Error::InvalidArgument("stationarity probe needs an even interval count".into()));
    }
    let curve = true_curve(oracle, q0, t0, t_final, intervals, units)?;
    let base = action(oracle, pot, units, &curve, 0.0)?;
    let full = action(oracle, pot, units, &curve, delta)? - base;
    let half = action(oracle, pot, units, &curve, delta / 2.0)? - base;
    Ok(StationarityProbe { delta, full, half, ratio: full / half })
}
