//! Closed-form wave functions.
//!
//! Every state is a finite sum of terms `exp(P(x, t))` with `P` a polynomial in the
//! coordinates, so exact Taylor coefficients of `ψ` and of `ln ψ` follow from series algebra.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jetstate::Units;
use crate::multiindex::MultiIndex;
use crate::potential::PotentialSpec;
use crate::series::SeriesSpace;

/// Free Gaussian packet `ψ(x, 0) ∝ exp(−(x − x₀)²/2a² + i k₀ (x − x₀))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeGaussian {
    pub a: f64,
    pub k0: f64,
    pub x0: f64,
}

/// Harmonic-oscillator coherent state with complex amplitude `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoCoherent {
    pub omega: f64,
    pub alpha: Complex64,
}

/// Gaussian with an extra cubic phase `κ (x − x₀)³`. Known in closed form at `t = 0` only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubicPhase {
    pub a: f64,
    pub k0: f64,
    pub x0: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalyticState {
    FreeGaussian(FreeGaussian),
    HoCoherent(HoCoherent),
    CubicPhase(CubicPhase),
    /// `Σ c_k ψ_k`, all terms on the same coordinates.
    Superposition {
        terms: Vec<(Complex64, AnalyticState)>,
    },
    /// Tensor product; factors occupy consecutive coordinate blocks.
    Product {
        factors: Vec<AnalyticState>,
    },
}

/// `exp(Σ c_e (x − center)^e)`.
#[derive(Clone, Debug)]
pub(crate) struct ExpPoly {
    pub center: Vec<f64>,
    pub terms: Vec<(MultiIndex, Complex64)>,
}

impl ExpPoly {
    fn eval_exponent(&self, x: &[f64]) -> Complex64 {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.terms.iter().map(|(e, c)| c * e.monomial(&y)).sum()
    }

    /// Upper bound for `max_x |exp(P)|` from the diagonal quadratic part.
    fn peak(&self) -> f64 {
        let n = self.center.len();
        let mut c0 = 0.0;
        let mut c1 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for (e, c) in &self.terms {
            match e.order() {
                0 => c0 += c.re,
                1 => c1[e.counts().iter().position(|&k| k > 0).unwrap()] += c.re,
                2 => {
                    if let Some(i) = e.counts().iter().position(|&k| k == 2) {
                        c2[i] += c.re;
                    }
                }
                _ => {}
            }
        }
        let mut log_peak = c0;
        for i in 0..n {
            if c2[i] < 0.0 {
                log_peak -= c1[i] * c1[i] / (4.0 * c2[i]);
            } else {
                return f64::INFINITY;
            }
        }
        log_peak.exp()
    }

    /// Exponent at `x`, with its gradient written into `grad`.
    fn exponent_with_gradient(&self, x: &[f64], grad: &mut [Complex64]) -> Complex64 {
        let n = x.len();
        let mut value = Complex64::new(0.0, 0.0);
        grad.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
        for (e, c) in &self.terms {
            let counts = e.counts();
            let mut mono = 1.0;
            for i in 0..n {
                mono *= (x[i] - self.center[i]).powi(counts[i] as i32);
            }
            value += c * mono;
            for j in 0..n {
                if counts[j] == 0 {
                    continue;
                }
                let mut d = counts[j] as f64;
                for i in 0..n {
                    let k = if i == j { counts[i] - 1 } else { counts[i] };
                    d *= (x[i] - self.center[i]).powi(k as i32);
                }
                grad[j] += c * d;
            }
        }
        value
    }

    fn scaled(mut self, w: Complex64) -> Self {
        let zero = MultiIndex::empty(self.center.len());
        self.terms.push((zero, w.ln()));
        self
    }
}

fn one_dim(coeffs: [Complex64; 4], center: f64) -> ExpPoly {
    ExpPoly {
        center: vec![center],
        terms: coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != Complex64::new(0.0, 0.0))
            .map(|(k, c)| (MultiIndex::new(vec![k as u32]), *c))
            .collect(),
    }
}

impl AnalyticState {
    pub fn dim(&self) -> usize {
        match self {
            AnalyticState::FreeGaussian(_) | AnalyticState::HoCoherent(_) | AnalyticState::CubicPhase(_) => 1,
            AnalyticState::Superposition { terms } => terms.first().map_or(1, |(_, s)| s.dim()),
            AnalyticState::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
        }
    }

    /// Potential in which the state solves the Schrödinger equation, if it has one.
    pub fn potential(&self, units: &Units) -> Option<PotentialSpec> {
        match self {
            AnalyticState::FreeGaussian(_) => Some(PotentialSpec::Free),
            AnalyticState::HoCoherent(c) => Some(PotentialSpec::harmonic(&[c.omega], units)),
            AnalyticState::CubicPhase(_) => None,
            AnalyticState::Superposition { terms } => {
                let mut pots = terms.iter().map(|(_, s)| s.potential(units));
                let first = pots.next()??;
                pots.all(|p| p.as_ref() == Some(&first)).then_some(first)
            }
            AnalyticState::Product { factors } => {
                let mut stiffness = Vec::new();
                let mut offset = 0;
                for f in factors {
                    let sub = Units { hbar: units.hbar, masses: units.masses[offset..offset + f.dim()].to_vec() };
                    match f.potential(&sub)? {
                        PotentialSpec::Free => stiffness.extend(std::iter::repeat_n(0.0, f.dim())),
                        PotentialSpec::Harmonic { stiffness: k } => stiffness.extend(k),
                        _ => return None,
                    }
                    offset += f.dim();
                }
                if stiffness.iter().all(|k| *k == 0.0) {
                    Some(PotentialSpec::Free)
                } else {
                    Some(PotentialSpec::Harmonic { stiffness })
                }
            }
        }
    }

    pub(crate) fn components(&self, t: f64, hbar: f64, masses: &[f64]) -> Result<Vec<ExpPoly>> {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        Ok(match self {
            AnalyticState::FreeGaussian(g) => {
                let m = masses[0];
                let a2 = g.a * g.a;
                let tau = hbar * t / (m * a2);
                let d = c(2.0 * a2, 2.0 * a2 * tau);
                let norm = -0.25 * (std::f64::consts::PI * a2).ln() - 0.5 * c(1.0, tau).ln();
                vec![one_dim(
                    [
                        norm - c(0.0, a2 * a2 * g.k0 * g.k0 * tau) / d,
                        c(0.0, 2.0 * a2 * g.k0) / d,
                        -1.0 / d,
                        c(0.0, 0.0),
                    ],
                    g.x0,
                )]
            }
            AnalyticState::HoCoherent(h) => {
                let m = masses[0];
                let ell = (hbar / (m * h.omega)).sqrt();
                let at = h.alpha * Complex64::from_polar(1.0, -h.omega * t);
                let constant = -at * at / 2.0
                    - h.alpha.norm_sqr() / 2.0
                    - c(0.0, h.omega * t / 2.0)
                    - 0.25 * std::f64::consts::PI.ln()
                    - 0.5 * ell.ln();
                vec![one_dim(
                    [constant, std::f64::consts::SQRT_2 * at / ell, c(-0.5 / (ell * ell), 0.0), c(0.0, 0.0)],
                    0.0,
                )]
            }
            AnalyticState::CubicPhase(g) => {
                if t != 0.0 {
                    return Err(Error::OracleUnavailable(format!("cubic-phase state has no closed form at t = {t}")));
                }
                let a2 = g.a * g.a;
                vec![one_dim(
                    [
                        c(-0.25 * (std::f64::consts::PI * a2).ln(), 0.0),
                        c(0.0, g.k0),
                        c(-0.5 / a2, 0.0),
                        c(0.0, g.kappa),
                    ],
                    g.x0,
                )]
            }
            AnalyticState::Superposition { terms } => {
                let mut out = Vec::new();
                for (w, s) in terms {
                    for comp in s.components(t, hbar, masses)? {
                        out.push(comp.scaled(*w));
                    }
                }
                out
            }
            AnalyticState::Product { factors } => {
                let n = self.dim();
                let mut out = vec![ExpPoly { center: vec![0.0; n], terms: Vec::new() }];
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    let comps = f.components(t, hbar, &masses[offset..offset + d])?;
                    let mut next = Vec::with_capacity(out.len() * comps.len());
                    for base in &out {
                        for comp in &comps {
                            let mut e = base.clone();
                            e.center[offset..offset + d].copy_from_slice(&comp.center);
                            for (mi, cf) in &comp.terms {
                                let mut counts = vec![0; n];
                                counts[offset..offset + d].copy_from_slice(mi.counts());
                                e.terms.push((MultiIndex::new(counts), *cf));
                            }
                            next.push(e);
                        }
                    }
                    out = next;
                    offset += d;
                }
                out
            }
        })
    }

    pub fn psi(&self, x: &[f64], t: f64, units: &Units) -> Complex64 {
        self.try_psi(x, t, units).expect("closed form available")
    }

    pub fn try_psi(&self, x: &[f64], t: f64, units: &Units) -> Result<Complex64> {
        Ok(self.components(t, units.hbar, &units.masses)?.iter().map(|c| c.eval_exponent(x).exp()).sum())
    }

    /// Upper bound on `max |ψ(·, t)|`, used as the reference for the node floor.
    pub fn peak_amplitude(&self, t: f64, units: &Units) -> Result<f64> {
        Ok(self.components(t, units.hbar, &units.masses)?.iter().map(ExpPoly::peak).sum())
    }

    /// Taylor coefficients of `ψ` at `q`.
    pub fn psi_series(&self, space: &SeriesSpace, q: &[f64], t: f64, units: &Units) -> Result<Vec<Complex64>> {
        let mut total = space.zeros();
        for comp in self.components(t, units.hbar, &units.masses)? {
            let s = space.exp(&space.polynomial(&comp.terms, &comp.center, q));
            total.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        }
        Ok(total)
    }

    /// Momentums `p_σ = ∂_σ (ħ/i) ln ψ` at `q` for each requested multi-index (`∅` gives the
    /// action value itself).
    pub fn momentums(
        &self,
        q: &[f64],
        t: f64,
        indices: &[MultiIndex],
        units: &Units,
        node_floor: f64,
    ) -> Result<Vec<Complex64>> {
        let max = indices.iter().map(|m| m.order()).max().unwrap_or(0);
        let space = SeriesSpace::new(q.len(), max);
        let psi = self.psi_series(&space, q, t, units)?;
        let peak = self.peak_amplitude(t, units)?;
        let floor = node_floor * peak;
        if !(psi[0].norm() > floor) {
            return Err(Error::Node { amplitude: psi[0].norm(), floor });
        }
        log_momentums(&space, &psi, indices, units.hbar)
    }

    /// Bohmian velocity `Re p_j / m_j` at `x`.
    pub fn velocity(&self, x: &[f64], t: f64, units: &Units) -> Result<Vec<f64>> {
        self.velocity_at(t, units, crate::jetstate::DEFAULT_NODE_FLOOR)?.velocity(x)
    }

    /// The velocity field frozen at time `t`, cheap to evaluate at many points.
    pub fn velocity_at(&self, t: f64, units: &Units, node_floor: f64) -> Result<FrozenVelocity> {
        let components = self.components(t, units.hbar, &units.masses)?;
        let peak: f64 = components.iter().map(ExpPoly::peak).sum();
        Ok(FrozenVelocity {
            components,
            hbar: units.hbar,
            masses: units.masses.clone(),
            log_floor: (node_floor * peak).ln(),
        })
    }
}

/// Bohmian velocity of an analytic state at one instant.
#[derive(Clone, Debug)]
pub struct FrozenVelocity {
    components: Vec<ExpPoly>,
    hbar: f64,
    masses: Vec<f64>,
    log_floor: f64,
}

impl FrozenVelocity {
    /// `Re[(ħ/i) ∂_j ψ / ψ] / m_j`; fails with a node error where `|ψ|` drops below the floor.
    pub fn velocity(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let mut grads = vec![Complex64::new(0.0, 0.0); n * self.components.len()];
        let exponents: Vec<Complex64> =
            self.components.iter().zip(grads.chunks_mut(n)).map(|(c, g)| c.exponent_with_gradient(x, g)).collect();
        let shift = exponents.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        let mut psi = Complex64::new(0.0, 0.0);
        let mut dpsi = vec![Complex64::new(0.0, 0.0); n];
        for (e, g) in exponents.iter().zip(grads.chunks(n)) {
            let w = (e - shift).exp();
            psi += w;
            dpsi.iter_mut().zip(g).for_each(|(d, g)| *d += g * w);
        }
        let log_amp = psi.norm().ln() + shift;
        if !(log_amp > self.log_floor) {
            return Err(Error::Node { amplitude: log_amp.exp(), floor: self.log_floor.exp() });
        }
        Ok(dpsi.iter().zip(&self.masses).map(|(d, m)| self.hbar * (d / psi).im / m).collect())
    }
}

/// Convert Taylor coefficients of `ψ` into momentums for the requested multi-indices.
pub fn log_momentums(
    space: &SeriesSpace,
    psi: &[Complex64],
    indices: &[MultiIndex],
    hbar: f64,
) -> Result<Vec<Complex64>> {
    let log = space.ln(psi);
    let scale = Complex64::new(0.0, -hbar);
    indices
        .iter()
        .map(|m| {
            let k = space.position(m).ok_or_else(|| Error::InvalidArgument(format!("order of {m} beyond series")))?;
            Ok(scale * log[k] * space.factorial(k))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gaussian(a: f64, k0: f64, x0: f64) -> AnalyticState {
        AnalyticState::FreeGaussian(FreeGaussian { a, k0, x0 })
    }

    fn coherent(omega: f64, alpha: Complex64) -> AnalyticState {
        AnalyticState::HoCoherent(HoCoherent { omega, alpha })
    }

    /// `iħ ψ_t − (−ħ²/2m ψ_xx + U ψ)` by central differences.
    fn schrodinger_residual(s: &AnalyticState, x: f64, t: f64, units: &Units) -> (f64, f64) {
        let pot = s.potential(units).unwrap();
        let (h, k) = (1e-3, 1e-4);
        let f = |x: f64, t: f64| s.psi(&[x], t, units);
        let psi_t = (f(x, t + k) - f(x, t - k)) / (2.0 * k);
        let psi_xx = (f(x + h, t) - 2.0 * f(x, t) + f(x - h, t)) / (h * h);
        let m = units.masses[0];
        let lhs = c(0.0, units.hbar) * psi_t;
        let rhs = -units.hbar * units.hbar / (2.0 * m) * psi_xx + pot.value(&[x]) * f(x, t);
        ((lhs - rhs).norm(), lhs.norm().max(rhs.norm()))
    }

    #[test]
    fn states_solve_schrodinger() {
        let units = Units::new(0.8, 1.3, 1);
        let states = [
            gaussian(0.9, 1.2, 0.3),
            coherent(1.4, c(0.7, -0.4)),
            AnalyticState::Superposition {
                terms: vec![(c(0.6, 0.0), gaussian(0.5, 0.0, -1.0)), (c(0.0, 0.8), gaussian(0.5, 0.0, 1.0))],
            },
        ];
        for s in &states {
            for &(x, t) in &[(0.1, 0.2), (-0.4, 0.7), (0.9, 1.5)] {
                let (res, scale) = schrodinger_residual(s, x, t, &units);
                assert!(res <= 1e-6 * scale.max(1e-3) + 1e-7, "{s:?} at {x},{t}: {res} / {scale}");
            }
        }
    }

    #[test]
    fn gaussian_normalized() {
        let units = Units::natural(1);
        for s in [gaussian(0.7, 2.0, 0.5), coherent(1.0, c(1.0, 0.5))] {
            for t in [0.0, 1.3] {
                let h = 0.01;
                let total: f64 = (-1500..1500).map(|k| s.psi(&[k as f64 * h], t, &units).norm_sqr() * h).sum();
                assert!((total - 1.0).abs() < 1e-10, "{total}");
            }
        }
    }

    #[test]
    fn gaussian_momentums_closed_form() {
        let units = Units::natural(1);
        let s = gaussian(1.0, 0.0, 0.0);
        let idx = MultiIndex::all_up_to(1, 4);
        for t in [0.0, 0.5, 2.0] {
            let p = s.momentums(&[0.3], t, &idx, &units, 1e-12).unwrap();
            let pxx = c(0.0, 1.0) / c(1.0, t);
            assert!((p[2] - pxx).norm() < 1e-14);
            assert!((p[1] - pxx * 0.3).norm() < 1e-14);
            assert!(p[3].norm() < 1e-14 && p[4].norm() < 1e-14);
        }
    }

    #[test]
    fn coherent_velocity_uniform() {
        let units = Units::natural(1);
        let s = coherent(1.0, c(1.0, 0.0));
        for t in [0.0, 0.4, 2.0] {
            let classical = -std::f64::consts::SQRT_2 * f64::sin(t);
            let v0 = s.velocity(&[-1.0], t, &units).unwrap()[0];
            let v1 = s.velocity(&[1.5], t, &units).unwrap()[0];
            assert!((v0 - v1).abs() < 1e-13);
            assert!((v0 - classical).abs() < 1e-13, "{v0} {classical}");
        }
    }

    #[test]
    fn antisymmetric_superposition_has_node() {
        let s = AnalyticState::Superposition {
            terms: vec![(c(1.0, 0.0), gaussian(0.5, 0.0, -1.0)), (c(-1.0, 0.0), gaussian(0.5, 0.0, 1.0))],
        };
        let err = s.momentums(&[0.0], 0.0, &MultiIndex::all_up_to(1, 2), &Units::natural(1), 1e-12);
        assert!(matches!(err, Err(Error::Node { .. })));
    }

    #[test]
    fn product_state_separates() {
        let units = Units::natural(2);
        let s = AnalyticState::Product { factors: vec![gaussian(1.0, 0.5, 0.0), coherent(2.0, c(0.3, 0.0))] };
        let x = [0.2, -0.1];
        let direct = gaussian(1.0, 0.5, 0.0).psi(&x[..1], 0.4, &Units::natural(1))
            * coherent(2.0, c(0.3, 0.0)).psi(&x[1..], 0.4, &Units::natural(1));
        assert!((s.psi(&x, 0.4, &units) - direct).norm() < 1e-14);
        let p = s.momentums(&x, 0.4, &[MultiIndex::new(vec![1, 1])], &units, 1e-12).unwrap();
        assert!(p[0].norm() < 1e-14);
        assert_eq!(s.potential(&units), Some(PotentialSpec::Harmonic { stiffness: vec![0.0, 4.0] }));
    }

    #[test]
    fn cubic_phase_initial_only() {
        let s = AnalyticState::CubicPhase(CubicPhase { a: 1.0, k0: 0.0, x0: 0.0, kappa: 0.2 });
        let units = Units::natural(1);
        let p = s.momentums(&[0.5], 0.0, &MultiIndex::all_up_to(1, 3), &units, 1e-12).unwrap();
        assert!((p[3] - c(6.0 * 0.2, 0.0)).norm() < 1e-14);
        assert!((p[2] - c(6.0 * 0.2 * 0.5, 1.0)).norm() < 1e-14);
        assert!(s.momentums(&[0.5], 0.1, &MultiIndex::all_up_to(1, 1), &units, 1e-12).is_err());
        let v = s.psi(&[0.0], 0.0, &units);
        assert!((v - c(PI.powf(-0.25), 0.0)).norm() < 1e-15);
    }
}
