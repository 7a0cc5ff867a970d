//! One-step path integral for a polynomial log-wave in one dimension, compared with the
//! first-order momentum update.

use std::f64::consts::{FRAC_PI_4, PI};
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dynamics::h_sigma_with;
use crate::error::{Error, Result};
use crate::jetstate::Units;
use crate::multiindex::{factorial, MultiIndex};
use crate::potential::PotentialSpec;

pub const DEFAULT_NODES: usize = 401;
pub const DEFAULT_HALF_WIDTH: f64 = 12.0;
/// Largest allowed ratio of the endpoint integrand to the integral.
pub const TAIL_LIMIT: f64 = 1e-10;
const STENCIL_RADIUS: f64 = 0.1;
const STENCIL_POINTS: usize = 32;
const MAX_DEGREE: usize = 4;

#[derive(Clone, Debug, Serialize)]
pub struct OneStepProblem {
    pub units: Units,
    /// `p_k` at the origin, `k = 0..=4`.
    pub momentums: Vec<Complex64>,
    pub potential: PotentialSpec,
    pub velocity: f64,
    pub epsilon: f64,
    pub nodes: usize,
    /// Half-width of the quadrature interval in units of `√(2ħε/m)`.
    pub half_width: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OneStepResidual {
    pub order: usize,
    pub quadrature: Complex64,
    pub predicted: Complex64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub order: usize,
    pub residual: f64,
    pub residual_half: f64,
    pub ratio: f64,
}

impl OneStepProblem {
    pub fn new(
        units: Units,
        momentums: Vec<Complex64>,
        potential: PotentialSpec,
        velocity: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let prob = OneStepProblem {
            units,
            momentums,
            potential,
            velocity,
            epsilon,
            nodes: DEFAULT_NODES,
            half_width: DEFAULT_HALF_WIDTH,
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        OneStepProblem { epsilon, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.dim() != 1 {
            return Err(Error::InvalidArgument("one-step problems are one-dimensional".into()));
        }
        if self.momentums.len() > MAX_DEGREE + 1 {
            return Err(Error::InvalidArgument("log-wave degree is at most 4".into()));
        }
        if self.p(2).im < 0.0 {
            return Err(Error::InvalidArgument("Im p_xx must be nonnegative".into()));
        }
        if !(self.epsilon > 0.0) || self.nodes < 3 || !(self.half_width > 0.0) {
            return Err(Error::InvalidArgument("step, node count and width must be positive".into()));
        }
        let polynomial = match &self.potential {
            PotentialSpec::Free | PotentialSpec::Harmonic { .. } => true,
            PotentialSpec::Polynomial { terms } => {
                terms.iter().all(|(e, _)| e.iter().sum::<u32>() as usize <= MAX_DEGREE)
            }
            PotentialSpec::GaussianBarrier { .. } => false,
        };
        if !polynomial {
            return Err(Error::InvalidArgument("potential must be a polynomial of degree ≤ 4".into()));
        }
        self.potential.validate(1)
    }

    fn p(&self, k: usize) -> Complex64 {
        self.momentums.get(k).copied().unwrap_or_default()
    }

    fn potential_taylor(&self) -> Vec<f64> {
        (0..=MAX_DEGREE)
            .map(|k| {
                self.potential.derivative(&[0.0], &MultiIndex::new(vec![k as u32]))
                    / factorial(k as u32).unwrap() as f64
            })
            .collect()
    }

    fn log_wave_taylor(&self) -> Vec<Complex64> {
        (0..=MAX_DEGREE).map(|k| self.p(k) / factorial(k as u32).unwrap() as f64).collect()
    }

    /// `∫ exp[(i/ħ)(ε L + P(y) − P(z))] dy/A` on the rotated axis through `z + vε`.
    fn reduced_integral(&self, z: Complex64, log_wave: &[Complex64], pot: &[f64]) -> Result<Complex64> {
        let hbar = self.units.hbar;
        let m = self.units.masses[0];
        let eps = self.epsilon;
        let scale = Complex64::from_polar((2.0 * hbar * eps / m).sqrt(), FRAC_PI_4);
        let centre = z + self.velocity * eps;
        let p_z = horner(log_wave, z);
        let h = 2.0 * self.half_width / (self.nodes - 1) as f64;
        let i_over_hbar = Complex64::new(0.0, 1.0 / hbar);
        let term = |xi: f64| {
            let y = centre + scale * xi;
            let u: Complex64 = horner_real(pot, y);
            (-xi * xi + i_over_hbar * (horner(log_wave, y) - p_z - eps * u)).exp()
        };
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 0..self.nodes {
            let xi = -self.half_width + k as f64 * h;
            let w = if k == 0 || k == self.nodes - 1 { 0.5 } else { 1.0 };
            sum += w * term(xi);
        }
        let integral = sum * h / PI.sqrt();
        let edge = (term(-self.half_width).norm() + term(self.half_width).norm()) * h / PI.sqrt();
        let tail = edge / integral.norm();
        if !(tail <= TAIL_LIMIT) {
            return Err(Error::QuadratureDivergence { tail, limit: TAIL_LIMIT });
        }
        Ok(integral)
    }

    /// Updated momentums `p′_k`, `k = 0..=max_order`, at the moved point.
    pub fn propagate(&self, max_order: usize) -> Result<Vec<Complex64>> {
        self.validate()?;
        let log_wave = self.log_wave_taylor();
        let pot = self.potential_taylor();
        let mut samples = Vec::with_capacity(STENCIL_POINTS);
        for j in 0..STENCIL_POINTS {
            let z = Complex64::from_polar(STENCIL_RADIUS, 2.0 * PI * j as f64 / STENCIL_POINTS as f64);
            samples.push(self.reduced_integral(z, &log_wave, &pot)?.ln());
        }
        FftPlanner::new().plan_fft_forward(STENCIL_POINTS).process(&mut samples);
        let minus_i_hbar = Complex64::new(0.0, -self.units.hbar);
        Ok((0..=max_order)
            .map(|k| {
                let coefficient = samples[k] / STENCIL_POINTS as f64 / STENCIL_RADIUS.powi(k as i32);
                self.p(k) + minus_i_hbar * coefficient * factorial(k as u32).unwrap() as f64
            })
            .collect())
    }

    /// `p_k + ε (p_{k+1} v − H_k)`.
    pub fn predicted(&self, max_order: usize) -> Vec<Complex64> {
        let hbar = self.units.hbar;
        let m = self.units.masses[0];
        let lookup = |s: &MultiIndex| self.p(s.order() as usize);
        let inv_two_m = [Complex64::new(0.5 / m, 0.0)];
        let quantum = [Complex64::new(0.0, -hbar / (2.0 * m))];
        (0..=max_order)
            .map(|k| {
                let sigma = MultiIndex::new(vec![k as u32]);
                let u = Complex64::new(self.potential.derivative(&[0.0], &sigma), 0.0);
                let h = h_sigma_with(&sigma, &lookup, u, &inv_two_m, &quantum);
                self.p(k) + self.epsilon * (self.p(k + 1) * self.velocity - h)
            })
            .collect()
    }
}

fn horner(coefficients: &[Complex64], x: Complex64) -> Complex64 {
    coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c)
}

fn horner_real(coefficients: &[f64], x: Complex64) -> Complex64 {
    coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c)
}

pub fn propagate_onestep(prob: &OneStepProblem, max_order: usize) -> Result<Vec<Complex64>> {
    prob.propagate(max_order)
}

/// `|p′_k(quadrature) − p′_k(first-order update)|` for `k ≤ max_order`.
pub fn compare_to_ode(prob: &OneStepProblem, max_order: usize) -> Result<Vec<OneStepResidual>> {
    let quadrature = prob.propagate(max_order)?;
    let predicted = prob.predicted(max_order);
    Ok(quadrature
        .into_iter()
        .zip(predicted)
        .enumerate()
        .map(|(order, (q, p))| OneStepResidual { order, quadrature: q, predicted: p, residual: (q - p).norm() })
        .collect())
}

/// Residuals at `ε` and `ε/2` and their ratio per order.
pub fn residual_scaling(prob: &OneStepProblem, max_order: usize) -> Result<Vec<ScalingRow>> {
    let full = compare_to_ode(prob, max_order)?;
    let half = compare_to_ode(&prob.with_epsilon(prob.epsilon / 2.0), max_order)?;
    Ok(full
        .iter()
        .zip(&half)
        .map(|(a, b)| ScalingRow {
            order: a.order,
            residual: a.residual,
            residual_half: b.residual,
            ratio: a.residual / b.residual,
        })
        .collect())
}

pub fn write_scaling_csv(rows: &[ScalingRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "sigma,residual,residual_half,ratio")?;
    for r in rows {
        writeln!(out, "{},{:e},{:e},{}", r.order, r.residual, r.residual_half, r.ratio)?;
    }
    Ok(())
}

/// Gaussian packet with drift in an anharmonic well; every residual up to third order is nonzero.
pub fn gaussian_test_problem(epsilon: f64) -> OneStepProblem {
    OneStepProblem::new(
        Units::natural(1),
        vec![Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0), Complex64::new(0.0, 1.0)],
        PotentialSpec::poly1d(&[0.0, 0.0, 0.5, 0.3, 0.2]),
        0.3,
        epsilon,
    )
    .unwrap()
}

/// Non-Gaussian log-wave with cubic and quartic terms.
pub fn cubic_test_problem(epsilon: f64) -> OneStepProblem {
    OneStepProblem::new(
        Units::natural(1),
        vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.4, 0.1),
            Complex64::new(0.2, 1.0),
            Complex64::new(0.6, 0.3),
            Complex64::new(-0.5, 0.2),
        ],
        PotentialSpec::poly1d(&[0.0, 0.1, 0.5, 0.2, 0.1]),
        -0.2,
        epsilon,
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn plane_wave_is_exact() {
        let k0 = 1.3;
        let prob = OneStepProblem::new(Units::natural(1), vec![c(0.0, 0.0), c(k0, 0.0)], PotentialSpec::Free, k0, 1e-2)
            .unwrap();
        let p = prob.propagate(3).unwrap();
        assert!((p[1] - k0).norm() < 1e-12);
        assert!((p[0] - 1e-2 * k0 * k0 / 2.0).norm() < 1e-12);
        for r in compare_to_ode(&prob, 3).unwrap() {
            assert!(r.residual < 1e-11, "{r:?}");
        }
    }

    #[test]
    fn free_gaussian_matches_closed_form() {
        let eps = 1e-3;
        let prob = OneStepProblem::new(
            Units::natural(1),
            vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)],
            PotentialSpec::Free,
            0.0,
            eps,
        )
        .unwrap();
        let p = prob.propagate(4).unwrap();
        let exact = c(0.0, 1.0) / c(1.0, eps);
        assert!((p[2] - exact).norm() < 1e-10);
        assert!((p[2] - c(eps, 1.0)).norm() < 5e-6);
        assert!(p[3].norm() < 1e-10 && p[4].norm() < 1e-8);
    }

    #[test]
    fn harmonic_shift_of_curvature() {
        let eps = 1e-3;
        let gauss = vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)];
        let free = OneStepProblem::new(Units::natural(1), gauss.clone(), PotentialSpec::Free, 0.0, eps).unwrap();
        let units = Units::natural(1);
        let ho = OneStepProblem::new(units.clone(), gauss, PotentialSpec::harmonic(&[2.0], &units), 0.0, eps).unwrap();
        let (pf, ph) = (free.propagate(2).unwrap(), ho.propagate(2).unwrap());
        assert!(ph[1].norm() < 1e-12);
        assert!((ph[2] - pf[2] + eps * 4.0).norm() < 1e-5);
    }

    #[test]
    fn residuals_scale_quadratically() {
        for prob in [gaussian_test_problem(0.02), cubic_test_problem(0.02)] {
            for row in residual_scaling(&prob, 3).unwrap() {
                assert!((3.4..=4.6).contains(&row.ratio), "{row:?}");
            }
        }
    }

    #[test]
    fn rejects_growing_gaussian() {
        let r = OneStepProblem::new(
            Units::natural(1),
            vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)],
            PotentialSpec::Free,
            0.0,
            1e-3,
        );
        assert!(r.is_err());
    }

    #[test]
    fn narrow_window_reports_divergence() {
        let mut prob = gaussian_test_problem(1e-3);
        prob.half_width = 2.0;
        assert!(matches!(prob.propagate(2), Err(Error::QuadratureDivergence { .. })));
    }
}
