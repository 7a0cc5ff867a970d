//! External potentials with exact derivatives of any order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jetstate::Units;
use crate::multiindex::MultiIndex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Free,
    /// `U = ½ Σ k_i x_i²`.
    Harmonic {
        stiffness: Vec<f64>,
    },
    /// `U = Σ c_e x^e` with exponents given as per-axis counts.
    Polynomial {
        terms: Vec<(Vec<u32>, f64)>,
    },
    /// `U = h exp(−|x − c|² / 2w²)`.
    GaussianBarrier {
        height: f64,
        width: f64,
        center: Vec<f64>,
    },
}

impl PotentialSpec {
    /// Harmonic potential with angular frequency `ω_i` on each axis.
    pub fn harmonic(omega: &[f64], units: &Units) -> Self {
        PotentialSpec::Harmonic { stiffness: omega.iter().zip(&units.masses).map(|(w, m)| m * w * w).collect() }
    }

    /// One-dimensional polynomial `Σ c_k x^k`.
    pub fn poly1d(coefficients: &[f64]) -> Self {
        PotentialSpec::Polynomial {
            terms: coefficients
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(k, c)| (vec![k as u32], *c))
                .collect(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = match self {
            PotentialSpec::Free => false,
            PotentialSpec::Harmonic { stiffness } => stiffness.len() != n,
            PotentialSpec::Polynomial { terms } => terms.iter().any(|(e, _)| e.len() != n),
            PotentialSpec::GaussianBarrier { width, center, .. } => center.len() != n || *width <= 0.0,
        };
        if bad {
            return Err(Error::Config(format!("potential {self:?} does not fit dimension {n}")));
        }
        Ok(())
    }

    /// True when all derivatives above second order vanish.
    pub fn is_quadratic(&self) -> bool {
        match self {
            PotentialSpec::Free | PotentialSpec::Harmonic { .. } => true,
            PotentialSpec::Polynomial { terms } => terms.iter().all(|(e, _)| e.iter().sum::<u32>() <= 2),
            PotentialSpec::GaussianBarrier { .. } => false,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.derivative(x, &MultiIndex::empty(x.len()))
    }

    /// `U_σ(x)`.
    pub fn derivative(&self, x: &[f64], sigma: &MultiIndex) -> f64 {
        match self {
            PotentialSpec::Free => 0.0,
            PotentialSpec::Harmonic { stiffness } => match sigma.order() {
                0 => 0.5 * stiffness.iter().zip(x).map(|(k, v)| k * v * v).sum::<f64>(),
                1 => {
                    let i = axis_of(sigma);
                    stiffness[i] * x[i]
                }
                2 => {
                    let i = axis_of(sigma);
                    if sigma.count(i) == 2 {
                        stiffness[i]
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            },
            PotentialSpec::Polynomial { terms } => terms
                .iter()
                .map(|(e, c)| {
                    let mut v = *c;
                    for (i, (&ei, &si)) in e.iter().zip(sigma.counts()).enumerate() {
                        if si > ei {
                            return 0.0;
                        }
                        let falling: f64 = (0..si).map(|k| f64::from(ei - k)).product();
                        v *= falling * x[i].powi((ei - si) as i32);
                    }
                    v
                })
                .sum(),
            PotentialSpec::GaussianBarrier { height, width, center } => {
                let mut v = *height;
                for (i, &s) in sigma.counts().iter().enumerate() {
                    let z = (x[i] - center[i]) / width;
                    let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
                    v *= sign * hermite_e(s, z) * (-0.5 * z * z).exp() / width.powi(s as i32);
                }
                v
            }
        }
    }

    pub fn derivatives(&self, x: &[f64], indices: &[MultiIndex]) -> Vec<f64> {
        indices.iter().map(|s| self.derivative(x, s)).collect()
    }
}

fn axis_of(sigma: &MultiIndex) -> usize {
    sigma.counts().iter().position(|&c| c > 0).unwrap_or(0)
}

/// Probabilists' Hermite polynomial `He_k(z)`.
fn hermite_e(k: u32, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = z * cur - f64::from(j) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference(p: &PotentialSpec, x: &[f64], sigma: &MultiIndex) -> f64 {
        // one central difference on top of the exact lower derivative
        let i = axis_of(sigma);
        let mut lower = sigma.counts().to_vec();
        lower[i] -= 1;
        let lower = MultiIndex::new(lower);
        let h = 1e-5;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (p.derivative(&xp, &lower) - p.derivative(&xm, &lower)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pots = [
            PotentialSpec::Harmonic { stiffness: vec![1.5, 0.7] },
            PotentialSpec::Polynomial { terms: vec![(vec![3, 1], 0.2), (vec![0, 4], -0.1), (vec![1, 0], 2.0)] },
            PotentialSpec::GaussianBarrier { height: 2.0, width: 0.6, center: vec![0.3, -0.2] },
        ];
        let x = [0.41, -0.17];
        for p in &pots {
            for sigma in MultiIndex::all_up_to(2, 5).into_iter().skip(1) {
                let exact = p.derivative(&x, &sigma);
                let fd = finite_difference(p, &x, &sigma);
                assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0), "{p:?} {sigma}: {exact} vs {fd}");
            }
        }
    }

    #[test]
    fn harmonic_from_frequency() {
        let p = PotentialSpec::harmonic(&[2.0], &Units::new(1.0, 3.0, 1));
        assert_eq!(p.value(&[1.0]), 6.0);
        assert_eq!(p.derivative(&[1.0], &MultiIndex::new(vec![2])), 12.0);
        assert!(p.is_quadratic());
    }

    #[test]
    fn poly1d_values() {
        let p = PotentialSpec::poly1d(&[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(p.value(&[2.0]), 17.0);
        assert_eq!(p.derivative(&[2.0], &MultiIndex::new(vec![3])), 12.0);
        assert_eq!(p.derivative(&[2.0], &MultiIndex::new(vec![4])), 0.0);
        assert!(!p.is_quadratic());
    }
}
