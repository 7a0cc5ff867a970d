//! Truncated multivariate Taylor series with complex coefficients.
//!
//! A series is a dense vector of Taylor coefficients `f_σ = ∂_σ f / σ!` indexed by a
//! [`SeriesSpace`]. Products, exponentials and logarithms are computed by the usual
//! coefficient recurrences, which avoids ever forming derivatives of `ln ψ` numerically.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::multiindex::MultiIndex;

/// Convolution bookkeeping for one coefficient: for `σ` with pivot axis `i`, the pairs
/// `(ν, σ − ν, ν_i)` over `ν ≤ σ` with `ν_i ≥ 1`.
#[derive(Debug, Clone)]
struct Recurrence {
    pivot_count: f64,
    terms: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct SeriesSpace {
    n: usize,
    max_order: u32,
    indices: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
    pairs: Vec<Vec<(usize, usize)>>,
    recurrences: Vec<Recurrence>,
    factorials: Vec<f64>,
}

impl SeriesSpace {
    pub fn new(n: usize, max_order: u32) -> Self {
        let indices = MultiIndex::all_up_to(n, max_order);
        let position: HashMap<_, _> = indices.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let mut pairs = Vec::with_capacity(indices.len());
        let mut recurrences = Vec::with_capacity(indices.len());
        for sigma in &indices {
            let subs = sigma.subindices();
            pairs.push(subs.iter().map(|s| (position[&s.sub], position[&s.complement])).collect());
            let pivot = sigma.counts().iter().position(|&c| c > 0);
            let rec = match pivot {
                None => Recurrence { pivot_count: 0.0, terms: Vec::new() },
                Some(i) => Recurrence {
                    pivot_count: sigma.count(i) as f64,
                    terms: subs
                        .iter()
                        .filter(|s| s.sub.count(i) > 0)
                        .map(|s| (position[&s.sub], position[&s.complement], s.sub.count(i) as f64))
                        .collect(),
                },
            };
            recurrences.push(rec);
        }
        let factorials = indices
            .iter()
            .map(|m| m.counts().iter().map(|&c| (1..=c).map(f64::from).product::<f64>()).product())
            .collect();
        SeriesSpace { n, max_order, indices, position, pairs, recurrences, factorials }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, sigma: &MultiIndex) -> Option<usize> {
        self.position.get(sigma).copied()
    }

    /// `σ!` as a float.
    pub fn factorial(&self, k: usize) -> f64 {
        self.factorials[k]
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }

    pub fn mul(&self, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        self.pairs.iter().map(|ps| ps.iter().map(|&(i, j)| a[i] * b[j]).sum()).collect()
    }

    pub fn exp(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut g = self.zeros();
        g[0] = f[0].exp();
        for k in 1..self.len() {
            let rec = &self.recurrences[k];
            let s: Complex64 = rec.terms.iter().map(|&(a, b, w)| f[a] * g[b] * w).sum();
            g[k] = s / rec.pivot_count;
        }
        g
    }

    /// Logarithm of a series with `g_∅ ≠ 0`; the constant term uses the principal branch.
    pub fn ln(&self, g: &[Complex64]) -> Vec<Complex64> {
        let mut f = self.zeros();
        f[0] = g[0].ln();
        for k in 1..self.len() {
            let rec = &self.recurrences[k];
            let mut s = g[k] * rec.pivot_count;
            for &(a, b, w) in &rec.terms {
                if a != k {
                    s -= f[a] * g[b] * w;
                }
            }
            f[k] = s / (rec.pivot_count * g[0]);
        }
        f
    }

    /// Taylor coefficients at `q` of the polynomial `Σ c_e (x − center)^e`.
    pub fn polynomial(&self, terms: &[(MultiIndex, Complex64)], center: &[f64], q: &[f64]) -> Vec<Complex64> {
        let shift: Vec<f64> = q.iter().zip(center).map(|(a, b)| a - b).collect();
        let mut out = self.zeros();
        for (e, c) in terms {
            for s in e.subindices() {
                if let Some(k) = self.position(&s.sub) {
                    out[k] += c * (s.count as f64 * s.complement.monomial(&shift));
                }
            }
        }
        out
    }

    /// Convert Taylor coefficients to derivatives `∂_σ f`.
    pub fn to_derivatives(&self, f: &[Complex64]) -> Vec<Complex64> {
        f.iter().zip(&self.factorials).map(|(v, k)| v * k).collect()
    }

    pub fn from_derivatives(&self, d: &[Complex64]) -> Vec<Complex64> {
        d.iter().zip(&self.factorials).map(|(v, k)| v / k).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exp_of_linear_1d() {
        let sp = SeriesSpace::new(1, 6);
        let mut f = sp.zeros();
        f[1] = c(2.0, 0.0);
        let g = sp.exp(&f);
        let d = sp.to_derivatives(&g);
        for (k, v) in d.iter().enumerate() {
            assert!((v - c(2f64.powi(k as i32), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn ln_inverts_exp() {
        let sp = SeriesSpace::new(2, 5);
        let f: Vec<Complex64> = (0..sp.len()).map(|k| c(0.1 * k as f64 - 0.3, 0.05 * (k as f64).sin())).collect();
        let back = sp.ln(&sp.exp(&f));
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn product_matches_exp_sum() {
        let sp = SeriesSpace::new(2, 4);
        let a: Vec<Complex64> = (0..sp.len()).map(|k| c(0.2 * k as f64, -0.1)).collect();
        let b: Vec<Complex64> = (0..sp.len()).map(|k| c(-0.1, 0.3 / (k + 1) as f64)).collect();
        let sum: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let lhs = sp.exp(&sum);
        let rhs = sp.mul(&sp.exp(&a), &sp.exp(&b));
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).norm() < 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn polynomial_shift() {
        let sp = SeriesSpace::new(2, 3);
        let terms = vec![(MultiIndex::new(vec![2, 1]), c(1.0, 0.0))];
        let f = sp.polynomial(&terms, &[0.0, 0.0], &[2.0, 3.0]);
        let at = |m: Vec<u32>| f[sp.position(&MultiIndex::new(m)).unwrap()];
        assert_eq!(at(vec![0, 0]), c(12.0, 0.0));
        assert_eq!(at(vec![1, 0]), c(12.0, 0.0));
        assert_eq!(at(vec![0, 1]), c(4.0, 0.0));
        assert_eq!(at(vec![2, 1]), c(1.0, 0.0));
        assert_eq!(at(vec![1, 1]), c(4.0, 0.0));
    }
}
