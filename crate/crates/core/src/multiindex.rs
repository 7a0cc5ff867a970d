//! Multi-indices: unordered tuples of coordinate indices stored as per-coordinate counts.
//!
//! A multi-index `σ` names a partial derivative `∂_σ`. Two index sequences that differ by a
//! permutation are the same multi-index, which the count representation makes structural.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Letters used by the canonical display form, one per coordinate.
pub const AXIS_LETTERS: &str = "xyzabcdefghijklmnopqrstuvw";

/// Multi-index over `n` coordinates.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    counts: Vec<u32>,
}

/// One entry of [`MultiIndex::subindices`]: `ν ⊂ σ`, the complement `σ∖ν`, and the number of
/// ways `ν` can be chosen from `σ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subindex {
    pub sub: MultiIndex,
    pub complement: MultiIndex,
    pub count: u64,
}

impl MultiIndex {
    pub fn new(counts: Vec<u32>) -> Self {
        MultiIndex { counts }
    }

    /// The empty multi-index `∅` in `n` dimensions.
    pub fn empty(n: usize) -> Self {
        MultiIndex { counts: vec![0; n] }
    }

    /// Single-coordinate multi-index `i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut m = Self::empty(n);
        m.counts[i] = 1;
        m
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, i: usize) -> u32 {
        self.counts[i]
    }

    /// `|σ| = Σ σ_i`.
    pub fn order(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// `σ! = ∏ σ_i!`, reported as an error when it does not fit in a `u64`.
    pub fn factorial(&self) -> Result<u64> {
        self.counts.iter().try_fold(1u64, |acc, &c| {
            factorial(c).and_then(|f| acc.checked_mul(f).ok_or_else(|| Error::Overflow(format!("{}!", self))))
        })
    }

    /// The extended multi-index `σi`.
    pub fn extend(&self, i: usize) -> MultiIndex {
        let mut m = self.clone();
        m.counts[i] += 1;
        m
    }

    /// Componentwise sum `σν`.
    pub fn join(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        MultiIndex { counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect() }
    }

    /// `σ∖ν` when `ν ⊂ σ`.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if self.dim() != other.dim() {
            return None;
        }
        let counts =
            self.counts.iter().zip(&other.counts).map(|(a, b)| a.checked_sub(*b)).collect::<Option<Vec<_>>>()?;
        Some(MultiIndex { counts })
    }

    /// Whether `other ⊂ self`.
    pub fn contains(&self, other: &MultiIndex) -> bool {
        self.dim() == other.dim() && self.counts.iter().zip(&other.counts).all(|(a, b)| b <= a)
    }

    /// All different subindices `ν ⊂ σ` with `C_σ^ν = ∏ binom(σ_i, ν_i)`.
    ///
    /// The enumeration is in increasing graded order of `ν`, so `∅` comes first and `σ` last.
    pub fn subindices(&self) -> Vec<Subindex> {
        let mut out = Vec::with_capacity(self.counts.iter().map(|&c| c as usize + 1).product());
        let mut cur = vec![0u32; self.dim()];
        loop {
            let sub = MultiIndex { counts: cur.clone() };
            let complement = self.checked_sub(&sub).expect("subindex within bounds");
            let count = self.counts.iter().zip(&cur).map(|(&s, &v)| binomial(s, v)).product();
            out.push(Subindex { sub, complement, count });
            // odometer increment
            let mut k = 0;
            loop {
                if k == cur.len() {
                    out.sort_by(|a, b| a.sub.cmp(&b.sub));
                    return out;
                }
                if cur[k] < self.counts[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = 0;
                k += 1;
            }
        }
    }

    /// Every multi-index of dimension `n` with order in `0..=max_order`, in graded order.
    pub fn all_up_to(n: usize, max_order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for order in 0..=max_order {
            out.extend(Self::of_order(n, order));
        }
        out
    }

    /// Every multi-index of dimension `n` and order exactly `order`, in graded order.
    pub fn of_order(n: usize, order: u32) -> Vec<MultiIndex> {
        fn rec(n: usize, pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if pos + 1 == n {
                cur[pos] = left;
                out.push(MultiIndex::new(cur.clone()));
                return;
            }
            for c in (0..=left).rev() {
                cur[pos] = c;
                rec(n, pos + 1, left - c, cur, out);
            }
        }
        if n == 0 {
            return if order == 0 { vec![MultiIndex::new(vec![])] } else { vec![] };
        }
        let mut out = Vec::new();
        rec(n, 0, order, &mut vec![0; n], &mut out);
        out
    }

    /// `y^σ = ∏ y_i^{σ_i}` for a displacement `y`.
    pub fn monomial(&self, y: &[f64]) -> f64 {
        self.counts.iter().zip(y).map(|(&c, &yi)| yi.powi(c as i32)).product()
    }

    /// Canonical name: one letter per coordinate repeated by count; `∅` is `"0"`.
    pub fn canonical_name(&self) -> String {
        if self.is_empty() {
            return "0".to_string();
        }
        let letters: Vec<char> = AXIS_LETTERS.chars().collect();
        let mut s = String::with_capacity(self.order() as usize);
        for (i, &c) in self.counts.iter().enumerate() {
            let ch = letters.get(i).copied().unwrap_or('?');
            for _ in 0..c {
                s.push(ch);
            }
        }
        s
    }

    /// Parse a canonical name back into an `n`-dimensional multi-index.
    ///
    /// Letters may appear in any order; `"0"` is the empty multi-index.
    pub fn parse(s: &str, n: usize) -> Result<MultiIndex> {
        if n > AXIS_LETTERS.len() {
            return Err(Error::Parse(format!("dimension {n} has no canonical letters")));
        }
        let mut counts = vec![0u32; n];
        if s == "0" {
            return Ok(MultiIndex { counts });
        }
        if s.is_empty() {
            return Err(Error::Parse("empty multi-index name".into()));
        }
        for ch in s.chars() {
            let i = AXIS_LETTERS
                .chars()
                .take(n)
                .position(|c| c == ch)
                .ok_or_else(|| Error::Parse(format!("'{ch}' is not a coordinate letter for n = {n}")))?;
            counts[i] += 1;
        }
        Ok(MultiIndex { counts })
    }
}

impl Ord for MultiIndex {
    /// Graded order; within one order `x` before `y`, `xx` before `xy` before `yy`.
    fn cmp(&self, other: &Self) -> Ordering {
        self.order().cmp(&other.order()).then_with(|| other.counts.cmp(&self.counts))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_name())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MultiIndex({})", self.canonical_name())
    }
}

pub fn factorial(k: u32) -> Result<u64> {
    (1..=k as u64).try_fold(1u64, |acc, i| acc.checked_mul(i).ok_or_else(|| Error::Overflow(format!("{k}!"))))
}

/// `binom(n, k)`; zero when `k > n`.
pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}
