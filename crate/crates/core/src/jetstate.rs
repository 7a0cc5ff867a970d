//! Particle state in truncated infinite phase space.
//!
//! A [`JetState`] holds the position `q`, the complex action value `p0 = p(q)` and every
//! momentum `p_σ = ∂_σ p(q)` with `1 ≤ |σ| ≤ N`. Conjugate momentums are implied. The dense
//! storage order and the lookup tables used by the equations of motion live in a shared
//! [`JetLayout`].

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;
use crate::reference::AnalyticState;

/// Physical constants of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub hbar: f64,
    /// One mass per configuration coordinate (multi-particle systems are flattened).
    pub masses: Vec<f64>,
}

impl Units {
    /// `ħ = m = 1` in `n` dimensions.
    pub fn natural(n: usize) -> Self {
        Units { hbar: 1.0, masses: vec![1.0; n] }
    }

    pub fn new(hbar: f64, mass: f64, n: usize) -> Self {
        Units { hbar, masses: vec![mass; n] }
    }

    pub fn dim(&self) -> usize {
        self.masses.len()
    }
}

/// Precomputed index arithmetic for one momentum `p_σ` in the equations of motion.
#[derive(Clone, Debug)]
pub(crate) struct SigmaTable {
    /// Layout position of `jσ` for each coordinate `j`.
    pub first: Vec<usize>,
    /// Layout position of `jjσ` for each coordinate `j`.
    pub second: Vec<usize>,
    /// `(C_σ^ν, j, pos(jν), pos(j(σ∖ν)))` for every proper nonempty subindex `ν`.
    pub pairs: Vec<(f64, usize, usize, usize)>,
}

/// Dense ordering of the multi-indices of a run with truncation order `N`.
///
/// Positions `0..=n_state` cover `∅` and all `1 ≤ |σ| ≤ N`; positions beyond that hold the
/// closure orders `N+1` and `N+2` needed by the right-hand side.
#[derive(Debug)]
pub struct JetLayout {
    n: usize,
    order: u32,
    indices: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
    n_state: usize,
    pub(crate) tables: Vec<SigmaTable>,
}

impl JetLayout {
    pub fn new(n: usize, order: u32) -> Arc<Self> {
        assert!(n >= 1, "dimension must be positive");
        let indices = MultiIndex::all_up_to(n, order + 2);
        let position: HashMap<_, _> = indices.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let n_state = indices.iter().filter(|m| m.order() >= 1 && m.order() <= order).count();
        let tables = indices[..=n_state]
            .iter()
            .map(|sigma| {
                let first = (0..n).map(|j| position[&sigma.extend(j)]).collect();
                let second = (0..n).map(|j| position[&sigma.extend(j).extend(j)]).collect();
                let mut pairs = Vec::new();
                for s in sigma.subindices() {
                    if s.sub.is_empty() || s.complement.is_empty() {
                        continue;
                    }
                    for j in 0..n {
                        pairs.push((s.count as f64, j, position[&s.sub.extend(j)], position[&s.complement.extend(j)]));
                    }
                }
                SigmaTable { first, second, pairs }
            })
            .collect();
        Arc::new(JetLayout { n, order, indices, position, n_state, tables })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Truncation order `N`.
    pub fn order(&self) -> u32 {
        self.order
    }

    /// Number of stored momentums (`1 ≤ |σ| ≤ N`).
    pub fn n_state(&self) -> usize {
        self.n_state
    }

    /// Every multi-index known to the layout, `|σ| ≤ N + 2`, starting with `∅`.
    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Multi-indices of the stored momentums.
    pub fn state_indices(&self) -> &[MultiIndex] {
        &self.indices[1..=self.n_state]
    }

    /// Multi-indices of orders `N+1` and `N+2`, supplied by a closure policy.
    pub fn closure_indices(&self) -> &[MultiIndex] {
        &self.indices[self.n_state + 1..]
    }

    pub fn position(&self, sigma: &MultiIndex) -> Option<usize> {
        self.position.get(sigma).copied()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Real action and log-amplitude: `p = S + (ħ/i) R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionPair {
    pub s: f64,
    pub r: f64,
}

impl ActionPair {
    pub fn from_complex(p: Complex64, hbar: f64) -> Self {
        ActionPair { s: p.re, r: -p.im / hbar }
    }

    pub fn to_complex(self, hbar: f64) -> Complex64 {
        Complex64::new(self.s, -hbar * self.r)
    }
}

#[derive(Clone, Debug)]
pub struct JetState {
    layout: Arc<JetLayout>,
    pub t: f64,
    pub q: Vec<f64>,
    /// `p_σ` for `1 ≤ |σ| ≤ N` in layout order.
    pub p: Vec<Complex64>,
    pub p0: Complex64,
    pub units: Units,
}

impl JetState {
    /// All momentums zero (a plane wave with zero momentum).
    pub fn zeros(layout: Arc<JetLayout>, units: Units, t: f64, q: Vec<f64>) -> Self {
        assert_eq!(q.len(), layout.dim());
        assert_eq!(units.dim(), layout.dim());
        let p = vec![Complex64::new(0.0, 0.0); layout.n_state()];
        JetState { layout, t, q, p, p0: Complex64::new(0.0, 0.0), units }
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn order(&self) -> u32 {
        self.layout.order()
    }

    /// `p_σ` for a stored multi-index; `∅` returns `p0`.
    pub fn get(&self, sigma: &MultiIndex) -> Option<Complex64> {
        match self.layout.position(sigma)? {
            0 => Some(self.p0),
            i if i <= self.layout.n_state() => Some(self.p[i - 1]),
            _ => None,
        }
    }

    pub fn set(&mut self, sigma: &MultiIndex, value: Complex64) -> Result<()> {
        match self.layout.position(sigma) {
            Some(0) => self.p0 = value,
            Some(i) if i <= self.layout.n_state() => self.p[i - 1] = value,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "momentum {sigma} is outside truncation order {}",
                    self.order()
                )))
            }
        }
        Ok(())
    }

    /// Momentum by canonical name, e.g. `"xx"`.
    pub fn get_named(&self, name: &str) -> Result<Complex64> {
        let sigma = MultiIndex::parse(name, self.dim())?;
        self.get(&sigma).ok_or_else(|| Error::InvalidArgument(format!("momentum {name} not stored")))
    }

    /// Evaluate the wave function reconstructed from the truncated Taylor series of the action
    /// around `q`. No convergence check is made.
    pub fn taylor_eval(&self, x: &[f64]) -> Complex64 {
        let y: Vec<f64> = x.iter().zip(&self.q).map(|(a, b)| a - b).collect();
        let mut phase = self.p0;
        for (sigma, p) in self.layout.state_indices().iter().zip(&self.p) {
            // factorials stay far below u64 range for practical truncation orders
            let fact = sigma.factorial().expect("factorial in range") as f64;
            phase += p * (sigma.monomial(&y) / fact);
        }
        (Complex64::i() * phase / self.units.hbar).exp()
    }

    /// `(S_σ, R_σ)` for every stored multi-index including `∅`.
    pub fn to_sr(&self) -> BTreeMap<MultiIndex, ActionPair> {
        let hbar = self.units.hbar;
        let mut out = BTreeMap::new();
        out.insert(MultiIndex::empty(self.dim()), ActionPair::from_complex(self.p0, hbar));
        for (sigma, p) in self.layout.state_indices().iter().zip(&self.p) {
            out.insert(sigma.clone(), ActionPair::from_complex(*p, hbar));
        }
        out
    }

    /// Build a state from `(S, R)` components; missing entries are zero.
    pub fn from_sr(
        layout: Arc<JetLayout>,
        units: Units,
        t: f64,
        q: Vec<f64>,
        sr: &BTreeMap<MultiIndex, ActionPair>,
    ) -> Result<Self> {
        let hbar = units.hbar;
        let mut state = JetState::zeros(layout, units, t, q);
        for (sigma, pair) in sr {
            state.set(sigma, pair.to_complex(hbar))?;
        }
        Ok(state)
    }

    /// Particle velocity `v^j = (p_j + p̄_j)/2m_j`.
    pub fn velocity(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.p[j].re / self.units.masses[j]).collect()
    }

    /// Real action `S` and log-amplitude `R` at the particle.
    pub fn action(&self) -> ActionPair {
        ActionPair::from_complex(self.p0, self.units.hbar)
    }

    /// The mirror state with every momentum conjugated.
    pub fn conjugated(&self) -> JetState {
        let mut s = self.clone();
        s.p0 = s.p0.conj();
        s.p.iter_mut().for_each(|p| *p = p.conj());
        s
    }

    /// Momentums from the exact derivatives of an analytic wave function at `q`.
    pub fn from_wavefunction_analytic(
        psi: &AnalyticState,
        q: &[f64],
        t: f64,
        order: u32,
        units: &Units,
    ) -> Result<JetState> {
        Self::from_wavefunction_analytic_with_floor(psi, q, t, order, units, DEFAULT_NODE_FLOOR)
    }

    pub fn from_wavefunction_analytic_with_floor(
        psi: &AnalyticState,
        q: &[f64],
        t: f64,
        order: u32,
        units: &Units,
        node_floor: f64,
    ) -> Result<JetState> {
        let layout = JetLayout::new(q.len(), order);
        let values = psi.momentums(q, t, &layout.indices()[..=layout.n_state()], units, node_floor)?;
        let mut state = JetState::zeros(layout, units.clone(), t, q.to_vec());
        state.p0 = values[0];
        state.p.copy_from_slice(&values[1..]);
        Ok(state)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&JetStateJson::from(self)).expect("jet state serializes")
    }

    /// Parse the JSON form. The truncation order is the highest order present; every lower
    /// multi-index must be present too.
    pub fn from_json(s: &str, units: Units) -> Result<JetState> {
        let js: JetStateJson = serde_json::from_str(s)?;
        let n = js.q.len();
        if units.dim() != n {
            return Err(Error::InvalidArgument(format!(
                "units have {} masses for a {n}-dimensional state",
                units.dim()
            )));
        }
        let mut parsed = Vec::with_capacity(js.p.len());
        for (name, v) in &js.p {
            parsed.push((MultiIndex::parse(name, n)?, Complex64::new(v[0], v[1])));
        }
        let order = parsed.iter().map(|(m, _)| m.order()).max().unwrap_or(0);
        let layout = JetLayout::new(n, order);
        if parsed.len() != layout.n_state() {
            return Err(Error::Parse(format!(
                "expected {} momentums up to order {order}, found {}",
                layout.n_state(),
                parsed.len()
            )));
        }
        let mut state = JetState::zeros(layout, units, js.t, js.q);
        state.p0 = Complex64::new(js.p0[0], js.p0[1]);
        for (sigma, v) in parsed {
            state.set(&sigma, v)?;
        }
        Ok(state)
    }
}

/// Default node floor relative to the peak amplitude.
pub const DEFAULT_NODE_FLOOR: f64 = 1e-12;

#[derive(Serialize, Deserialize)]
struct JetStateJson {
    t: f64,
    q: Vec<f64>,
    p: BTreeMap<String, [f64; 2]>,
    p0: [f64; 2],
}

impl From<&JetState> for JetStateJson {
    fn from(s: &JetState) -> Self {
        JetStateJson {
            t: s.t,
            q: s.q.clone(),
            p: s.layout.state_indices().iter().zip(&s.p).map(|(m, v)| (m.canonical_name(), [v.re, v.im])).collect(),
            p0: [s.p0.re, s.p0.im],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{AnalyticState, FreeGaussian};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn state_1d(order: u32) -> JetState {
        JetState::zeros(JetLayout::new(1, order), Units::natural(1), 0.0, vec![0.0])
    }

    #[test]
    fn layout_counts() {
        let l = JetLayout::new(2, 3);
        assert_eq!(l.n_state(), 2 + 3 + 4);
        assert_eq!(l.closure_indices().len(), 5 + 6);
        assert_eq!(l.position(&MultiIndex::empty(2)), Some(0));
    }

    #[test]
    fn taylor_eval_trivial() {
        let s = state_1d(2);
        assert_eq!(s.taylor_eval(&[0.7]), c(1.0, 0.0));
        let mut s = state_1d(2);
        s.p0 = c(0.3, 0.0);
        let v = s.taylor_eval(&[1.2]);
        assert!((v - c(0.3f64.cos(), 0.3f64.sin())).norm() < 1e-15);
        assert!((v.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn taylor_eval_gaussian() {
        let a: f64 = 1.3;
        let mut s = state_1d(2);
        s.set(&MultiIndex::new(vec![2]), c(0.0, 1.0 / (a * a))).unwrap();
        s.p0 = Complex64::new(0.0, -1.0) * (-0.25 * (PI * a * a).ln());
        let v = s.taylor_eval(&[a]);
        let expected = (PI * a * a).powf(-0.25) * (-0.5f64).exp();
        assert!((v - c(expected, 0.0)).norm() < 1e-14, "{v}");
    }

    #[test]
    fn taylor_eval_at_q_is_exp_p0() {
        let mut s = state_1d(3);
        s.p0 = c(0.4, -0.9);
        s.p.iter_mut().enumerate().for_each(|(i, p)| *p = c(i as f64, 1.0));
        assert_eq!(s.taylor_eval(&[0.0]), (Complex64::i() * s.p0).exp());
    }

    #[test]
    fn to_sr_examples() {
        let hbar = 0.5;
        let mut s = JetState::zeros(JetLayout::new(1, 2), Units::new(hbar, 1.0, 1), 0.0, vec![0.0]);
        let k0 = 3.0;
        s.set(&MultiIndex::new(vec![1]), c(hbar * k0, 0.0)).unwrap();
        s.set(&MultiIndex::new(vec![2]), c(0.0, hbar / 4.0)).unwrap();
        s.p0 = c(3.0, -hbar * 2.0);
        let sr = s.to_sr();
        assert_eq!(sr[&MultiIndex::new(vec![1])], ActionPair { s: hbar * k0, r: 0.0 });
        assert_eq!(sr[&MultiIndex::new(vec![2])], ActionPair { s: 0.0, r: -0.25 });
        assert_eq!(sr[&MultiIndex::new(vec![0])], ActionPair { s: 3.0, r: 2.0 });
        let back = JetState::from_sr(s.layout().clone(), s.units.clone(), 0.0, vec![0.0], &sr).unwrap();
        assert_eq!(back.p, s.p);
        assert_eq!(back.p0, s.p0);
    }

    #[test]
    fn velocity_examples() {
        let mut s = state_1d(2);
        s.units.masses = vec![2.0];
        s.set(&MultiIndex::new(vec![1]), c(4.0, 0.0)).unwrap();
        assert_eq!(s.velocity(), vec![2.0]);
        s.set(&MultiIndex::new(vec![1]), c(0.0, 1.0)).unwrap();
        assert_eq!(s.velocity(), vec![0.0]);

        let mut s = JetState::zeros(JetLayout::new(2, 1), Units::natural(2), 0.0, vec![0.0; 2]);
        s.p = vec![c(1.5, 0.0), c(0.0, 2.0)];
        assert_eq!(s.velocity(), vec![1.5, 0.0]);
    }

    #[test]
    fn from_analytic_gaussian() {
        let g = AnalyticState::FreeGaussian(FreeGaussian { a: 1.0, k0: 0.0, x0: 0.0 });
        let s = JetState::from_wavefunction_analytic(&g, &[0.0], 0.0, 2, &Units::natural(1)).unwrap();
        assert!((s.get_named("x").unwrap()).norm() < 1e-15);
        assert!((s.get_named("xx").unwrap() - c(0.0, 1.0)).norm() < 1e-15);

        let g = AnalyticState::FreeGaussian(FreeGaussian { a: 1.0, k0: 2.5, x0: 0.0 });
        let s = JetState::from_wavefunction_analytic(&g, &[0.0], 0.0, 2, &Units::natural(1)).unwrap();
        assert!((s.get_named("x").unwrap() - c(2.5, 0.0)).norm() < 1e-14);
        assert!((s.get_named("xx").unwrap() - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn analytic_reconstruction_exact_for_gaussian() {
        let g = AnalyticState::FreeGaussian(FreeGaussian { a: 0.8, k0: 1.1, x0: 0.2 });
        let units = Units::natural(1);
        let t = 0.4;
        let s = JetState::from_wavefunction_analytic(&g, &[0.35], t, 2, &units).unwrap();
        for dx in [-0.08, -0.02, 0.05, 0.08] {
            let x = [0.35 + dx];
            let exact = g.psi(&x, t, &units);
            let rec = s.taylor_eval(&x);
            assert!((exact - rec).norm() < 1e-13 * exact.norm(), "{dx}");
        }
    }

    #[test]
    fn json_round_trip() {
        let mut s = JetState::zeros(JetLayout::new(2, 2), Units::natural(2), 0.5, vec![0.1, -0.2]);
        s.p.iter_mut().enumerate().for_each(|(i, p)| *p = c(i as f64 * 0.5, -(i as f64)));
        s.p0 = c(0.25, -1.5);
        let js = s.to_json();
        assert!(js.contains("\"xy\""));
        let back = JetState::from_json(&js, Units::natural(2)).unwrap();
        assert_eq!(back.p, s.p);
        assert_eq!(back.p0, s.p0);
        assert_eq!(back.q, s.q);
        assert_eq!(back.order(), 2);
    }
}
