//! Spin: SU(2) spinor coordinates, coherent-state wave functions and Larmor precession.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jetstate::JetState;
use crate::multiindex::MultiIndex;
use crate::symjet::{Atom, Func, GaussRat, Poly};

/// Point `(u, v)` on the unit sphere in `C²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spinor {
    pub u: Complex64,
    pub v: Complex64,
}

impl Spinor {
    pub fn new(u: Complex64, v: Complex64) -> Self {
        Spinor { u, v }
    }

    pub fn up() -> Self {
        Spinor::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    /// `u = cos(θ/2) e^{−i(φ+χ)/2}`, `v = sin(θ/2) e^{i(φ−χ)/2}`.
    pub fn from_angles(chi: f64, theta: f64, phi: f64) -> Self {
        Spinor::new(
            Complex64::from_polar((theta / 2.0).cos(), -(phi + chi) / 2.0),
            Complex64::from_polar((theta / 2.0).sin(), (phi - chi) / 2.0),
        )
    }

    /// `(χ, θ, φ)`; the angles other than `θ` are arbitrary at the poles.
    pub fn to_angles(&self) -> (f64, f64, f64) {
        let theta = 2.0 * self.v.norm().atan2(self.u.norm());
        let (a, b) = (self.u.arg(), self.v.arg());
        // φ + χ = −2a, φ − χ = 2b
        (-a - b, theta, b - a)
    }

    /// Real chart `(u₁, u₂, v₁, v₂)`.
    pub fn to_real(&self) -> [f64; 4] {
        [self.u.re, self.u.im, self.v.re, self.v.im]
    }

    pub fn from_real(w: [f64; 4]) -> Self {
        Spinor::new(Complex64::new(w[0], w[1]), Complex64::new(w[2], w[3]))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.u.norm_sqr() + self.v.norm_sqr()
    }

    /// Unit vector `(2 Re ūv, 2 Im ūv, |u|² − |v|²)` of the polarization direction.
    pub fn direction(&self) -> [f64; 3] {
        let w = self.u.conj() * self.v;
        [2.0 * w.re, 2.0 * w.im, self.u.norm_sqr() - self.v.norm_sqr()]
    }
}

/// Spin-`s` state; `amplitudes[k]` is `ψ_m` with `m = k − s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinState {
    pub two_s: u32,
    pub amplitudes: Vec<Complex64>,
}

fn fact(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

impl SpinState {
    pub fn new(two_s: u32, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != two_s as usize + 1 {
            return Err(Error::InvalidArgument(format!("spin {}/2 needs {} amplitudes", two_s, two_s + 1)));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("spin state has zero norm".into()));
        }
        Ok(SpinState { two_s, amplitudes: amplitudes.into_iter().map(|a| a / norm).collect() })
    }

    /// Basis state `|s, m⟩` given `2m`.
    pub fn basis(two_s: u32, two_m: i32) -> Result<Self> {
        let k = (two_m + two_s as i32) / 2;
        if (two_m + two_s as i32) % 2 != 0 || k < 0 || k > two_s as i32 {
            return Err(Error::InvalidArgument(format!("m = {two_m}/2 not allowed for s = {two_s}/2")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); two_s as usize + 1];
        amps[k as usize] = Complex64::new(1.0, 0.0);
        SpinState::new(two_s, amps)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `ψ(ū, v̄)` with its partial derivatives in `ū` and `v̄`.
    pub fn wave_with_gradient(&self, ub: Complex64, vb: Complex64) -> [Complex64; 3] {
        let n = self.two_s;
        let root = fact(n).sqrt();
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (k, a) in self.amplitudes.iter().enumerate() {
            let k = k as u32;
            let c = a * root / (fact(k) * fact(n - k)).sqrt();
            out[0] += c * ub.powu(k) * vb.powu(n - k);
            if k > 0 {
                out[1] += c * f64::from(k) * ub.powu(k - 1) * vb.powu(n - k);
            }
            if k < n {
                out[2] += c * f64::from(n - k) * ub.powu(k) * vb.powu(n - k - 1);
            }
        }
        out
    }
}

/// `ψ(Ω) = √((2s)!) Σ_m ū^{s+m} v̄^{s−m} ψ_m / √((s+m)!(s−m)!)`.
pub fn coherent_overlap(state: &SpinState, omega: &Spinor) -> Complex64 {
    state.wave_with_gradient(omega.u.conj(), omega.v.conj())[0]
}

/// Largest `|(i/ħ)(ū p_ū + v̄ p_v̄) − 2s|` over the samples for a function of `(ū, v̄)` given with
/// its gradient. Points where the function vanishes are skipped.
pub fn homogeneity_residual(
    f: impl Fn(Complex64, Complex64) -> [Complex64; 3],
    samples: &[Spinor],
    two_s: u32,
    hbar: f64,
) -> f64 {
    let minus_i_hbar = Complex64::new(0.0, -hbar);
    let i_over_hbar = Complex64::new(0.0, 1.0 / hbar);
    samples
        .iter()
        .filter_map(|sp| {
            let (ub, vb) = (sp.u.conj(), sp.v.conj());
            let [psi, du, dv] = f(ub, vb);
            if psi.norm() < 1e-300 {
                return None;
            }
            let (pu, pv) = (minus_i_hbar * du / psi, minus_i_hbar * dv / psi);
            Some((i_over_hbar * (ub * pu + vb * pv) - f64::from(two_s)).norm())
        })
        .fold(0.0, f64::max)
}

pub fn homogeneity_check(state: &SpinState, samples: &[Spinor], hbar: f64) -> f64 {
    homogeneity_residual(|u, v| state.wave_with_gradient(u, v), samples, state.two_s, hbar)
}

/// `(iγ/2ħ) B·σ (u, v)ᵀ`.
pub fn spinor_rate(sp: &Spinor, b: [f64; 3], gamma: f64, hbar: f64) -> Spinor {
    let k = Complex64::new(0.0, gamma / (2.0 * hbar));
    let b_plus = Complex64::new(b[0], b[1]);
    let b_minus = b_plus.conj();
    Spinor::new(k * (b[2] * sp.u + b_minus * sp.v), k * (b_plus * sp.u - b[2] * sp.v))
}

#[derive(Clone, Debug, Serialize)]
pub struct SpinTrajectory {
    pub times: Vec<f64>,
    pub spinors: Vec<Spinor>,
    /// Largest change of `|u|² + |v|²` in a single step.
    pub max_step_drift: f64,
}

impl SpinTrajectory {
    pub fn last(&self) -> &Spinor {
        self.spinors.last().expect("trajectory has its initial point")
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "t,re_u,im_u,re_v,im_v,norm")?;
        for (t, s) in self.times.iter().zip(&self.spinors) {
            writeln!(out, "{t},{},{},{},{},{}", s.u.re, s.u.im, s.v.re, s.v.im, s.norm_sqr())?;
        }
        Ok(())
    }

    /// Rotation rate of the polarization about `z`, from a least-squares fit of the unwrapped azimuth.
    pub fn azimuthal_rate(&self) -> f64 {
        let mut phases = Vec::with_capacity(self.spinors.len());
        let mut offset = 0.0;
        let mut prev: Option<f64> = None;
        for s in &self.spinors {
            let a = (s.u.conj() * s.v).arg();
            if let Some(p) = prev {
                let jump = a - p;
                if jump > std::f64::consts::PI {
                    offset -= 2.0 * std::f64::consts::PI;
                } else if jump < -std::f64::consts::PI {
                    offset += 2.0 * std::f64::consts::PI;
                }
            }
            prev = Some(a);
            phases.push(a + offset);
        }
        let n = phases.len() as f64;
        let tm = self.times.iter().sum::<f64>() / n;
        let pm = phases.iter().sum::<f64>() / n;
        let num: f64 = self.times.iter().zip(&phases).map(|(t, p)| (t - tm) * (p - pm)).sum();
        let den: f64 = self.times.iter().map(|t| (t - tm).powi(2)).sum();
        num / den
    }
}

fn rk4<T: Copy>(
    y: T,
    t: f64,
    h: f64,
    f: &impl Fn(f64, &T) -> T,
    axpy: &impl Fn(&T, &T, f64) -> T,
    combine: &impl Fn(&T, [&T; 4], f64) -> T,
) -> T {
    let k1 = f(t, &y);
    let k2 = f(t + h / 2.0, &axpy(&y, &k1, h / 2.0));
    let k3 = f(t + h / 2.0, &axpy(&y, &k2, h / 2.0));
    let k4 = f(t + h, &axpy(&y, &k3, h));
    combine(&y, [&k1, &k2, &k3, &k4], h)
}

/// Integrate the spinor rotation with rk4; no renormalization unless asked.
pub fn precess(
    start: Spinor,
    field: impl Fn(f64) -> [f64; 3],
    gamma: f64,
    hbar: f64,
    dt: f64,
    t_final: f64,
    renormalize: bool,
) -> Result<SpinTrajectory> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::InvalidArgument("precession needs a positive step and nonnegative duration".into()));
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    let h = t_final / steps as f64;
    let rate = |t: f64, s: &Spinor| spinor_rate(s, field(t), gamma, hbar);
    let axpy = |y: &Spinor, k: &Spinor, a: f64| Spinor::new(y.u + a * k.u, y.v + a * k.v);
    let combine = |y: &Spinor, k: [&Spinor; 4], h: f64| {
        Spinor::new(
            y.u + h / 6.0 * (k[0].u + 2.0 * k[1].u + 2.0 * k[2].u + k[3].u),
            y.v + h / 6.0 * (k[0].v + 2.0 * k[1].v + 2.0 * k[2].v + k[3].v),
        )
    };
    let mut traj = SpinTrajectory { times: vec![0.0], spinors: vec![start], max_step_drift: 0.0 };
    let mut s = start;
    for k in 0..steps {
        let t = k as f64 * h;
        let mut next = rk4(s, t, h, &rate, &axpy, &combine);
        traj.max_step_drift = traj.max_step_drift.max((next.norm_sqr() - s.norm_sqr()).abs());
        if renormalize {
            let n = next.norm_sqr().sqrt();
            next = Spinor::new(next.u / n, next.v / n);
        }
        s = next;
        traj.times.push(t + h);
        traj.spinors.push(s);
    }
    Ok(traj)
}

/// `(iγ/ħ) (B·J) ψ`: the Schrödinger rate of a spin-`s` state under `−γ B·s`.
fn state_rate(psi: &[Complex64], two_s: u32, b: [f64; 3], gamma: f64, hbar: f64) -> Vec<Complex64> {
    let s = f64::from(two_s) / 2.0;
    let b_plus = Complex64::new(b[0], b[1]);
    let b_minus = b_plus.conj();
    let n = psi.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let m = k as f64 - s;
        let mut acc = b[2] * m * psi[k];
        if k > 0 {
            // J₊ lifts m−1 to m
            let mm = m - 1.0;
            acc += 0.5 * b_minus * (s * (s + 1.0) - mm * (mm + 1.0)).sqrt() * psi[k - 1];
        }
        if k + 1 < n {
            let mp = m + 1.0;
            acc += 0.5 * b_plus * (s * (s + 1.0) - mp * (mp - 1.0)).sqrt() * psi[k + 1];
        }
        out[k] = Complex64::new(0.0, gamma / hbar) * acc;
    }
    out
}

/// Evolve a spin state under `−γ B(t)·s` with rk4.
pub fn evolve_state(
    state: &SpinState,
    field: impl Fn(f64) -> [f64; 3],
    gamma: f64,
    hbar: f64,
    dt: f64,
    t_final: f64,
) -> Result<Vec<SpinState>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    let h = t_final / steps as f64;
    let mut psi = state.amplitudes.clone();
    let mut out = vec![state.clone()];
    let shifted = |y: &[Complex64], k: &[Complex64], a: f64| -> Vec<Complex64> {
        y.iter().zip(k).map(|(y, k)| y + a * k).collect()
    };
    for step in 0..steps {
        let t = step as f64 * h;
        let f = |t: f64, y: &[Complex64]| state_rate(y, state.two_s, field(t), gamma, hbar);
        let k1 = f(t, &psi);
        let k2 = f(t + h / 2.0, &shifted(&psi, &k1, h / 2.0));
        let k3 = f(t + h / 2.0, &shifted(&psi, &k2, h / 2.0));
        let k4 = f(t + h, &shifted(&psi, &k3, h));
        for i in 0..psi.len() {
            psi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(SpinState { two_s: state.two_s, amplitudes: psi.clone() });
    }
    Ok(out)
}

/// Electromagnetic data for the velocity of a charged particle with spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinCoupling {
    pub charge: f64,
    pub light_speed: f64,
    pub gamma: f64,
    pub vector_potential: [f64; 3],
    pub field: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpinVelocity {
    pub spatial: [f64; 3],
    pub u_dot: Complex64,
    pub v_dot: Complex64,
}

/// `v^j = Re p_j / m − (e/mc) A_j` and the spinor rotation rate at `Ω`.
pub fn spin_velocity_terms(state: &JetState, omega: &Spinor, coupling: &SpinCoupling) -> Result<SpinVelocity> {
    if state.dim() != 3 {
        return Err(Error::InvalidArgument("spatial part must be three-dimensional".into()));
    }
    let v = state.velocity();
    let mut spatial = [0.0; 3];
    for j in 0..3 {
        spatial[j] =
            v[j] - coupling.charge / (state.units.masses[j] * coupling.light_speed) * coupling.vector_potential[j];
    }
    let rate = spinor_rate(omega, coupling.field, coupling.gamma, state.units.hbar);
    Ok(SpinVelocity { spatial, u_dot: rate.u, v_dot: rate.v })
}

/// Hamiltonian on `(x, y, z, ū, v̄)` for a neutral particle in a uniform field: the spinless
/// kinetic terms plus `−(iγ/2ħ)(ū, v̄) B·σ (p_ū, p_v̄)ᵀ`.
pub fn spin_hamiltonian(hbar: &GaussRat, mass: &GaussRat, gamma: &GaussRat, b: [GaussRat; 3]) -> Poly {
    let n = 5;
    let mom = |j: usize, k: usize| Poly::atom(Atom::Mom(Func::P, MultiIndex::unit(n, j).extend(k)));
    let first = |j: usize| Poly::atom(Atom::Mom(Func::P, MultiIndex::unit(n, j)));
    let two = GaussRat::int(2);
    let inv2m = (two.clone() * mass.clone()).inv().expect("nonzero mass");
    let quantum = hbar.clone() * (two.clone() * GaussRat::i() * mass.clone()).inv().expect("nonzero mass");
    let mut h = Poly::zero();
    for j in 0..3 {
        h = h + first(j).pow(2).scale(&inv2m) + mom(j, j).scale(&quantum);
    }
    let [bx, by, bz] = b;
    let b_plus = bx.clone() + GaussRat::i() * by.clone();
    let b_minus = bx - GaussRat::i() * by;
    let k = -(GaussRat::i() * gamma.clone() * (two * hbar.clone()).inv().expect("nonzero ħ"));
    let (ub, vb) = (Poly::atom(Atom::Coord(3)), Poly::atom(Atom::Coord(4)));
    let row_u = ub.scale(&bz) + vb.scale(&b_plus);
    let row_v = ub.scale(&b_minus) - vb.scale(&bz);
    h + (row_u * first(3) + row_v * first(4)).scale(&k)
}

fn is_mixed(sigma: &MultiIndex) -> bool {
    let c = sigma.counts();
    c[..3].iter().any(|&k| k > 0) && c[3..].iter().any(|&k| k > 0)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecouplingReport {
    pub checked: usize,
    pub violations: Vec<String>,
}

/// For every mixed multi-index up to `max_order`, the rate `p_{σi} v^i − D_σ H` vanishes once
/// all mixed momentums are set to zero.
pub fn decoupling_check(h: &Poly, max_order: u32) -> DecouplingReport {
    let n = 5;
    let velocity: Vec<Poly> = (0..n).map(|i| h.partial(&Atom::Mom(Func::P, MultiIndex::unit(n, i)))).collect();
    let kill = |a: &Atom| match a {
        Atom::Mom(_, s) if is_mixed(s) => Some(Poly::zero()),
        _ => None,
    };
    let mut report = DecouplingReport { checked: 0, violations: Vec::new() };
    for sigma in MultiIndex::all_up_to(n, max_order).into_iter().filter(is_mixed) {
        let mut rate = -&h.prolong(&sigma);
        for (i, v) in velocity.iter().enumerate() {
            rate = rate + Poly::atom(Atom::Mom(Func::P, sigma.extend(i))) * v.clone();
        }
        let reduced = rate.substitute(&kill);
        report.checked += 1;
        if !reduced.is_zero() {
            report.violations.push(sigma.canonical_name());
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetstate::{JetLayout, Units};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_spinors(count: usize, seed: u64) -> Vec<Spinor> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                Spinor::from_angles(
                    rng.random_range(0.0..4.0 * PI),
                    rng.random_range(0.0..PI),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect()
    }

    #[test]
    fn coherent_overlap_examples() {
        let om = Spinor::from_angles(0.3, 1.1, -0.7);
        let up = SpinState::basis(1, 1).unwrap();
        let down = SpinState::basis(1, -1).unwrap();
        let zero = SpinState::basis(2, 0).unwrap();
        assert!((coherent_overlap(&up, &om) - om.u.conj()).norm() < 1e-15);
        assert!((coherent_overlap(&down, &om) - om.v.conj()).norm() < 1e-15);
        let expect = std::f64::consts::SQRT_2 * om.u.conj() * om.v.conj();
        assert!((coherent_overlap(&zero, &om) - expect).norm() < 1e-15);
    }

    #[test]
    fn charts_agree() {
        for s in random_spinors(50, 1) {
            assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
            let (chi, theta, phi) = s.to_angles();
            let back = Spinor::from_angles(chi, theta, phi);
            assert!((back.u - s.u).norm() < 1e-12 && (back.v - s.v).norm() < 1e-12);
            let w = s.to_real();
            assert!((w.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
            assert_eq!(Spinor::from_real(w), s);
        }
    }

    #[test]
    fn homogeneity_of_states() {
        let samples = random_spinors(100, 2);
        let half = SpinState::new(1, vec![c(0.3, 0.2), c(-0.5, 0.8)]).unwrap();
        let one = SpinState::new(2, vec![c(0.1, 0.0), c(0.4, -0.3), c(0.2, 0.7)]).unwrap();
        assert!(homogeneity_check(&half, &samples, 1.0) < 1e-12);
        assert!(homogeneity_check(&one, &samples, 0.5) < 1e-12);
        let mixed = |u: Complex64, v: Complex64| [u + u * v, 1.0 + v, u];
        assert!(homogeneity_residual(mixed, &samples, 1, 1.0) > 0.1);
    }

    #[test]
    fn larmor_phase() {
        let (gamma, b, hbar) = (1.0, 1.0, 1.0);
        let start = Spinor::from_angles(0.2, 1.0, 0.4);
        let t = 20.0 * PI * hbar / (gamma * b);
        let traj = precess(start, |_| [0.0, 0.0, b], gamma, hbar, 1e-4, t, false).unwrap();
        let end = traj.last();
        let w = gamma * b * t / (2.0 * hbar);
        assert!((end.u - start.u * Complex64::from_polar(1.0, w)).norm() < 1e-9);
        assert!((end.v - start.v * Complex64::from_polar(1.0, -w)).norm() < 1e-9);
        assert!(traj.max_step_drift < 1e-12);
        assert!((traj.azimuthal_rate() + gamma * b / hbar).abs() < 1e-9);
    }

    #[test]
    fn zero_field_and_rabi() {
        let start = Spinor::from_angles(0.0, 0.7, 1.0);
        let still = precess(start, |_| [0.0; 3], 1.0, 1.0, 1e-2, 3.0, false).unwrap();
        assert_eq!(*still.last(), start);
        let traj = precess(Spinor::up(), |_| [2.0, 0.0, 0.0], 1.0, 1.0, 1e-3, 4.0, false).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.spinors).step_by(100) {
            assert!((s.v.norm_sqr() - (t).sin().powi(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn overlap_constant_along_precession() {
        let state = SpinState::new(3, vec![c(0.2, 0.1), c(0.5, -0.2), c(-0.3, 0.4), c(0.1, 0.6)]).unwrap();
        let b = [0.3, -0.5, 0.8];
        let (gamma, hbar) = (1.3, 1.0);
        let rate = gamma * (b.iter().map(|x| x * x).sum::<f64>()).sqrt() / hbar;
        let period = 2.0 * PI / rate;
        let dt = 1e-3;
        let om = Spinor::from_angles(0.4, 2.0, -1.0);
        let path = precess(om, |_| b, gamma, hbar, dt, period, false).unwrap();
        let states = evolve_state(&state, |_| b, gamma, hbar, dt, period).unwrap();
        let first = coherent_overlap(&states[0], &path.spinors[0]);
        for (s, o) in states.iter().zip(&path.spinors) {
            assert!((coherent_overlap(s, o) - first).norm() < 1e-8);
        }
    }

    #[test]
    fn velocities_with_fields() {
        let layout = JetLayout::new(3, 2);
        let units = Units::natural(3);
        let mut state = JetState::zeros(layout, units, 0.0, vec![0.0; 3]);
        for (j, p) in [0.5, -0.2, 1.0].iter().enumerate() {
            state.set(&MultiIndex::unit(3, j), c(*p, 0.3)).unwrap();
        }
        let om = Spinor::from_angles(0.1, 0.9, 0.3);
        let none =
            SpinCoupling { charge: 1.0, light_speed: 1.0, gamma: 1.0, vector_potential: [0.0; 3], field: [0.0; 3] };
        let v0 = spin_velocity_terms(&state, &om, &none).unwrap();
        assert_eq!(v0.spatial.to_vec(), state.velocity());
        assert_eq!((v0.u_dot, v0.v_dot), (c(0.0, 0.0), c(0.0, 0.0)));
        let shifted = SpinCoupling {
            vector_potential: [1.0, 2.0, -1.0],
            charge: 2.0,
            light_speed: 4.0,
            field: [0.1, 0.2, 0.3],
            ..none
        };
        let v1 = spin_velocity_terms(&state, &om, &shifted).unwrap();
        for j in 0..3 {
            assert!((v1.spatial[j] - v0.spatial[j] + 0.5 * shifted.vector_potential[j]).abs() < 1e-15);
        }
        let r = spinor_rate(&om, shifted.field, 1.0, 1.0);
        assert_eq!((v1.u_dot, v1.v_dot), (r.u, r.v));
    }

    #[test]
    fn spin_velocity_from_hamiltonian() {
        let h = spin_hamiltonian(
            &GaussRat::int(1),
            &GaussRat::int(1),
            &GaussRat::ratio(3, 2),
            [GaussRat::ratio(1, 3), GaussRat::int(-1), GaussRat::ratio(1, 2)],
        );
        let om = Spinor::from_angles(0.5, 1.2, -0.4);
        let (ub, vb) = (om.u.conj(), om.v.conj());
        let at = |a: &Atom| match a {
            Atom::Coord(3) => ub,
            Atom::Coord(4) => vb,
            _ => Complex64::new(0.0, 0.0),
        };
        let du = h.partial(&Atom::Mom(Func::P, MultiIndex::unit(5, 3))).eval(&at);
        let dv = h.partial(&Atom::Mom(Func::P, MultiIndex::unit(5, 4))).eval(&at);
        let r = spinor_rate(&om, [1.0 / 3.0, -1.0, 0.5], 1.5, 1.0);
        assert!((du - r.u.conj()).norm() < 1e-14 && (dv - r.v.conj()).norm() < 1e-14);
    }

    #[test]
    fn uniform_field_decouples() {
        let h = spin_hamiltonian(
            &GaussRat::int(1),
            &GaussRat::int(2),
            &GaussRat::int(1),
            [GaussRat::int(1), GaussRat::ratio(1, 2), GaussRat::int(3)],
        );
        let report = decoupling_check(&h, 3);
        assert!(report.checked > 0);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
    }
}
