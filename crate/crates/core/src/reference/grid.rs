//! Periodic grid wave functions and the split-step Fourier solver.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jetstate::Units;
use crate::multiindex::MultiIndex;
use crate::potential::PotentialSpec;
use crate::reference::analytic::{log_momentums, AnalyticState};
use crate::series::SeriesSpace;

/// Spectral amplitude above this fraction of the Nyquist wavenumber counts as tail.
pub const TAIL_BAND: f64 = 0.8;
pub const DEFAULT_TAIL_LIMIT: f64 = 1e-10;
/// Modes below this fraction of the largest amplitude are dropped before differentiation.
pub const SPECTRAL_FLOOR: f64 = 1e-14;

/// Uniform periodic grid in one or two dimensions. Axis 0 varies slowest in storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub points: Vec<usize>,
    pub lower: Vec<f64>,
    pub extent: Vec<f64>,
}

impl Grid {
    /// Grid centered on `center` with the given extent and point count per axis.
    pub fn centered(center: &[f64], extent: &[f64], points: &[usize]) -> Result<Grid> {
        if center.is_empty() || center.len() > 2 || extent.len() != center.len() || points.len() != center.len() {
            return Err(Error::InvalidArgument("grids are one- or two-dimensional".into()));
        }
        if points.iter().any(|&m| m < 2) || extent.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidArgument("grid needs positive extent and at least two points".into()));
        }
        Ok(Grid {
            points: points.to_vec(),
            lower: center.iter().zip(extent).map(|(c, l)| c - l / 2.0).collect(),
            extent: extent.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).product()
    }

    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        self.lower[axis] + j as f64 * self.spacing(axis)
    }

    /// Coordinates of the flat storage index `k`.
    pub fn point(&self, k: usize) -> Vec<f64> {
        match self.dim() {
            1 => vec![self.coordinate(0, k)],
            _ => {
                let m1 = self.points[1];
                vec![self.coordinate(0, k / m1), self.coordinate(1, k % m1)]
            }
        }
    }

    /// Angular wavenumber of FFT bin `j` on `axis`.
    pub fn wavenumber(&self, axis: usize, j: usize) -> f64 {
        let m = self.points[axis];
        let signed = if j < m.div_ceil(2) { j as f64 } else { j as f64 - m as f64 };
        2.0 * PI * signed / self.extent[axis]
    }

    pub fn nyquist(&self, axis: usize) -> f64 {
        PI / self.spacing(axis)
    }

    fn is_nyquist_bin(&self, axis: usize, j: usize) -> bool {
        self.points[axis].is_multiple_of(2) && j == self.points[axis] / 2
    }
}

/// Forward/inverse FFT over every axis of a [`Grid`].
#[derive(Clone)]
pub struct GridFft {
    grid: Grid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl GridFft {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        GridFft {
            grid: grid.clone(),
            forward: grid.points.iter().map(|&m| planner.plan_fft_forward(m)).collect(),
            inverse: grid.points.iter().map(|&m| planner.plan_fft_inverse(m)).collect(),
        }
    }

    fn apply(&self, plans: &[Arc<dyn Fft<f64>>], data: &mut [Complex64]) {
        match self.grid.dim() {
            1 => plans[0].process(data),
            _ => {
                let (m0, m1) = (self.grid.points[0], self.grid.points[1]);
                for row in data.chunks_mut(m1) {
                    plans[1].process(row);
                }
                let mut column = vec![Complex64::new(0.0, 0.0); m0];
                for j in 0..m1 {
                    for i in 0..m0 {
                        column[i] = data[i * m1 + j];
                    }
                    plans[0].process(&mut column);
                    for i in 0..m0 {
                        data[i * m1 + j] = column[i];
                    }
                }
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(&self.forward, data);
    }

    /// Inverse transform including the `1/M` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(&self.inverse, data);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Wave function sampled on a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWave {
    pub grid: Grid,
    pub t: f64,
    pub data: Vec<Complex64>,
}

impl GridWave {
    pub fn from_fn(grid: Grid, t: f64, f: impl Fn(&[f64]) -> Complex64) -> GridWave {
        let data = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        GridWave { grid, t, data }
    }

    pub fn from_analytic(grid: Grid, state: &AnalyticState, t: f64, units: &Units) -> Result<GridWave> {
        if state.dim() != grid.dim() {
            return Err(Error::InvalidArgument("state and grid dimensions differ".into()));
        }
        state.try_psi(&vec![0.0; grid.dim()], t, units)?;
        Ok(GridWave::from_fn(grid, t, |x| state.psi(x, t, units)))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalize(&mut self) {
        let s = self.norm_sqr().sqrt();
        self.data.iter_mut().for_each(|v| *v /= s);
    }

    pub fn density(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn spectrum(&self, fft: &GridFft) -> Vec<Complex64> {
        let mut s = self.data.clone();
        fft.forward(&mut s);
        s
    }

    /// Fraction of spectral weight beyond [`TAIL_BAND`] of the Nyquist wavenumber.
    pub fn tail_fraction(&self, fft: &GridFft) -> f64 {
        let s = self.spectrum(fft);
        let (mut tail, mut total) = (0.0, 0.0);
        for (k, v) in s.iter().enumerate() {
            let w = v.norm_sqr();
            total += w;
            let outside = self
                .mode(k)
                .iter()
                .enumerate()
                .any(|(axis, &j)| self.grid.wavenumber(axis, j).abs() > TAIL_BAND * self.grid.nyquist(axis));
            if outside {
                tail += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    fn mode(&self, k: usize) -> Vec<usize> {
        match self.grid.dim() {
            1 => vec![k],
            _ => vec![k / self.grid.points[1], k % self.grid.points[1]],
        }
    }

    /// Spectral derivative `∂_σ ψ` on the whole grid.
    pub fn derivative(&self, fft: &GridFft, sigma: &MultiIndex) -> Vec<Complex64> {
        let mut s = self.spectrum(fft);
        for (k, v) in s.iter_mut().enumerate() {
            let mut factor = Complex64::new(1.0, 0.0);
            for (axis, j) in self.mode(k).into_iter().enumerate() {
                let c = sigma.count(axis);
                if c == 0 {
                    continue;
                }
                if self.grid.is_nyquist_bin(axis, j) {
                    factor = Complex64::new(0.0, 0.0);
                } else {
                    factor *= Complex64::new(0.0, self.grid.wavenumber(axis, j)).powu(c);
                }
            }
            *v *= factor;
        }
        fft.inverse(&mut s);
        s
    }

    /// Retained Fourier modes for pointwise evaluation.
    pub fn snapshot(&self, fft: &GridFft) -> SpectralSnapshot {
        SpectralSnapshot::new(self, fft)
    }

    /// Momentums at `q` by spectral differentiation and Fourier interpolation.
    pub fn extract(&self, q: &[f64], indices: &[MultiIndex], units: &Units) -> Result<Vec<Complex64>> {
        self.snapshot(&GridFft::new(&self.grid)).momentums(q, indices, units, crate::jetstate::DEFAULT_NODE_FLOOR)
    }

    /// Bohmian velocity on every grid point. Points with `|ψ|` below `floor` times the peak
    /// are masked.
    pub fn bohm_velocity(&self, fft: &GridFft, units: &Units, floor: f64) -> VelocityGrid {
        let n = self.grid.dim();
        let peak = self.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let grads: Vec<Vec<Complex64>> = (0..n).map(|i| self.derivative(fft, &MultiIndex::unit(n, i))).collect();
        let mask: Vec<bool> = self.data.iter().map(|v| v.norm() <= floor * peak).collect();
        let values = (0..n)
            .map(|i| {
                self.data
                    .iter()
                    .zip(&grads[i])
                    .zip(&mask)
                    .map(|((psi, g), &masked)| if masked { 0.0 } else { units.hbar / units.masses[i] * (g / psi).im })
                    .collect()
            })
            .collect();
        VelocityGrid { values, mask }
    }

    /// Probability current `(ħ/m) Im(ψ̄ ∂_i ψ)` per axis.
    pub fn current(&self, fft: &GridFft, units: &Units) -> Vec<Vec<f64>> {
        let n = self.grid.dim();
        (0..n)
            .map(|i| {
                let g = self.derivative(fft, &MultiIndex::unit(n, i));
                self.data.iter().zip(&g).map(|(psi, g)| units.hbar / units.masses[i] * (psi.conj() * g).im).collect()
            })
            .collect()
    }

    /// Write the binary snapshot and its JSON sidecar (`<path>.json`).
    pub fn write_binary(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, super::io::encode_grid(self))?;
        let sidecar = super::io::GridSidecar::from(self);
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        std::fs::write(side, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read_binary(path: &std::path::Path) -> Result<GridWave> {
        super::io::decode_grid(&std::fs::read(path)?)
    }
}

/// Masked Bohmian velocity on a grid.
#[derive(Clone, Debug)]
pub struct VelocityGrid {
    pub values: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

/// Nonnegligible Fourier modes of a wave function, for evaluating `∂_σ ψ` anywhere.
#[derive(Clone, Debug)]
pub struct SpectralSnapshot {
    pub t: f64,
    lower: Vec<f64>,
    wavenumbers: Vec<Vec<f64>>,
    coefficients: Vec<Complex64>,
    peak: f64,
}

impl SpectralSnapshot {
    pub fn new(w: &GridWave, fft: &GridFft) -> Self {
        let s = w.spectrum(fft);
        let total = w.grid.len() as f64;
        let max = s.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut wavenumbers = Vec::new();
        let mut coefficients = Vec::new();
        for (k, v) in s.iter().enumerate() {
            if v.norm() <= SPECTRAL_FLOOR * max {
                continue;
            }
            let mode = w.mode(k);
            if mode.iter().enumerate().any(|(axis, &j)| w.grid.is_nyquist_bin(axis, j)) {
                continue;
            }
            wavenumbers.push(mode.iter().enumerate().map(|(axis, &j)| w.grid.wavenumber(axis, j)).collect());
            coefficients.push(v / total);
        }
        let peak = w.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        SpectralSnapshot { t: w.t, lower: w.grid.lower.clone(), wavenumbers, coefficients, peak }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    /// Taylor coefficients of `ψ` at `q`.
    pub fn psi_series(&self, space: &SeriesSpace, q: &[f64]) -> Vec<Complex64> {
        let n = self.dim();
        let max = space.max_order() as usize;
        let mut derivs = space.zeros();
        let mut powers = vec![vec![Complex64::new(0.0, 0.0); max + 1]; n];
        for (k, c) in self.wavenumbers.iter().zip(&self.coefficients) {
            let phase: f64 = (0..n).map(|i| k[i] * (q[i] - self.lower[i])).sum();
            let base = c * Complex64::from_polar(1.0, phase);
            for i in 0..n {
                let ik = Complex64::new(0.0, k[i]);
                powers[i][0] = Complex64::new(1.0, 0.0);
                for p in 1..=max {
                    powers[i][p] = powers[i][p - 1] * ik;
                }
            }
            for (d, sigma) in derivs.iter_mut().zip(space.indices()) {
                let mut v = base;
                for (i, &cnt) in sigma.counts().iter().enumerate() {
                    v *= powers[i][cnt as usize];
                }
                *d += v;
            }
        }
        space.from_derivatives(&derivs)
    }

    pub fn psi(&self, q: &[f64]) -> Complex64 {
        self.psi_series(&SeriesSpace::new(q.len(), 0), q)[0]
    }

    pub fn momentums(
        &self,
        q: &[f64],
        indices: &[MultiIndex],
        units: &Units,
        node_floor: f64,
    ) -> Result<Vec<Complex64>> {
        let max = indices.iter().map(|m| m.order()).max().unwrap_or(0);
        let space = SeriesSpace::new(q.len(), max);
        let psi = self.psi_series(&space, q);
        let floor = node_floor * self.peak;
        if !(psi[0].norm() > floor) {
            return Err(Error::Node { amplitude: psi[0].norm(), floor });
        }
        log_momentums(&space, &psi, indices, units.hbar)
    }
}

/// Strang-split Fourier propagator for a fixed potential and step.
pub struct SplitStepper {
    fft: GridFft,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    pub dt: f64,
}

impl SplitStepper {
    pub fn new(grid: &Grid, potential: &PotentialSpec, units: &Units, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let hbar = units.hbar;
        let mut max_phase: f64 = 0.0;
        let fft = GridFft::new(grid);
        let half_potential = (0..grid.len())
            .map(|k| Complex64::from_polar(1.0, -potential.value(&grid.point(k)) * dt / (2.0 * hbar)))
            .collect();
        let kinetic = (0..grid.len())
            .map(|k| {
                let mode: Vec<usize> = match grid.dim() {
                    1 => vec![k],
                    _ => vec![k / grid.points[1], k % grid.points[1]],
                };
                let energy: f64 = mode
                    .iter()
                    .enumerate()
                    .map(|(axis, &j)| {
                        let kk = grid.wavenumber(axis, j);
                        hbar * hbar * kk * kk / (2.0 * units.masses[axis])
                    })
                    .sum();
                let resolved = mode
                    .iter()
                    .enumerate()
                    .all(|(axis, &j)| grid.wavenumber(axis, j).abs() <= TAIL_BAND * grid.nyquist(axis));
                if resolved {
                    max_phase = max_phase.max(energy * dt / hbar);
                }
                Complex64::from_polar(1.0, -energy * dt / hbar)
            })
            .collect();
        if max_phase >= PI {
            return Err(Error::InvalidArgument(format!("kinetic phase per step {max_phase:.3} exceeds pi; reduce dt")));
        }
        Ok(SplitStepper { fft, half_potential, kinetic, dt })
    }

    pub fn fft(&self) -> &GridFft {
        &self.fft
    }

    /// Fail with `GridTooCoarse` when the spectral tail of `w` exceeds `limit`.
    pub fn check_resolution(&self, w: &GridWave, limit: f64) -> Result<()> {
        let tail = w.tail_fraction(&self.fft);
        if tail > limit {
            return Err(Error::GridTooCoarse { tail, limit });
        }
        Ok(())
    }

    pub fn step(&self, w: &mut GridWave) {
        for (v, p) in w.data.iter_mut().zip(&self.half_potential) {
            *v *= p;
        }
        self.fft.forward(&mut w.data);
        for (v, k) in w.data.iter_mut().zip(&self.kinetic) {
            *v *= k;
        }
        self.fft.inverse(&mut w.data);
        for (v, p) in w.data.iter_mut().zip(&self.half_potential) {
            *v *= p;
        }
        w.t += self.dt;
    }

    pub fn advance(&self, w: &mut GridWave, steps: usize) {
        for _ in 0..steps {
            self.step(w);
        }
    }
}

/// Evolve `w` to `t_final` with steps no longer than `dt`, checking resolution first.
pub fn evolve(w: &GridWave, potential: &PotentialSpec, units: &Units, dt: f64, t_final: f64) -> Result<GridWave> {
    let span = t_final - w.t;
    let steps = (span / dt).ceil().max(0.0) as usize;
    let mut out = w.clone();
    if steps == 0 {
        return Ok(out);
    }
    let stepper = SplitStepper::new(&w.grid, potential, units, span / steps as f64)?;
    stepper.check_resolution(w, DEFAULT_TAIL_LIMIT)?;
    stepper.advance(&mut out, steps);
    out.t = t_final;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::analytic::{FreeGaussian, HoCoherent};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gaussian() -> AnalyticState {
        AnalyticState::FreeGaussian(FreeGaussian { a: 1.0, k0: 0.5, x0: 0.0 })
    }

    #[test]
    fn free_gaussian_matches_analytic() {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[40.0], &[1024]).unwrap();
        let w0 = GridWave::from_analytic(grid.clone(), &gaussian(), 0.0, &units).unwrap();
        let w = evolve(&w0, &PotentialSpec::Free, &units, 1e-3, 1.0).unwrap();
        let exact = GridWave::from_analytic(grid, &gaussian(), 1.0, &units).unwrap();
        let err = w.data.iter().zip(&exact.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!((w.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn plane_wave_phase() {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[2.0 * PI], &[32]).unwrap();
        let k = 3.0;
        let w0 = GridWave::from_fn(grid, 0.0, |x| Complex64::from_polar(1.0, k * x[0]));
        let w = evolve(&w0, &PotentialSpec::Free, &units, 0.01, 0.5).unwrap();
        let phase = Complex64::from_polar(1.0, -k * k * 0.5 / 2.0);
        for (a, b) in w.data.iter().zip(&w0.data) {
            assert!((a - b * phase).norm() < 1e-12);
        }
    }

    #[test]
    fn coherent_state_period() {
        let units = Units::natural(1);
        let s = AnalyticState::HoCoherent(HoCoherent { omega: 1.0, alpha: c(1.0, 0.0) });
        let grid = Grid::centered(&[0.0], &[30.0], &[512]).unwrap();
        let w0 = GridWave::from_analytic(grid, &s, 0.0, &units).unwrap();
        let pot = s.potential(&units).unwrap();
        let w = evolve(&w0, &pot, &units, 1e-3, 2.0 * PI).unwrap();
        let err = w.density().iter().zip(w0.density()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn norm_drift_per_step() {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[30.0], &[256]).unwrap();
        let mut w = GridWave::from_analytic(grid.clone(), &gaussian(), 0.0, &units).unwrap();
        let st = SplitStepper::new(&grid, &PotentialSpec::poly1d(&[0.0, 0.0, 0.5, 0.1]), &units, 1e-3).unwrap();
        for _ in 0..50 {
            let before = w.norm_sqr();
            st.step(&mut w);
            assert!((w.norm_sqr() - before).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[40.0], &[32]).unwrap();
        let w0 = GridWave::from_analytic(grid, &gaussian(), 0.0, &units).unwrap();
        let err = evolve(&w0, &PotentialSpec::Free, &units, 1e-2, 1.0);
        assert!(matches!(err, Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn extraction_matches_analytic() {
        let units = Units::natural(1);
        let s = gaussian();
        let grid = Grid::centered(&[0.0], &[40.0], &[1024]).unwrap();
        let w = GridWave::from_analytic(grid, &s, 0.7, &units).unwrap();
        let idx = MultiIndex::all_up_to(1, 6);
        let q = [0.4];
        let g = w.extract(&q, &idx, &units).unwrap();
        let a = s.momentums(&q, 0.7, &idx, &units, 1e-12).unwrap();
        for (k, (x, y)) in g.iter().zip(&a).enumerate().skip(1) {
            let scale = y.norm() + 1.0;
            assert!((x - y).norm() / scale < 1e-7, "order {k}: {x} vs {y}");
        }
    }

    #[test]
    fn extraction_2d() {
        let units = Units::natural(2);
        let s = AnalyticState::Product {
            factors: vec![gaussian(), AnalyticState::FreeGaussian(FreeGaussian { a: 0.8, k0: -1.0, x0: 0.2 })],
        };
        let grid = Grid::centered(&[0.0, 0.0], &[24.0, 20.0], &[128, 128]).unwrap();
        let w = GridWave::from_analytic(grid, &s, 0.3, &units).unwrap();
        let idx = MultiIndex::all_up_to(2, 4);
        let q = [0.1, -0.3];
        let g = w.extract(&q, &idx, &units).unwrap();
        let a = s.momentums(&q, 0.3, &idx, &units, 1e-12).unwrap();
        for (x, y) in g.iter().zip(&a).skip(1) {
            assert!((x - y).norm() / (y.norm() + 1.0) < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn bohm_velocity_examples() {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[2.0 * PI], &[64]).unwrap();
        let fft = GridFft::new(&grid);
        let pw = GridWave::from_fn(grid.clone(), 0.0, |x| Complex64::from_polar(1.0, 2.0 * x[0]));
        let v = pw.bohm_velocity(&fft, &units, 1e-8);
        assert!(v.values[0].iter().all(|x| (x - 2.0).abs() < 1e-12));

        let grid = Grid::centered(&[0.0], &[30.0], &[256]).unwrap();
        let fft = GridFft::new(&grid);
        let real = GridWave::from_fn(grid, 0.0, |x| c((-x[0] * x[0] / 2.0).exp(), 0.0));
        let v = real.bohm_velocity(&fft, &units, 1e-8);
        for (k, x) in v.values[0].iter().enumerate() {
            if real.data[k].norm() > 1e-3 {
                assert!(x.abs() < 1e-12);
            }
        }
        assert!(v.mask.iter().any(|&m| m));
    }
}
