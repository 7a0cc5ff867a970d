//! Measurement models: von Neumann pointers, position measurement, detector arrays and the
//! double slit.

use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ensemble::{advect, ks_test, sample_density, AnalyticField, DensityGrid, Ensemble, TestStatistic};
use crate::error::{Error, Result};
use crate::jetstate::Units;
use crate::multiindex::MultiIndex;
use crate::reference::{AnalyticState, FreeGaussian, Grid, GridWave};

/// Largest overlap between adjacent pointer packets accepted by [`outcome_statistics`].
pub const PACKET_OVERLAP_LIMIT: f64 = 1e-6;
/// A branch counts as present at a point when it exceeds this fraction of its peak.
pub const BRANCH_PRESENCE: f64 = 1e-6;
pub const DEFAULT_MATCH_TOLERANCE: f64 = 1e-6;

/// Gaussian pointer of nominal width `Δy` coupled with strength `g₀` for a time `τ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerSetup {
    pub width: f64,
    pub coupling: f64,
    pub duration: f64,
}

impl PointerSetup {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !(self.coupling * self.duration > 0.0) {
            return Err(Error::InvalidArgument("pointer needs positive width and g₀τ".into()));
        }
        Ok(())
    }

    /// `g₀τ`.
    pub fn gain(&self) -> f64 {
        self.coupling * self.duration
    }

    /// Standard deviation of `|φ|²`; the packet is negligible beyond `Δy/2`.
    pub fn pointer_std(&self) -> f64 {
        self.width / 12.0
    }

    /// `Δy / 2g₀τ`, the resolution on the rescaled pointer axis.
    pub fn half_precision(&self) -> f64 {
        self.width / (2.0 * self.gain())
    }

    /// Normalized pointer packet centred at `y0`.
    pub fn packet(&self, y0: f64) -> AnalyticState {
        AnalyticState::FreeGaussian(FreeGaussian { a: std::f64::consts::SQRT_2 * self.pointer_std(), k0: 0.0, x0: y0 })
    }

    fn phi(&self, y: f64) -> f64 {
        let s = self.pointer_std();
        (-(y * y) / (4.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s).powf(0.25)
    }
}

/// Pointer entangled with a discrete observable: `Σ_i c_i |a_i⟩ φ(y − g₀τ a_i)`.
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteJoint {
    pub setup: PointerSetup,
    pub eigenvalues: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
}

impl DiscreteJoint {
    /// Born weights `|c_i|²` after normalization.
    pub fn weights(&self) -> Vec<f64> {
        let total: f64 = self.amplitudes.iter().map(|c| c.norm_sqr()).sum();
        self.amplitudes.iter().map(|c| c.norm_sqr() / total).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|a| self.setup.gain() * a).collect()
    }

    /// Largest `∫|φ_i||φ_j| dy` over pairs of packets with nonzero weight.
    pub fn max_overlap(&self) -> f64 {
        let s = self.setup.pointer_std();
        let centers = self.centers();
        let w = self.weights();
        let mut worst: f64 = 0.0;
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                if w[i] > 0.0 && w[j] > 0.0 {
                    let d = centers[i] - centers[j];
                    worst = worst.max((-(d * d) / (8.0 * s * s)).exp());
                }
            }
        }
        worst
    }

    /// Branch waves on the pointer axis, with their amplitudes.
    pub fn branches(&self) -> Vec<(Complex64, AnalyticState)> {
        self.amplitudes.iter().zip(self.centers()).map(|(c, y)| (*c, self.setup.packet(y))).collect()
    }

    fn pointer_density(&self) -> Result<DensityGrid> {
        let s = self.setup.pointer_std();
        let centers = self.centers();
        let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * s;
        let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * s;
        let points = (((hi - lo) / (s / 20.0)).ceil() as usize).max(64);
        let grid = Grid::centered(&[(lo + hi) / 2.0], &[hi - lo], &[points])?;
        let w = self.weights();
        let weights = (0..grid.len())
            .map(|k| {
                let y = grid.point(k)[0];
                centers.iter().zip(&w).map(|(c, wi)| wi * self.setup.phi(y - c).powi(2)).sum()
            })
            .collect();
        DensityGrid::from_weights(grid, weights)
    }
}

/// Pointer coupled to a discrete observable with eigenvalues `a_i` and amplitudes `c_i`.
pub fn impulsive_measure_discrete(
    setup: PointerSetup,
    eigenvalues: Vec<f64>,
    amplitudes: Vec<Complex64>,
) -> Result<DiscreteJoint> {
    setup.validate()?;
    if eigenvalues.len() != amplitudes.len() || eigenvalues.is_empty() {
        return Err(Error::InvalidArgument("one amplitude per eigenvalue".into()));
    }
    if amplitudes.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::InvalidArgument("all amplitudes vanish".into()));
    }
    Ok(DiscreteJoint { setup, eigenvalues, amplitudes })
}

/// Joint `(x, y)` grid wide enough for the pointer before and after the coupling.
fn joint_grid(psi: &GridWave, setup: PointerSetup) -> Result<Grid> {
    let gain = setup.gain();
    let x_grid = &psi.grid;
    let (x_lo, x_hi) = (x_grid.lower[0], x_grid.lower[0] + x_grid.extent[0]);
    let y_lo = (gain * x_lo).min(0.0) - setup.width;
    let y_hi = (gain * x_hi).max(0.0) + setup.width;
    let y_points = (((y_hi - y_lo) / (setup.pointer_std() / 4.0)).ceil() as usize).next_power_of_two();
    Grid::centered(
        &[(x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0],
        &[x_grid.extent[0], y_hi - y_lo],
        &[x_grid.points[0], y_points],
    )
}

fn joint_wave(psi: &GridWave, setup: PointerSetup, grid: Grid, gain: f64) -> GridWave {
    let cols = grid.points[1];
    let data = (0..grid.len())
        .map(|k| {
            let p = grid.point(k);
            psi.data[k / cols] * setup.phi(p[1] - gain * p[0])
        })
        .collect();
    GridWave { grid, t: psi.t, data }
}

/// Position measurement `Ψ(x, y) = ψ(x) φ(y − g₀τ x)` on an `(x, y)` grid.
pub fn impulsive_measure_position(psi: &GridWave, setup: PointerSetup) -> Result<GridWave> {
    setup.validate()?;
    if psi.grid.dim() != 1 {
        return Err(Error::InvalidArgument("position measurement takes a one-dimensional wave".into()));
    }
    let grid = joint_grid(psi, setup)?;
    Ok(joint_wave(psi, setup, grid, setup.gain()))
}

/// Position measurement by explicit stepping of `exp(−i g₀ dt x p_y/ħ)` on the joint grid,
/// optionally interleaved with free motion of both coordinates.
pub fn time_resolved_position_measure(
    psi: &GridWave,
    setup: PointerSetup,
    units: &Units,
    steps: usize,
    with_kinetic: bool,
) -> Result<GridWave> {
    setup.validate()?;
    if units.dim() != 2 || steps == 0 {
        return Err(Error::InvalidArgument("joint stepping needs units for (x, y) and at least one step".into()));
    }
    if psi.grid.dim() != 1 {
        return Err(Error::InvalidArgument("position measurement takes a one-dimensional wave".into()));
    }
    let grid = joint_grid(psi, setup)?;
    let start = joint_wave(psi, setup, grid.clone(), 0.0);
    let (rows, cols) = (grid.points[0], grid.points[1]);
    let dt = setup.duration / steps as f64;
    let mut w = start;
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(cols);
    let inverse = planner.plan_fft_inverse(cols);
    let fft = crate::reference::GridFft::new(&grid);
    let kinetic_half: Vec<Complex64> = (0..grid.len())
        .map(|k| {
            let (i, j) = (k / cols, k % cols);
            let (kx, ky) = (grid.wavenumber(0, i), grid.wavenumber(1, j));
            let e = units.hbar * (kx * kx / (2.0 * units.masses[0]) + ky * ky / (2.0 * units.masses[1]));
            Complex64::from_polar(1.0, -e * dt / 2.0)
        })
        .collect();
    let kinetic = |w: &mut GridWave| {
        fft.forward(&mut w.data);
        w.data.iter_mut().zip(&kinetic_half).for_each(|(a, f)| *a *= f);
        fft.inverse(&mut w.data);
    };
    for _ in 0..steps {
        if with_kinetic {
            kinetic(&mut w);
        }
        for i in 0..rows {
            let x = grid.coordinate(0, i);
            let row = &mut w.data[i * cols..(i + 1) * cols];
            forward.process(row);
            for (j, a) in row.iter_mut().enumerate() {
                *a *= Complex64::from_polar(1.0 / cols as f64, -setup.coupling * dt * x * grid.wavenumber(1, j));
            }
            inverse.process(row);
        }
        if with_kinetic {
            kinetic(&mut w);
        }
    }
    w.t = psi.t + setup.duration;
    Ok(w)
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeTable {
    pub eigenvalues: Vec<f64>,
    pub counts: Vec<u64>,
    pub expected: Vec<f64>,
    pub chi_squared: f64,
    pub p_value: f64,
}

impl OutcomeTable {
    pub fn frequencies(&self) -> Vec<f64> {
        let n: u64 = self.counts.iter().sum();
        self.counts.iter().map(|c| *c as f64 / n as f64).collect()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "label,eigenvalue,count,frequency,born")?;
        for (k, f) in self.frequencies().iter().enumerate() {
            writeln!(out, "{k},{},{},{f},{}", self.eigenvalues[k], self.counts[k], self.expected[k])?;
        }
        Ok(())
    }
}

/// Multinomial goodness of fit of counts against probabilities; zero-probability cells must be empty.
pub fn multinomial_chi_squared(counts: &[u64], probabilities: &[f64]) -> Result<(f64, f64)> {
    let n: u64 = counts.iter().sum();
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (o, p) in counts.iter().zip(probabilities) {
        if *p > 0.0 {
            let e = p * n as f64;
            chi2 += (*o as f64 - e).powi(2) / e;
            cells += 1;
        } else if *o > 0 {
            return Ok((f64::INFINITY, 0.0));
        }
    }
    if cells < 2 {
        return Ok((0.0, 1.0));
    }
    let dist = ChiSquared::new((cells - 1) as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((chi2, 1.0 - dist.cdf(chi2)))
}

/// Sample pointer readings from `|Ψ|²` and read each off as the nearest packet.
pub fn outcome_statistics(joint: &DiscreteJoint, runs: usize, seed: u64) -> Result<OutcomeTable> {
    let overlap = joint.max_overlap();
    if overlap > PACKET_OVERLAP_LIMIT {
        return Err(Error::PacketsOverlap { a: 0, b: 1, overlap });
    }
    let density = joint.pointer_density()?;
    let sample = sample_density(&density, runs, seed, 0.0);
    let centers = joint.centers();
    let mut counts = vec![0u64; centers.len()];
    for y in sample.coordinate(0) {
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - y).abs().total_cmp(&(b.1 - y).abs()))
            .map(|(k, _)| k)
            .unwrap();
        counts[nearest] += 1;
    }
    let expected = joint.weights();
    let (chi_squared, p_value) = multinomial_chi_squared(&counts, &expected)?;
    Ok(OutcomeTable { eigenvalues: joint.eigenvalues.clone(), counts, expected, chi_squared, p_value })
}

#[derive(Clone, Debug, Serialize)]
pub struct PositionOutcomes {
    /// Rescaled pointer readings `ỹ = y / g₀τ`.
    pub readings: Vec<f64>,
    pub ks: TestStatistic,
}

/// Sample `(x, y)` from the joint density and compare the readings `ỹ` with `|ψ(x)|²`.
pub fn position_outcome_statistics(
    joint: &GridWave,
    psi: &GridWave,
    setup: PointerSetup,
    runs: usize,
    seed: u64,
) -> Result<PositionOutcomes> {
    let density = DensityGrid::from_wave(joint)?;
    let sample = sample_density(&density, runs, seed, joint.t);
    let readings: Vec<f64> = sample.coordinate(1).iter().map(|y| y / setup.gain()).collect();
    let reference = DensityGrid::from_wave(psi)?;
    let ks = ks_test(&readings, |x| reference.cdf(x));
    Ok(PositionOutcomes { readings, ks })
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSelection {
    pub label: usize,
    /// The selected branch, renormalized.
    pub effective: AnalyticState,
    /// `Σ_{j≠k} |c_j ψ_j| / |c_k ψ_k|` at the point.
    pub overlap: f64,
    /// Largest `|Δp_σ| / (1 + |p_σ|)` over `|σ| ≤ 2` between the full and the branch wave.
    pub mismatch: f64,
    pub consistent: bool,
}

/// Branch whose packet contains `point`; the others are kept in the state, only labelled empty.
pub fn collapse_select(
    branches: &[(Complex64, AnalyticState)],
    point: &[f64],
    t: f64,
    units: &Units,
    tolerance: f64,
) -> Result<BranchSelection> {
    if branches.is_empty() {
        return Err(Error::InvalidArgument("no branches".into()));
    }
    let mut local = Vec::with_capacity(branches.len());
    let mut present = Vec::new();
    for (k, (c, s)) in branches.iter().enumerate() {
        let value = (c * s.try_psi(point, t, units)?).norm();
        let peak = c.norm() * s.peak_amplitude(t, units)?;
        if peak > 0.0 && value / peak > BRANCH_PRESENCE {
            present.push(k);
        }
        local.push(value);
    }
    if present.len() > 1 {
        return Err(Error::AmbiguousBranch(present));
    }
    let label = match present.first() {
        Some(&k) => k,
        None => (0..local.len()).max_by(|a, b| local[*a].total_cmp(&local[*b])).unwrap(),
    };
    let others: f64 = local.iter().enumerate().filter(|(k, _)| *k != label).map(|(_, v)| v).sum();
    let overlap = others / local[label];
    let n = point.len();
    let indices = MultiIndex::all_up_to(n, 2);
    let full = AnalyticState::Superposition { terms: branches.to_vec() };
    let effective = branches[label].1.clone();
    let p_full = full.momentums(point, t, &indices[1..], units, 0.0)?;
    let p_branch = effective.momentums(point, t, &indices[1..], units, 0.0)?;
    let mismatch = p_full.iter().zip(&p_branch).map(|(a, b)| (a - b).norm() / (1.0 + b.norm())).fold(0.0, f64::max);
    let consistent = overlap >= 1e-8 || mismatch <= tolerance;
    Ok(BranchSelection { label, effective, overlap, mismatch, consistent })
}

/// Array of detectors whose trigger regions tile the line; detector `i` shifts its own
/// coordinate from near 0 to near `Y` when the particle passes within `radius` of `x_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorArray {
    pub centers: Vec<f64>,
    pub radius: f64,
    pub shift: f64,
}

impl DetectorArray {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.centers.is_empty() {
            return Err(Error::InvalidArgument("detector array needs centers and a positive radius".into()));
        }
        for w in self.centers.windows(2) {
            if (w[1] - w[0] - 2.0 * self.radius).abs() > 1e-9 * self.radius {
                return Err(Error::InvalidArgument("trigger regions must tile the line".into()));
            }
        }
        Ok(())
    }

    /// Shadow profile: a smooth bump equal to 1 at the detector and 0 beyond the radius.
    pub fn shadow(&self, d: f64) -> f64 {
        let u = d / self.radius;
        if u.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - u * u)).exp()
        }
    }

    /// Untriggered profile: 0 inside the trigger region, 1 outside.
    pub fn untouched(&self, d: f64) -> f64 {
        if d.abs() < self.radius {
            0.0
        } else {
            1.0
        }
    }

    fn pointer(y: f64) -> f64 {
        (-(y * y) / 4.0).exp()
    }

    /// `ψ(x) Π_i [a(x − x_i) φ(y_i − Y) + b(x − x_i) φ(y_i)]`.
    pub fn after_measurement(&self, psi: Complex64, x: f64, ys: &[f64]) -> Complex64 {
        self.centers.iter().zip(ys).fold(psi, |acc, (xi, y)| {
            acc * (self.shadow(x - xi) * Self::pointer(y - self.shift) + self.untouched(x - xi) * Self::pointer(*y))
        })
    }

    /// The term of the sum over detectors with detector `k` triggered.
    pub fn branch(&self, k: usize, psi: Complex64, x: f64, ys: &[f64]) -> Complex64 {
        let mut value = psi * self.shadow(x - self.centers[k]) * Self::pointer(ys[k] - self.shift);
        for (i, y) in ys.iter().enumerate() {
            if i != k {
                value *= Self::pointer(*y);
            }
        }
        value
    }

    /// Detector whose trigger region contains the particle.
    pub fn select(&self, x: f64) -> Result<usize> {
        let inside: Vec<usize> =
            (0..self.centers.len()).filter(|&i| (x - self.centers[i]).abs() < self.radius).collect();
        match inside.as_slice() {
            [k] => Ok(*k),
            [] => Err(Error::InvalidArgument(format!("x = {x} lies outside every trigger region"))),
            _ => Err(Error::AmbiguousBranch(inside)),
        }
    }
}

/// Two Gaussian slit packets at `±separation/2` released at `t = 0` and observed on a screen
/// at `screen_time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleSlit {
    pub separation: f64,
    pub slit_width: f64,
    pub screen_time: f64,
    pub open: [bool; 2],
    pub detectors: bool,
    /// Displacement of a triggered detector coordinate.
    pub detector_shift: f64,
    pub detector_mass: f64,
    pub count: usize,
    pub dt: f64,
    pub bins: usize,
    pub seed: u64,
}

impl Default for DoubleSlit {
    fn default() -> Self {
        DoubleSlit {
            separation: 6.0,
            slit_width: 1.0,
            screen_time: 10.0,
            open: [true, true],
            detectors: false,
            detector_shift: 20.0,
            detector_mass: 100.0,
            count: 100_000,
            dt: 0.05,
            bins: 120,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DoubleSlitReport {
    pub visibility: f64,
    pub fringe_wavenumber: f64,
    pub ks: TestStatistic,
    pub excluded_fraction: f64,
    pub branch_counts: Vec<usize>,
    pub order_preserved: bool,
    pub histogram: Vec<(f64, u64)>,
    /// Expected fraction of the ensemble in each histogram bin.
    pub expected: Vec<f64>,
    #[serde(skip)]
    pub screen: Ensemble,
}

impl DoubleSlitReport {
    pub fn write_histogram_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "x,count,expected")?;
        let n = self.screen.len() - self.screen.excluded.len();
        for ((x, c), e) in self.histogram.iter().zip(&self.expected) {
            writeln!(out, "{x},{c},{}", e * n as f64)?;
        }
        Ok(())
    }
}

impl DoubleSlit {
    fn slit(&self, k: usize) -> AnalyticState {
        let x0 = if k == 0 { -self.separation / 2.0 } else { self.separation / 2.0 };
        AnalyticState::FreeGaussian(FreeGaussian { a: self.slit_width, k0: 0.0, x0 })
    }

    fn detector(&self, on: bool) -> AnalyticState {
        AnalyticState::FreeGaussian(FreeGaussian {
            a: std::f64::consts::SQRT_2,
            k0: 0.0,
            x0: if on { self.detector_shift } else { 0.0 },
        })
    }

    fn open_slits(&self) -> Vec<usize> {
        (0..2).filter(|&k| self.open[k]).collect()
    }

    /// Particle wave without detectors.
    pub fn particle_state(&self) -> AnalyticState {
        AnalyticState::Superposition {
            terms: self.open_slits().into_iter().map(|k| (Complex64::new(1.0, 0.0), self.slit(k))).collect(),
        }
    }

    /// Branches of the particle–detector wave on `(x, y₁, y₂)`.
    pub fn joint_branches(&self) -> Vec<(Complex64, AnalyticState)> {
        self.open_slits()
            .into_iter()
            .map(|k| {
                let factors = vec![self.slit(k), self.detector(k == 0), self.detector(k == 1)];
                (Complex64::new(1.0, 0.0), AnalyticState::Product { factors })
            })
            .collect()
    }

    fn units(&self) -> Units {
        if self.detectors {
            Units { hbar: 1.0, masses: vec![1.0, self.detector_mass, self.detector_mass] }
        } else {
            Units::natural(1)
        }
    }

    /// Fringe wavenumber `2dτ / a²(1 + τ²)` for slits at `±d`.
    pub fn fringe_wavenumber(&self) -> f64 {
        let a2 = self.slit_width * self.slit_width;
        let tau = self.screen_time / a2;
        self.separation * tau / (a2 * (1.0 + tau * tau))
    }

    fn screen_grid(&self) -> Result<Grid> {
        let a2 = self.slit_width * self.slit_width;
        let tau = self.screen_time / a2;
        let spread = self.slit_width * (1.0 + tau * tau).sqrt();
        let half = self.separation / 2.0 + 12.0 * spread;
        Grid::centered(&[0.0], &[2.0 * half], &[8192])
    }

    /// Particle density on the screen: `|Σ ψ_k|²` without detectors, `Σ |ψ_k|²` with them.
    pub fn screen_density(&self) -> Result<DensityGrid> {
        let grid = self.screen_grid()?;
        let units = Units::natural(1);
        let t = self.screen_time;
        let weights = if self.detectors {
            (0..grid.len())
                .map(|k| {
                    self.open_slits().iter().map(|&s| self.slit(s).psi(&grid.point(k), t, &units).norm_sqr()).sum()
                })
                .collect()
        } else {
            let psi = self.particle_state();
            (0..grid.len()).map(|k| psi.psi(&grid.point(k), t, &units).norm_sqr()).collect()
        };
        DensityGrid::from_weights(grid, weights)
    }

    fn initial_ensemble(&self) -> Result<(Ensemble, Vec<usize>)> {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[self.separation + 24.0 * self.slit_width], &[16384])?;
        if !self.detectors {
            let d = DensityGrid::from_analytic(&self.particle_state(), 0.0, &units, grid)?;
            return Ok((sample_density(&d, self.count, self.seed, 0.0), Vec::new()));
        }
        let slits = self.open_slits();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let chooser = WeightedIndex::new(vec![1.0; slits.len()]).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let densities = slits
            .iter()
            .map(|&k| DensityGrid::from_analytic(&self.slit(k), 0.0, &units, grid.clone()))
            .collect::<Result<Vec<_>>>()?;
        let pointer = Normal::new(0.0, 1.0).unwrap();
        let mut positions = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            let b = chooser.sample(&mut rng);
            let x = densities[b].sample(&mut rng)[0];
            let mut y = [pointer.sample(&mut rng), pointer.sample(&mut rng)];
            y[slits[b]] += self.detector_shift;
            positions.push(vec![x, y[0], y[1]]);
        }
        let branches = self.joint_branches();
        let units = self.units();
        let mut counts = vec![0; branches.len()];
        for p in &positions {
            counts[collapse_select(&branches, p, 0.0, &units, DEFAULT_MATCH_TOLERANCE)?.label] += 1;
        }
        let e = Ensemble {
            t: 0.0,
            positions,
            excluded: Vec::new(),
            seed: self.seed,
            provenance: "slit packets with detector pointers".into(),
        };
        Ok((e, counts))
    }

    pub fn run(&self) -> Result<DoubleSlitReport> {
        if self.open_slits().is_empty() || !(self.dt > 0.0) || self.count == 0 || self.bins == 0 {
            return Err(Error::InvalidArgument("double slit needs an open slit, a positive step and samples".into()));
        }
        let (start, branch_counts) = self.initial_ensemble()?;
        let units = self.units();
        let (state, order_preserved);
        if self.detectors {
            state = AnalyticState::Superposition { terms: self.joint_branches() };
        } else {
            state = self.particle_state();
        }
        let screen = advect(&start, &AnalyticField::new(&state, units), self.screen_time, self.dt)?;
        if self.detectors {
            order_preserved = true;
        } else {
            let mut order: Vec<usize> = (0..start.len()).filter(|i| !screen.excluded.contains(i)).collect();
            order.sort_by(|a, b| start.positions[*a][0].total_cmp(&start.positions[*b][0]));
            order_preserved = order.windows(2).all(|w| screen.positions[w[0]][0] <= screen.positions[w[1]][0]);
        }
        let xs = screen.coordinate(0);
        let density = self.screen_density()?;
        let ks = ks_test(&xs, |x| density.cdf(x));
        let k = self.fringe_wavenumber();
        let n = xs.len() as f64;
        let (c, s) = xs.iter().fold((0.0, 0.0), |(c, s), x| (c + (k * x).cos(), s + (k * x).sin()));
        let visibility = 2.0 * (c * c + s * s).sqrt() / n;
        let (histogram, expected) = self.histogram(&xs, &density);
        Ok(DoubleSlitReport {
            visibility,
            fringe_wavenumber: k,
            ks,
            excluded_fraction: screen.excluded_fraction(),
            branch_counts,
            order_preserved,
            histogram,
            expected,
            screen,
        })
    }

    fn histogram(&self, xs: &[f64], density: &DensityGrid) -> (Vec<(f64, u64)>, Vec<f64>) {
        let a2 = self.slit_width * self.slit_width;
        let tau = self.screen_time / a2;
        let half = self.separation / 2.0 + 4.0 * self.slit_width * ((1.0 + tau * tau) / 2.0).sqrt();
        let width = 2.0 * half / self.bins as f64;
        let mut counts = vec![0u64; self.bins];
        for x in xs {
            let b = ((x + half) / width).floor();
            if b >= 0.0 && (b as usize) < self.bins {
                counts[b as usize] += 1;
            }
        }
        let centers: Vec<f64> = (0..self.bins).map(|b| -half + (b as f64 + 0.5) * width).collect();
        let expected = centers.iter().map(|c| density.cdf(c + width / 2.0) - density.cdf(c - width / 2.0)).collect();
        (centers.into_iter().zip(counts).collect(), expected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn pointer() -> PointerSetup {
        PointerSetup { width: 1.0, coupling: 10.0, duration: 1.0 }
    }

    #[test]
    fn eigenstate_reading_is_sharp() {
        let joint = impulsive_measure_discrete(pointer(), vec![0.7], vec![c(1.0)]).unwrap();
        let table = outcome_statistics(&joint, 1000, 1).unwrap();
        assert_eq!(table.counts, vec![1000]);
        let density = joint.pointer_density().unwrap();
        let e = sample_density(&density, 2000, 2, 0.0);
        let half = pointer().half_precision();
        assert!(e.coordinate(0).iter().all(|y| (y / pointer().gain() - 0.7).abs() <= half));
    }

    #[test]
    fn balanced_and_unbalanced_frequencies() {
        let n = 10_000;
        let even = impulsive_measure_discrete(pointer(), vec![0.0, 1.0], vec![c(1.0), c(1.0)]).unwrap();
        let f = outcome_statistics(&even, n, 3).unwrap().frequencies();
        assert!((f[0] - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
        let uneven = impulsive_measure_discrete(pointer(), vec![-1.0, 1.0], vec![c(0.6), c(0.8)]).unwrap();
        let t = outcome_statistics(&uneven, n, 4).unwrap();
        let sd = (0.36 * 0.64 / n as f64).sqrt();
        assert!((t.frequencies()[0] - 0.36).abs() < 3.0 * sd);
        assert!(t.p_value > 1e-4);
    }

    #[test]
    fn weights_of_separated_packets() {
        let setup = PointerSetup { width: 0.1, coupling: 1.0, duration: 1.0 };
        let joint = impulsive_measure_discrete(setup, vec![0.0, 1.0], vec![c(1.0), c(1.0)]).unwrap();
        let d = joint.pointer_density().unwrap();
        let left: f64 = (0..d.grid.len()).filter(|&k| d.grid.point(k)[0] < 0.5).map(|k| d.mass[k]).sum();
        assert!((left - 0.5).abs() < 1e-9);
        assert!(joint.max_overlap() < 1e-6);
    }

    #[test]
    fn overlapping_packets_are_rejected() {
        let setup = PointerSetup { width: 1.0, coupling: 0.1, duration: 1.0 };
        let joint = impulsive_measure_discrete(setup, vec![0.0, 1.0], vec![c(1.0), c(1.0)]).unwrap();
        assert!(matches!(outcome_statistics(&joint, 10, 1), Err(Error::PacketsOverlap { .. })));
    }

    fn gaussian_wave() -> GridWave {
        let grid = Grid::centered(&[0.0], &[16.0], &[256]).unwrap();
        let psi = AnalyticState::FreeGaussian(FreeGaussian { a: 1.0, k0: 0.0, x0: 0.0 });
        GridWave::from_analytic(grid, &psi, 0.0, &Units::natural(1)).unwrap()
    }

    #[test]
    fn position_reading_follows_born_density() {
        let setup = PointerSetup { width: 1.2, coupling: 1.0, duration: 1.0 };
        let psi = gaussian_wave();
        let joint = impulsive_measure_position(&psi, setup).unwrap();
        let total: f64 = joint.density().iter().sum::<f64>() * joint.grid.cell_volume();
        assert!((total - 1.0).abs() < 1e-6);
        let out = position_outcome_statistics(&joint, &psi, setup, 20_000, 5).unwrap();
        assert!(out.ks.statistic < 0.03, "{:?}", out.ks);
    }

    #[test]
    fn joint_density_lies_on_the_diagonal() {
        let setup = PointerSetup { width: 1.2, coupling: 2.0, duration: 1.0 };
        let joint = impulsive_measure_position(&gaussian_wave(), setup).unwrap();
        let half = setup.half_precision();
        let d = joint.density();
        let total: f64 = d.iter().sum();
        let outside: f64 = (0..joint.grid.len())
            .filter(|&k| {
                let p = joint.grid.point(k);
                (p[1] / setup.gain() - p[0]).abs() > half
            })
            .map(|k| d[k])
            .sum();
        assert!(outside / total < 1e-6);
    }

    #[test]
    fn stepping_reproduces_closed_form() {
        let setup = PointerSetup { width: 1.2, coupling: 2.0, duration: 0.5 };
        let psi = gaussian_wave();
        let exact = impulsive_measure_position(&psi, setup).unwrap();
        let units = Units { hbar: 1.0, masses: vec![1.0, 1.0] };
        let stepped = time_resolved_position_measure(&psi, setup, &units, 50, false).unwrap();
        let err = exact.data.iter().zip(&stepped.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        let short = PointerSetup { coupling: 100.0, duration: 0.01, ..setup };
        let long = PointerSetup { coupling: 10.0, duration: 0.1, ..setup };
        let gap = |s: PointerSetup| {
            let a = impulsive_measure_position(&psi, s).unwrap();
            let b = time_resolved_position_measure(&psi, s, &units, 100, true).unwrap();
            a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
        };
        assert!(gap(short) < gap(long));
    }

    fn two_packets() -> Vec<(Complex64, AnalyticState)> {
        vec![
            (c(1.0), AnalyticState::FreeGaussian(FreeGaussian { a: 0.5, k0: -1.0, x0: -5.0 })),
            (c(1.0), AnalyticState::FreeGaussian(FreeGaussian { a: 0.5, k0: 1.0, x0: 5.0 })),
        ]
    }

    #[test]
    fn selection_inside_a_packet() {
        let units = Units::natural(1);
        let s = collapse_select(&two_packets(), &[4.6], 0.0, &units, DEFAULT_MATCH_TOLERANCE).unwrap();
        assert_eq!(s.label, 1);
        assert!(s.overlap < 1e-8 && s.mismatch < 1e-6 && s.consistent);
        let later = collapse_select(&two_packets(), &[6.5], 1.0, &units, DEFAULT_MATCH_TOLERANCE).unwrap();
        assert_eq!(later.label, 1);
    }

    #[test]
    fn midpoint_is_ambiguous() {
        let units = Units::natural(1);
        let wide: Vec<_> = two_packets()
            .into_iter()
            .map(|(w, s)| match s {
                AnalyticState::FreeGaussian(g) => (w, AnalyticState::FreeGaussian(FreeGaussian { a: 2.0, ..g })),
                other => (w, other),
            })
            .collect();
        assert!(matches!(collapse_select(&wide, &[0.0], 0.0, &units, 1e-6), Err(Error::AmbiguousBranch(_))));
    }

    #[test]
    fn detector_array_collapse() {
        let array = DetectorArray { centers: vec![-2.0, 0.0, 2.0], radius: 1.0, shift: 20.0 };
        array.validate().unwrap();
        let psi = |x: f64| Complex64::new((-x * x / 8.0).exp(), 0.3 * x).exp();
        let x = 0.3;
        assert_eq!(array.select(x).unwrap(), 1);
        let ys = [0.1, 19.7, -0.2];
        let full = array.after_measurement(psi(x), x, &ys);
        let branch = array.branch(1, psi(x), x, &ys);
        assert!((full - branch).norm() < 1e-15 * branch.norm());
        let h = 1e-5;
        let log_slope = |f: &dyn Fn(f64) -> Complex64| (f(x + h).ln() - f(x - h).ln()) / (2.0 * h);
        let a = log_slope(&|x| array.after_measurement(psi(x), x, &ys));
        let b = log_slope(&|x| array.branch(1, psi(x), x, &ys));
        assert!((a - b).norm() < 1e-9);
        assert!(array.select(1.0).is_err() || array.select(1.0).unwrap() == 2);
    }

    fn small_slit(detectors: bool) -> DoubleSlit {
        DoubleSlit { count: 20_000, detectors, ..DoubleSlit::default() }
    }

    #[test]
    fn fringes_without_detectors() {
        let r = small_slit(false).run().unwrap();
        assert!(r.visibility > 0.5, "{}", r.visibility);
        assert!(r.ks.statistic < 0.02, "{:?}", r.ks);
        assert!(r.order_preserved);
        assert_eq!(r.excluded_fraction, 0.0);
    }

    #[test]
    fn analytic_fringe_contrast() {
        let slit = DoubleSlit::default();
        let d = slit.screen_density().unwrap();
        let k = slit.fringe_wavenumber();
        let at = |x: f64| d.mass[d.cell_of(&[x]).unwrap()];
        let (centre, first_min) = (at(0.0), at(std::f64::consts::PI / k));
        assert!(first_min < 0.05 * centre, "{first_min} vs {centre}");
        assert!((at(3.0) - at(-3.0)).abs() < 1e-9 * centre);
    }

    #[test]
    fn detectors_remove_fringes() {
        let r = small_slit(true).run().unwrap();
        assert!(r.visibility < 0.05, "{}", r.visibility);
        assert!(r.ks.statistic < 0.02, "{:?}", r.ks);
        let n = r.branch_counts.iter().sum::<usize>() as f64;
        assert!((r.branch_counts[0] as f64 - n / 2.0).abs() < 4.0 * (n / 4.0).sqrt());
    }

    #[test]
    fn single_slit_envelope() {
        let r = DoubleSlit { count: 5000, open: [false, true], ..DoubleSlit::default() }.run().unwrap();
        assert!(r.ks.statistic < 0.03);
        assert!(r.visibility < 0.1);
    }
}
