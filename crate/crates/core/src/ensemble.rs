//! Trajectory ensembles: sampling from `|ψ|²`, advection, equivariance statistics and
//! Gibbs entropy.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{integrate, ClosurePolicy, IntegrateOptions};
use crate::error::{Error, Result};
use crate::jetstate::{JetState, Units, DEFAULT_NODE_FLOOR};
use crate::multiindex::MultiIndex;
use crate::potential::PotentialSpec;
use crate::reference::{AnalyticState, FrozenVelocity, Grid, GridHistory, GridWave, MomentumOracle};

/// Piecewise-constant density on the cells of a grid (cells centered on grid points).
#[derive(Clone, Debug)]
pub struct DensityGrid {
    pub grid: Grid,
    /// Normalized cell probabilities.
    pub mass: Vec<f64>,
    row_cdf: Vec<f64>,
    cell_cdf: Vec<f64>,
}

impl DensityGrid {
    pub fn from_weights(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("density weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("density has zero mass".into()));
        }
        let mass: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let cols = if grid.dim() == 1 { grid.len() } else { grid.points[1] };
        let mut row_cdf = Vec::new();
        let mut cell_cdf = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for row in mass.chunks(cols) {
            let row_total: f64 = row.iter().sum();
            let mut inner = 0.0;
            for m in row {
                inner += m;
                cell_cdf.push(if row_total > 0.0 { inner / row_total } else { 1.0 });
            }
            acc += row_total;
            row_cdf.push(acc);
        }
        Ok(DensityGrid { grid, mass, row_cdf, cell_cdf })
    }

    pub fn from_wave(w: &GridWave) -> Result<Self> {
        DensityGrid::from_weights(w.grid.clone(), w.density())
    }

    pub fn from_analytic(state: &AnalyticState, t: f64, units: &Units, grid: Grid) -> Result<Self> {
        let w = GridWave::from_analytic(grid, state, t, units)?;
        DensityGrid::from_wave(&w)
    }

    fn cols(&self) -> usize {
        if self.grid.dim() == 1 {
            self.grid.len()
        } else {
            self.grid.points[1]
        }
    }

    /// Draw one point: cell by inverse CDF (marginal row, then column), uniform inside the cell.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let cols = self.cols();
        let u: f64 = rng.random();
        let row = self.row_cdf.partition_point(|&c| c < u).min(self.row_cdf.len() - 1);
        let cell = if self.grid.dim() == 1 {
            self.cell_cdf.partition_point(|&c| c < u).min(cols - 1)
        } else {
            let v: f64 = rng.random();
            let slice = &self.cell_cdf[row * cols..(row + 1) * cols];
            row * cols + slice.partition_point(|&c| c < v).min(cols - 1)
        };
        let centers = self.grid.point(cell);
        centers.iter().enumerate().map(|(axis, c)| c + (rng.random::<f64>() - 0.5) * self.grid.spacing(axis)).collect()
    }

    /// Cumulative distribution along a 1D grid.
    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.grid.spacing(0);
        let s = (x - self.grid.lower[0]) / h + 0.5;
        if s <= 0.0 {
            return 0.0;
        }
        let k = s.floor() as usize;
        if k >= self.mass.len() {
            return 1.0;
        }
        let before = if k == 0 { 0.0 } else { self.cell_cdf[k - 1] };
        before + (s - k as f64) * self.mass[k]
    }

    /// Flat cell index containing `x`, if inside the grid.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = Vec::with_capacity(x.len());
        for (axis, v) in x.iter().enumerate() {
            let s = ((v - self.grid.lower[axis]) / self.grid.spacing(axis) + 0.5).floor();
            if s < 0.0 || s >= self.grid.points[axis] as f64 {
                return None;
            }
            idx.push(s as usize);
        }
        Some(if idx.len() == 1 { idx[0] } else { idx[0] * self.grid.points[1] + idx[1] })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Ensemble {
    pub t: f64,
    pub positions: Vec<Vec<f64>>,
    /// Indices of trajectories dropped near wave-function zeros.
    pub excluded: Vec<usize>,
    pub seed: u64,
    pub provenance: String,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn excluded_fraction(&self) -> f64 {
        self.excluded.len() as f64 / self.positions.len().max(1) as f64
    }

    /// Positions of trajectories that were not excluded.
    pub fn active(&self) -> impl Iterator<Item = &Vec<f64>> {
        let mut skip = self.excluded.iter().peekable();
        self.positions.iter().enumerate().filter_map(move |(i, p)| {
            if skip.peek() == Some(&&i) {
                skip.next();
                None
            } else {
                Some(p)
            }
        })
    }

    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.active().map(|p| p[axis]).collect()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let n = self.positions.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("id".to_string()).chain((0..n).map(|i| format!("x_{i}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for (id, p) in self.positions.iter().enumerate() {
            let row: Vec<String> = p.iter().map(f64::to_string).collect();
            writeln!(out, "{id},{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn sample_density(density: &DensityGrid, count: usize, seed: u64, t: f64) -> Ensemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..count).map(|_| density.sample(&mut rng)).collect();
    Ensemble {
        t,
        positions,
        excluded: Vec::new(),
        seed,
        provenance: format!("inverse-cdf on {:?} cells", density.grid.points),
    }
}

/// A time-dependent velocity field.
pub trait VelocityField: Sync {
    /// The field at one instant.
    fn frozen(&self, t: f64) -> Result<Box<dyn FrozenField + '_>>;
}

pub trait FrozenField: Sync {
    fn velocity(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl FrozenField for FrozenVelocity {
    fn velocity(&self, x: &[f64]) -> Result<Vec<f64>> {
        FrozenVelocity::velocity(self, x)
    }
}

/// Bohmian velocity `Re p_j / m_j` of any momentum source.
pub struct BohmField<'a> {
    pub source: &'a dyn MomentumOracle,
    pub units: Units,
}

struct OracleAt<'a> {
    source: &'a dyn MomentumOracle,
    units: &'a Units,
    t: f64,
}

impl FrozenField for OracleAt<'_> {
    fn velocity(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let idx: Vec<MultiIndex> = (0..n).map(|i| MultiIndex::unit(n, i)).collect();
        let p = self.source.momentums(x, self.t, &idx, self.units)?;
        Ok(p.iter().zip(&self.units.masses).map(|(p, m)| p.re / m).collect())
    }
}

impl VelocityField for BohmField<'_> {
    fn frozen(&self, t: f64) -> Result<Box<dyn FrozenField + '_>> {
        Ok(Box::new(OracleAt { source: self.source, units: &self.units, t }))
    }
}

/// Bohmian velocity of a closed-form state.
pub struct AnalyticField<'a> {
    pub state: &'a AnalyticState,
    pub units: Units,
    pub node_floor: f64,
}

impl<'a> AnalyticField<'a> {
    pub fn new(state: &'a AnalyticState, units: Units) -> Self {
        AnalyticField { state, units, node_floor: DEFAULT_NODE_FLOOR }
    }
}

impl VelocityField for AnalyticField<'_> {
    fn frozen(&self, t: f64) -> Result<Box<dyn FrozenField + '_>> {
        Ok(Box::new(self.state.velocity_at(t, &self.units, self.node_floor)?))
    }
}

/// Uniform translation, mainly for tests.
pub struct ConstantField(pub Vec<f64>);

impl FrozenField for ConstantField {
    fn velocity(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

impl VelocityField for ConstantField {
    fn frozen(&self, _t: f64) -> Result<Box<dyn FrozenField + '_>> {
        Ok(Box::new(ConstantField(self.0.clone())))
    }
}

fn rk4_stage(
    x: &[f64],
    h: f64,
    start: &dyn FrozenField,
    mid: &dyn FrozenField,
    end: &dyn FrozenField,
) -> Result<Vec<f64>> {
    let shift = |k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = start.velocity(x)?;
    let k2 = mid.velocity(&shift(&k1, h / 2.0))?;
    let k3 = mid.velocity(&shift(&k2, h / 2.0))?;
    let k4 = end.velocity(&shift(&k3, h))?;
    Ok((0..x.len()).map(|j| x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])).collect())
}

/// Move every point along the field with rk4, all points in lockstep. Points whose path meets
/// a node or a non-finite velocity stop where they are and are listed as excluded.
pub fn advect(e: &Ensemble, field: &dyn VelocityField, t_final: f64, dt: f64) -> Result<Ensemble> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("advection step must be positive".into()));
    }
    let steps = ((t_final - e.t).abs() / dt).ceil().max(1.0) as usize;
    let h = (t_final - e.t) / steps as f64;
    let mut alive = vec![true; e.len()];
    for &i in &e.excluded {
        alive[i] = false;
    }
    let mut positions = e.positions.clone();
    let mut start = field.frozen(e.t)?;
    for k in 0..steps {
        let t = e.t + k as f64 * h;
        let mid = field.frozen(t + h / 2.0)?;
        let end = field.frozen(t + h)?;
        positions.par_iter_mut().zip(alive.par_iter_mut()).try_for_each(|(x, ok)| -> Result<()> {
            if !*ok {
                return Ok(());
            }
            match rk4_stage(x, h, start.as_ref(), mid.as_ref(), end.as_ref()) {
                Ok(y) if y.iter().all(|v| v.is_finite()) => *x = y,
                Ok(_) | Err(Error::Node { .. }) | Err(Error::NodeApproach { .. }) => *ok = false,
                Err(other) => return Err(other),
            }
            Ok(())
        })?;
        start = end;
    }
    let excluded = alive.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i).collect();
    Ok(Ensemble { t: t_final, positions, excluded, seed: e.seed, provenance: e.provenance.clone() })
}

/// Advect by integrating the full momentum hierarchy of each point.
pub fn advect_hierarchy(
    e: &Ensemble,
    psi: &AnalyticState,
    units: &Units,
    order: u32,
    pot: &PotentialSpec,
    closure: &ClosurePolicy,
    opts: &IntegrateOptions,
) -> Result<Ensemble> {
    let moved: Vec<Result<Option<Vec<f64>>>> = e
        .positions
        .par_iter()
        .map(|x| {
            let state = match JetState::from_wavefunction_analytic(psi, x, e.t, order, units) {
                Ok(s) => s,
                Err(Error::Node { .. }) => return Ok(None),
                Err(other) => return Err(other),
            };
            match integrate(&state, pot, closure, opts) {
                Ok(rec) => Ok(Some(rec.final_state.q)),
                Err(Error::NodeApproach { .. }) | Err(Error::StepFailure { .. }) => Ok(None),
                Err(other) => Err(other),
            }
        })
        .collect();
    let mut positions = Vec::with_capacity(e.len());
    let mut excluded = e.excluded.clone();
    for (i, r) in moved.into_iter().enumerate() {
        match r? {
            Some(y) => positions.push(y),
            None => {
                positions.push(e.positions[i].clone());
                excluded.push(i);
            }
        }
    }
    excluded.sort_unstable();
    excluded.dedup();
    Ok(Ensemble { t: opts.t_final, positions, excluded, seed: e.seed, provenance: e.provenance.clone() })
}

/// Bohmian field of a grid history, for advection through a numerical solution.
pub fn grid_field(history: &GridHistory, units: Units) -> BohmField<'_> {
    BohmField { source: history, units }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TestStatistic {
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
}

/// `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`, the Kolmogorov survival function.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov statistic against a CDF.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> TestStatistic {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    let sn = n.sqrt();
    TestStatistic { statistic: d, p_value: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d), samples: xs.len() }
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestStatistic {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    TestStatistic {
        statistic: d,
        p_value: kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d),
        samples: xa.len() + xb.len(),
    }
}

/// Pearson χ² with bins of roughly equal expected count (at least 20 per bin).
pub fn chi_squared_test(points: &[Vec<f64>], density: &DensityGrid) -> Result<TestStatistic> {
    let n = points.len();
    let k = ((n as f64 / 20.0).sqrt().floor() as usize).clamp(2, 10);
    let bins_per_row = if density.grid.dim() == 1 { k * k } else { k };
    let band_count = if density.grid.dim() == 1 { 1 } else { k };
    let cols = density.cols();
    let rows = density.mass.len() / cols;
    let row_mass: Vec<f64> = density.mass.chunks(cols).map(|r| r.iter().sum()).collect();
    let mut band_of_row = vec![0usize; rows];
    let mut acc = 0.0;
    for r in 0..rows {
        band_of_row[r] = ((acc * band_count as f64).floor() as usize).min(band_count - 1);
        acc += row_mass[r];
    }
    let mut bin_of_cell = vec![0usize; density.mass.len()];
    let mut expected = vec![0.0; band_count * bins_per_row];
    for band in 0..band_count {
        let members: Vec<usize> = (0..rows).filter(|&r| band_of_row[r] == band).collect();
        let mut col_mass = vec![0.0; cols];
        for &r in &members {
            for c in 0..cols {
                col_mass[c] += density.mass[r * cols + c];
            }
        }
        let total: f64 = col_mass.iter().sum();
        let mut acc = 0.0;
        for c in 0..cols {
            let bin = if total > 0.0 {
                ((acc / total * bins_per_row as f64).floor() as usize).min(bins_per_row - 1)
            } else {
                0
            };
            acc += col_mass[c];
            for &r in &members {
                bin_of_cell[r * cols + c] = band * bins_per_row + bin;
            }
        }
    }
    for (cell, m) in density.mass.iter().enumerate() {
        expected[bin_of_cell[cell]] += m * n as f64;
    }
    let mut observed = vec![0.0; expected.len()];
    for p in points {
        let cell =
            density.cell_of(p).ok_or_else(|| Error::InvalidArgument("sample point outside the density grid".into()))?;
        observed[bin_of_cell[cell]] += 1.0;
    }
    let mut chi2 = 0.0;
    let mut used = 0;
    for (o, e) in observed.iter().zip(&expected) {
        if *e > 0.0 {
            chi2 += (o - e) * (o - e) / e;
            used += 1;
        }
    }
    let dof = (used.max(2) - 1) as f64;
    let dist = ChiSquared::new(dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(TestStatistic { statistic: chi2, p_value: 1.0 - dist.cdf(chi2), samples: n })
}

/// KS statistic (1D) or χ² (2D) of an ensemble against a density.
pub fn equivariance_test(e: &Ensemble, density: &DensityGrid) -> Result<TestStatistic> {
    if density.grid.dim() == 1 {
        Ok(ks_test(&e.coordinate(0), |x| density.cdf(x)))
    } else {
        let pts: Vec<Vec<f64>> = e.active().cloned().collect();
        chi_squared_test(&pts, density)
    }
}

/// `∫ ρ ln(|ψ|²/ρ) dV` on cell masses; both arguments are normalized first.
pub fn gibbs_entropy(rho: &[f64], psi_density: &[f64]) -> Result<f64> {
    if rho.len() != psi_density.len() {
        return Err(Error::InvalidArgument("densities on different grids".into()));
    }
    let zr: f64 = rho.iter().sum();
    let zp: f64 = psi_density.iter().sum();
    let mut total = 0.0;
    for (r, p) in rho.iter().zip(psi_density) {
        let (r, p) = (r / zr, p / zp);
        if r > 0.0 {
            if p <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += r * (p / r).ln();
        }
    }
    Ok(total)
}

/// `−∫ ρ ln ρ dV` for a density given at cells of volume `cell`.
pub fn classical_entropy(rho: &[f64], cell: f64) -> f64 {
    -rho.iter().filter(|r| **r > 0.0).map(|r| r * r.ln() * cell).sum::<f64>()
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassicalGibbsReport {
    pub uniform_entropy: f64,
    pub trial_entropies: Vec<f64>,
    pub passed: bool,
}

/// The uniform density on a bounded cell must have the largest entropy among `trials`
/// (densities normalized on cells of volume `cell`).
pub fn classical_gibbs_check(trials: &[Vec<f64>], cell: f64) -> ClassicalGibbsReport {
    let count = trials.first().map_or(1, Vec::len);
    let volume = count as f64 * cell;
    let uniform = vec![1.0 / volume; count];
    let uniform_entropy = classical_entropy(&uniform, cell);
    let trial_entropies: Vec<f64> = trials
        .iter()
        .map(|t| {
            let z: f64 = t.iter().sum::<f64>() * cell;
            let normalized: Vec<f64> = t.iter().map(|v| v / z).collect();
            classical_entropy(&normalized, cell)
        })
        .collect();
    let passed = trial_entropies.iter().all(|s| *s <= uniform_entropy + 1e-12);
    ClassicalGibbsReport { uniform_entropy, trial_entropies, passed }
}
