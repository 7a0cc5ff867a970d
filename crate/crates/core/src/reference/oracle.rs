//! Momentum sources used as closure and as independent references.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jetstate::{Units, DEFAULT_NODE_FLOOR};
use crate::multiindex::MultiIndex;
use crate::potential::PotentialSpec;
use crate::reference::analytic::{log_momentums, AnalyticState};
use crate::reference::grid::{GridWave, SpectralSnapshot, SplitStepper, DEFAULT_TAIL_LIMIT};
use crate::series::SeriesSpace;

/// Anything that can report `p_σ(q, t)` of a known wave function.
pub trait MomentumOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn momentums(&self, q: &[f64], t: f64, indices: &[MultiIndex], units: &Units) -> Result<Vec<Complex64>>;

    /// Taylor coefficients of `ψ` at `(q, t)`.
    fn psi_series(&self, space: &SeriesSpace, q: &[f64], t: f64, units: &Units) -> Result<Vec<Complex64>>;
}

impl MomentumOracle for AnalyticState {
    fn dim(&self) -> usize {
        AnalyticState::dim(self)
    }

    fn momentums(&self, q: &[f64], t: f64, indices: &[MultiIndex], units: &Units) -> Result<Vec<Complex64>> {
        AnalyticState::momentums(self, q, t, indices, units, DEFAULT_NODE_FLOOR)
    }

    fn psi_series(&self, space: &SeriesSpace, q: &[f64], t: f64, units: &Units) -> Result<Vec<Complex64>> {
        AnalyticState::psi_series(self, space, q, t, units)
    }
}

/// Spectral snapshots of a grid solution on a uniform time lattice.
pub struct GridHistory {
    t0: f64,
    interval: f64,
    snapshots: Vec<SpectralSnapshot>,
}

impl GridHistory {
    /// Evolve `initial` to `t_final`, keeping a snapshot every `every` solver steps of size `dt`.
    pub fn record(
        initial: &GridWave,
        potential: &PotentialSpec,
        units: &Units,
        dt: f64,
        every: usize,
        t_final: f64,
    ) -> Result<GridHistory> {
        let stepper = SplitStepper::new(&initial.grid, potential, units, dt)?;
        stepper.check_resolution(initial, DEFAULT_TAIL_LIMIT)?;
        let every = every.max(1);
        let interval = dt * every as f64;
        let count = ((t_final - initial.t) / interval).ceil() as usize;
        let mut w = initial.clone();
        let mut snapshots = vec![w.snapshot(stepper.fft())];
        // three extra snapshots keep cubic interpolation centered up to t_final
        for k in 1..=count + 2 {
            stepper.advance(&mut w, every);
            w.t = initial.t + k as f64 * interval;
            snapshots.push(w.snapshot(stepper.fft()));
        }
        Ok(GridHistory { t0: initial.t, interval, snapshots })
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.snapshots.iter().map(|s| s.t)
    }

    pub fn snapshot(&self, k: usize) -> Option<&SpectralSnapshot> {
        self.snapshots.get(k)
    }

    fn peak(&self, t: f64) -> f64 {
        let k = (((t - self.t0) / self.interval).round().max(0.0) as usize).min(self.snapshots.len() - 1);
        self.snapshots[k].peak()
    }
}

impl MomentumOracle for GridHistory {
    fn dim(&self) -> usize {
        self.snapshots[0].dim()
    }

    fn momentums(&self, q: &[f64], t: f64, indices: &[MultiIndex], units: &Units) -> Result<Vec<Complex64>> {
        let max = indices.iter().map(|m| m.order()).max().unwrap_or(0);
        let space = SeriesSpace::new(q.len(), max);
        let psi = self.psi_series(&space, q, t, units)?;
        let floor = DEFAULT_NODE_FLOOR * self.peak(t);
        if !(psi[0].norm() > floor) {
            return Err(Error::Node { amplitude: psi[0].norm(), floor });
        }
        log_momentums(&space, &psi, indices, units.hbar)
    }

    fn psi_series(&self, space: &SeriesSpace, q: &[f64], t: f64, _units: &Units) -> Result<Vec<Complex64>> {
        let s = (t - self.t0) / self.interval;
        let last = self.snapshots.len() - 1;
        if s < -1e-9 || s > last as f64 + 1e-9 {
            return Err(Error::OracleUnavailable(format!("no grid history at t = {t}")));
        }
        let nearest = s.round();
        if (s - nearest).abs() < 1e-9 {
            return Ok(self.snapshots[nearest as usize].psi_series(space, q));
        }
        let start = (s.floor() as isize - 1).clamp(0, last as isize - 3) as usize;
        let mut out = space.zeros();
        for j in start..start + 4 {
            let weight: f64 =
                (start..start + 4).filter(|&l| l != j).map(|l| (s - l as f64) / (j as f64 - l as f64)).product();
            let series = self.snapshots[j].psi_series(space, q);
            out.iter_mut().zip(&series).for_each(|(o, v)| *o += v * weight);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::analytic::FreeGaussian;
    use crate::reference::grid::Grid;

    #[test]
    fn history_interpolates_between_snapshots() {
        let units = Units::natural(1);
        let s = AnalyticState::FreeGaussian(FreeGaussian { a: 1.0, k0: 0.3, x0: 0.0 });
        let grid = Grid::centered(&[0.0], &[40.0], &[512]).unwrap();
        let w = GridWave::from_analytic(grid, &s, 0.0, &units).unwrap();
        let h = GridHistory::record(&w, &PotentialSpec::Free, &units, 1e-3, 2, 0.5).unwrap();
        let idx = MultiIndex::all_up_to(1, 4);
        for t in [0.0, 0.1, 0.1234, 0.4999] {
            let a = MomentumOracle::momentums(&s, &[0.2], t, &idx, &units).unwrap();
            let g = h.momentums(&[0.2], t, &idx, &units).unwrap();
            for (x, y) in a.iter().zip(&g).skip(1) {
                assert!((x - y).norm() < 1e-8, "t={t}: {x} vs {y}");
            }
        }
        assert!(h.momentums(&[0.2], 5.0, &idx, &units).is_err());
    }
}
