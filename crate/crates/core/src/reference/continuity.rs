//! Discrete check of `∂_t ρ + div j = 0` between two grid states.

use crate::error::{Error, Result};
use crate::jetstate::Units;
use crate::multiindex::MultiIndex;
use crate::reference::grid::{GridFft, GridWave};

#[derive(Debug, Clone)]
pub struct ContinuityResidual {
    pub field: Vec<f64>,
    pub max_norm: f64,
    pub l2_norm: f64,
}

fn divergence(w: &GridWave, fft: &GridFft, units: &Units) -> Vec<f64> {
    let n = w.grid.dim();
    let current = w.current(fft, units);
    let mut div = vec![0.0; w.grid.len()];
    for (axis, j) in current.into_iter().enumerate() {
        let as_wave = GridWave { grid: w.grid.clone(), t: w.t, data: j.into_iter().map(|v| v.into()).collect() };
        let d = as_wave.derivative(fft, &MultiIndex::unit(n, axis));
        div.iter_mut().zip(&d).for_each(|(a, b)| *a += b.re);
    }
    div
}

/// Residual at the midpoint of `prev` and `next`: centered time difference of `|ψ|²` plus the
/// average spectral divergence of the current.
pub fn continuity_residual(prev: &GridWave, next: &GridWave, units: &Units) -> Result<ContinuityResidual> {
    if prev.grid != next.grid {
        return Err(Error::InvalidArgument("continuity residual needs matching grids".into()));
    }
    let dt = next.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("states must be in increasing time order".into()));
    }
    let fft = GridFft::new(&prev.grid);
    let dp = divergence(prev, &fft, units);
    let dn = divergence(next, &fft, units);
    let field: Vec<f64> = prev
        .data
        .iter()
        .zip(&next.data)
        .zip(dp.iter().zip(&dn))
        .map(|((a, b), (x, y))| (b.norm_sqr() - a.norm_sqr()) / dt + 0.5 * (x + y))
        .collect();
    let max_norm = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l2_norm = (field.iter().map(|v| v * v).sum::<f64>() * prev.grid.cell_volume()).sqrt();
    Ok(ContinuityResidual { field, max_norm, l2_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::analytic::{AnalyticState, FreeGaussian};
    use crate::reference::grid::Grid;
    use num_complex::Complex64;

    fn gaussian() -> AnalyticState {
        AnalyticState::FreeGaussian(FreeGaussian { a: 1.0, k0: 1.0, x0: 0.0 })
    }

    #[test]
    fn residual_second_order_in_dt() {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[40.0], &[512]).unwrap();
        let mut errs = Vec::new();
        for dt in [0.04, 0.02, 0.01] {
            let a = GridWave::from_analytic(grid.clone(), &gaussian(), 0.5 - dt / 2.0, &units).unwrap();
            let b = GridWave::from_analytic(grid.clone(), &gaussian(), 0.5 + dt / 2.0, &units).unwrap();
            errs.push(continuity_residual(&a, &b, &units).unwrap().max_norm);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.9, "{errs:?}");
        }
    }

    #[test]
    fn stationary_state_is_zero() {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[30.0], &[256]).unwrap();
        let ground = |t: f64| {
            GridWave::from_fn(grid.clone(), t, |x| {
                Complex64::from_polar(std::f64::consts::PI.powf(-0.25) * (-x[0] * x[0] / 2.0).exp(), -0.5 * t)
            })
        };
        let r = continuity_residual(&ground(0.0), &ground(0.1), &units).unwrap();
        assert!(r.max_norm < 1e-13, "{}", r.max_norm);
    }

    #[test]
    fn nonsolution_detected() {
        let units = Units::natural(1);
        let grid = Grid::centered(&[0.0], &[30.0], &[256]).unwrap();
        let a = GridWave::from_analytic(grid.clone(), &gaussian(), 0.0, &units).unwrap();
        let mut b = a.clone();
        b.t = 0.01;
        for (k, v) in b.data.iter_mut().enumerate() {
            *v *= 1.0 + 0.3 * ((k as f64) * 0.37).sin();
        }
        let r = continuity_residual(&a, &b, &units).unwrap();
        assert!(r.max_norm > 1.0);
    }
}
