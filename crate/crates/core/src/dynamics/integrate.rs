use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{extended_momentums, h_sigma_with, kinetic_factors, rhs_from_extended, ClosurePolicy};
use crate::error::{Error, Result};
use crate::jetstate::{ActionPair, JetState, Units};
use crate::multiindex::MultiIndex;
use crate::potential::PotentialSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Rk45,
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    pub method: Method,
    /// Fixed step for rk4, initial step for rk45.
    pub dt: f64,
    pub t_final: f64,
    /// Local error tolerance of the adaptive method (absolute and relative).
    pub tol: f64,
    /// Spacing of recorded samples.
    pub sample_interval: f64,
    /// Largest tolerated `|R|` before reporting an approach to a node.
    pub node_bound: f64,
    pub min_dt: f64,
    /// Momentums kept in the record; all stored ones when `None`.
    pub retained: Option<Vec<MultiIndex>>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            method: Method::Rk45,
            dt: 1e-3,
            t_final: 1.0,
            tol: 1e-9,
            sample_interval: 0.01,
            node_bound: 30.0,
            min_dt: 1e-12,
            retained: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub units: Units,
    pub times: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub action: Vec<ActionPair>,
    pub p0: Vec<Complex64>,
    pub retained: Vec<MultiIndex>,
    /// One row per sample, aligned with `retained`.
    pub momentums: Vec<Vec<Complex64>>,
    pub steps: usize,
    pub rejected: usize,
    pub closure: String,
    pub final_state: JetState,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn momentum(&self, sample: usize, sigma: &MultiIndex) -> Option<Complex64> {
        if sigma.is_empty() {
            return Some(self.p0[sample]);
        }
        let k = self.retained.iter().position(|m| m == sigma)?;
        Some(self.momentums[sample][k])
    }

    /// Time series of one retained momentum.
    pub fn series(&self, sigma: &MultiIndex) -> Result<Vec<Complex64>> {
        (0..self.len())
            .map(|i| self.momentum(i, sigma).ok_or_else(|| Error::MissingMomentum(sigma.canonical_name())))
            .collect()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let n = self.q.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("q_{i}")));
        header.extend((0..n).map(|i| format!("v_{i}")));
        header.push("S".into());
        header.push("R".into());
        for m in &self.retained {
            header.push(format!("re_{}", m.canonical_name()));
            header.push(format!("im_{}", m.canonical_name()));
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.q[i].iter().map(f64::to_string));
            row.extend(self.v[i].iter().map(f64::to_string));
            row.push(self.action[i].s.to_string());
            row.push(self.action[i].r.to_string());
            for p in &self.momentums[i] {
                row.push(p.re.to_string());
                row.push(p.im.to_string());
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

struct System<'a> {
    template: JetState,
    pot: &'a PotentialSpec,
    closure: &'a ClosurePolicy,
}

impl System<'_> {
    fn n(&self) -> usize {
        self.template.dim()
    }

    fn pack(state: &JetState) -> Vec<f64> {
        let mut y = state.q.clone();
        for p in &state.p {
            y.push(p.re);
            y.push(p.im);
        }
        y.push(state.p0.re);
        y.push(state.p0.im);
        y
    }

    fn unpack(&self, t: f64, y: &[f64]) -> JetState {
        let n = self.n();
        let mut s = self.template.clone();
        s.t = t;
        s.q.copy_from_slice(&y[..n]);
        for (k, p) in s.p.iter_mut().enumerate() {
            *p = Complex64::new(y[n + 2 * k], y[n + 2 * k + 1]);
        }
        let last = y.len() - 2;
        s.p0 = Complex64::new(y[last], y[last + 1]);
        s
    }

    fn derivative(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let s = self.unpack(t, y);
        let ext = extended_momentums(&s, self.closure)?;
        let rate = rhs_from_extended(&s, self.pot, &ext);
        let mut dy = rate.q;
        for p in &rate.p {
            dy.push(p.re);
            dy.push(p.im);
        }
        dy.push(rate.p0.re);
        dy.push(rate.p0.im);
        Ok(dy)
    }
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += h * c * v;
        }
    }
    out
}

fn rk4_step(sys: &System, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = sys.derivative(t, y)?;
    let k2 = sys.derivative(t + h / 2.0, &axpy(y, h, &[(0.5, &k1)]))?;
    let k3 = sys.derivative(t + h / 2.0, &axpy(y, h, &[(0.5, &k2)]))?;
    let k4 = sys.derivative(t + h, &axpy(y, h, &[(1.0, &k3)]))?;
    Ok(axpy(y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]))
}

const A21: f64 = 1.0 / 5.0;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B5: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand–Prince step; returns the fifth-order solution and the scaled error norm.
fn dopri_step(sys: &System, t: f64, y: &[f64], h: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    let k1 = sys.derivative(t, y)?;
    let k2 = sys.derivative(t + h / 5.0, &axpy(y, h, &[(A21, &k1)]))?;
    let k3 = sys.derivative(t + 3.0 * h / 10.0, &axpy(y, h, &[(A3[0], &k1), (A3[1], &k2)]))?;
    let k4 = sys.derivative(t + 4.0 * h / 5.0, &axpy(y, h, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]))?;
    let k5 =
        sys.derivative(t + 8.0 * h / 9.0, &axpy(y, h, &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)]))?;
    let k6 =
        sys.derivative(t + h, &axpy(y, h, &[(A6[0], &k1), (A6[1], &k2), (A6[2], &k3), (A6[3], &k4), (A6[4], &k5)]))?;
    let y5 = axpy(y, h, &[(B5[0], &k1), (B5[2], &k3), (B5[3], &k4), (B5[4], &k5), (B5[5], &k6)]);
    let k7 = sys.derivative(t + h, &y5)?;
    let ks = [&k1, &k2, &k3, &k4, &k5, &k6, &k7];
    let mut err: f64 = 0.0;
    for i in 0..y.len() {
        let mut e = 0.0;
        for (j, k) in ks.iter().enumerate() {
            let b5 = if j < 6 { B5[j] } else { 0.0 };
            e += (b5 - B4[j]) * k[i];
        }
        let scale = tol * (1.0 + y[i].abs().max(y5[i].abs()));
        err = err.max((h * e).abs() / scale);
    }
    Ok((y5, err))
}

/// Advance `initial` to `opts.t_final`, recording samples every `opts.sample_interval`.
pub fn integrate(
    initial: &JetState,
    pot: &PotentialSpec,
    closure: &ClosurePolicy,
    opts: &IntegrateOptions,
) -> Result<TrajectoryRecord> {
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {}", opts.dt)));
    }
    if !(opts.t_final > initial.t) {
        return Err(Error::InvalidArgument("final time must follow the initial time".into()));
    }
    let retained = opts.retained.clone().unwrap_or_else(|| initial.layout().state_indices().to_vec());
    for m in &retained {
        if initial.get(m).is_none() {
            return Err(Error::MissingMomentum(m.canonical_name()));
        }
    }
    let sys = System { template: initial.clone(), pot, closure };
    let mut record = TrajectoryRecord {
        units: initial.units.clone(),
        times: Vec::new(),
        q: Vec::new(),
        v: Vec::new(),
        action: Vec::new(),
        p0: Vec::new(),
        retained,
        momentums: Vec::new(),
        steps: 0,
        rejected: 0,
        closure: closure.name().to_string(),
        final_state: initial.clone(),
    };
    let push = |rec: &mut TrajectoryRecord, s: &JetState| {
        rec.times.push(s.t);
        rec.q.push(s.q.clone());
        rec.v.push(s.velocity());
        rec.action.push(s.action());
        rec.p0.push(s.p0);
        let row = rec.retained.iter().map(|m| s.get(m).expect("checked above")).collect();
        rec.momentums.push(row);
    };
    push(&mut record, initial);

    let hbar = initial.units.hbar;
    let check_node = |t: f64, y: &[f64]| -> Result<()> {
        let r = -y[y.len() - 1] / hbar;
        if !r.is_finite() || r.abs() > opts.node_bound {
            return Err(Error::NodeApproach { t, r, bound: opts.node_bound });
        }
        Ok(())
    };

    let t0 = initial.t;
    let span = opts.t_final - t0;
    let samples = ((span / opts.sample_interval) - 1e-9).ceil().max(1.0) as usize;
    let mut y = System::pack(initial);
    let mut t = t0;
    let mut h = opts.dt;
    for k in 1..=samples {
        let target = if k == samples { opts.t_final } else { t0 + k as f64 * opts.sample_interval };
        match opts.method {
            Method::Rk4 => {
                let steps = ((target - t) / opts.dt - 1e-9).ceil().max(1.0) as usize;
                let hs = (target - t) / steps as f64;
                for _ in 0..steps {
                    y = rk4_step(&sys, t, &y, hs)?;
                    t += hs;
                    record.steps += 1;
                    check_node(t, &y)?;
                }
                t = target;
            }
            Method::Rk45 => {
                while t < target {
                    let last = target - t <= h * (1.0 + 1e-12);
                    let step = if last { target - t } else { h };
                    let (ynew, err) = dopri_step(&sys, t, &y, step, opts.tol)?;
                    if err <= 1.0 {
                        t = if last { target } else { t + step };
                        y = ynew;
                        record.steps += 1;
                        check_node(t, &y)?;
                    } else {
                        record.rejected += 1;
                    }
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if !last || err > 1.0 {
                        h = step * factor;
                    }
                    if h < opts.min_dt {
                        return Err(Error::StepFailure { t, dt: h });
                    }
                }
            }
        }
        let s = sys.unpack(t, &y);
        push(&mut record, &s);
    }
    record.final_state = sys.unpack(t, &y);
    Ok(record)
}

/// Composite Simpson rule on uniformly spaced samples; an odd interval count finishes with
/// the three-eighths rule, two samples fall back to the trapezoid.
pub fn simpson(values: &[Complex64], h: f64) -> Complex64 {
    let n = values.len();
    match n {
        0 | 1 => Complex64::new(0.0, 0.0),
        2 => (values[0] + values[1]) * (h / 2.0),
        _ => {
            let intervals = n - 1;
            let even_end = if intervals.is_multiple_of(2) { n - 1 } else { n - 4 };
            let mut total = Complex64::new(0.0, 0.0);
            let mut i = 0;
            while i < even_end {
                total += (values[i] + values[i + 1] * 4.0 + values[i + 2]) * (h / 3.0);
                i += 2;
            }
            if intervals % 2 == 1 {
                let j = n - 4;
                total += (values[j] + values[j + 1] * 3.0 + values[j + 2] * 3.0 + values[j + 3]) * (3.0 * h / 8.0);
            }
            total
        }
    }
}

/// `∫ L_σ dt` along the recorded trajectory with `L_σ = p_{σi} q̇^i − H_σ`.
pub fn action_via_quadrature(record: &TrajectoryRecord, pot: &PotentialSpec, sigma: &MultiIndex) -> Result<Complex64> {
    let n = sigma.dim();
    let mut needed: Vec<MultiIndex> = (0..n).map(|i| sigma.extend(i)).collect();
    for j in 0..n {
        needed.push(sigma.extend(j).extend(j));
        for s in sigma.subindices() {
            needed.push(s.sub.extend(j));
        }
    }
    for m in &needed {
        if record.momentum(0, m).is_none() {
            return Err(Error::MissingMomentum(m.canonical_name()));
        }
    }
    let (inv_two_m, quantum) = kinetic_factors(&record.units);
    let integrand: Vec<Complex64> = (0..record.len())
        .map(|i| {
            let lookup = |m: &MultiIndex| record.momentum(i, m).unwrap_or(Complex64::new(0.0, 0.0));
            let u = Complex64::new(pot.derivative(&record.q[i], sigma), 0.0);
            let h = h_sigma_with(sigma, &lookup, u, &inv_two_m, &quantum);
            let transport: Complex64 = (0..n).map(|j| lookup(&sigma.extend(j)) * record.v[i][j]).sum();
            transport - h
        })
        .collect();
    let uniform = record.times.windows(3).all(|w| ((w[2] - w[1]) - (w[1] - w[0])).abs() < 1e-9 * (w[1] - w[0]));
    if uniform && record.len() >= 2 {
        Ok(simpson(&integrand, record.times[1] - record.times[0]))
    } else {
        Ok(record.times.windows(2).zip(integrand.windows(2)).map(|(t, f)| (f[0] + f[1]) * ((t[1] - t[0]) / 2.0)).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetstate::JetLayout;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gaussian(order: u32) -> JetState {
        let mut s = JetState::zeros(JetLayout::new(1, order), Units::natural(1), 0.0, vec![0.0]);
        s.set(&MultiIndex::new(vec![2]), c(0.0, 1.0)).unwrap();
        s
    }

    #[test]
    fn gaussian_riccati_solution() {
        let opts = IntegrateOptions { t_final: 1.0, ..Default::default() };
        let rec = integrate(&gaussian(2), &PotentialSpec::Free, &ClosurePolicy::Zero, &opts).unwrap();
        let pxx = rec.series(&MultiIndex::new(vec![2])).unwrap();
        assert!((pxx.last().unwrap() - c(0.5, 0.5)).norm() < 1e-8);
        assert_eq!(*rec.times.last().unwrap(), 1.0);
        assert!(rec.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn plane_wave_translation() {
        let k0 = 2.0;
        let mut s = JetState::zeros(JetLayout::new(1, 2), Units::natural(1), 0.0, vec![0.0]);
        s.set(&MultiIndex::new(vec![1]), c(k0, 0.0)).unwrap();
        for method in [Method::Rk4, Method::Rk45] {
            let opts = IntegrateOptions { method, dt: 0.01, t_final: 1.0, ..Default::default() };
            let rec = integrate(&s, &PotentialSpec::Free, &ClosurePolicy::Zero, &opts).unwrap();
            assert!((rec.q.last().unwrap()[0] - k0).abs() < 1e-12);
            let ds = rec.action.last().unwrap().s - rec.action[0].s;
            assert!((ds - k0 * k0 / 2.0).abs() < 1e-12);
            let q = action_via_quadrature(&rec, &PotentialSpec::Free, &MultiIndex::new(vec![0])).unwrap();
            assert!((q - c(k0 * k0 / 2.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn quadrature_examples() {
        let opts = IntegrateOptions { t_final: 1.0, sample_interval: 0.005, ..Default::default() };
        let rec = integrate(&gaussian(4), &PotentialSpec::Free, &ClosurePolicy::Zero, &opts).unwrap();
        let d1 = action_via_quadrature(&rec, &PotentialSpec::Free, &MultiIndex::new(vec![1])).unwrap();
        assert!(d1.norm() < 1e-14);
        let d2 = action_via_quadrature(&rec, &PotentialSpec::Free, &MultiIndex::new(vec![2])).unwrap();
        assert!((d2 - c(0.5, -0.5)).norm() < 1e-8, "{d2}");

        let short = integrate(&gaussian(2), &PotentialSpec::Free, &ClosurePolicy::Zero, &opts).unwrap();
        let err = action_via_quadrature(&short, &PotentialSpec::Free, &MultiIndex::new(vec![2]));
        assert!(matches!(err, Err(Error::MissingMomentum(_))));
    }

    #[test]
    fn quadrature_converges_with_cadence() {
        let mut errs = Vec::new();
        for interval in [0.1, 0.05, 0.025] {
            let opts = IntegrateOptions { t_final: 1.0, sample_interval: interval, ..Default::default() };
            let rec = integrate(&gaussian(4), &PotentialSpec::Free, &ClosurePolicy::Zero, &opts).unwrap();
            let d2 = action_via_quadrature(&rec, &PotentialSpec::Free, &MultiIndex::new(vec![2])).unwrap();
            let ode = rec.momentum(rec.len() - 1, &MultiIndex::new(vec![2])).unwrap() - c(0.0, 1.0);
            errs.push((d2 - ode).norm());
        }
        assert!(errs[0] / errs[1] > 12.0 && errs[1] / errs[2] > 12.0, "{errs:?}");
    }

    #[test]
    fn node_approach_reported() {
        let mut s = gaussian(2);
        s.q = vec![0.0];
        s.p0 = c(0.0, 29.9);
        s.set(&MultiIndex::new(vec![1]), c(0.0, 5.0)).unwrap();
        let opts = IntegrateOptions { t_final: 2.0, ..Default::default() };
        let err = integrate(&s, &PotentialSpec::Free, &ClosurePolicy::Zero, &opts);
        assert!(matches!(err, Err(Error::NodeApproach { .. })), "{err:?}");
    }

    #[test]
    fn csv_layout() {
        let opts = IntegrateOptions { t_final: 0.1, sample_interval: 0.05, ..Default::default() };
        let rec = integrate(&gaussian(2), &PotentialSpec::Free, &ClosurePolicy::Zero, &opts).unwrap();
        let mut out = Vec::new();
        rec.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,q_0,v_0,S,R,re_x,im_x,re_xx,im_xx");
        assert_eq!(lines.count(), 3);
    }
}
