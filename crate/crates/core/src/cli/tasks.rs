//! One runner per scenario task. Each writes its files into the output directory and returns
//! diagnostics for the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};

use super::scenario::{ClosureKind, FieldKind, MeasurementSettings, OneStepKind, Scenario};
use crate::dynamics::{integrate, ClosurePolicy, IntegrateOptions};
use crate::ensemble::{
    advect, advect_hierarchy, equivariance_test, grid_field, sample_density, AnalyticField, DensityGrid,
};
use crate::error::{Error, Result};
use crate::jetstate::{JetState, Units};
use crate::measurement::{
    impulsive_measure_discrete, impulsive_measure_position, outcome_statistics, position_outcome_statistics,
    time_resolved_position_measure, DoubleSlit, PointerSetup,
};
use crate::onestep::{compare_to_ode, cubic_test_problem, gaussian_test_problem, residual_scaling, write_scaling_csv};
use crate::reference::{evolve, AnalyticState, GridHistory, GridWave};
use crate::spin::{coherent_overlap, evolve_state, precess, SpinState, Spinor};
use crate::verify::{catalog, run_criterion};

pub struct TaskOutput {
    pub files: Vec<String>,
    pub diagnostics: Value,
    /// Set when an acceptance check failed.
    pub failed_checks: bool,
}

struct Writer<'a> {
    dir: &'a Path,
    scenario: &'a Scenario,
    files: Vec<String>,
}

impl Writer<'_> {
    fn csv(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        if !self.scenario.wants(name) {
            return Ok(());
        }
        let mut out = BufWriter::new(File::create(self.dir.join(name))?);
        f(&mut out)?;
        out.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        if !self.scenario.wants(name) {
            return Ok(());
        }
        std::fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn grid(&mut self, name: &str, w: &GridWave) -> Result<()> {
        if !self.scenario.wants(name) {
            return Ok(());
        }
        w.write_binary(&self.dir.join(name))?;
        self.files.push(name.to_string());
        self.files.push(format!("{name}.json"));
        Ok(())
    }

    fn done(self, diagnostics: Value, failed_checks: bool) -> TaskOutput {
        TaskOutput { files: self.files, diagnostics, failed_checks }
    }
}

pub fn run_task(s: &Scenario, dir: &Path) -> Result<TaskOutput> {
    let w = Writer { dir, scenario: s, files: Vec::new() };
    match s.task {
        super::scenario::Task::Trajectory => trajectory(s, w),
        super::scenario::Task::Ensemble => ensemble(s, w),
        super::scenario::Task::Measurement => measurement(s, w),
        super::scenario::Task::Onestep => onestep(s, w),
        super::scenario::Task::Spin => spin(s, w),
        super::scenario::Task::Verify => verify(s, w),
    }
}

fn initial(s: &Scenario) -> Result<&AnalyticState> {
    s.initial.as_ref().ok_or_else(|| Error::Config("scenario has no initial state".into()))
}

fn options(s: &Scenario) -> IntegrateOptions {
    let it = &s.integrator;
    IntegrateOptions {
        method: it.method,
        dt: it.dt,
        t_final: it.t_final,
        tol: it.tol,
        sample_interval: it.sample_interval,
        node_bound: it.node_bound,
        ..Default::default()
    }
}

fn closure(s: &Scenario, psi: &AnalyticState, units: &Units) -> Result<ClosurePolicy> {
    match s.jet.closure {
        ClosureKind::Zero => Ok(ClosurePolicy::Zero),
        ClosureKind::Oracle => {
            let g = s.jet.oracle.as_ref().ok_or_else(|| Error::Config("oracle closure needs [jet.oracle]".into()))?;
            let w = GridWave::from_analytic(g.grid()?, psi, 0.0, units)?;
            let hist = GridHistory::record(&w, &s.physics.potential, units, g.dt, g.every, s.integrator.t_final)?;
            Ok(ClosurePolicy::Oracle(Arc::new(hist)))
        }
    }
}

fn trajectory(s: &Scenario, mut w: Writer) -> Result<TaskOutput> {
    let units = s.physics.units();
    let psi = initial(s)?;
    let closure = closure(s, psi, &units)?;
    let opts = options(s);
    let mut records = Vec::new();
    for q in &s.jet.starts {
        let init = JetState::from_wavefunction_analytic(psi, q, 0.0, s.jet.truncation, &units)?;
        records.push(integrate(&init, &s.physics.potential, &closure, &opts)?);
    }
    w.csv("trajectories.csv", |out| {
        for (k, rec) in records.iter().enumerate() {
            let mut buf = Vec::new();
            rec.write_csv(&mut buf)?;
            let text = String::from_utf8(buf).expect("csv is utf-8");
            for (i, line) in text.lines().enumerate() {
                match (i, k) {
                    (0, 0) => writeln!(out, "trajectory,{line}")?,
                    (0, _) => {}
                    _ => writeln!(out, "{k},{line}")?,
                }
            }
        }
        Ok(())
    })?;
    let summary: Vec<Value> = records
        .iter()
        .zip(&s.jet.starts)
        .map(|(r, q)| json!({ "start": q, "final_q": r.final_state.q, "steps": r.steps, "samples": r.len() }))
        .collect();
    let diagnostics = json!({ "closure": closure.name(), "trajectories": summary });
    w.json("summary.json", &diagnostics)?;
    Ok(w.done(diagnostics, false))
}

fn ensemble(s: &Scenario, mut w: Writer) -> Result<TaskOutput> {
    let units = s.physics.units();
    let psi = initial(s)?;
    let cfg = s.ensemble.as_ref().ok_or_else(|| Error::Config("missing [ensemble]".into()))?;
    let grid = cfg.grid.grid()?;
    let t_final = s.integrator.t_final;
    let start_wave = GridWave::from_analytic(grid.clone(), psi, 0.0, &units)?;
    let start = sample_density(&DensityGrid::from_wave(&start_wave)?, cfg.count, s.seed, 0.0);
    let pot = &s.physics.potential;
    let (end, final_wave) = match cfg.field {
        FieldKind::Analytic => {
            let moved = advect(&start, &AnalyticField::new(psi, units.clone()), t_final, s.integrator.dt)?;
            (moved, GridWave::from_analytic(grid, psi, t_final, &units)?)
        }
        FieldKind::Grid => {
            let hist = GridHistory::record(&start_wave, pot, &units, cfg.grid.dt, cfg.grid.every, t_final)?;
            let moved = advect(&start, &grid_field(&hist, units.clone()), t_final, s.integrator.dt)?;
            (moved, evolve(&start_wave, pot, &units, cfg.grid.dt, t_final)?)
        }
        FieldKind::Hierarchy => {
            let closure = closure(s, psi, &units)?;
            let moved = advect_hierarchy(&start, psi, &units, s.jet.truncation, pot, &closure, &options(s))?;
            (moved, evolve(&start_wave, pot, &units, cfg.grid.dt, t_final)?)
        }
    };
    let test = equivariance_test(&end, &DensityGrid::from_wave(&final_wave)?)?;
    w.csv("ensemble_initial.csv", |out| start.write_csv(out))?;
    w.csv("ensemble_final.csv", |out| end.write_csv(out))?;
    w.grid("density_final.bin", &final_wave)?;
    let diagnostics = json!({
        "count": end.len(),
        "excluded_fraction": end.excluded_fraction(),
        "statistic": test.statistic,
        "p_value": test.p_value,
    });
    w.json("equivariance.json", &diagnostics)?;
    Ok(w.done(diagnostics, false))
}

fn measurement(s: &Scenario, mut w: Writer) -> Result<TaskOutput> {
    let cfg = s.measurement.as_ref().ok_or_else(|| Error::Config("missing [measurement]".into()))?;
    let diagnostics = match cfg {
        MeasurementSettings::Discrete { width, coupling, duration, eigenvalues, amplitudes, runs, repeats } => {
            let setup = PointerSetup { width: *width, coupling: *coupling, duration: *duration };
            let joint = impulsive_measure_discrete(setup, eigenvalues.clone(), amplitudes.clone())?;
            let table = outcome_statistics(&joint, *runs, s.seed)?;
            let mut accepted = 0;
            for k in 0..*repeats {
                if outcome_statistics(&joint, *runs, s.seed.wrapping_add(1 + k as u64))?.p_value > 0.01 {
                    accepted += 1;
                }
            }
            w.csv("outcomes.csv", |out| table.write_csv(out))?;
            json!({
                "counts": table.counts,
                "expected": table.expected,
                "chi_squared": table.chi_squared,
                "p_value": table.p_value,
                "repeats": repeats,
                "repeats_accepted": accepted,
            })
        }
        MeasurementSettings::Position { width, coupling, duration, runs, grid, steps, kinetic } => {
            let setup = PointerSetup { width: *width, coupling: *coupling, duration: *duration };
            let units = s.physics.units();
            let psi = GridWave::from_analytic(grid.grid()?, initial(s)?, 0.0, &units)?;
            let joint = match steps {
                Some(n) => {
                    let both = Units { hbar: units.hbar, masses: vec![units.masses[0], 1.0] };
                    time_resolved_position_measure(&psi, setup, &both, *n, *kinetic)?
                }
                None => impulsive_measure_position(&psi, setup)?,
            };
            let out = position_outcome_statistics(&joint, &psi, setup, *runs, s.seed)?;
            w.csv("readings.csv", |f| {
                writeln!(f, "run,reading")?;
                for (k, r) in out.readings.iter().enumerate() {
                    writeln!(f, "{k},{r}")?;
                }
                Ok(())
            })?;
            json!({ "ks": out.ks.statistic, "p_value": out.ks.p_value, "runs": runs })
        }
        MeasurementSettings::DoubleSlit {
            separation,
            slit_width,
            open,
            detectors,
            detector_shift,
            detector_mass,
            count,
            bins,
        } => {
            let slit = DoubleSlit {
                separation: *separation,
                slit_width: *slit_width,
                screen_time: s.integrator.t_final,
                open: *open,
                detectors: *detectors,
                detector_shift: *detector_shift,
                detector_mass: *detector_mass,
                count: *count,
                dt: s.integrator.dt,
                bins: *bins,
                seed: s.seed,
            };
            let r = slit.run()?;
            w.csv("fringe_histogram.csv", |out| r.write_histogram_csv(out))?;
            json!({
                "visibility": r.visibility,
                "fringe_wavenumber": r.fringe_wavenumber,
                "ks": r.ks.statistic,
                "excluded_fraction": r.excluded_fraction,
                "branch_counts": r.branch_counts,
                "order_preserved": r.order_preserved,
            })
        }
    };
    w.json("report.json", &diagnostics)?;
    Ok(w.done(diagnostics, false))
}

fn onestep(s: &Scenario, mut w: Writer) -> Result<TaskOutput> {
    let cfg = s.onestep.as_ref().ok_or_else(|| Error::Config("missing [onestep]".into()))?;
    let prob = match cfg.problem {
        OneStepKind::Gaussian => gaussian_test_problem(cfg.epsilon),
        OneStepKind::Cubic => cubic_test_problem(cfg.epsilon),
    };
    let rows = residual_scaling(&prob, cfg.max_order)?;
    let residuals = compare_to_ode(&prob, cfg.max_order)?;
    w.csv("scaling.csv", |out| write_scaling_csv(&rows, out))?;
    let diagnostics = json!({
        "epsilon": cfg.epsilon,
        "rows": rows,
        "residuals": residuals.iter().map(|r| json!({ "order": r.order, "residual": r.residual })).collect::<Vec<_>>(),
    });
    w.json("report.json", &diagnostics)?;
    Ok(w.done(diagnostics, false))
}

fn spin(s: &Scenario, mut w: Writer) -> Result<TaskOutput> {
    let cfg = s.spin.as_ref().ok_or_else(|| Error::Config("missing [spin]".into()))?;
    let hbar = s.physics.hbar;
    let (dt, t_final) = (s.integrator.dt, s.integrator.t_final);
    let [chi, theta, phi] = cfg.angles;
    let omega = Spinor::from_angles(chi, theta, phi);
    let field = cfg.field;
    let traj = precess(omega, |_| field, cfg.gamma, hbar, dt, t_final, false)?;
    let state = SpinState::new(cfg.two_s, cfg.amplitudes.clone())?;
    let states = evolve_state(&state, |_| field, cfg.gamma, hbar, dt, t_final)?;
    let first = coherent_overlap(&states[0], &traj.spinors[0]);
    let drift =
        states.iter().zip(&traj.spinors).map(|(a, b)| (coherent_overlap(a, b) - first).norm()).fold(0.0, f64::max);
    w.csv("spin_trajectory.csv", |out| traj.write_csv(out))?;
    let diagnostics = json!({
        "azimuthal_rate": traj.azimuthal_rate(),
        "larmor_rate": -cfg.gamma * field[2] / hbar,
        "max_step_norm_drift": traj.max_step_drift,
        "overlap_drift": drift,
        "final_direction": traj.last().direction(),
    });
    w.json("report.json", &diagnostics)?;
    Ok(w.done(diagnostics, false))
}

fn verify(s: &Scenario, mut w: Writer) -> Result<TaskOutput> {
    let wanted = s.verify.as_ref().map(|v| v.criteria.clone()).unwrap_or_default();
    let ids: Vec<u32> = if wanted.is_empty() { catalog().into_iter().map(|(k, _)| k).collect() } else { wanted };
    let mut reports = Vec::new();
    for id in ids {
        let r = run_criterion(id)?;
        println!("{}", r.line());
        reports.push(r);
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    let diagnostics = json!({ "passed": reports.len() - failed, "failed": failed, "criteria": reports });
    w.json("verify_report.json", &diagnostics)?;
    Ok(w.done(json!({ "passed": reports.len() - failed, "failed": failed }), failed > 0))
}
