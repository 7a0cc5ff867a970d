//! Scenario files and the built-in catalog.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::Method;
use crate::error::{Error, Result};
use crate::jetstate::Units;
use crate::potential::PotentialSpec;
use crate::reference::{AnalyticState, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Trajectory,
    Ensemble,
    Measurement,
    Onestep,
    Spin,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ClosureKind {
    Zero,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    /// What the scenario checks, in one line.
    pub target: String,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub physics: Physics,
    pub initial: Option<AnalyticState>,
    #[serde(default)]
    pub jet: JetSettings,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    pub ensemble: Option<EnsembleSettings>,
    pub measurement: Option<MeasurementSettings>,
    pub onestep: Option<OneStepSettings>,
    pub spin: Option<SpinSettings>,
    pub verify: Option<VerifySettings>,
    /// Output files to write; all of the task's outputs when empty.
    #[serde(default)]
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub hbar: f64,
    pub masses: Vec<f64>,
    pub potential: PotentialSpec,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { hbar: 1.0, masses: vec![1.0], potential: PotentialSpec::Free }
    }
}

impl Physics {
    pub fn units(&self) -> Units {
        Units { hbar: self.hbar, masses: self.masses.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JetSettings {
    pub truncation: u32,
    pub closure: ClosureKind,
    /// Starting points of the trajectories.
    pub starts: Vec<Vec<f64>>,
    /// Grid solution used by the oracle closure.
    pub oracle: Option<GridSettings>,
}

impl Default for JetSettings {
    fn default() -> Self {
        JetSettings { truncation: 2, closure: ClosureKind::Zero, starts: Vec::new(), oracle: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Split-step size.
    #[serde(default = "default_grid_dt")]
    pub dt: f64,
    /// Solver steps between stored snapshots.
    #[serde(default = "default_every")]
    pub every: usize,
}

fn default_grid_dt() -> f64 {
    1e-3
}

fn default_every() -> usize {
    5
}

impl GridSettings {
    pub fn grid(&self) -> Result<Grid> {
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; self.extent.len()]);
        Grid::centered(&center, &self.extent, &self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSettings {
    pub method: Method,
    pub dt: f64,
    pub t_final: f64,
    pub tol: f64,
    pub sample_interval: f64,
    pub node_bound: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            method: Method::Rk45,
            dt: 1e-3,
            t_final: 1.0,
            tol: 1e-9,
            sample_interval: 0.01,
            node_bound: 30.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Closed-form velocity of the initial state's evolution.
    Analytic,
    /// Velocity read off a split-step solution.
    Grid,
    /// Each point carries its own truncated hierarchy.
    Hierarchy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    pub count: usize,
    pub grid: GridSettings,
    #[serde(default = "default_field")]
    pub field: FieldKind,
}

fn default_field() -> FieldKind {
    FieldKind::Analytic
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementSettings {
    Discrete {
        width: f64,
        coupling: f64,
        duration: f64,
        eigenvalues: Vec<f64>,
        amplitudes: Vec<Complex64>,
        runs: usize,
        /// Extra seeded repetitions of the χ² test.
        #[serde(default)]
        repeats: usize,
    },
    Position {
        width: f64,
        coupling: f64,
        duration: f64,
        runs: usize,
        grid: GridSettings,
        /// Finite-duration coupling in this many steps; impulsive when absent.
        #[serde(default)]
        steps: Option<usize>,
        #[serde(default)]
        kinetic: bool,
    },
    DoubleSlit {
        separation: f64,
        slit_width: f64,
        #[serde(default = "both_open")]
        open: [bool; 2],
        #[serde(default)]
        detectors: bool,
        #[serde(default = "default_shift")]
        detector_shift: f64,
        #[serde(default = "default_detector_mass")]
        detector_mass: f64,
        count: usize,
        #[serde(default = "default_bins")]
        bins: usize,
    },
}

fn both_open() -> [bool; 2] {
    [true, true]
}

fn default_shift() -> f64 {
    20.0
}

fn default_detector_mass() -> f64 {
    100.0
}

fn default_bins() -> usize {
    120
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneStepKind {
    Gaussian,
    Cubic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneStepSettings {
    pub problem: OneStepKind,
    pub epsilon: f64,
    #[serde(default = "default_onestep_order")]
    pub max_order: usize,
}

fn default_onestep_order() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSettings {
    /// Twice the spin quantum number.
    pub two_s: u32,
    /// `ψ_m` from `m = −s` upward.
    pub amplitudes: Vec<Complex64>,
    pub field: [f64; 3],
    pub gamma: f64,
    /// `(χ, θ, φ)` of the starting spinor.
    pub angles: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    /// Criteria to run; all when empty.
    pub criteria: Vec<u32>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let raw: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let echo = toml::Value::try_from(&s).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&raw, &echo, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let missing = |section: &str| Error::Config(format!("{:?} scenario needs a [{section}] table", self.task));
        if !(self.physics.hbar > 0.0) || self.physics.masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config("hbar and masses must be positive".into()));
        }
        let it = &self.integrator;
        if !(it.dt > 0.0) || !(it.t_final >= 0.0) || !(it.tol > 0.0) || !(it.sample_interval > 0.0) {
            return Err(Error::Config("integrator dt, tol and sample_interval must be positive".into()));
        }
        match self.task {
            Task::Trajectory => {
                self.initial.as_ref().ok_or_else(|| missing("initial"))?;
                if self.jet.starts.is_empty() {
                    return Err(Error::Config("trajectory scenario needs jet.starts".into()));
                }
                if self.jet.closure == ClosureKind::Oracle && self.jet.oracle.is_none() {
                    return Err(Error::Config("oracle closure needs a [jet.oracle] grid".into()));
                }
            }
            Task::Ensemble => {
                self.initial.as_ref().ok_or_else(|| missing("initial"))?;
                self.ensemble.as_ref().ok_or_else(|| missing("ensemble"))?;
            }
            Task::Measurement => {
                let m = self.measurement.as_ref().ok_or_else(|| missing("measurement"))?;
                if matches!(m, MeasurementSettings::Position { .. }) {
                    self.initial.as_ref().ok_or_else(|| missing("initial"))?;
                }
            }
            Task::Onestep => {
                self.onestep.as_ref().ok_or_else(|| missing("onestep"))?;
            }
            Task::Spin => {
                self.spin.as_ref().ok_or_else(|| missing("spin"))?;
            }
            Task::Verify => {}
        }
        Ok(())
    }

    /// Whether the task writes the named output.
    pub fn wants(&self, output: &str) -> bool {
        self.outputs.is_empty() || self.outputs.iter().any(|o| o == output)
    }
}

/// Keys of `raw` that did not survive a parse and re-serialize round trip.
fn unknown_keys(raw: &toml::Value, echo: &toml::Value, path: &str, out: &mut Vec<String>) {
    match (raw, echo) {
        (toml::Value::Table(a), toml::Value::Table(b)) => {
            for (k, v) in a {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get(k) {
                    Some(w) => unknown_keys(v, w, &here, out),
                    None => out.push(here),
                }
            }
        }
        (toml::Value::Array(a), toml::Value::Array(b)) => {
            for (k, (v, w)) in a.iter().zip(b).enumerate() {
                unknown_keys(v, w, &format!("{path}[{k}]"), out);
            }
        }
        _ => {}
    }
}

/// Scenario files shipped with the binary.
pub const BUILTIN: [(&str, &str); 12] = [
    ("free_gaussian", include_str!("../../../../scenarios/free_gaussian.toml")),
    ("coherent_oscillator", include_str!("../../../../scenarios/coherent_oscillator.toml")),
    ("cubic_phase_oracle", include_str!("../../../../scenarios/cubic_phase_oracle.toml")),
    ("gaussian_ensemble", include_str!("../../../../scenarios/gaussian_ensemble.toml")),
    ("double_slit", include_str!("../../../../scenarios/double_slit.toml")),
    ("double_slit_detectors", include_str!("../../../../scenarios/double_slit_detectors.toml")),
    ("pointer_discrete", include_str!("../../../../scenarios/pointer_discrete.toml")),
    ("pointer_position", include_str!("../../../../scenarios/pointer_position.toml")),
    ("onestep_gaussian", include_str!("../../../../scenarios/onestep_gaussian.toml")),
    ("onestep_cubic", include_str!("../../../../scenarios/onestep_cubic.toml")),
    ("larmor", include_str!("../../../../scenarios/larmor.toml")),
    ("verify_all", include_str!("../../../../scenarios/verify_all.toml")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
