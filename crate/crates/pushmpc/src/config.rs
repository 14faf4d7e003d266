//! Experiment configuration: one JSON file plus command-line overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use pushmpc_core::gp::FitOptions;
use pushmpc_core::mpc::{AnalyticalBounds, LearnedBounds, MpcWeights};
use pushmpc_core::sim::{Perturbation, PerturbationKind, PushGenConfig, RunOptions};
use pushmpc_core::slider::SliderParams;
use pushmpc_core::tracks::{TrackKind, TrackSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "PUSHMPC_OUT";

/// Training-set sizes of the data-complexity sweep.
pub const SWEEP_SIZES: [usize; 9] = [10, 20, 50, 100, 200, 500, 1000, 2000, 5000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Analytical,
    Learned,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Analytical => "analytical",
            ControllerKind::Learned => "learned",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            ControllerKind::Analytical => 3,
            ControllerKind::Learned => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliderConfig {
    pub mass: f64,
    pub side_a: f64,
    pub mu_p: f64,
    pub mu_g: f64,
}

impl Default for SliderConfig {
    fn default() -> Self {
        SliderConfig { mass: 0.827, side_a: 0.09, mu_p: 0.3, mu_g: 0.35 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub kind: TrackKind,
    /// m/s.
    pub speed: f64,
    pub step_h: f64,
    /// Track default when `None`.
    pub radius: Option<f64>,
    pub side: Option<f64>,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig { kind: TrackKind::EightTrack, speed: 0.08, step_h: 0.01, radius: None, side: None }
    }
}

impl TrackConfig {
    pub fn spec(&self) -> TrackSpec {
        let mut s = match self.kind {
            TrackKind::EightTrack => TrackSpec::eight(self.speed),
            TrackKind::SquareTrack => TrackSpec::square(self.speed),
        };
        s.step_h = self.step_h;
        if let Some(r) = self.radius {
            s.radius = r;
        }
        if let Some(l) = self.side {
            s.side = l;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub kind: PerturbationKind,
    /// m; 0.01 tangential and 0.03 normal when `None`.
    pub magnitude: Option<f64>,
    /// s; normal perturbations only.
    pub apply_time: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { kind: PerturbationKind::None, magnitude: None, apply_time: 1.0 }
    }
}

impl PerturbationConfig {
    pub fn resolve(&self) -> Perturbation {
        match self.kind {
            PerturbationKind::None => Perturbation::none(),
            PerturbationKind::Tangential => Perturbation::tangential(self.magnitude.unwrap_or(0.01)),
            PerturbationKind::Normal => Perturbation {
                apply_time: self.apply_time,
                ..Perturbation::normal(self.magnitude.unwrap_or(0.03))
            },
        }
    }
}

/// Settings of generated training data; the seed comes from the top level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n: usize,
    pub v_nom: f64,
    pub dt: f64,
    pub beta_max: f64,
    pub step: f64,
    pub noise_std: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { n: 5000, v_nom: 0.02, dt: 1.0, beta_max: PI / 3.0, step: 0.01, noise_std: 0.0 }
    }
}

impl DataConfig {
    pub fn generation(&self, seed: u64) -> PushGenConfig {
        PushGenConfig {
            n: self.n,
            v_nom: self.v_nom,
            dt: self.dt,
            beta_max: self.beta_max,
            step: self.step,
            noise_std: self.noise_std,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub max_opt_rows: usize,
    pub bound_range: f64,
    pub noise_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let d = FitOptions::default();
        FitConfig {
            restarts: d.restarts,
            max_iter: d.max_iter,
            max_opt_rows: d.max_opt_rows,
            bound_range: d.bound_range,
            noise_floor: d.noise_floor,
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            init: None,
            restarts: self.restarts,
            max_iter: self.max_iter,
            max_opt_rows: self.max_opt_rows,
            bound_range: self.bound_range,
            noise_floor: self.noise_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Controller defaults when `None`.
    pub weights: Option<MpcWeights>,
    pub sliding_steps: usize,
    pub analytical_bounds: AnalyticalBounds,
    pub learned_bounds: LearnedBounds,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            weights: None,
            sliding_steps: 5,
            analytical_bounds: AnalyticalBounds::default(),
            learned_bounds: LearnedBounds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// s; one lap when `None`.
    pub duration: Option<f64>,
    pub max_failures: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { duration: None, max_failures: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { sizes: SWEEP_SIZES.to_vec(), seeds: vec![0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub controller: ControllerKind,
    pub slider: SliderConfig,
    pub track: TrackConfig,
    pub perturbation: PerturbationConfig,
    /// Generation spec used when no dataset file is given.
    pub data: DataConfig,
    /// Existing dataset CSV.
    pub dataset: Option<PathBuf>,
    /// Existing model file; skips training.
    pub model: Option<PathBuf>,
    /// Use only the first rows of the dataset.
    pub subset: Option<usize>,
    pub fit: FitConfig,
    pub mpc: MpcConfig,
    pub run: RunConfig,
    pub sweep: SweepConfig,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            controller: ControllerKind::Analytical,
            slider: SliderConfig::default(),
            track: TrackConfig::default(),
            perturbation: PerturbationConfig::default(),
            data: DataConfig::default(),
            dataset: None,
            model: None,
            subset: None,
            fit: FitConfig::default(),
            mpc: MpcConfig::default(),
            run: RunConfig::default(),
            sweep: SweepConfig::default(),
            out: PathBuf::from("runs"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub controller: Option<ControllerKind>,
    pub track: Option<TrackKind>,
    pub speed: Option<f64>,
    pub perturb: Option<PerturbationKind>,
    pub magnitude: Option<f64>,
    pub subset: Option<usize>,
    pub n: Option<usize>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Loads the file (or the defaults), applies the overrides and the
    /// output-root variable, then validates.
    pub fn resolve(path: Option<&Path>, ov: &Overrides, env_out: Option<PathBuf>) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(ov);
        if ov.out.is_none() {
            if let Some(out) = env_out {
                cfg.out = out;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(v) = ov.seed {
            self.seed = v;
        }
        if let Some(v) = ov.controller {
            self.controller = v;
        }
        if let Some(v) = ov.track {
            self.track.kind = v;
        }
        if let Some(v) = ov.speed {
            self.track.speed = v;
        }
        if let Some(v) = ov.perturb {
            self.perturbation.kind = v;
        }
        if let Some(v) = ov.magnitude {
            self.perturbation.magnitude = Some(v);
        }
        if let Some(v) = ov.subset {
            self.subset = Some(v);
        }
        if let Some(v) = ov.n {
            self.data.n = v;
        }
        if let Some(v) = &ov.dataset {
            self.dataset = Some(v.clone());
        }
        if let Some(v) = &ov.model {
            self.model = Some(v.clone());
        }
        if let Some(v) = &ov.out {
            self.out = v.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let params = self.params()?;
        self.track.spec().validate()?;
        self.perturbation.resolve().validate(&params)?;
        self.data.generation(self.seed).validate()?;
        if let Some(w) = &self.mpc.weights {
            w.validate(self.controller.input_dim())
                .map_err(|_| CliError::Validation(format!("{} controller needs {} input weights, got {}", self.controller.name(), self.controller.input_dim(), w.r.len())))?;
        }
        if self.subset == Some(0) {
            return Err(CliError::Validation("subset must keep at least one row".into()));
        }
        if self.run.max_failures == 0 {
            return Err(CliError::Validation("max_failures must be at least 1".into()));
        }
        if let Some(d) = self.run.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(CliError::Validation("duration must be positive".into()));
            }
        }
        if self.sweep.sizes.is_empty() || self.sweep.sizes.contains(&0) || self.sweep.seeds.is_empty() {
            return Err(CliError::Validation("sweep needs positive sizes and at least one seed".into()));
        }
        for p in [&self.dataset, &self.model].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::Validation(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> CliResult<SliderParams> {
        let s = self.slider;
        Ok(SliderParams::new(s.mass, s.side_a, s.mu_p, s.mu_g)?)
    }

    pub fn weights(&self) -> MpcWeights {
        self.mpc.weights.clone().unwrap_or_else(|| match self.controller {
            ControllerKind::Analytical => MpcWeights::analytical(),
            ControllerKind::Learned => MpcWeights::learned(),
        })
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            duration: self.run.duration,
            perturbation: self.perturbation.resolve(),
            max_failures: self.run.max_failures,
        }
    }
}
