//! Experiment configuration, presets and fingerprints.
//!
//! Configurations are single JSON documents. Every field has a default, so
//! `{}` is a valid (single-run) configuration. Dimensions are 1-based in
//! configuration files and on the command line (`dstar = 1` is the first
//! coordinate) and 0-based everywhere in the library.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::engine::{SwarmParams, VelocityInit, DEFAULT_C, DEFAULT_CHI};
use crate::estimators::sigma_grid;
use crate::numerics::{BigReal, PrecisionPolicy};
use crate::objectives::ObjectiveId;
use crate::stagnation::StagnationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Drift of the logarithmic potential of stagnating dimensions.
    Exp1,
    /// Increment decomposition, variance and Brownian approximation.
    Exp2,
    /// Stagnation phase statistics.
    Exp3,
    SingleRun,
    LemmaCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Exp1 => "exp1",
            ExperimentKind::Exp2 => "exp2",
            ExperimentKind::Exp3 => "exp3",
            ExperimentKind::SingleRun => "single_run",
            ExperimentKind::LemmaCheck => "lemma_check",
        }
    }
}

/// Position initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// Uniform in the search box.
    Usual,
    /// `stagnating` consecutive dimensions starting at the 1-based `dstar`
    /// are collapsed to width `2^(-scale)` around a random centre.
    Special { scale: u32, stagnating: usize, dstar: usize },
}

/// Phase detector thresholds (the step width is the experiment's).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagnationSettings {
    pub n0: usize,
    pub c0: f64,
    pub cs: f64,
}

impl Default for StagnationSettings {
    fn default() -> Self {
        StagnationSettings { n0: 1, c0: -40.0, cs: -20.0 }
    }
}

/// Optional overrides of the estimation window. `t_m` and `t_e` are in
/// iterations; `tau_grid`, `coarse_step` and `early_cut` count increments
/// (samples of width Δt) after `t_m`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Horizons {
    pub t_m: Option<u64>,
    pub t_e: Option<u64>,
    pub tau_grid: Option<Vec<u64>>,
    pub coarse_step: Option<u64>,
    pub early_cut: Option<u64>,
}

/// The window with every default filled in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedHorizons {
    pub t_m: u64,
    pub t_e: u64,
    /// `(t_e − t_m)/Δt`.
    pub increments: u64,
    pub taus: Vec<u64>,
    pub coarse_step: u64,
    pub early_cut: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub objective: ObjectiveId,
    pub particles: usize,
    pub dims: usize,
    pub init: InitConfig,
    /// Re-run a seed with a larger scale whenever a stagnating dimension
    /// reaches `Ψ ≥ −100` before `t_e`.
    pub auto_scale: bool,
    pub velocity_init: VelocityInit,
    pub iterations: u64,
    pub delta_t: u64,
    pub runs: usize,
    pub base_seed: u64,
    pub stagnation: StagnationSettings,
    pub precision: PrecisionPolicy,
    pub horizons: Horizons,
    pub box_halfwidth: f64,
    /// Swarm coefficients as decimal strings, parsed at working precision.
    pub chi: String,
    pub c1: String,
    pub c2: String,
    /// Keep full traces (CSV plus Φ sidecar) next to persisted run logs.
    pub keep_traces: bool,
    /// Where results go; not part of the fingerprint.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::SingleRun,
            objective: ObjectiveId::Sphere,
            particles: 3,
            dims: 10,
            init: InitConfig::Usual,
            auto_scale: false,
            velocity_init: VelocityInit::Zero,
            iterations: 1000,
            delta_t: 1,
            runs: 1,
            base_seed: 0,
            stagnation: StagnationSettings::default(),
            precision: PrecisionPolicy::default(),
            horizons: Horizons::default(),
            box_halfwidth: 100.0,
            chi: DEFAULT_CHI.to_string(),
            c1: DEFAULT_C.to_string(),
            c2: DEFAULT_C.to_string(),
            keep_traces: false,
            output_dir: None,
        }
    }
}

/// Abort threshold of the adaptive scale.
pub const SCALE_PSI_LIMIT: f64 = -100.0;

impl ExperimentConfig {
    /// Paper-scale defaults of an experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig { experiment: kind, ..Default::default() };
        match kind {
            ExperimentKind::Exp1 => ExperimentConfig {
                particles: 3,
                dims: 10,
                init: InitConfig::Special { scale: 2000, stagnating: 9, dstar: 1 },
                auto_scale: true,
                iterations: 100_000,
                runs: 500,
                ..base
            },
            ExperimentKind::Exp2 => ExperimentConfig {
                particles: 2,
                dims: 100,
                init: InitConfig::Special { scale: 500, stagnating: 97, dstar: 1 },
                iterations: 200_000,
                runs: 500,
                ..base
            },
            ExperimentKind::Exp3 => ExperimentConfig {
                particles: 3,
                dims: 8,
                iterations: 500_000,
                delta_t: 100,
                runs: 500,
                ..base
            },
            ExperimentKind::SingleRun | ExperimentKind::LemmaCheck => base,
        }
    }

    /// Desk scale: 50 runs and a fifth of the iterations, with explicit
    /// horizons shrunk in proportion.
    pub fn desk(mut self) -> Self {
        let shrink = |v: u64| (v / 5).max(1);
        self.runs = self.runs.min(50);
        self.iterations = shrink(self.iterations);
        // Keep the iteration count a multiple of the step width.
        self.iterations = (self.iterations / self.delta_t).max(1) * self.delta_t;
        let h = &mut self.horizons;
        h.t_m = h.t_m.map(|t| shrink(t) / self.delta_t * self.delta_t);
        h.t_e = h.t_e.map(|t| shrink(t) / self.delta_t * self.delta_t);
        h.coarse_step = h.coarse_step.map(shrink);
        h.early_cut = h.early_cut.map(shrink);
        if let Some(grid) = &mut h.tau_grid {
            let mut shrunk: Vec<u64> = grid.iter().map(|&t| shrink(t)).collect();
            shrunk.dedup();
            *grid = shrunk;
        }
        self
    }

    /// SHA-256 over the canonical JSON form, excluding `output_dir`.
    pub fn fingerprint(&self) -> String {
        let canonical = ExperimentConfig { output_dir: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// 0-based stagnating dimensions of the special initialization.
    pub fn stagnating_dims(&self) -> Vec<usize> {
        match self.init {
            InitConfig::Usual => Vec::new(),
            InitConfig::Special { stagnating, dstar, .. } => (dstar - 1..dstar - 1 + stagnating).collect(),
        }
    }

    pub fn stagnation_config(&self) -> StagnationConfig {
        StagnationConfig { delta_t: self.delta_t, n0: self.stagnation.n0, c0: self.stagnation.c0, cs: self.stagnation.cs }
    }

    pub fn swarm_params(&self, bits: u32) -> Result<SwarmParams, HarnessError> {
        let parse = |name: &str, text: &str| {
            BigReal::parse_decimal(text, bits).map_err(|_| HarnessError::Config(format!("{name} = {text:?} is not a decimal number")))
        };
        Ok(SwarmParams::new(self.particles, self.dims, parse("chi", &self.chi)?, parse("c1", &self.c1)?, parse("c2", &self.c2)?)?)
    }

    pub fn seed_of(&self, run_index: usize) -> u64 {
        self.base_seed.wrapping_add(run_index as u64)
    }

    /// Window defaults: `t_m = T/2`, `t_e = T`, coarse step `H/1000` and
    /// early cut `H/10` for `H` increments; the τ grid holds every coarse
    /// multiple, the cut, and the powers of ten up to `H`.
    pub fn resolved_horizons(&self) -> Result<ResolvedHorizons, HarnessError> {
        let dt = self.delta_t;
        let t_e = self.horizons.t_e.unwrap_or(self.iterations);
        let t_m = self.horizons.t_m.unwrap_or(self.iterations / 2 / dt * dt);
        if t_m % dt != 0 || t_e % dt != 0 || t_m >= t_e || t_e > self.iterations {
            return Err(HarnessError::Config(format!(
                "window t_m = {t_m}, t_e = {t_e} must satisfy t_m < t_e <= iterations = {} with both multiples of delta_t = {dt}",
                self.iterations
            )));
        }
        let increments = (t_e - t_m) / dt;
        let coarse_step = self.horizons.coarse_step.unwrap_or((increments / 1000).max(1));
        let early_cut = self.horizons.early_cut.unwrap_or((increments / 10).max(1));
        let taus = match &self.horizons.tau_grid {
            Some(grid) => grid.clone(),
            None if increments >= 2 => {
                let mut grid = sigma_grid(increments, coarse_step, early_cut)?;
                let mut p = 1;
                while p <= increments {
                    grid.push(p);
                    p *= 10;
                }
                grid.sort_unstable();
                grid.dedup();
                grid
            }
            None => vec![increments],
        };
        if let Some(&bad) = taus.iter().find(|&&t| t == 0 || t > increments) {
            return Err(HarnessError::Config(format!("tau {bad} outside 1..={increments}")));
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config("tau_grid must be strictly increasing".into()));
        }
        Ok(ResolvedHorizons { t_m, t_e, increments, taus, coarse_step, early_cut })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.particles == 0 || self.dims == 0 {
            return bad("particles and dims must be at least 1".into());
        }
        if self.iterations == 0 || self.delta_t == 0 || self.iterations % self.delta_t != 0 {
            return bad(format!(
                "iterations = {} must be a positive multiple of delta_t = {}",
                self.iterations, self.delta_t
            ));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if !(self.box_halfwidth > 0.0 && self.box_halfwidth.is_finite()) {
            return bad("box_halfwidth must be positive".into());
        }
        self.precision.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.stagnation_config().validate(self.dims)?;
        self.swarm_params(self.precision.initial_bits)?;
        if self.objective == ObjectiveId::HighConditionedElliptic && self.dims < 2 {
            return bad("the elliptic function needs at least 2 dimensions".into());
        }
        match self.init {
            InitConfig::Special { stagnating, dstar, .. } => {
                if stagnating == 0 || dstar == 0 || dstar - 1 + stagnating > self.dims {
                    return bad(format!(
                        "stagnating block {dstar}..{} (1-based) does not fit into D = {}",
                        dstar as i64 + stagnating as i64 - 1,
                        self.dims
                    ));
                }
            }
            InitConfig::Usual => {
                if self.auto_scale {
                    return bad("auto_scale needs the special initialization".into());
                }
            }
        }
        if matches!(self.experiment, ExperimentKind::Exp1 | ExperimentKind::Exp2) {
            let width = self.stagnating_dims().len();
            if width == 0 || width >= self.dims {
                return bad(format!(
                    "{} needs a special initialization leaving at least one free dimension",
                    self.experiment.name()
                ));
            }
            self.resolved_horizons()?;
        }
        Ok(())
    }
}
