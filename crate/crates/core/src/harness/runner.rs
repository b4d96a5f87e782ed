//! Running single seeds and whole ensembles.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InitConfig, ResolvedHorizons, SCALE_PSI_LIMIT};
use super::HarnessError;
use crate::engine::{init_state, run};
use crate::estimators::{DriftSample, IncrementAccumulator, IncrementSums};
use crate::numerics::{Arith, BigReal};
use crate::objectives::{Objective, ObjectiveFunction};
use crate::potential::{phi_values, psi_from_log2, PotentialTrace};
use crate::rng::RngStream;
use crate::stagnation::{partition_phases, PhasePartition, StoppingTimeDetector, StoppingTimes};
use crate::engine::SwarmState;

/// How often a seed is retried with a larger scale.
pub const MAX_SCALE_ATTEMPTS: u32 = 8;

/// Everything kept from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_index: usize,
    pub seed: u64,
    /// Scale of the special initialization actually used.
    pub scale_used: Option<u32>,
    pub attempts: u32,
    pub iterations: u64,
    pub stopping_times: StoppingTimes,
    pub phases: PhasePartition,
    /// Ψ of the last stored sample.
    pub final_psi: Vec<f64>,
    /// `|G|` per dimension, rounded to 64 bits.
    pub final_g_abs: Vec<BigReal>,
    /// Binary exponent of `f(G)` (absent when `f(G) = 0`).
    pub final_fg_exponent: Option<i64>,
    pub precision_bits: u32,
    pub rng_draws: u64,
    /// Sample indices whose Φ was zero in some dimension.
    pub zero_samples: Vec<u64>,
    /// Whether a zero Φ after the first stored sample ended recording.
    pub truncated: bool,
    /// Drift snapshot over the window (special initialization only).
    pub drift: Option<DriftSample>,
    /// Partial sums of the stagnating increments over the window.
    pub increments: Option<IncrementSums>,
    /// The full trace, when requested; persisted separately.
    #[serde(skip)]
    pub trace: Option<PotentialTrace>,
}

impl RunOutcome {
    /// Zero potentials at samples taken after the first step.
    pub fn late_zero_samples(&self) -> impl Iterator<Item = u64> + '_ {
        self.zero_samples.iter().copied().filter(|&k| k >= 1)
    }
}

/// Consumes one sample per Δt and keeps only what the estimators need.
struct SampleSink<'a> {
    delta_t: u64,
    stagnating: &'a [usize],
    horizons: &'a ResolvedHorizons,
    scale_guard: bool,
    first_sample: Option<u64>,
    truncated: bool,
    zero_samples: Vec<u64>,
    detector: StoppingTimeDetector,
    at_m: Option<(Vec<f64>, Vec<f64>)>,
    drift: Option<DriftSample>,
    increments: Option<IncrementAccumulator>,
    last: Option<(u64, Vec<f64>)>,
    trace: Option<PotentialTrace>,
    breach: Option<u64>,
    error: Option<HarnessError>,
}

impl SampleSink<'_> {
    fn observe<F: ObjectiveFunction + ?Sized>(&mut self, state: &SwarmState, f: &F, arith: &mut Arith) -> ControlFlow<()> {
        match self.try_observe(state, f, arith) {
            Ok(flow) => flow,
            Err(e) => {
                self.error = Some(e);
                ControlFlow::Break(())
            }
        }
    }

    fn try_observe<F: ObjectiveFunction + ?Sized>(
        &mut self,
        state: &SwarmState,
        f: &F,
        arith: &mut Arith,
    ) -> Result<ControlFlow<()>, HarnessError> {
        if self.truncated {
            return Ok(ControlFlow::Continue(()));
        }
        let k = state.t / self.delta_t;
        let phi = phi_values(state, f, arith);
        if let Some(trace) = &mut self.trace {
            trace.push_sample(k, &phi)?;
        }
        if phi.iter().any(BigReal::is_zero) {
            self.zero_samples.push(k);
            self.truncated = self.first_sample.is_some();
            return Ok(ControlFlow::Continue(()));
        }
        let log2 = phi.iter().map(BigReal::log2_magnitude).collect::<Result<Vec<_>, _>>()?;
        let psi = psi_from_log2(&log2);
        self.first_sample.get_or_insert(k);
        self.detector.push(k, &psi);

        let (m, e) = (self.horizons.t_m / self.delta_t, self.horizons.t_e / self.delta_t);
        if !self.stagnating.is_empty() && self.stagnating.len() < psi.len() {
            if k == m {
                self.at_m = Some((log2.clone(), psi.clone()));
                self.increments = Some(IncrementAccumulator::new(self.stagnating, e - m, &self.horizons.taus)?);
            } else if k > m && k <= e {
                if let (Some(acc), Some((prev_k, prev))) = (&mut self.increments, &self.last) {
                    debug_assert_eq!(*prev_k + 1, k);
                    let row: Vec<f64> = psi.iter().zip(prev).map(|(a, b)| a - b).collect();
                    acc.push(&row);
                }
            }
            if k == e {
                if let Some((lm, pm)) = &self.at_m {
                    self.drift = Some(DriftSample::from_rows(self.stagnating, (lm, pm), (&log2, &psi))?);
                }
            }
        }
        let breached = self.scale_guard
            && k * self.delta_t <= self.horizons.t_e
            && self.stagnating.iter().any(|&d| psi[d] >= SCALE_PSI_LIMIT);
        self.last = Some((k, psi));
        if breached {
            self.breach = Some(k * self.delta_t);
            return Ok(ControlFlow::Break(()));
        }
        Ok(ControlFlow::Continue(()))
    }
}

/// Scale for the next attempt after a stagnating dimension reached the
/// limit at iteration `t_star`: extrapolates the observed climb of
/// `scale − 100` bits in `t_star` iterations to the whole window, with 15 %
/// headroom plus a constant margin.
pub fn next_scale(scale: u32, t_e: u64, t_star: u64) -> u32 {
    let climb = f64::from(scale.saturating_sub(100).max(1));
    let wanted = (climb * t_e as f64 / t_star.max(1) as f64 * 1.15).ceil() + 200.0;
    let wanted = wanted.min(f64::from(u32::MAX / 2)) as u32;
    wanted.max(scale.saturating_add(200))
}

enum Attempt {
    Done(Box<RunOutcome>),
    Breached { at: u64 },
}

fn attempt(cfg: &ExperimentConfig, run_index: usize, scale: u32, attempts: u32, keep_trace: bool) -> Result<Attempt, HarnessError> {
    let seed = cfg.seed_of(run_index);
    let bits = cfg.precision.initial_bits;
    let horizons = cfg.resolved_horizons()?;
    let stagnating = cfg.stagnating_dims();
    let f = Objective::new(cfg.objective, cfg.dims, bits)?;
    let params = cfg.swarm_params(bits)?;
    let mut arith = Arith::new(cfg.precision);
    let mut rng = RngStream::new(seed);
    let halfwidth = BigReal::from_f64(cfg.box_halfwidth, bits)?;
    let (count, first) = match cfg.init {
        InitConfig::Usual => (0, 0),
        InitConfig::Special { stagnating, dstar, .. } => (stagnating, dstar - 1),
    };
    let mut state = init_state(&params, &halfwidth, scale, count, first, cfg.velocity_init, &f, &mut rng, &mut arith)?;

    let mut sink = SampleSink {
        delta_t: cfg.delta_t,
        stagnating: &stagnating,
        horizons: &horizons,
        scale_guard: cfg.auto_scale,
        first_sample: None,
        truncated: false,
        zero_samples: Vec::new(),
        detector: StoppingTimeDetector::new(cfg.stagnation_config()),
        at_m: None,
        drift: None,
        increments: None,
        last: None,
        trace: keep_trace.then(|| PotentialTrace::new(cfg.delta_t)),
        breach: None,
        error: None,
    };
    let summary = run(&mut state, &params, &f, cfg.iterations, cfg.delta_t, &mut rng, &mut arith, |st, ar| {
        sink.observe(st, &f, ar)
    })?;
    if let Some(e) = sink.error {
        return Err(e);
    }
    if let Some(at) = sink.breach {
        return Ok(Attempt::Breached { at });
    }

    let stopping_times = sink.detector.finish();
    let phases = partition_phases(&stopping_times, summary.iterations);
    let increments = sink.increments.filter(IncrementAccumulator::is_complete).map(IncrementAccumulator::finish);
    Ok(Attempt::Done(Box::new(RunOutcome {
        run_index,
        seed,
        scale_used: matches!(cfg.init, InitConfig::Special { .. }).then_some(scale),
        attempts,
        iterations: summary.iterations,
        stopping_times,
        phases,
        final_psi: sink.last.map(|(_, psi)| psi).unwrap_or_default(),
        final_g_abs: summary.final_g.iter().map(|g| g.abs().with_precision(64)).collect(),
        final_fg_exponent: summary.final_fg.exponent(),
        precision_bits: summary.precision_bits,
        rng_draws: summary.rng_draws,
        zero_samples: sink.zero_samples,
        truncated: sink.truncated,
        drift: sink.drift,
        increments,
        trace: sink.trace,
    })))
}

/// Runs seed `base_seed + run_index`, retrying with a larger scale when the
/// configuration asks for it.
pub fn run_single(cfg: &ExperimentConfig, run_index: usize) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let mut scale = match cfg.init {
        InitConfig::Special { scale, .. } => scale,
        InitConfig::Usual => 0,
    };
    let t_e = cfg.resolved_horizons()?.t_e;
    for attempts in 1..=MAX_SCALE_ATTEMPTS {
        match attempt(cfg, run_index, scale, attempts, cfg.keep_traces)? {
            Attempt::Done(outcome) => return Ok(*outcome),
            Attempt::Breached { at } => scale = next_scale(scale, t_e, at),
        }
    }
    Err(HarnessError::ScaleExhausted { seed: cfg.seed_of(run_index) })
}

/// Runs all seeds of `cfg` on `threads` workers (default: all cores) and
/// returns the outcomes in seed order. `progress` is called after each run
/// with the number of finished runs.
pub fn run_ensemble(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
    progress: impl Fn(usize) + Sync,
) -> Result<Vec<RunOutcome>, HarnessError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|i| {
                let outcome = run_single(cfg, i);
                progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
                outcome
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{DriftSample, IncrementSums};
    use crate::harness::config::{ExperimentKind, Horizons};
    use crate::objectives::ObjectiveId;
    use crate::stagnation::detect_stopping_times;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment: kind,
            objective: ObjectiveId::Sphere,
            particles: 2,
            dims: 4,
            init: InitConfig::Special { scale: 300, stagnating: 2, dstar: 2 },
            iterations: 400,
            runs: 3,
            base_seed: 7,
            keep_traces: true,
            horizons: Horizons { tau_grid: Some(vec![1, 10, 100, 200]), ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn streaming_summaries_equal_trace_based_ones() {
        let cfg = small(ExperimentKind::Exp1);
        let out = run_single(&cfg, 0).unwrap();
        let trace = out.trace.as_ref().unwrap();
        assert_eq!(trace.first_sample, 1);
        assert_eq!(out.zero_samples, vec![0]);
        let ds = cfg.stagnating_dims();
        assert_eq!(ds, vec![1, 2]);
        assert_eq!(out.drift.as_ref().unwrap(), &DriftSample::from_trace(trace, &ds, 200, 400).unwrap());
        let sums = IncrementSums::from_trace(trace, &ds, 200, 400, &[1, 10, 100, 200]).unwrap();
        assert_eq!(out.increments.as_ref().unwrap(), &sums);
        assert_eq!(out.stopping_times, detect_stopping_times(trace, &cfg.stagnation_config()));
        assert_eq!(out.final_psi, *trace.psi.last().unwrap());
    }

    #[test]
    fn ensembles_do_not_depend_on_thread_count() {
        let cfg = small(ExperimentKind::Exp1);
        let one = run_ensemble(&cfg, Some(1), |_| {}).unwrap();
        let three = run_ensemble(&cfg, Some(3), |_| {}).unwrap();
        assert_eq!(one, three);
        assert_eq!(one.iter().map(|o| o.seed).collect::<Vec<_>>(), vec![7, 8, 9]);
    }

    #[test]
    fn adaptive_scale_retries_with_a_larger_scale() {
        // Scale 120 starts the stagnating dimensions barely below the limit.
        let cfg = ExperimentConfig {
            init: InitConfig::Special { scale: 120, stagnating: 2, dstar: 1 },
            auto_scale: true,
            keep_traces: false,
            ..small(ExperimentKind::Exp1)
        };
        let out = run_single(&cfg, 0).unwrap();
        assert!(out.attempts > 1);
        assert!(out.scale_used.unwrap() > 120);
        assert_eq!(next_scale(600, 1000, 100), ((500.0f64 * 10.0 * 1.15).ceil() + 200.0) as u32);
        assert_eq!(next_scale(600, 1000, 1000), 800);
    }

    #[test]
    fn usual_initialization_has_no_window_summaries() {
        let cfg = ExperimentConfig { init: InitConfig::Usual, ..small(ExperimentKind::SingleRun) };
        let out = run_single(&cfg, 0).unwrap();
        assert!(out.drift.is_none() && out.increments.is_none());
        assert_eq!(out.scale_used, None);
        assert_eq!(out.final_g_abs.len(), 4);
    }
}
