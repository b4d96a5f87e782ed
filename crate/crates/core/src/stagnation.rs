//! Stagnation phases: stopping times, phase tiling and classification.
//!
//! A stagnation phase starts at the first sample where at least `N₀`
//! dimensions have `Ψ ≤ c₀`. It lasts while at least `N₀` of *those*
//! dimensions (frozen at the start) have kept `Ψ ≤ c_s` throughout. The
//! stopping times are
//!
//! ```text
//! β₋₁ = 0
//! α_i = Δt · min{ t ≥ β_{i−1}/Δt : |{d : Ψ(t,d) ≤ c₀}| ≥ N₀ }
//! β_i = Δt · min{ t ≥ α_i/Δt : |{d : Ψ(α_i/Δt,d) ≤ c₀, max_{α_i/Δt ≤ t' ≤ t} Ψ(t',d) ≤ c_s}| < N₀ }
//! ```
//!
//! Between stagnation phases (`PH_Y`) lie non-stagnation phases (`PH_X`);
//! a stagnation phase still running when the trace ends is reported as the
//! final phase candidate (`PH_F`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::potential::PotentialTrace;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StagnationError {
    #[error("invalid stagnation config: {0}")]
    InvalidConfig(String),
    #[error("phase has {got} increment samples, at least {needed} are needed")]
    InsufficientData { got: usize, needed: usize },
    #[error("phase has no stagnating dimensions to classify")]
    NoStagnatingSet,
}

/// Thresholds of the phase detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagnationConfig {
    pub delta_t: u64,
    pub n0: usize,
    pub c0: f64,
    pub cs: f64,
}

impl StagnationConfig {
    /// Checks `Δt ≥ 1`, `1 ≤ N₀ < D` and `c₀ ≤ c_s < 0`.
    pub fn validate(&self, dims: usize) -> Result<(), StagnationError> {
        if self.delta_t == 0 {
            return Err(StagnationError::InvalidConfig("delta_t must be at least 1".into()));
        }
        if self.n0 == 0 || self.n0 >= dims {
            return Err(StagnationError::InvalidConfig(format!(
                "n0 must satisfy 1 <= n0 < D = {dims}, got {}",
                self.n0
            )));
        }
        if !(self.c0 <= self.cs && self.cs < 0.0) {
            return Err(StagnationError::InvalidConfig(format!(
                "thresholds must satisfy c0 <= cs < 0, got c0 = {}, cs = {}",
                self.c0, self.cs
            )));
        }
        Ok(())
    }
}

/// Detected `α_i` / `β_i`, in iterations. `betas[i]` is `None` when the
/// phase is still running at the end of the trace; only the last entry can
/// be open.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingTimes {
    pub alphas: Vec<u64>,
    pub betas: Vec<Option<u64>>,
    /// Dimensions (0-based) with `Ψ ≤ c₀` at each `α_i`.
    pub sets: Vec<Vec<usize>>,
}

/// Computes the stopping times of a trace in one forward pass.
///
/// The trace's `Δt` is used; `cfg.delta_t` must agree with it.
pub fn detect_stopping_times(trace: &PotentialTrace, cfg: &StagnationConfig) -> StoppingTimes {
    let mut detector = StoppingTimeDetector::new(StagnationConfig { delta_t: trace.delta_t, ..*cfg });
    for (k, row) in trace.psi.iter().enumerate() {
        detector.push(trace.first_sample + k as u64, row);
    }
    detector.finish()
}

/// Incremental form of [`detect_stopping_times`], fed one Ψ row per sample.
#[derive(Debug, Clone)]
pub struct StoppingTimeDetector {
    cfg: StagnationConfig,
    times: StoppingTimes,
    /// Liveness of the frozen set while a phase is running.
    alive: Option<(Vec<bool>, usize)>,
}

impl StoppingTimeDetector {
    pub fn new(cfg: StagnationConfig) -> Self {
        StoppingTimeDetector { cfg, times: StoppingTimes::default(), alive: None }
    }

    /// Processes the Ψ row of sample index `sample`; samples must be
    /// consecutive.
    pub fn push(&mut self, sample: u64, psi: &[f64]) {
        let cfg = self.cfg;
        if let Some((alive, live)) = &mut self.alive {
            let set = self.times.sets.last().expect("a running phase has a set");
            for (slot, &d) in set.iter().enumerate() {
                if alive[slot] && psi[d] > cfg.cs {
                    alive[slot] = false;
                    *live -= 1;
                }
            }
            if *live >= cfg.n0 {
                return;
            }
            *self.times.betas.last_mut().expect("a running phase has a beta slot") = Some(cfg.delta_t * sample);
            self.alive = None;
        }
        // Searching; a phase may start at the very sample the previous one ended.
        if count_at_most(psi, cfg.c0) >= cfg.n0 {
            let set: Vec<usize> = (0..psi.len()).filter(|&d| psi[d] <= cfg.c0).collect();
            self.alive = Some((vec![true; set.len()], set.len()));
            self.times.alphas.push(cfg.delta_t * sample);
            self.times.betas.push(None);
            self.times.sets.push(set);
        }
    }

    /// Stopping times so far; a running phase has an open `β`.
    pub fn times(&self) -> &StoppingTimes {
        &self.times
    }

    pub fn finish(self) -> StoppingTimes {
        self.times
    }
}

fn count_at_most(row: &[f64], threshold: f64) -> usize {
    row.iter().filter(|&&p| p <= threshold).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseKind {
    #[serde(rename = "PH_X")]
    X,
    #[serde(rename = "PH_Y")]
    Y,
    #[serde(rename = "PH_F")]
    F,
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseKind::X => "PH_X",
            PhaseKind::Y => "PH_Y",
            PhaseKind::F => "PH_F",
        })
    }
}

/// One phase of a run, in iterations. `end == None` means open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub kind: PhaseKind,
    /// `i` of `PH_X(i)` / `PH_Y(i)`.
    pub index: usize,
    pub start: u64,
    pub end: Option<u64>,
    pub stagnating_set: Vec<usize>,
}

/// Phases of a run together with their durations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePartition {
    pub phases: Vec<PhaseRecord>,
    /// `X_i`; `None` for a non-stagnation phase still running at the end.
    pub x: Vec<Option<u64>>,
    /// `Y_i`; `None` for the open final candidate.
    pub y: Vec<Option<u64>>,
    /// Start of the final phase, `Σ (X_i + Y_i)`, if one exists.
    pub t_f: Option<u64>,
    pub trace_end: u64,
}

/// Tiles `[0, trace_end]` with alternating `PH_X` / `PH_Y` phases.
pub fn partition_phases(times: &StoppingTimes, trace_end: u64) -> PhasePartition {
    let mut phases = Vec::new();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let mut t_f = None;
    let mut previous_end = Some(0);
    for (i, (&alpha, &beta)) in times.alphas.iter().zip(&times.betas).enumerate() {
        let start = previous_end.expect("only the last stagnation phase can be open");
        phases.push(PhaseRecord { kind: PhaseKind::X, index: i, start, end: Some(alpha), stagnating_set: Vec::new() });
        x.push(Some(alpha - start));
        let set = times.sets.get(i).cloned().unwrap_or_default();
        match beta {
            Some(beta) => {
                phases.push(PhaseRecord { kind: PhaseKind::Y, index: i, start: alpha, end: Some(beta), stagnating_set: set });
                y.push(Some(beta - alpha));
            }
            None => {
                phases.push(PhaseRecord { kind: PhaseKind::F, index: i, start: alpha, end: None, stagnating_set: set });
                y.push(None);
                t_f = Some(alpha);
            }
        }
        previous_end = beta;
    }
    if let Some(start) = previous_end {
        phases.push(PhaseRecord { kind: PhaseKind::X, index: x.len(), start, end: None, stagnating_set: Vec::new() });
        x.push(None);
    }
    PhasePartition { phases, x, y, t_f, trace_end }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    NotGood,
}

/// Empirical stand-ins for the conditions defining a "good" phase: the mean
/// base increment, the sixth central moment of the increments and the
/// smaller of the two tail frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseClassification {
    pub verdict: Verdict,
    pub mu_hat: f64,
    pub m6_hat: f64,
    pub p0_hat: f64,
    pub samples: usize,
}

/// Minimum number of increment samples for [`classify_phase`].
pub const MIN_PHASE_SAMPLES: usize = 30;

/// Classifies a stagnation phase by the increments inside it.
///
/// With `B_t` the mean increment over the phase's stagnating set and
/// `J_{t,d} = I_{t,d} − B_t`: `μ̂` is the mean of `B`, `M̂` the mean of
/// `(I − μ̂)⁶`, and `p̂₀` the smaller of the frequencies of
/// `B ≤ μ/2` and `J ≤ −μ/2`, where `μ` is `mu_threshold`.
pub fn classify_phase(
    trace: &PotentialTrace,
    phase: &PhaseRecord,
    mu_threshold: f64,
    m_threshold: f64,
    p0_threshold: f64,
) -> Result<PhaseClassification, StagnationError> {
    if phase.stagnating_set.is_empty() {
        return Err(StagnationError::NoStagnatingSet);
    }
    let dt = trace.delta_t;
    let from = (phase.start / dt).max(trace.first_sample);
    let to = phase.end.map_or(trace.end_sample() - 1, |e| e / dt).min(trace.end_sample().saturating_sub(1));
    let set = &phase.stagnating_set;
    let mut base = Vec::new();
    let mut increments = Vec::new();
    for t in from..to {
        let row: Vec<f64> = set.iter().filter_map(|&d| trace.increment(t, d)).collect();
        if row.len() != set.len() {
            break;
        }
        base.push(row.iter().sum::<f64>() / row.len() as f64);
        increments.push(row);
    }
    if base.len() < MIN_PHASE_SAMPLES {
        return Err(StagnationError::InsufficientData { got: base.len(), needed: MIN_PHASE_SAMPLES });
    }
    let mu_hat = base.iter().sum::<f64>() / base.len() as f64;
    let count = (base.len() * set.len()) as f64;
    let m6_hat = increments.iter().flatten().map(|i| (i - mu_hat).powi(6)).sum::<f64>() / count;
    let b_tail = base.iter().filter(|&&b| b <= mu_threshold / 2.0).count() as f64 / base.len() as f64;
    let j_tail = increments
        .iter()
        .zip(&base)
        .flat_map(|(row, b)| row.iter().map(move |i| i - b))
        .filter(|&j| j <= -mu_threshold / 2.0)
        .count() as f64
        / count;
    let p0_hat = b_tail.min(j_tail);
    let good = mu_threshold < 0.0 && mu_hat <= mu_threshold && m6_hat <= m_threshold && p0_hat >= p0_threshold;
    Ok(PhaseClassification {
        verdict: if good { Verdict::Good } else { Verdict::NotGood },
        mu_hat,
        m6_hat,
        p0_hat,
        samples: base.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn cfg(n0: usize) -> StagnationConfig {
        StagnationConfig { delta_t: 1, n0, c0: -40.0, cs: -20.0 }
    }

    fn two_dim(second: &[f64]) -> PotentialTrace {
        PotentialTrace::from_psi(1, 0, second.iter().map(|&p| vec![0.0, p]).collect())
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1).validate(2).is_ok());
        assert!(cfg(2).validate(2).is_err());
        assert!(StagnationConfig { c0: -10.0, ..cfg(1) }.validate(3).is_err());
        assert!(StagnationConfig { cs: 0.0, ..cfg(1) }.validate(3).is_err());
    }

    #[test]
    fn phase_ends_when_dimension_rises_above_sustained_threshold() {
        let times = detect_stopping_times(&two_dim(&[-50.0, -41.0, -19.0, -19.0]), &cfg(1));
        assert_eq!(times.alphas, vec![0]);
        assert_eq!(times.betas, vec![Some(2)]);
        assert_eq!(times.sets, vec![vec![1]]);
    }

    #[test]
    fn no_phase_when_threshold_never_met() {
        let times = detect_stopping_times(&two_dim(&[-10.0, -39.0, -5.0]), &cfg(1));
        assert!(times.alphas.is_empty() && times.betas.is_empty());
    }

    #[test]
    fn back_to_back_phases() {
        // Dimension 1 leaves at sample 2 while dimension 2 is already below c0.
        let psi = vec![
            vec![0.0, -50.0, -10.0],
            vec![0.0, -45.0, -45.0],
            vec![0.0, -15.0, -60.0],
            vec![0.0, -15.0, -60.0],
        ];
        let times = detect_stopping_times(&PotentialTrace::from_psi(1, 0, psi), &cfg(1));
        assert_eq!(times.alphas, vec![0, 2]);
        assert_eq!(times.betas, vec![Some(2), None]);
        assert_eq!(times.sets, vec![vec![1], vec![2]]);
    }

    #[test]
    fn stagnating_set_is_frozen_at_phase_start() {
        // Dimension 2 drops below c0 only after the start; it must not keep
        // the phase alive once dimension 1 leaves.
        let psi = vec![
            vec![0.0, -50.0, -10.0],
            vec![0.0, -50.0, -45.0],
            vec![0.0, -10.0, -45.0],
        ];
        let times = detect_stopping_times(&PotentialTrace::from_psi(1, 0, psi), &cfg(1));
        assert_eq!(times.betas[0], Some(2));
        // The next phase starts at the end of the previous one.
        assert_eq!(times.alphas, vec![0, 2]);
    }

    #[test]
    fn step_width_scales_times() {
        let trace = PotentialTrace::from_psi(100, 1, vec![vec![0.0, -10.0], vec![0.0, -50.0], vec![0.0, -5.0]]);
        let times = detect_stopping_times(&trace, &StagnationConfig { delta_t: 100, ..cfg(1) });
        assert_eq!(times.alphas, vec![200]);
        assert_eq!(times.betas, vec![Some(300)]);
    }

    #[test]
    fn partition_single_open_phase() {
        let times = StoppingTimes { alphas: vec![300], betas: vec![None], sets: vec![vec![1]] };
        let p = partition_phases(&times, 100_000);
        assert_eq!(p.x, vec![Some(300)]);
        assert_eq!(p.y, vec![None]);
        assert_eq!(p.t_f, Some(300));
        assert_eq!(p.phases.last().unwrap().kind, PhaseKind::F);
    }

    #[test]
    fn partition_without_phases() {
        let p = partition_phases(&StoppingTimes::default(), 1000);
        assert_eq!(p.phases.len(), 1);
        assert_eq!(p.phases[0].kind, PhaseKind::X);
        assert_eq!((p.phases[0].start, p.phases[0].end), (0, None));
        assert_eq!(p.t_f, None);
    }

    #[test]
    fn partition_with_zero_length_gap() {
        let times = StoppingTimes {
            alphas: vec![200, 500],
            betas: vec![Some(500), None],
            sets: vec![vec![0], vec![1]],
        };
        let p = partition_phases(&times, 10_000);
        assert_eq!(p.x, vec![Some(200), Some(0)]);
        assert_eq!(p.y, vec![Some(300), None]);
        assert_eq!(p.t_f, Some(500));
        let kinds: Vec<PhaseKind> = p.phases.iter().map(|ph| ph.kind).collect();
        assert_eq!(kinds, vec![PhaseKind::X, PhaseKind::Y, PhaseKind::X, PhaseKind::F]);
    }

    fn synthetic_phase(increments: &[f64]) -> (PotentialTrace, PhaseRecord) {
        let mut level = -1000.0;
        let mut psi = vec![vec![0.0, level]];
        for inc in increments {
            level += inc;
            psi.push(vec![0.0, level]);
        }
        let trace = PotentialTrace::from_psi(1, 0, psi);
        let phase = PhaseRecord {
            kind: PhaseKind::Y,
            index: 0,
            start: 0,
            end: Some(increments.len() as u64),
            stagnating_set: vec![1],
        };
        (trace, phase)
    }

    #[test]
    fn gaussian_drift_phase_is_good() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(-0.05, 1.0).unwrap();
        let incs: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let (trace, phase) = synthetic_phase(&incs);
        let c = classify_phase(&trace, &phase, -0.01, 1e5, 0.1).unwrap();
        assert_eq!(c.verdict, Verdict::Good);
        assert!((c.mu_hat + 0.05).abs() < 0.03, "{}", c.mu_hat);
        assert_eq!(c.samples, 10_000);
    }

    #[test]
    fn positive_drift_is_not_good() {
        let (trace, phase) = synthetic_phase(&[0.1; 100]);
        let c = classify_phase(&trace, &phase, -0.01, 1e5, 0.1).unwrap();
        assert_eq!(c.verdict, Verdict::NotGood);
    }

    #[test]
    fn short_phase_is_rejected() {
        let (trace, phase) = synthetic_phase(&[-0.1; 10]);
        assert_eq!(
            classify_phase(&trace, &phase, -0.01, 1e5, 0.1),
            Err(StagnationError::InsufficientData { got: 10, needed: 30 })
        );
    }

    proptest! {
        #[test]
        fn detection_is_causal_and_ordered(
            rows in proptest::collection::vec(proptest::collection::vec(-80.0f64..0.0, 3), 2..60),
            cut in 1usize..60,
        ) {
            let psi: Vec<Vec<f64>> = rows.iter().map(|r| { let mut r = r.clone(); r.push(0.0); r }).collect();
            let config = cfg(2);
            let full = detect_stopping_times(&PotentialTrace::from_psi(1, 0, psi.clone()), &config);
            for i in 0..full.alphas.len() {
                if let Some(b) = full.betas[i] {
                    prop_assert!(full.alphas[i] < b);
                }
                if i > 0 {
                    prop_assert!(full.betas[i - 1].unwrap() <= full.alphas[i]);
                }
                prop_assert!(full.sets[i].len() >= config.n0);
            }
            let cut = cut.min(psi.len());
            let prefix = detect_stopping_times(&PotentialTrace::from_psi(1, 0, psi[..cut].to_vec()), &config);
            let end = cut as u64;
            for (i, &a) in prefix.alphas.iter().enumerate() {
                prop_assert_eq!(a, full.alphas[i]);
                if let Some(b) = prefix.betas[i] {
                    prop_assert_eq!(Some(b), full.betas[i]);
                } else {
                    prop_assert!(full.betas[i].map_or(true, |b| b >= end));
                }
            }
            let partition = partition_phases(&full, psi.len() as u64);
            let mut cursor = 0;
            for phase in &partition.phases {
                prop_assert_eq!(phase.start, cursor);
                match phase.end { Some(e) => cursor = e, None => break }
            }
        }
    }
}
