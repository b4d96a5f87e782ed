//! Ensemble estimators.
//!
//! All estimators work on a fixed set `D_S` of stagnating dimensions and a
//! window `[T_m, T_e]` of iterations (the first half of a run is discarded
//! as burn-in). They are computed from compact per-run summaries
//! ([`DriftSample`], [`IncrementSums`]) so that long ensembles never need
//! all traces in memory; the `EnsembleInput` entry points build those
//! summaries from traces for convenience. Reductions always run in the
//! order of the runs, so results are bit-stable.
//!
//! Normalisation is by the population size (`1/R`, `1/(R·|D_S|)`) exactly
//! as in the estimator definitions.

use serde::{Deserialize, Serialize};

use crate::potential::PotentialTrace;
use crate::stagnation::{PhasePartition, StoppingTimes};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("the stagnating set is empty")]
    EmptyStagnatingSet,
    #[error("every dimension is stagnating; nothing is left to compare against")]
    EmptyComplement,
    #[error("the ensemble has no runs")]
    EmptyEnsemble,
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("horizon too short: {0}")]
    HorizonTooShort(String),
    #[error("tau {0} lies outside the estimation window")]
    TauOutOfRange(u64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("run {run} has no sample at index {sample}")]
    MissingSample { run: usize, sample: u64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Traces of an ensemble together with the stagnating set and the window.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleInput<'a> {
    pub traces: &'a [PotentialTrace],
    /// 0-based stagnating dimensions.
    pub stagnating: &'a [usize],
    /// Start and end of the estimation window, in iterations.
    pub t_m: u64,
    pub t_e: u64,
}

fn window_samples(delta_t: u64, t_m: u64, t_e: u64) -> Result<(u64, u64), EstimatorError> {
    if t_m >= t_e {
        return Err(EstimatorError::HorizonTooShort(format!("T_m = {t_m} must be below T_e = {t_e}")));
    }
    if t_m % delta_t != 0 || t_e % delta_t != 0 {
        return Err(EstimatorError::InvalidInput(format!(
            "T_m = {t_m} and T_e = {t_e} must be multiples of the step width {delta_t}"
        )));
    }
    Ok((t_m / delta_t, t_e / delta_t))
}

// ---------------------------------------------------------------------------
// Drift of the (logarithmic) potential between T_m and T_e.

/// Changes of `log2 Φ` and `Ψ` between `T_m` and `T_e` in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    /// Change of `log2 max_{d∉D_S} Φ`.
    pub upper: f64,
    /// Change of `log2 min_{d∉D_S} Φ`.
    pub lower: f64,
    /// Change of `log2 Φ(d)` for each `d ∈ D_S`.
    pub stagnating: Vec<f64>,
    /// Change of `Ψ(d)` for each `d ∈ D_S`.
    pub relative: Vec<f64>,
}

impl DriftSample {
    pub fn from_trace(
        trace: &PotentialTrace,
        stagnating: &[usize],
        t_m: u64,
        t_e: u64,
    ) -> Result<Self, EstimatorError> {
        let (m, e) = window_samples(trace.delta_t, t_m, t_e)?;
        let missing = |sample| EstimatorError::MissingSample { run: 0, sample };
        let at = |t: u64| Ok((trace.log2_phi_at(t).ok_or(missing(t))?, trace.psi_at(t).ok_or(missing(t))?));
        DriftSample::from_rows(stagnating, at(m)?, at(e)?)
    }

    /// From the `(log2 Φ, Ψ)` rows at `T_m` and `T_e`.
    pub fn from_rows(
        stagnating: &[usize],
        (lm, pm): (&[f64], &[f64]),
        (le, pe): (&[f64], &[f64]),
    ) -> Result<Self, EstimatorError> {
        if stagnating.is_empty() {
            return Err(EstimatorError::EmptyStagnatingSet);
        }
        let free: Vec<usize> = (0..lm.len()).filter(|d| !stagnating.contains(d)).collect();
        if free.is_empty() {
            return Err(EstimatorError::EmptyComplement);
        }
        let extreme = |row: &[f64], pick: fn(f64, f64) -> f64, init: f64| {
            free.iter().map(|&d| row[d]).fold(init, pick)
        };
        Ok(DriftSample {
            upper: extreme(le, f64::max, f64::NEG_INFINITY) - extreme(lm, f64::max, f64::NEG_INFINITY),
            lower: extreme(le, f64::min, f64::INFINITY) - extreme(lm, f64::min, f64::INFINITY),
            stagnating: stagnating.iter().map(|&d| le[d] - lm[d]).collect(),
            relative: stagnating.iter().map(|&d| pe[d] - pm[d]).collect(),
        })
    }

    /// This run's contribution to `μ̄_L`: mean stagnating change minus the
    /// change of the largest free potential, per iteration.
    pub fn rate_l(&self, horizon: u64) -> f64 {
        let mean = self.stagnating.iter().sum::<f64>() / self.stagnating.len() as f64;
        (mean - self.upper) / horizon as f64
    }
}

/// Drift estimators in bits per iteration, plus their rate deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStats {
    pub mu_u: f64,
    pub mu_m: f64,
    pub mu_d: f64,
    pub mu_l: f64,
    pub sigma_u: f64,
    pub sigma_m: f64,
    pub sigma_d: f64,
    pub sigma_l: f64,
    pub runs: usize,
    /// Standard error of `μ̄_L`: sample deviation of the per-run rates
    /// divided by `√R` (zero for a single run).
    pub se_l: f64,
}

/// Drift estimators from per-run samples over a window of `horizon`
/// iterations.
///
/// ```
/// use swarmlab::estimators::{drift_stats, DriftSample};
///
/// // Every potential halves each iteration: no relative drift.
/// let sample = DriftSample { upper: -10.0, lower: -10.0, stagnating: vec![-10.0], relative: vec![0.0] };
/// let stats = drift_stats(&[sample], 10).unwrap();
/// assert_eq!((stats.mu_u, stats.mu_d, stats.mu_l), (-1.0, -1.0, 0.0));
/// ```
pub fn drift_stats(samples: &[DriftSample], horizon: u64) -> Result<DriftStats, EstimatorError> {
    if samples.is_empty() {
        return Err(EstimatorError::EmptyEnsemble);
    }
    if horizon == 0 {
        return Err(EstimatorError::HorizonTooShort("empty window".into()));
    }
    let width = samples[0].stagnating.len();
    if width == 0 {
        return Err(EstimatorError::EmptyStagnatingSet);
    }
    if samples.iter().any(|s| s.stagnating.len() != width || s.relative.len() != width) {
        return Err(EstimatorError::InvalidInput("runs disagree on the stagnating set".into()));
    }
    let h = horizon as f64;
    let r = samples.len() as f64;
    let cells = r * width as f64;

    let mu_u = samples.iter().map(|s| s.upper).sum::<f64>() / (r * h);
    let mu_m = samples.iter().map(|s| s.lower).sum::<f64>() / (r * h);
    let mu_d = samples.iter().flat_map(|s| &s.stagnating).sum::<f64>() / (cells * h);
    let mu_l = mu_d - mu_u;

    let h2 = h * h;
    let var_u = samples.iter().map(|s| (s.upper - h * mu_u).powi(2)).sum::<f64>() / (r * h2);
    let var_m = samples.iter().map(|s| (s.lower - h * mu_m).powi(2)).sum::<f64>() / (r * h2);
    let var_d = samples.iter().flat_map(|s| &s.stagnating).map(|x| (x - h * mu_d).powi(2)).sum::<f64>() / (cells * h2);
    let var_l = samples.iter().flat_map(|s| &s.relative).map(|x| (x - h * mu_l).powi(2)).sum::<f64>() / (cells * h2);

    let se_l = if samples.len() > 1 {
        let rates: Vec<f64> = samples.iter().map(|s| s.rate_l(horizon)).collect();
        let mean = rates.iter().sum::<f64>() / r;
        let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        0.0
    };

    Ok(DriftStats {
        mu_u,
        mu_m,
        mu_d,
        mu_l,
        sigma_u: var_u.sqrt(),
        sigma_m: var_m.sqrt(),
        sigma_d: var_d.sqrt(),
        sigma_l: var_l.sqrt(),
        runs: samples.len(),
        se_l,
    })
}

/// Drift estimators directly from traces.
pub fn exp1_drift(input: &EnsembleInput<'_>) -> Result<DriftStats, EstimatorError> {
    let samples = input
        .traces
        .iter()
        .enumerate()
        .map(|(run, trace)| {
            DriftSample::from_trace(trace, input.stagnating, input.t_m, input.t_e).map_err(|e| match e {
                EstimatorError::MissingSample { sample, .. } => EstimatorError::MissingSample { run, sample },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    drift_stats(&samples, input.t_e - input.t_m)
}

// ---------------------------------------------------------------------------
// Base / residual decomposition of the increments.

/// Splits increments into the base `B_t` (mean over `D_S`) and the
/// residuals `J_{t,d} = I_{t,d} − B_t` for `d ∈ D_S` (in the order of
/// `stagnating`).
///
/// ```
/// use swarmlab::estimators::bj_decompose;
/// use swarmlab::potential::PotentialTrace;
///
/// let trace = PotentialTrace::from_psi(1, 0, vec![vec![0.0, 0.0, 0.0], vec![0.0, 3.0, 6.0]]);
/// let (b, j) = bj_decompose(&trace, &[0, 1, 2]).unwrap();
/// assert_eq!(b, vec![3.0]);
/// assert_eq!(j, vec![vec![-3.0, 0.0, 3.0]]);
/// ```
pub fn bj_decompose(
    trace: &PotentialTrace,
    stagnating: &[usize],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), EstimatorError> {
    if stagnating.is_empty() {
        return Err(EstimatorError::EmptyStagnatingSet);
    }
    let mut base = Vec::new();
    let mut residual = Vec::new();
    for row in trace.increments() {
        let (b, j) = split_row(&row, stagnating);
        base.push(b);
        residual.push(j);
    }
    Ok((base, residual))
}

fn split_row(row: &[f64], stagnating: &[usize]) -> (f64, Vec<f64>) {
    let b = stagnating.iter().map(|&d| row[d]).sum::<f64>() / stagnating.len() as f64;
    (b, stagnating.iter().map(|&d| row[d] - b).collect())
}

/// Per-run partial sums of the increments over the window, evaluated on a
/// grid of lengths `τ` (in samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSums {
    /// Number of increments in the window, `(T_e − T_m)/Δt`.
    pub horizon: u64,
    pub taus: Vec<u64>,
    /// `I'_{τ,d}` for each grid point and each `d ∈ D_S`.
    pub i_partial: Vec<Vec<f64>>,
    /// `B'_τ`.
    pub b_partial: Vec<f64>,
    /// `J'_{τ,d}`, accumulated from the residuals themselves.
    pub j_partial: Vec<Vec<f64>>,
    /// Sum of `B_t` over the whole window.
    pub b_total: f64,
    /// Sum of `J_{t,d}` over the whole window and `D_S`.
    pub j_total: f64,
    /// `I_max,d` for each `d ∈ D_S`.
    pub i_max: Vec<f64>,
}

impl IncrementSums {
    /// Accumulates from a trace; `taus` must be sorted, distinct and within
    /// `1..=horizon`.
    pub fn from_trace(
        trace: &PotentialTrace,
        stagnating: &[usize],
        t_m: u64,
        t_e: u64,
        taus: &[u64],
    ) -> Result<Self, EstimatorError> {
        let (m, e) = window_samples(trace.delta_t, t_m, t_e)?;
        let mut acc = IncrementAccumulator::new(stagnating, e - m, taus)?;
        for t in m..e {
            let (Some(k), true) = (trace.row(t), trace.row(t + 1).is_some()) else {
                return Err(EstimatorError::MissingSample { run: 0, sample: t + 1 });
            };
            let row: Vec<f64> = (0..trace.dims()).map(|d| trace.psi[k + 1][d] - trace.psi[k][d]).collect();
            acc.push(&row);
        }
        Ok(acc.finish())
    }
}

/// Streaming builder of [`IncrementSums`], fed one increment row at a time.
#[derive(Debug, Clone)]
pub struct IncrementAccumulator {
    stagnating: Vec<usize>,
    sums: IncrementSums,
    running_i: Vec<f64>,
    running_b: f64,
    running_j: Vec<f64>,
    seen: u64,
    next_tau: usize,
}

impl IncrementAccumulator {
    pub fn new(stagnating: &[usize], horizon: u64, taus: &[u64]) -> Result<Self, EstimatorError> {
        if stagnating.is_empty() {
            return Err(EstimatorError::EmptyStagnatingSet);
        }
        validate_taus(taus, horizon)?;
        let width = stagnating.len();
        Ok(IncrementAccumulator {
            stagnating: stagnating.to_vec(),
            sums: IncrementSums {
                horizon,
                taus: taus.to_vec(),
                i_partial: Vec::with_capacity(taus.len()),
                b_partial: Vec::with_capacity(taus.len()),
                j_partial: Vec::with_capacity(taus.len()),
                b_total: 0.0,
                j_total: 0.0,
                i_max: vec![0.0; width],
            },
            running_i: vec![0.0; width],
            running_b: 0.0,
            running_j: vec![0.0; width],
            seen: 0,
            next_tau: 0,
        })
    }

    /// Adds the increment row `I_{t,·}` (all dimensions) of the next sample.
    pub fn push(&mut self, row: &[f64]) {
        if self.seen >= self.sums.horizon {
            return;
        }
        let (b, j) = split_row(row, &self.stagnating);
        self.running_b += b;
        self.sums.b_total += b;
        for (k, &d) in self.stagnating.iter().enumerate() {
            self.running_i[k] += row[d];
            self.running_j[k] += j[k];
            self.sums.j_total += j[k];
            self.sums.i_max[k] = self.sums.i_max[k].max(self.running_i[k]);
        }
        self.seen += 1;
        if self.sums.taus.get(self.next_tau) == Some(&self.seen) {
            self.sums.i_partial.push(self.running_i.clone());
            self.sums.b_partial.push(self.running_b);
            self.sums.j_partial.push(self.running_j.clone());
            self.next_tau += 1;
        }
    }

    pub fn is_complete(&self) -> bool {
        self.seen == self.sums.horizon
    }

    pub fn finish(self) -> IncrementSums {
        self.sums
    }
}

fn validate_taus(taus: &[u64], horizon: u64) -> Result<(), EstimatorError> {
    for (k, &tau) in taus.iter().enumerate() {
        if tau == 0 || tau > horizon {
            return Err(EstimatorError::TauOutOfRange(tau));
        }
        if k > 0 && taus[k - 1] >= tau {
            return Err(EstimatorError::InvalidInput("tau grid must be strictly increasing".into()));
        }
    }
    Ok(())
}

/// Variance, sixth-moment and covariance estimators at one `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauStats {
    pub tau: u64,
    pub sigma2_i: f64,
    pub sigma2_b: f64,
    pub sigma2_j: f64,
    pub m6_i: f64,
    pub m6_b: f64,
    pub m6_j: f64,
    pub cov_bj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Stats {
    /// `μ̄_I = μ̄_B`, per sample.
    pub mu_i: f64,
    pub mu_b: f64,
    /// Identically zero up to rounding.
    pub mu_j: f64,
    pub runs: usize,
    pub per_tau: Vec<TauStats>,
}

impl Exp2Stats {
    pub fn at(&self, tau: u64) -> Option<&TauStats> {
        self.per_tau.iter().find(|s| s.tau == tau)
    }

    /// Largest `|μ̄_J|` and `|c̄ov_{B,J,τ}|` over the grid.
    pub fn identity_residual(&self) -> f64 {
        self.per_tau.iter().map(|s| s.cov_bj.abs()).fold(self.mu_j.abs(), f64::max)
    }
}

/// Aggregates per-run partial sums (all on the same grid and window).
pub fn exp2_stats_from_sums(runs: &[IncrementSums]) -> Result<Exp2Stats, EstimatorError> {
    let first = runs.first().ok_or(EstimatorError::EmptyEnsemble)?;
    let width = first.i_max.len();
    if runs.iter().any(|s| s.taus != first.taus || s.horizon != first.horizon || s.i_max.len() != width) {
        return Err(EstimatorError::InvalidInput("runs disagree on grid, window or stagnating set".into()));
    }
    if runs.iter().any(|s| s.b_partial.len() != s.taus.len()) {
        return Err(EstimatorError::InvalidInput("incomplete run in ensemble".into()));
    }
    let r = runs.len() as f64;
    let cells = r * width as f64;
    let h = first.horizon as f64;
    let mu_b = runs.iter().map(|s| s.b_total).sum::<f64>() / (r * h);
    let mu_j = runs.iter().map(|s| s.j_total).sum::<f64>() / (cells * h);
    let mu_i = mu_b;

    let per_tau = first
        .taus
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let t = tau as f64;
            let (mut s2i, mut s2b, mut s2j, mut m6i, mut m6b, mut m6j, mut cov) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for run in runs {
                let b = run.b_partial[k] - t * mu_b;
                s2b += b * b;
                m6b += b.powi(6);
                for (i, j) in run.i_partial[k].iter().zip(&run.j_partial[k]) {
                    let c = i - t * mu_i;
                    s2i += c * c;
                    m6i += c.powi(6);
                    s2j += j * j;
                    m6j += j.powi(6);
                    cov += b * j;
                }
            }
            TauStats {
                tau,
                sigma2_i: s2i / cells,
                sigma2_b: s2b / r,
                sigma2_j: s2j / cells,
                m6_i: m6i / cells,
                m6_b: m6b / r,
                m6_j: m6j / cells,
                cov_bj: cov / cells,
            }
        })
        .collect();
    Ok(Exp2Stats { mu_i, mu_b, mu_j, runs: runs.len(), per_tau })
}

/// Partial-sum estimators straight from traces.
pub fn exp2_stats(input: &EnsembleInput<'_>, taus: &[u64]) -> Result<Exp2Stats, EstimatorError> {
    let sums = input
        .traces
        .iter()
        .map(|trace| IncrementSums::from_trace(trace, input.stagnating, input.t_m, input.t_e, taus))
        .collect::<Result<Vec<_>, _>>()?;
    exp2_stats_from_sums(&sums)
}

/// `E[(Σ_{k<t} (I_k − μ))⁶]` for i.i.d. increments with the given central
/// moments.
///
/// ```
/// use swarmlab::estimators::moment_expansion_oracle;
/// // Sum of two standard normals is N(0, 2) with sixth moment 15 · 2³.
/// assert_eq!(moment_expansion_oracle(2, 1.0, 0.0, 3.0, 15.0), 120.0);
/// ```
pub fn moment_expansion_oracle(t: u64, m2: f64, m3: f64, m4: f64, m6: f64) -> f64 {
    let t = t as f64;
    t * m6 + 10.0 * t * (t - 1.0) * m3 * m3 + 15.0 * t * (t - 1.0) * m4 * m2 + 15.0 * t * (t - 1.0) * (t - 2.0) * m2.powi(3)
}

// ---------------------------------------------------------------------------
// Maximal partial sums and the Brownian approximation.

/// `max_{T_m ≤ t ≤ T_e} Σ_{t'=T_m}^{t−1} I_{t',d}`; the empty sum counts,
/// so the result is never negative.
pub fn i_max(trace: &PotentialTrace, d: usize, t_m: u64, t_e: u64) -> Result<f64, EstimatorError> {
    let (m, e) = window_samples(trace.delta_t, t_m, t_e)?;
    let mut best = 0.0f64;
    let mut sum = 0.0;
    for t in m..e {
        sum += trace.increment(t, d).ok_or(EstimatorError::MissingSample { run: 0, sample: t + 1 })?;
        best = best.max(sum);
    }
    Ok(best)
}

/// Upper and lower per-sample variance estimates of the summed increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBounds {
    pub sigma2_max: f64,
    pub sigma2_min: f64,
    /// `sigma2_max < sigma2_min`, which real data is not expected to show.
    pub inverted: bool,
}

/// The `τ` grid needed by [`sigma_bounds_from_stats`]: all multiples of
/// `coarse_step` up to `horizon`, plus `early_cut`.
pub fn sigma_grid(horizon: u64, coarse_step: u64, early_cut: u64) -> Result<Vec<u64>, EstimatorError> {
    if coarse_step == 0 || coarse_step > horizon {
        return Err(EstimatorError::HorizonTooShort(format!(
            "coarse step {coarse_step} does not fit into the window of {horizon}"
        )));
    }
    if early_cut == 0 || early_cut >= horizon {
        return Err(EstimatorError::HorizonTooShort(format!(
            "early cut {early_cut} must lie strictly inside the window of {horizon}"
        )));
    }
    let mut grid: Vec<u64> = (1..=horizon / coarse_step).map(|k| k * coarse_step).collect();
    if grid.last() != Some(&horizon) {
        grid.push(horizon);
    }
    if let Err(pos) = grid.binary_search(&early_cut) {
        grid.insert(pos, early_cut);
    }
    Ok(grid)
}

/// `σ̄²_max = max_k σ̄²_{I,k·c}/(k·c)` over the coarse grid and
/// `σ̄²_min = (σ̄²_{I,H} − σ̄²_{I,cut})/(H − cut)`.
pub fn sigma_bounds_from_stats(
    stats: &Exp2Stats,
    horizon: u64,
    coarse_step: u64,
    early_cut: u64,
) -> Result<SigmaBounds, EstimatorError> {
    let grid = sigma_grid(horizon, coarse_step, early_cut)?;
    let lookup = |tau: u64| {
        stats
            .at(tau)
            .map(|s| s.sigma2_i)
            .ok_or_else(|| EstimatorError::HorizonTooShort(format!("tau {tau} missing from the statistics grid")))
    };
    let mut sigma2_max = f64::NEG_INFINITY;
    for tau in grid.iter().copied().filter(|t| t % coarse_step == 0) {
        sigma2_max = sigma2_max.max(lookup(tau)? / tau as f64);
    }
    let sigma2_min = (lookup(horizon)? - lookup(early_cut)?) / (horizon - early_cut) as f64;
    Ok(SigmaBounds { sigma2_max, sigma2_min, inverted: sigma2_max < sigma2_min })
}

/// [`sigma_bounds_from_stats`] computed from traces.
pub fn sigma_bounds(input: &EnsembleInput<'_>, coarse_step: u64, early_cut: u64) -> Result<SigmaBounds, EstimatorError> {
    let delta_t = input.traces.first().ok_or(EstimatorError::EmptyEnsemble)?.delta_t;
    let (m, e) = window_samples(delta_t, input.t_m, input.t_e)?;
    let horizon = e - m;
    let grid = sigma_grid(horizon, coarse_step, early_cut)?;
    sigma_bounds_from_stats(&exp2_stats(input, &grid)?, horizon, coarse_step, early_cut)
}

/// `1 − exp(2xμ/σ²)` for `x ≥ 0` (and 0 below): the distribution of the
/// maximum of a Brownian motion with drift `μ < 0` and variance `σ²`.
pub fn brownian_max_cdf(x: f64, mu: f64, sigma2: f64) -> Result<f64, EstimatorError> {
    if mu.is_nan() || mu >= 0.0 || sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(EstimatorError::Domain(format!("need mu < 0 and sigma2 > 0, got mu = {mu}, sigma2 = {sigma2}")));
    }
    Ok(if x < 0.0 { 0.0 } else { -(2.0 * x * mu / sigma2).exp_m1() })
}

/// Probability that `n0` independent Brownian motions with drift `mu < 0`
/// and variance `sigma2` all stay below a line `gap` above their start.
///
/// ```
/// use swarmlab::estimators::brownian_no_end_probability;
/// let p = brownian_no_end_probability(20.0, -0.05, 2.0, 1).unwrap();
/// assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
/// ```
pub fn brownian_no_end_probability(gap: f64, mu: f64, sigma2: f64, n0: u32) -> Result<f64, EstimatorError> {
    if gap.is_nan() || gap <= 0.0 || n0 == 0 {
        return Err(EstimatorError::Domain(format!("need gap > 0 and n0 >= 1, got gap = {gap}, n0 = {n0}")));
    }
    Ok(brownian_max_cdf(gap, mu, sigma2)?.powi(n0 as i32))
}

// ---------------------------------------------------------------------------
// Empirical distribution functions.

/// A right-continuous step function given by its jump points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    /// `(x, F(x))` at every jump, with strictly increasing `x`.
    pub points: Vec<(f64, f64)>,
}

impl StepFunction {
    /// Empirical distribution of the finite `values`, normalised by
    /// `population` (values that are missing or infinite count towards the
    /// population but never towards `F`).
    pub fn empirical(values: &[f64], population: usize) -> Result<Self, EstimatorError> {
        if population == 0 {
            return Err(EstimatorError::EmptyCohort);
        }
        let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        finite.sort_by(f64::total_cmp);
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (k, x) in finite.iter().enumerate() {
            let f = (k + 1) as f64 / population as f64;
            match points.last_mut() {
                Some(last) if last.0 == *x => last.1 = f,
                _ => points.push((*x, f)),
            }
        }
        Ok(StepFunction { points })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.points.partition_point(|p| p.0 <= x) {
            0 => 0.0,
            k => self.points[k - 1].1,
        }
    }

    /// Smallest jump point where `F` reaches at least `q`.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        self.points.iter().find(|p| p.1 >= q).map(|p| p.0)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["x", "F"])?;
        for (x, f) in &self.points {
            out.write_record([x.to_string(), f.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `F_emp`: distribution of the maximal partial sums `I_max`.
pub fn f_emp(i_max: &[f64]) -> Result<StepFunction, EstimatorError> {
    StepFunction::empirical(i_max, i_max.len())
}

/// `F_{X,i}`: distribution of the `i`-th non-stagnation phase length over
/// the runs in which that phase started. Phases still open at the end of a
/// run count as infinitely long.
pub fn f_phase_length(partitions: &[PhasePartition], i: usize) -> Result<StepFunction, EstimatorError> {
    let cohort: Vec<f64> = partitions
        .iter()
        .filter_map(|p| p.x.get(i).map(|x| x.map_or(f64::INFINITY, |v| v as f64)))
        .collect();
    StepFunction::empirical(&cohort, cohort.len())
}

/// `F_{α,i}` over all runs; runs without an `α_i` count as infinite.
pub fn f_alpha(times: &[StoppingTimes], i: usize) -> Result<StepFunction, EstimatorError> {
    let values: Vec<f64> = times.iter().filter_map(|t| t.alphas.get(i).map(|&a| a as f64)).collect();
    StepFunction::empirical(&values, times.len())
}

/// `F_{β,i}` over all runs; open or missing `β_i` count as infinite.
pub fn f_beta(times: &[StoppingTimes], i: usize) -> Result<StepFunction, EstimatorError> {
    let values: Vec<f64> = times.iter().filter_map(|t| t.betas.get(i).copied().flatten().map(|b| b as f64)).collect();
    StepFunction::empirical(&values, times.len())
}

/// `F_{Ψ,d}(x)`: fraction of runs in which at least `d` dimensions end with
/// `Ψ ≤ x`, i.e. whose `d`-th smallest final `Ψ` is at most `x` (`d` is
/// 1-based).
pub fn f_psi(final_psi: &[Vec<f64>], d: usize) -> Result<StepFunction, EstimatorError> {
    if d == 0 {
        return Err(EstimatorError::InvalidInput("d is 1-based".into()));
    }
    let values: Vec<f64> = final_psi
        .iter()
        .filter_map(|row| {
            let mut sorted = row.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.get(d - 1).copied()
        })
        .collect();
    StepFunction::empirical(&values, final_psi.len())
}

/// Minimum, maximum, mean and population variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub variance: f64,
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats, EstimatorError> {
    if values.is_empty() {
        return Err(EstimatorError::EmptyCohort);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(SummaryStats {
        count: values.len(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        variance: values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n,
    })
}

/// One row of the phase-length summary table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixRow {
    pub index: usize,
    /// `|D_{X,i}|`: runs in which the `i`-th non-stagnation phase started.
    pub cohort: usize,
    /// Cohort members whose phase was still running at the end of the trace;
    /// they are excluded from the statistics.
    pub censored: usize,
    pub stats: SummaryStats,
}

/// Statistics of `X_i` over the runs where it started and finished.
pub fn appendix_summary(partitions: &[PhasePartition], i: usize) -> Result<AppendixRow, EstimatorError> {
    let cohort: Vec<Option<u64>> = partitions.iter().filter_map(|p| p.x.get(i).copied()).collect();
    let finished: Vec<f64> = cohort.iter().flatten().map(|&v| v as f64).collect();
    let stats = summary_stats(&finished)?;
    Ok(AppendixRow { index: i, cohort: cohort.len(), censored: cohort.len() - finished.len(), stats })
}

/// `|D_{X,i}|` alone (never an error).
pub fn cohort_size(partitions: &[PhasePartition], i: usize) -> usize {
    partitions.iter().filter(|p| p.x.len() > i).count()
}
