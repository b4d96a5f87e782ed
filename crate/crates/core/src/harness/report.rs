//! Ensemble reports and their CSV / JSON renderings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, InitConfig, ResolvedHorizons};
use super::runner::RunOutcome;
use super::HarnessError;
use crate::estimators::{
    brownian_max_cdf, cohort_size, drift_stats, exp2_stats_from_sums, f_alpha, f_beta, f_emp, f_phase_length, f_psi,
    sigma_bounds_from_stats, summary_stats, DriftSample, DriftStats, Exp2Stats, IncrementSums, SigmaBounds,
    StepFunction,
};
use crate::objectives::ObjectiveId;
use crate::stagnation::{classify_phase, PhaseKind};

/// The Brownian approximation of the maximal partial sums, evaluated at the
/// median of their empirical distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianCheck {
    /// Drift per increment (`μ̄_L · Δt`).
    pub mu: f64,
    pub sigma2_max: f64,
    pub sigma2_min: f64,
    pub median: f64,
    pub f_emp: f64,
    pub f_sigma_max: f64,
    pub f_sigma_min: f64,
}

impl BrownianCheck {
    /// `F_σ²max − slack ≤ F_emp ≤ F_σ²min + slack` at the median.
    pub fn within(&self, slack: f64) -> bool {
        self.f_sigma_max - slack <= self.f_emp && self.f_emp <= self.f_sigma_min + slack
    }
}

/// One row of the phase-length table. Runs whose phase was still open at
/// the end are counted in `cohort` and `censored` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTableRow {
    pub index: usize,
    pub cohort: usize,
    pub censored: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub next_cohort: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub n0: usize,
    /// Runs with a finite first stagnation start `α₀`.
    pub alpha0_finite: usize,
    pub rows: Vec<PhaseTableRow>,
}

/// Numerical health of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub max_precision_bits: u32,
    /// Seeds with a zero potential at a sample after the first step.
    pub late_zero_seeds: Vec<u64>,
    pub truncated_runs: usize,
    pub max_scale: Option<u32>,
    /// Runs that needed more than one attempt.
    pub rescaled_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub experiment: ExperimentKind,
    pub fingerprint: String,
    pub objective: ObjectiveId,
    pub particles: usize,
    pub dims: usize,
    pub stagnating: usize,
    /// 1-based first stagnating dimension.
    pub dstar: Option<usize>,
    pub delta_t: u64,
    pub runs: usize,
    pub horizons: ResolvedHorizons,
    pub drift: Option<DriftStats>,
    pub increments: Option<Exp2Stats>,
    pub sigma: Option<SigmaBounds>,
    pub brownian: Option<BrownianCheck>,
    pub phases: PhaseSummary,
    pub health: Health,
}

impl EnsembleReport {
    /// Folds the outcomes (in seed order) into the estimators available for
    /// the configuration. Window estimators are skipped when any run lacks
    /// its window summary (e.g. a truncated trace).
    pub fn build(cfg: &ExperimentConfig, outcomes: &[RunOutcome]) -> Result<Self, HarnessError> {
        if outcomes.is_empty() {
            return Err(HarnessError::Config("no runs to report on".into()));
        }
        let horizons = cfg.resolved_horizons()?;
        let window = horizons.t_e - horizons.t_m;

        let drift_samples: Option<Vec<DriftSample>> = outcomes.iter().map(|o| o.drift.clone()).collect();
        let drift = drift_samples.map(|s| drift_stats(&s, window)).transpose()?;

        let sums: Option<Vec<IncrementSums>> = outcomes.iter().map(|o| o.increments.clone()).collect();
        let increments = sums.as_deref().map(exp2_stats_from_sums).transpose()?;
        let sigma = increments.as_ref().and_then(|stats| {
            sigma_bounds_from_stats(stats, horizons.increments, horizons.coarse_step, horizons.early_cut).ok()
        });
        let brownian = match (&drift, &sigma, &sums) {
            (Some(d), Some(s), Some(sums)) => brownian_check(d.mu_l * cfg.delta_t as f64, s, sums),
            _ => None,
        };

        let (stagnating, dstar) = match cfg.init {
            InitConfig::Special { stagnating, dstar, .. } => (stagnating, Some(dstar)),
            InitConfig::Usual => (0, None),
        };
        Ok(EnsembleReport {
            experiment: cfg.experiment,
            fingerprint: cfg.fingerprint(),
            objective: cfg.objective,
            particles: cfg.particles,
            dims: cfg.dims,
            stagnating,
            dstar,
            delta_t: cfg.delta_t,
            runs: outcomes.len(),
            horizons,
            drift,
            increments,
            sigma,
            brownian,
            phases: phase_summary(cfg.stagnation.n0, outcomes),
            health: Health {
                max_precision_bits: outcomes.iter().map(|o| o.precision_bits).max().unwrap_or(0),
                late_zero_seeds: outcomes.iter().filter(|o| o.late_zero_samples().next().is_some()).map(|o| o.seed).collect(),
                truncated_runs: outcomes.iter().filter(|o| o.truncated).count(),
                max_scale: outcomes.iter().filter_map(|o| o.scale_used).max(),
                rescaled_runs: outcomes.iter().filter(|o| o.attempts > 1).count(),
            },
        })
    }

    /// `f,N,L,dstar,mu_U,…,sigma_L` header.
    pub const ESTIMATOR_HEADER: [&'static str; 12] =
        ["f", "N", "L", "dstar", "mu_U", "mu_M", "mu_D", "mu_L", "sigma_U", "sigma_M", "sigma_D", "sigma_L"];

    /// The estimator row, if drift estimators exist.
    pub fn estimator_row(&self) -> Option<Vec<String>> {
        let d = self.drift?;
        let mut row = vec![
            self.objective.name().to_string(),
            self.particles.to_string(),
            self.stagnating.to_string(),
            self.dstar.map(|d| d.to_string()).unwrap_or_default(),
        ];
        row.extend([d.mu_u, d.mu_m, d.mu_d, d.mu_l, d.sigma_u, d.sigma_m, d.sigma_d, d.sigma_l].map(|v| v.to_string()));
        Some(row)
    }

    /// `N,D,N0,i,D_X_i,min_X_i,max_X_i,mu_X_i,sigma2_X_i,D_X_next` rows.
    /// Undefined statistics (every member censored) render as `inf`,
    /// `-inf`, `0`, `0`.
    pub fn appendix_rows(&self) -> Vec<Vec<String>> {
        self.phases
            .rows
            .iter()
            .map(|r| {
                vec![
                    self.particles.to_string(),
                    self.dims.to_string(),
                    self.phases.n0.to_string(),
                    r.index.to_string(),
                    r.cohort.to_string(),
                    r.min.map_or("inf".into(), |v| v.to_string()),
                    r.max.map_or("-inf".into(), |v| v.to_string()),
                    r.mean.map_or("0".into(), |v| v.to_string()),
                    r.variance.map_or("0".into(), |v| v.to_string()),
                    r.next_cohort.to_string(),
                ]
            })
            .collect()
    }

    pub const APPENDIX_HEADER: [&'static str; 10] =
        ["N", "D", "N0", "i", "D_X_i", "min_X_i", "max_X_i", "mu_X_i", "sigma2_X_i", "D_X_next"];
}

fn brownian_check(mu: f64, sigma: &SigmaBounds, sums: &[IncrementSums]) -> Option<BrownianCheck> {
    let maxima: Vec<f64> = sums.iter().flat_map(|s| s.i_max.iter().copied()).collect();
    let f = f_emp(&maxima).ok()?;
    let median = f.quantile(0.5)?;
    Some(BrownianCheck {
        mu,
        sigma2_max: sigma.sigma2_max,
        sigma2_min: sigma.sigma2_min,
        median,
        f_emp: f.eval(median),
        f_sigma_max: brownian_max_cdf(median, mu, sigma.sigma2_max).ok()?,
        f_sigma_min: brownian_max_cdf(median, mu, sigma.sigma2_min).ok()?,
    })
}

fn phase_summary(n0: usize, outcomes: &[RunOutcome]) -> PhaseSummary {
    let partitions: Vec<_> = outcomes.iter().map(|o| o.phases.clone()).collect();
    let mut rows = Vec::new();
    let mut i = 0;
    while cohort_size(&partitions, i) > 0 {
        let cohort: Vec<Option<u64>> = partitions.iter().filter_map(|p| p.x.get(i).copied()).collect();
        let finished: Vec<f64> = cohort.iter().flatten().map(|&v| v as f64).collect();
        let stats = summary_stats(&finished).ok();
        rows.push(PhaseTableRow {
            index: i,
            cohort: cohort.len(),
            censored: cohort.len() - finished.len(),
            min: stats.map(|s| s.min),
            max: stats.map(|s| s.max),
            mean: stats.map(|s| s.mean),
            variance: stats.map(|s| s.variance),
            next_cohort: cohort_size(&partitions, i + 1),
        });
        i += 1;
    }
    PhaseSummary { n0, alpha0_finite: outcomes.iter().filter(|o| !o.stopping_times.alphas.is_empty()).count(), rows }
}

/// Thresholds used for the per-phase classification columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseThresholds {
    pub mu: f64,
    pub m6: f64,
    pub p0: f64,
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        PhaseThresholds { mu: -0.01, m6: 1e6, p0: 0.01 }
    }
}

/// Writer for the files of one report directory.
pub struct ReportFiles<'a> {
    pub dir: &'a Path,
}

impl ReportFiles<'_> {
    /// Writes `report.json` and every CSV the report supports; returns the
    /// paths written, in a fixed order.
    pub fn write_all(&self, cfg: &ExperimentConfig, report: &EnsembleReport, outcomes: &[RunOutcome]) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(self.dir)?;
        let mut written = Vec::new();
        let mut json = serde_json::to_vec_pretty(report)?;
        json.push(b'\n');
        written.push(self.put("report.json", &json)?);
        let mut echo = serde_json::to_vec_pretty(&ExperimentConfig { output_dir: None, ..cfg.clone() })?;
        echo.push(b'\n');
        written.push(self.put("config.json", &echo)?);

        if let Some(row) = report.estimator_row() {
            written.push(self.put("estimators.csv", &csv_bytes(&EnsembleReport::ESTIMATOR_HEADER, [row])?)?);
        }
        if let Some(stats) = &report.increments {
            let header = ["tau", "sigma2_I", "sigma2_B", "sigma2_J", "M6_I", "M6_B", "M6_J", "cov_BJ"];
            let rows = stats.per_tau.iter().map(|s| {
                [s.tau as f64, s.sigma2_i, s.sigma2_b, s.sigma2_j, s.m6_i, s.m6_b, s.m6_j, s.cov_bj].map(|v| v.to_string()).to_vec()
            });
            written.push(self.put("exp2_tau.csv", &csv_bytes(&header, rows)?)?);
        }
        if let Some(b) = &report.brownian {
            let maxima: Vec<f64> = outcomes.iter().filter_map(|o| o.increments.as_ref()).flat_map(|s| s.i_max.clone()).collect();
            let emp = f_emp(&maxima)?;
            let xs: Vec<f64> = std::iter::once(0.0).chain(emp.points.iter().map(|p| p.0)).collect();
            let curve = |sigma2: f64| StepFunction {
                points: xs.iter().map(|&x| (x, brownian_max_cdf(x, b.mu, sigma2).unwrap_or(f64::NAN))).collect(),
            };
            written.push(self.put("cdf_emp.csv", &step_bytes(&emp)?)?);
            written.push(self.put("cdf_sigma_max.csv", &step_bytes(&curve(b.sigma2_max))?)?);
            written.push(self.put("cdf_sigma_min.csv", &step_bytes(&curve(b.sigma2_min))?)?);
        }
        written.push(self.put("phases.csv", &phases_csv(cfg, outcomes, PhaseThresholds::default())?)?);
        written.push(self.put("appendix_b.csv", &csv_bytes(&EnsembleReport::APPENDIX_HEADER, report.appendix_rows())?)?);
        Ok(written)
    }

    /// Step-function CSVs for the phase and stopping-time distributions and
    /// the final Ψ (`F_{X,i}`, `F_{α,i}`, `F_{β,i}`, `F_{Ψ,d}`).
    pub fn write_distributions(&self, outcomes: &[RunOutcome]) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(self.dir)?;
        let partitions: Vec<_> = outcomes.iter().map(|o| o.phases.clone()).collect();
        let times: Vec<_> = outcomes.iter().map(|o| o.stopping_times.clone()).collect();
        let mut written = Vec::new();
        let mut i = 0;
        while cohort_size(&partitions, i) > 0 {
            written.push(self.put(&format!("cdf_x_{i}.csv"), &step_bytes(&f_phase_length(&partitions, i)?)?)?);
            written.push(self.put(&format!("cdf_alpha_{i}.csv"), &step_bytes(&f_alpha(&times, i)?)?)?);
            written.push(self.put(&format!("cdf_beta_{i}.csv"), &step_bytes(&f_beta(&times, i)?)?)?);
            i += 1;
        }
        let finals: Vec<Vec<f64>> = outcomes.iter().map(|o| o.final_psi.clone()).collect();
        let dims = finals.iter().map(Vec::len).max().unwrap_or(0);
        for d in 1..=dims {
            written.push(self.put(&format!("cdf_psi_{d}.csv"), &step_bytes(&f_psi(&finals, d)?)?)?);
        }
        Ok(written)
    }

    fn put(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, HarnessError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        Ok(path)
    }
}

pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, HarnessError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

fn step_bytes(f: &StepFunction) -> Result<Vec<u8>, HarnessError> {
    let mut out = Vec::new();
    f.write_csv(&mut out)?;
    Ok(out)
}

/// `run_seed,phase_index,kind,start,end_or_open,n_stagnating,mu_hat,m6_hat,p0_hat`.
/// The classification columns need the run's trace and at least the
/// minimum number of samples in the phase; otherwise they are empty.
pub fn phases_csv(_cfg: &ExperimentConfig, outcomes: &[RunOutcome], thresholds: PhaseThresholds) -> Result<Vec<u8>, HarnessError> {
    let header = ["run_seed", "phase_index", "kind", "start", "end_or_open", "n_stagnating", "mu_hat", "m6_hat", "p0_hat"];
    let mut rows = Vec::new();
    for o in outcomes {
        for phase in &o.phases.phases {
            let measured = match (&o.trace, phase.kind) {
                (Some(trace), PhaseKind::Y | PhaseKind::F) => {
                    classify_phase(trace, phase, thresholds.mu, thresholds.m6, thresholds.p0).ok()
                }
                _ => None,
            };
            let cell = |f: fn(&crate::stagnation::PhaseClassification) -> f64| measured.map(|m| f(&m).to_string()).unwrap_or_default();
            rows.push(vec![
                o.seed.to_string(),
                phase.index.to_string(),
                phase.kind.to_string(),
                phase.start.to_string(),
                phase.end.map_or("open".into(), |e| e.to_string()),
                phase.stagnating_set.len().to_string(),
                cell(|m| m.mu_hat),
                cell(|m| m.m6_hat),
                cell(|m| m.p0_hat),
            ]);
        }
    }
    csv_bytes(&header, rows)
}

/// Appends estimator rows of several reports into one Appendix-A style
/// table.
pub fn estimator_table<W: Write>(out: W, reports: &[EnsembleReport]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EnsembleReport::ESTIMATOR_HEADER)?;
    for r in reports {
        if let Some(row) = r.estimator_row() {
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Phase-length rows of several reports in one Appendix-B style table.
pub fn appendix_table<W: Write>(out: W, reports: &[EnsembleReport]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EnsembleReport::APPENDIX_HEADER)?;
    for r in reports {
        for row in r.appendix_rows() {
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}
