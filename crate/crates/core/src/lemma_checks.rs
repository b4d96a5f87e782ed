//! Monte Carlo checks on synthetic i.i.d. increment sequences.
//!
//! If the increments `I_t` are i.i.d. with mean `μ < 0`, the partial sum
//! `Σ_{t̃<t} I_t̃` is positive with probability at most `C/t³`, where `C`
//! follows from Markov's inequality on the sixth central moment:
//!
//! ```text
//! C = (M + 10M² + 15M² + 15M³) / μ⁶,   M = max_{k≤6} E|I − μ|^k
//! ```
//!
//! and the walk stays non-positive forever with positive probability. The
//! functions here estimate both quantities and compare them with the bound.
//!
//! Paths are simulated in fixed chunks, each with its own ChaCha stream, and
//! the chunk counts are summed in chunk order: results depend only on the
//! seed, not on the number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LemmaError {
    #[error("invalid increment specification: {0}")]
    InvalidSpec(String),
}

/// Distribution of a single increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementDistribution {
    /// `N(mu, sigma2)`; `sigma2 = 0` gives the constant `mu`.
    Gaussian { mu: f64, sigma2: f64 },
    /// `mu ± 1` with equal probability.
    RademacherShifted { mu: f64 },
    /// Uniform on `[mu − width/2, mu + width/2]`.
    UniformShifted { mu: f64, width: f64 },
}

impl IncrementDistribution {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Gaussian { mu, .. } | Self::RademacherShifted { mu } | Self::UniformShifted { mu, .. } => mu,
        }
    }

    pub fn validate(&self) -> Result<(), LemmaError> {
        let ok = match *self {
            Self::Gaussian { mu, sigma2 } => mu.is_finite() && sigma2.is_finite() && sigma2 >= 0.0,
            Self::RademacherShifted { mu } => mu.is_finite(),
            Self::UniformShifted { mu, width } => mu.is_finite() && width.is_finite() && width >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(LemmaError::InvalidSpec(format!("{self:?}")))
        }
    }

    /// Short label used in reports, e.g. `gaussian(-0.5,1)`.
    pub fn label(&self) -> String {
        match *self {
            Self::Gaussian { mu, sigma2 } => format!("gaussian({mu},{sigma2})"),
            Self::RademacherShifted { mu } => format!("rademacher_shifted({mu})"),
            Self::UniformShifted { mu, width } => format!("uniform_shifted({mu},{width})"),
        }
    }

    /// `E|I − μ|^k` for `k = 1..=6`, in closed form.
    pub fn abs_central_moments(&self) -> [f64; 6] {
        match *self {
            Self::Gaussian { sigma2, .. } => {
                let s = sigma2.sqrt();
                let odd = (2.0 / std::f64::consts::PI).sqrt();
                [s * odd, sigma2, 2.0 * odd * s.powi(3), 3.0 * sigma2.powi(2), 8.0 * odd * s.powi(5), 15.0 * sigma2.powi(3)]
            }
            Self::RademacherShifted { .. } => [1.0; 6],
            Self::UniformShifted { width, .. } => {
                let h = width / 2.0;
                std::array::from_fn(|i| h.powi(i as i32 + 1) / (i as f64 + 2.0))
            }
        }
    }

    /// The constant `C` of the `C/t³` tail bound; requires `μ < 0`.
    ///
    /// ```
    /// use swarmlab::lemma_checks::IncrementDistribution;
    /// // All absolute moments are 1: C = (1 + 10 + 15 + 15)/μ⁶.
    /// let c = IncrementDistribution::RademacherShifted { mu: -1.0 }.bound_constant().unwrap();
    /// assert_eq!(c, 41.0);
    /// ```
    pub fn bound_constant(&self) -> Result<f64, LemmaError> {
        let mu = self.mean();
        if mu.is_nan() || mu >= 0.0 {
            return Err(LemmaError::InvalidSpec(format!("the tail bound needs a negative mean, got {mu}")));
        }
        let m = self.abs_central_moments().into_iter().fold(0.0, f64::max);
        Ok((m + 10.0 * m * m + 15.0 * m * m + 15.0 * m.powi(3)) / mu.powi(6))
    }

    fn sampler(&self) -> Sampler {
        match *self {
            Self::Gaussian { mu, sigma2 } if sigma2 > 0.0 => {
                Sampler::Normal(Normal::new(mu, sigma2.sqrt()).expect("validated parameters"))
            }
            Self::Gaussian { mu, .. } => Sampler::Constant(mu),
            Self::RademacherShifted { mu } => Sampler::Rademacher(mu),
            Self::UniformShifted { mu, width } => Sampler::Uniform(mu - width / 2.0, width),
        }
    }
}

enum Sampler {
    Constant(f64),
    Normal(Normal<f64>),
    Rademacher(f64),
    Uniform(f64, f64),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Constant(c) => *c,
            Sampler::Normal(n) => n.sample(rng),
            Sampler::Rademacher(mu) => {
                if rng.random::<bool>() {
                    mu + 1.0
                } else {
                    mu - 1.0
                }
            }
            Sampler::Uniform(lo, w) => lo + w * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticIncrementSpec {
    pub distribution: IncrementDistribution,
    /// Longest partial sum considered.
    pub horizon: u64,
    /// Number of simulated paths.
    pub samples: u64,
    pub seed: u64,
}

/// Partial-sum lengths at which the tail probability is estimated.
pub const TAIL_TIMES: [u64; 7] = [1, 2, 5, 10, 20, 50, 100];

const CHUNK: u64 = 10_000;

/// Runs `samples` paths in chunks and adds up the per-chunk counters.
fn simulate<const K: usize>(
    spec: &SyntheticIncrementSpec,
    path: impl Fn(&Sampler, &mut ChaCha8Rng, &mut [u64; K]) + Sync,
) -> [u64; K] {
    let sampler = spec.distribution.sampler();
    let chunks = spec.samples.div_ceil(CHUNK);
    let counts: Vec<[u64; K]> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(chunk);
            let mut counts = [0u64; K];
            let len = CHUNK.min(spec.samples - chunk * CHUNK);
            for _ in 0..len {
                path(&sampler, &mut rng, &mut counts);
            }
            counts
        })
        .collect();
    counts.into_iter().fold([0u64; K], |mut acc, c| {
        for (a, b) in acc.iter_mut().zip(c) {
            *a += b;
        }
        acc
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: u64,
    /// Fraction of paths with `Σ_{t̃<t} I_t̃ > 0`.
    pub empirical_p: f64,
    /// Binomial standard error of `empirical_p`.
    pub std_error: f64,
    pub bound: f64,
    /// `empirical_p ≤ bound + 3·std_error`.
    pub ok: bool,
}

/// Estimates `P(Σ_{t̃<t} I_t̃ > 0)` at every `t ∈ TAIL_TIMES` with
/// `t ≤ horizon` and compares it with `C/t³`.
pub fn tail_bound_check(spec: &SyntheticIncrementSpec) -> Result<Vec<TailRow>, LemmaError> {
    spec.distribution.validate()?;
    if spec.samples == 0 {
        return Err(LemmaError::InvalidSpec("no samples".into()));
    }
    let c = spec.distribution.bound_constant()?;
    let times: Vec<u64> = TAIL_TIMES.iter().copied().filter(|&t| t <= spec.horizon).collect();
    let last = times.last().copied().unwrap_or(0);
    let counts = simulate::<7>(spec, |sampler, rng, counts| {
        let mut sum = 0.0;
        let mut next = 0;
        for t in 1..=last {
            sum += sampler.draw(rng);
            if t == times[next] {
                if sum > 0.0 {
                    counts[next] += 1;
                }
                next += 1;
            }
        }
    });
    let n = spec.samples as f64;
    Ok(times
        .iter()
        .zip(counts)
        .map(|(&t, count)| {
            let p = count as f64 / n;
            let std_error = (p * (1.0 - p) / n).sqrt();
            let bound = c / (t as f64).powi(3);
            TailRow { t, empirical_p: p, std_error, bound, ok: p <= bound + 3.0 * std_error }
        })
        .collect())
}

/// Estimates of `P(Σ_{t̃<t} I_t̃ ≤ 0 for all t ≤ T)` at `T/8, T/4, T/2, T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayNegative {
    /// `(T', estimate, standard error)`.
    pub curve: Vec<(u64, f64, f64)>,
}

impl StayNegative {
    pub fn at_horizon(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |c| c.1)
    }

    pub fn strictly_positive(&self) -> bool {
        self.curve.iter().all(|c| c.1 > 0.0)
    }

    pub fn non_increasing(&self) -> bool {
        self.curve.windows(2).all(|w| w[1].1 <= w[0].1)
    }

    /// Whether the change over each doubling of the horizon shrinks.
    pub fn converging(&self) -> bool {
        let steps: Vec<f64> = self.curve.windows(2).map(|w| w[0].1 - w[1].1).collect();
        steps.windows(2).all(|s| s[1] <= s[0])
    }
}

pub fn stay_negative_probability(spec: &SyntheticIncrementSpec) -> Result<StayNegative, LemmaError> {
    spec.distribution.validate()?;
    if spec.samples == 0 || spec.horizon < 8 {
        return Err(LemmaError::InvalidSpec("need samples > 0 and a horizon of at least 8".into()));
    }
    let checkpoints = [spec.horizon / 8, spec.horizon / 4, spec.horizon / 2, spec.horizon];
    let counts = simulate::<4>(spec, |sampler, rng, counts| {
        let mut sum = 0.0;
        let mut crossed = spec.horizon + 1;
        for t in 1..=spec.horizon {
            sum += sampler.draw(rng);
            if sum > 0.0 {
                crossed = t;
                break;
            }
        }
        for (k, &cp) in checkpoints.iter().enumerate() {
            if crossed > cp {
                counts[k] += 1;
            }
        }
    });
    let n = spec.samples as f64;
    Ok(StayNegative {
        curve: checkpoints
            .iter()
            .zip(counts)
            .map(|(&cp, c)| {
                let p = c as f64 / n;
                (cp, p, (p * (1.0 - p) / n).sqrt())
            })
            .collect(),
    })
}

/// Writes the `distribution,t,empirical_p,bound,ok` report.
pub fn write_tail_csv<W: std::io::Write>(
    writer: W,
    tables: &[(IncrementDistribution, Vec<TailRow>)],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["distribution", "t", "empirical_p", "bound", "ok"])?;
    for (dist, rows) in tables {
        for row in rows {
            out.write_record([dist.label(), row.t.to_string(), row.empirical_p.to_string(), row.bound.to_string(), row.ok.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(distribution: IncrementDistribution, horizon: u64, samples: u64) -> SyntheticIncrementSpec {
        SyntheticIncrementSpec { distribution, horizon, samples, seed: 11 }
    }

    const GAUSS: IncrementDistribution = IncrementDistribution::Gaussian { mu: -0.5, sigma2: 1.0 };

    #[test]
    fn moments_match_numerical_integration() {
        // Midpoint rule for the uniform and gaussian densities.
        let quad = |density: &dyn Fn(f64) -> f64, lo: f64, hi: f64, k: i32| {
            let n = 200_000;
            let h = (hi - lo) / n as f64;
            (0..n).map(|i| lo + (i as f64 + 0.5) * h).map(|x| x.abs().powi(k) * density(x) * h).sum::<f64>()
        };
        let gauss = IncrementDistribution::Gaussian { mu: 0.3, sigma2: 2.0 }.abs_central_moments();
        let pdf = |x: f64| (-x * x / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
        for k in 1..=6 {
            let q = quad(&pdf, -30.0, 30.0, k);
            assert!((gauss[k as usize - 1] - q).abs() < 1e-8 * q.max(1.0), "k = {k}");
        }
        let uni = IncrementDistribution::UniformShifted { mu: -1.0, width: 3.0 }.abs_central_moments();
        for k in 1..=6 {
            let q = quad(&|_| 1.0 / 3.0, -1.5, 1.5, k);
            assert!((uni[k as usize - 1] - q).abs() < 1e-8, "k = {k}");
        }
    }

    #[test]
    fn degenerate_increments_never_cross() {
        let s = spec(IncrementDistribution::Gaussian { mu: -1.0, sigma2: 0.0 }, 100, 1000);
        assert!(tail_bound_check(&s).unwrap().iter().all(|r| r.empirical_p == 0.0 && r.ok));
        let stay = stay_negative_probability(&s).unwrap();
        assert!(stay.curve.iter().all(|c| c.1 == 1.0));
    }

    #[test]
    fn tail_matches_normal_cdf_and_bound() {
        let rows = tail_bound_check(&spec(GAUSS, 100, 200_000)).unwrap();
        let one = rows[0];
        // P(N(-0.5, 1) > 0) = Φ(-0.5).
        assert!((one.empirical_p - 0.308_537_538_725_986_9).abs() < 3.0 * one.std_error + 1e-12, "{one:?}");
        assert!(rows.iter().all(|r| r.ok));
        assert!(rows.last().unwrap().empirical_p < 1e-3);
    }

    #[test]
    fn rademacher_and_uniform_respect_the_bound() {
        for dist in [
            IncrementDistribution::RademacherShifted { mu: -0.3 },
            IncrementDistribution::UniformShifted { mu: -0.2, width: 2.0 },
        ] {
            assert!(tail_bound_check(&spec(dist, 100, 50_000)).unwrap().iter().all(|r| r.ok));
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let s = spec(GAUSS, 20, 35_000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| tail_bound_check(&s));
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| tail_bound_check(&s));
        assert_eq!(one, four);
    }

    #[test]
    fn stay_negative_behaviour() {
        let neg = stay_negative_probability(&spec(GAUSS, 1000, 20_000)).unwrap();
        assert!(neg.strictly_positive() && neg.non_increasing());
        assert!(neg.at_horizon() < 1.0);
        let pos = stay_negative_probability(&spec(IncrementDistribution::Gaussian { mu: 0.5, sigma2: 1.0 }, 1000, 2000)).unwrap();
        assert!(pos.at_horizon() < 0.01);
    }

    #[test]
    fn invalid_specs() {
        assert!(IncrementDistribution::Gaussian { mu: 0.1, sigma2: 1.0 }.bound_constant().is_err());
        assert!(tail_bound_check(&spec(IncrementDistribution::Gaussian { mu: -0.1, sigma2: -1.0 }, 10, 10)).is_err());
        assert!(tail_bound_check(&spec(GAUSS, 10, 0)).is_err());
    }
}
