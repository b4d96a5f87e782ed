//! The potential Φ, the logarithmic potential Ψ and their increments.
//!
//! For a swarm state and a dimension `d`, `Φ(d)` is the largest change of
//! the objective any particle would see if it moved along its velocity in
//! coordinate `d` only:
//!
//! ```text
//! Φ(d) = max_n | f(Xⁿ) − f(Xⁿ + Vⁿ_d e_d) |
//! Ψ(d) = log2 Φ(d) − max_d' log2 Φ(d')
//! ```
//!
//! A [`PotentialTrace`] records Φ and Ψ at every multiple of the step width
//! `Δt`. Its time index counts Δt-blocks: row `k` is sample
//! `first_sample + k`, taken after `Δt · (first_sample + k)` iterations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::SwarmState;
use crate::numerics::{Arith, BigReal, NumericsError};
use crate::objectives::ObjectiveFunction;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    /// Φ is exactly zero in the listed (0-based) dimensions.
    #[error("potential is zero in dimensions {0:?}")]
    ZeroPotential(Vec<usize>),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("trace is inconsistent: {0}")]
    Inconsistent(String),
}

/// Precision kept for the Φ values stored in a trace.
pub const STORED_PHI_BITS: u32 = 64;

/// Φ for every dimension; entries may be zero.
pub fn phi_values<F: ObjectiveFunction + ?Sized>(
    state: &SwarmState,
    f: &F,
    arith: &mut Arith,
) -> Vec<BigReal> {
    let dims = state.dims();
    let mut best: Vec<BigReal> = vec![BigReal::zero(64); dims];
    let mut deltas = vec![arith.zero(); dims];
    for (x, v) in state.x.iter().zip(&state.v) {
        f.axis_deltas(arith, x, v, &mut deltas);
        for d in 0..dims {
            let magnitude = deltas[d].abs();
            if magnitude > best[d] {
                best[d] = magnitude;
            }
        }
    }
    best
}

/// Φ for every dimension, failing if any entry is exactly zero.
///
/// ```
/// use swarmlab::prelude::*;
///
/// let mut arith = Arith::new(PrecisionPolicy::default());
/// let f = Objective::new(ObjectiveId::Sphere, 1, 512).unwrap();
/// let x = vec![vec![BigReal::from_i64(3, 512)]];
/// let v = vec![vec![BigReal::from_i64(4, 512)]];
/// let state = SwarmState::new(x, v, &f, &mut arith).unwrap();
/// let phi = swarmlab::potential::phi(&state, &f, &mut arith).unwrap();
/// assert_eq!(phi[0].to_f64(), 40.0); // |9 - 49|
/// ```
pub fn phi<F: ObjectiveFunction + ?Sized>(
    state: &SwarmState,
    f: &F,
    arith: &mut Arith,
) -> Result<Vec<BigReal>, PotentialError> {
    let values = phi_values(state, f, arith);
    let zeros: Vec<usize> = (0..values.len()).filter(|&d| values[d].is_zero()).collect();
    if zeros.is_empty() {
        Ok(values)
    } else {
        Err(PotentialError::ZeroPotential(zeros))
    }
}

/// Ψ from Φ: base-2 logs shifted so that the largest entry is 0.
pub fn psi(phi: &[BigReal]) -> Result<Vec<f64>, NumericsError> {
    let logs = phi.iter().map(BigReal::log2_magnitude).collect::<Result<Vec<_>, _>>()?;
    Ok(psi_from_log2(&logs))
}

/// Ψ from `log2 Φ`.
pub fn psi_from_log2(logs: &[f64]) -> Vec<f64> {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| l - top).collect()
}

/// Sampled Φ / Ψ series of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTrace {
    pub delta_t: u64,
    /// Sample index (in Δt-blocks) of the first stored row.
    pub first_sample: u64,
    /// Φ rounded to [`STORED_PHI_BITS`]; empty for traces built from Ψ alone.
    #[serde(skip)]
    pub phi: Vec<Vec<BigReal>>,
    pub log2_phi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    /// Sample indices at which Φ was zero in some dimension. Such samples
    /// are not stored; one occurring after the first stored row ends the
    /// trace, since increments must be contiguous.
    pub zero_samples: Vec<u64>,
    pub truncated: bool,
}

impl PotentialTrace {
    pub fn new(delta_t: u64) -> Self {
        assert!(delta_t >= 1, "step width must be at least 1");
        PotentialTrace {
            delta_t,
            first_sample: 0,
            phi: Vec::new(),
            log2_phi: Vec::new(),
            psi: Vec::new(),
            zero_samples: Vec::new(),
            truncated: false,
        }
    }

    /// A trace holding only Ψ rows (and `log2 Φ = Ψ`), for synthetic inputs.
    pub fn from_psi(delta_t: u64, first_sample: u64, psi: Vec<Vec<f64>>) -> Self {
        let mut trace = PotentialTrace::new(delta_t);
        trace.first_sample = first_sample;
        trace.log2_phi = psi.clone();
        trace.psi = psi;
        trace
    }

    /// A trace from `log2 Φ` rows; Ψ is derived.
    pub fn from_log2_phi(delta_t: u64, first_sample: u64, log2_phi: Vec<Vec<f64>>) -> Self {
        let mut trace = PotentialTrace::new(delta_t);
        trace.first_sample = first_sample;
        trace.psi = log2_phi.iter().map(|row| psi_from_log2(row)).collect();
        trace.log2_phi = log2_phi;
        trace
    }

    /// Number of stored samples.
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.psi.first().map_or(0, Vec::len)
    }

    /// Sample index one past the last stored row.
    pub fn end_sample(&self) -> u64 {
        self.first_sample + self.len() as u64
    }

    /// Row of sample index `t`, if stored.
    pub fn row(&self, t: u64) -> Option<usize> {
        (t >= self.first_sample && t < self.end_sample()).then(|| (t - self.first_sample) as usize)
    }

    pub fn psi_at(&self, t: u64) -> Option<&[f64]> {
        self.row(t).map(|k| self.psi[k].as_slice())
    }

    pub fn log2_phi_at(&self, t: u64) -> Option<&[f64]> {
        self.row(t).map(|k| self.log2_phi[k].as_slice())
    }

    /// `I_{t,d} = Ψ(t+1, d) − Ψ(t, d)` for sample index `t`.
    pub fn increment(&self, t: u64, d: usize) -> Option<f64> {
        let k = self.row(t)?;
        let next = self.psi.get(k + 1)?;
        Some(next[d] - self.psi[k][d])
    }

    /// All increments, one row per stored sample except the last.
    pub fn increments(&self) -> Vec<Vec<f64>> {
        self.psi
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
            .collect()
    }

    /// Records the Φ vector of sample index `t`. Samples must arrive in
    /// consecutive order.
    pub fn push_sample(&mut self, t: u64, phi: &[BigReal]) -> Result<(), PotentialError> {
        if self.truncated {
            return Ok(());
        }
        if !self.is_empty() && t != self.end_sample() {
            return Err(PotentialError::Inconsistent(format!(
                "sample {t} does not follow sample {}",
                self.end_sample() - 1
            )));
        }
        if phi.iter().any(BigReal::is_zero) {
            self.zero_samples.push(t);
            if !self.is_empty() {
                self.truncated = true;
            }
            return Ok(());
        }
        let logs = phi.iter().map(BigReal::log2_magnitude).collect::<Result<Vec<_>, _>>()?;
        if self.is_empty() {
            self.first_sample = t;
        }
        self.psi.push(psi_from_log2(&logs));
        self.log2_phi.push(logs);
        self.phi.push(phi.iter().map(|p| p.with_precision(STORED_PHI_BITS)).collect());
        Ok(())
    }

    /// Computes Φ for `state` and records it; `state.t` must be a multiple of Δt.
    pub fn observe<F: ObjectiveFunction + ?Sized>(
        &mut self,
        state: &SwarmState,
        f: &F,
        arith: &mut Arith,
    ) -> Result<(), PotentialError> {
        if state.t % self.delta_t != 0 {
            return Err(PotentialError::Inconsistent(format!(
                "iteration {} is not a multiple of the step width {}",
                state.t, self.delta_t
            )));
        }
        let values = phi_values(state, f, arith);
        self.push_sample(state.t / self.delta_t, &values)
    }

    /// Writes the `t,d,log2_phi,psi,increment` CSV (1-based `d`, `t` in
    /// samples, empty increment on the last row).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["t", "d", "log2_phi", "psi", "increment"])?;
        for k in 0..self.len() {
            let t = self.first_sample + k as u64;
            for d in 0..self.dims() {
                let increment = self
                    .psi
                    .get(k + 1)
                    .map(|next| (next[d] - self.psi[k][d]).to_string())
                    .unwrap_or_default();
                out.write_record([
                    t.to_string(),
                    (d + 1).to_string(),
                    self.log2_phi[k][d].to_string(),
                    self.psi[k][d].to_string(),
                    increment,
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
