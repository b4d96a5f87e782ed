//! The classical particle swarm process.
//!
//! One iteration moves the particles `0..N` in order. For particle `n`, and
//! for every dimension `d`, two uniforms `r_d` then `s_d` are drawn and
//!
//! ```text
//! V ← χ V + c1 r ⊙ (L − X) + c2 s ⊙ (G − X)
//! X ← X + V
//! ```
//!
//! after which the local attractor `L` and the global attractor `G` are
//! replaced when the new position is *strictly* better. Because `G` is
//! updated inside the particle loop, particle `n + 1` already sees an
//! improvement made by particle `n` in the same iteration.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::numerics::{Arith, BigReal, NumericsError};
use crate::objectives::ObjectiveFunction;
use crate::rng::UniformSource;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid swarm parameters: {0}")]
    InvalidParams(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Default inertia weight χ.
pub const DEFAULT_CHI: &str = "0.72984";
/// Default cognitive and social weights c1 = c2.
pub const DEFAULT_C: &str = "1.496172";

/// The fixed parameters of a swarm.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmParams {
    pub particles: usize,
    pub dims: usize,
    pub chi: BigReal,
    pub c1: BigReal,
    pub c2: BigReal,
}

impl SwarmParams {
    pub fn new(
        particles: usize,
        dims: usize,
        chi: BigReal,
        c1: BigReal,
        c2: BigReal,
    ) -> Result<Self, EngineError> {
        if particles == 0 || dims == 0 {
            return Err(EngineError::InvalidParams(format!(
                "need at least one particle and one dimension, got N={particles}, D={dims}"
            )));
        }
        for (name, value) in [("chi", &chi), ("c1", &c1), ("c2", &c2)] {
            if value.signum() <= 0 {
                return Err(EngineError::InvalidParams(format!("{name} must be positive")));
            }
        }
        Ok(SwarmParams { particles, dims, chi, c1, c2 })
    }

    /// The commonly used constants χ = 0.72984, c1 = c2 = 1.496172, rounded
    /// to `bits`.
    pub fn standard(particles: usize, dims: usize, bits: u32) -> Result<Self, EngineError> {
        let c = BigReal::parse_decimal(DEFAULT_C, bits)?;
        SwarmParams::new(
            particles,
            dims,
            BigReal::parse_decimal(DEFAULT_CHI, bits)?,
            c.clone(),
            c,
        )
    }
}

/// How velocities start out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityInit {
    #[default]
    Zero,
    /// Uniform in the search box, drawn after all positions.
    Uniform,
}

/// Full state of the swarm after `t` iterations. Vectors are particle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub t: u64,
    pub x: Vec<Vec<BigReal>>,
    pub v: Vec<Vec<BigReal>>,
    pub l: Vec<Vec<BigReal>>,
    pub fl: Vec<BigReal>,
    pub g: Vec<BigReal>,
    pub fg: BigReal,
}

impl SwarmState {
    /// A state at `t = 0` with `L = X` and `G` the best local attractor
    /// (lowest index on ties).
    pub fn new<F: ObjectiveFunction + ?Sized>(
        x: Vec<Vec<BigReal>>,
        v: Vec<Vec<BigReal>>,
        f: &F,
        arith: &mut Arith,
    ) -> Result<Self, EngineError> {
        if x.is_empty() || x.len() != v.len() {
            return Err(EngineError::InvalidParams("positions and velocities must be non-empty and paired".into()));
        }
        let dims = f.dim();
        if x.iter().chain(&v).any(|row| row.len() != dims) {
            return Err(EngineError::InvalidParams(format!("every row must have {dims} entries")));
        }
        let mut fl = Vec::with_capacity(x.len());
        for row in &x {
            let mut value = arith.zero();
            f.evaluate_into(arith, row, &mut value);
            fl.push(value);
        }
        let mut best = 0;
        for n in 1..fl.len() {
            if fl[n] < fl[best] {
                best = n;
            }
        }
        Ok(SwarmState {
            t: 0,
            l: x.clone(),
            g: x[best].clone(),
            fg: fl[best].clone(),
            fl,
            x,
            v,
        })
    }

    pub fn particles(&self) -> usize {
        self.x.len()
    }

    pub fn dims(&self) -> usize {
        self.g.len()
    }
}

/// Maps a uniform draw to `[-h, h]`; exact at the working precision.
fn box_coordinate(arith: &mut Arith, halfwidth: &BigReal, u: f64) -> BigReal {
    let mut width = halfwidth.clone();
    arith.scale_pow2(&mut width, 1);
    let mut scaled = arith.zero();
    arith.mul_f64_to(&mut scaled, &width, u);
    arith.sub(&scaled, halfwidth)
}

/// Usual initialization: positions uniform in `[-h, h]^D`, zero velocity.
///
/// Draws are consumed dimension-major (`for d { for n { … } }`), the same
/// order as the special initialization with no stagnating dimensions.
pub fn init_usual<F, R>(
    params: &SwarmParams,
    halfwidth: &BigReal,
    f: &F,
    rng: &mut R,
    arith: &mut Arith,
) -> Result<SwarmState, EngineError>
where
    F: ObjectiveFunction + ?Sized,
    R: UniformSource + ?Sized,
{
    init_special(params, halfwidth, 0, 0, 0, f, rng, arith)
}

/// Special initialization: after the usual positions are drawn, each
/// dimension `d` in `first..first + count` (0-based) gets one shared centre
/// `Y_d` and every particle's coordinate becomes `X[n][d] · 2^(-scale) + Y_d`.
/// The swarm then starts collapsed to width `≈ 2^(-scale)` in those
/// dimensions. Velocities are zero.
#[allow(clippy::too_many_arguments)]
pub fn init_special<F, R>(
    params: &SwarmParams,
    halfwidth: &BigReal,
    scale: u32,
    count: usize,
    first: usize,
    f: &F,
    rng: &mut R,
    arith: &mut Arith,
) -> Result<SwarmState, EngineError>
where
    F: ObjectiveFunction + ?Sized,
    R: UniformSource + ?Sized,
{
    init_state(params, halfwidth, scale, count, first, VelocityInit::Zero, f, rng, arith)
}

/// [`init_special`] with a choice of velocity initialization.
#[allow(clippy::too_many_arguments)]
pub fn init_state<F, R>(
    params: &SwarmParams,
    halfwidth: &BigReal,
    scale: u32,
    count: usize,
    first: usize,
    velocity: VelocityInit,
    f: &F,
    rng: &mut R,
    arith: &mut Arith,
) -> Result<SwarmState, EngineError>
where
    F: ObjectiveFunction + ?Sized,
    R: UniformSource + ?Sized,
{
    let (n_count, d_count) = (params.particles, params.dims);
    if f.dim() != d_count {
        return Err(EngineError::InvalidParams(format!(
            "objective has {} dimensions, swarm has {d_count}",
            f.dim()
        )));
    }
    if halfwidth.signum() <= 0 {
        return Err(EngineError::InvalidParams("box half-width must be positive".into()));
    }
    if count > 0 && (count > d_count || first + count > d_count) {
        return Err(EngineError::IndexOutOfRange(format!(
            "stagnating block {}..{} exceeds D={d_count}",
            first + 1,
            first + count
        )));
    }
    let scale = i32::try_from(scale)
        .map_err(|_| EngineError::InvalidParams(format!("scale {scale} too large")))?;

    let mut x = vec![vec![arith.zero(); d_count]; n_count];
    for d in 0..d_count {
        for row in x.iter_mut() {
            row[d] = box_coordinate(arith, halfwidth, rng.next_uniform());
        }
    }
    for d in first..first + count {
        let centre = box_coordinate(arith, halfwidth, rng.next_uniform());
        for row in x.iter_mut() {
            arith.scale_pow2(&mut row[d], -scale);
            arith.add_assign(&mut row[d], &centre);
        }
    }
    let v = match velocity {
        VelocityInit::Zero => vec![vec![arith.zero(); d_count]; n_count],
        VelocityInit::Uniform => {
            let mut v = vec![vec![arith.zero(); d_count]; n_count];
            for d in 0..d_count {
                for row in v.iter_mut() {
                    row[d] = box_coordinate(arith, halfwidth, rng.next_uniform());
                }
            }
            v
        }
    };
    SwarmState::new(x, v, f, arith)
}

/// Moves particle `n` (0-based) once and updates its attractors.
pub fn step_particle<F, R>(
    state: &mut SwarmState,
    n: usize,
    params: &SwarmParams,
    f: &F,
    rng: &mut R,
    arith: &mut Arith,
) -> Result<(), EngineError>
where
    F: ObjectiveFunction + ?Sized,
    R: UniformSource + ?Sized,
{
    if n >= state.particles() {
        return Err(EngineError::IndexOutOfRange(format!(
            "particle {n} of {}",
            state.particles()
        )));
    }
    let mut cognitive = arith.zero();
    let mut social = arith.zero();
    let mut coef = arith.zero();
    for d in 0..state.dims() {
        let r = rng.next_uniform();
        let s = rng.next_uniform();
        arith.sub_to(&mut cognitive, &state.l[n][d], &state.x[n][d]);
        arith.mul_f64_to(&mut coef, &params.c1, r);
        arith.mul_assign(&mut cognitive, &coef);
        arith.sub_to(&mut social, &state.g[d], &state.x[n][d]);
        arith.mul_f64_to(&mut coef, &params.c2, s);
        arith.mul_assign(&mut social, &coef);

        let v = &mut state.v[n][d];
        arith.mul_assign(v, &params.chi);
        arith.add_assign(v, &cognitive);
        arith.add_assign(v, &social);
    }
    for d in 0..state.dims() {
        arith.add_assign(&mut state.x[n][d], &state.v[n][d]);
    }

    let mut value = arith.zero();
    f.evaluate_into(arith, &state.x[n], &mut value);
    if value < state.fl[n] {
        state.l[n].clone_from(&state.x[n]);
        state.fl[n].clone_from(&value);
    }
    if value < state.fg {
        state.g.clone_from(&state.x[n]);
        state.fg = value;
    }
    Ok(())
}

/// Outcome of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Iterations actually performed (fewer than requested if the observer
    /// stopped the run).
    pub iterations: u64,
    pub stopped_early: bool,
    /// `(t, f(G))` at every observed sample, rounded to 64 bits.
    pub fg_trajectory: Vec<(u64, BigReal)>,
    pub final_g: Vec<BigReal>,
    pub final_fg: BigReal,
    pub rng_draws: u64,
    pub precision_bits: u32,
}

/// Runs `iterations` iterations, calling `observer` before the first one and
/// after every iteration whose index is a multiple of `sample_every`. The
/// observer may stop the run early by returning [`ControlFlow::Break`].
#[allow(clippy::too_many_arguments)]
pub fn run<F, R, O>(
    state: &mut SwarmState,
    params: &SwarmParams,
    f: &F,
    iterations: u64,
    sample_every: u64,
    rng: &mut R,
    arith: &mut Arith,
    mut observer: O,
) -> Result<RunSummary, EngineError>
where
    F: ObjectiveFunction + ?Sized,
    R: UniformSource + ?Sized,
    O: FnMut(&SwarmState, &mut Arith) -> ControlFlow<()>,
{
    if iterations == 0 || sample_every == 0 {
        return Err(EngineError::InvalidParams(
            "iteration count and sampling interval must be at least 1".into(),
        ));
    }
    let mut fg_trajectory = Vec::new();
    let mut stopped_early = false;
    let start = state.t;
    let mut observe = |state: &SwarmState, arith: &mut Arith, traj: &mut Vec<(u64, BigReal)>| {
        traj.push((state.t, state.fg.with_precision(64)));
        observer(state, arith)
    };
    if state.t % sample_every == 0 && observe(state, arith, &mut fg_trajectory).is_break() {
        stopped_early = true;
    }
    while !stopped_early && state.t < start + iterations {
        for n in 0..state.particles() {
            step_particle(state, n, params, f, rng, arith)?;
        }
        state.t += 1;
        if state.t % sample_every == 0 && observe(state, arith, &mut fg_trajectory).is_break() {
            stopped_early = true;
        }
    }
    Ok(RunSummary {
        iterations: state.t - start,
        stopped_early,
        fg_trajectory,
        final_g: state.g.clone(),
        final_fg: state.fg.clone(),
        rng_draws: rng.draws(),
        precision_bits: arith.bits(),
    })
}
