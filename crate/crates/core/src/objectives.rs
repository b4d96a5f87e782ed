//! The four quadratic benchmark landscapes.
//!
//! Each objective is a positive-definite quadratic form `f(x) = xᵀ A x`:
//!
//! | name       | matrix                                   |
//! |------------|------------------------------------------|
//! | `sphere`   | identity                                 |
//! | `hce`      | `diag((10⁶)^((i-1)/(D-1)))`             |
//! | `schwefel` | `A_ij = D - max(i, j) + 1` (1-based)     |
//! | `diagonal` | `I + 10⁶ · 1 1ᵀ`                         |
//!
//! Besides plain evaluation, [`ObjectiveFunction::axis_deltas`] returns the
//! exact change `f(x + v_d e_d) - f(x)` for every axis `d` in `O(D)`, which is
//! what the potential measure needs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::numerics::{Arith, BigReal};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("removing the stagnating dimensions leaves nothing")]
    EmptyRemainder,
    #[error("unknown objective {0:?} (expected sphere, hce, schwefel or diagonal)")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveId {
    #[serde(rename = "sphere")]
    Sphere,
    #[serde(rename = "hce")]
    HighConditionedElliptic,
    #[serde(rename = "schwefel")]
    Schwefel,
    #[serde(rename = "diagonal")]
    Diagonal,
}

impl ObjectiveId {
    pub const ALL: [ObjectiveId; 4] = [
        ObjectiveId::Sphere,
        ObjectiveId::HighConditionedElliptic,
        ObjectiveId::Schwefel,
        ObjectiveId::Diagonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveId::Sphere => "sphere",
            ObjectiveId::HighConditionedElliptic => "hce",
            ObjectiveId::Schwefel => "schwefel",
            ObjectiveId::Diagonal => "diagonal",
        }
    }

    /// Objectives of the form `g(Σ f_d(x_d))`, i.e. with a diagonal matrix:
    /// every dimension contributes independently.
    pub fn is_composite(self) -> bool {
        matches!(self, ObjectiveId::Sphere | ObjectiveId::HighConditionedElliptic)
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveId {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectiveId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| ObjectiveError::Unknown(s.to_string()))
    }
}

/// A function the swarm can optimise.
///
/// Implementors must be deterministic: the same inputs and working precision
/// give bit-identical outputs.
pub trait ObjectiveFunction: Sync {
    fn dim(&self) -> usize;

    /// Writes `f(x)` into `out`.
    fn evaluate_into(&self, arith: &mut Arith, x: &[BigReal], out: &mut BigReal);

    /// Writes `f(x + v[d] e_d) - f(x)` into `out[d]` for every axis.
    fn axis_deltas(&self, arith: &mut Arith, x: &[BigReal], v: &[BigReal], out: &mut [BigReal]);

    fn evaluate(&self, arith: &mut Arith, x: &[BigReal]) -> Result<BigReal, ObjectiveError> {
        if x.len() != self.dim() {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let mut out = arith.zero();
        self.evaluate_into(arith, x, &mut out);
        Ok(out)
    }
}

/// One of the built-in landscapes, instantiated for a dimension.
#[derive(Debug, Clone)]
pub struct Objective {
    id: ObjectiveId,
    dim: usize,
    weights: Vec<BigReal>,
}

/// Weight of the diagonal objective's all-ones component.
const DIAGONAL_COUPLING: i64 = 1_000_000;

impl Objective {
    /// Builds the objective; HCE weights are materialised at `bits`.
    pub fn new(id: ObjectiveId, dim: usize, bits: u32) -> Result<Self, ObjectiveError> {
        let min_dim = if id == ObjectiveId::HighConditionedElliptic { 2 } else { 1 };
        if dim < min_dim {
            return Err(ObjectiveError::DimensionMismatch { expected: min_dim, got: dim });
        }
        let weights = if id == ObjectiveId::HighConditionedElliptic {
            hce_weights(dim, bits)
        } else {
            Vec::new()
        };
        Ok(Objective { id, dim, weights })
    }

    pub fn id(&self) -> ObjectiveId {
        self.id
    }

    /// The matrix `A` with `f(x) = xᵀ A x`.
    pub fn matrix_form(&self, bits: u32) -> QuadraticForm {
        let d = self.dim;
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let value = match self.id {
                    ObjectiveId::Sphere => BigReal::from_i64(i64::from(i == j), bits),
                    ObjectiveId::HighConditionedElliptic => {
                        if i == j {
                            self.weights[i].with_precision(bits.max(self.weights[i].precision()))
                        } else {
                            BigReal::zero(bits)
                        }
                    }
                    ObjectiveId::Schwefel => BigReal::from_i64((d - i.max(j)) as i64, bits),
                    ObjectiveId::Diagonal => {
                        BigReal::from_i64(DIAGONAL_COUPLING + i64::from(i == j), bits)
                    }
                };
                entries.push(value);
            }
        }
        QuadraticForm { dim: d, entries }
    }
}

fn hce_weights(dim: usize, bits: u32) -> Vec<BigReal> {
    let bits = bits.max(crate::numerics::MIN_BITS);
    let base = Float::with_val(bits, 1_000_000u32);
    (0..dim)
        .map(|i| {
            let exponent = Float::with_val(bits, i as u64) / (dim as u64 - 1);
            BigReal(Float::with_val(bits, (&base).pow(&exponent)))
        })
        .collect()
}

impl ObjectiveFunction for Objective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate_into(&self, arith: &mut Arith, x: &[BigReal], out: &mut BigReal) {
        let mut term = arith.zero();
        *out = arith.zero();
        match self.id {
            ObjectiveId::Sphere => {
                for xi in x {
                    arith.mul_to(&mut term, xi, xi);
                    arith.add_assign(out, &term);
                }
            }
            ObjectiveId::HighConditionedElliptic => {
                for (xi, w) in x.iter().zip(&self.weights) {
                    arith.mul_to(&mut term, xi, xi);
                    arith.mul_assign(&mut term, w);
                    arith.add_assign(out, &term);
                }
            }
            ObjectiveId::Schwefel => {
                let mut prefix = arith.zero();
                for xi in x {
                    arith.add_assign(&mut prefix, xi);
                    arith.mul_to(&mut term, &prefix, &prefix);
                    arith.add_assign(out, &term);
                }
            }
            ObjectiveId::Diagonal => {
                let mut total = arith.zero();
                for xi in x {
                    arith.mul_to(&mut term, xi, xi);
                    arith.add_assign(out, &term);
                    arith.add_assign(&mut total, xi);
                }
                arith.mul_to(&mut term, &total, &total);
                let coupling = BigReal::from_i64(DIAGONAL_COUPLING, 64);
                arith.mul_assign(&mut term, &coupling);
                arith.add_assign(out, &term);
            }
        }
    }

    fn axis_deltas(&self, arith: &mut Arith, x: &[BigReal], v: &[BigReal], out: &mut [BigReal]) {
        // Every objective is quadratic, so the change along axis d is
        // v_d * (2 (A x)_d + A_dd v_d); the bracket is built per objective.
        let mut bracket = arith.zero();
        match self.id {
            ObjectiveId::Sphere | ObjectiveId::HighConditionedElliptic => {
                for d in 0..self.dim {
                    twice_plus(arith, &mut bracket, &x[d], &v[d]);
                    arith.mul_to(&mut out[d], &bracket, &v[d]);
                    if self.id == ObjectiveId::HighConditionedElliptic {
                        arith.mul_assign(&mut out[d], &self.weights[d]);
                    }
                }
            }
            ObjectiveId::Schwefel => {
                // suffix[d] = sum over k >= d of the prefix sums P_k.
                let mut prefix = arith.zero();
                let mut prefixes = Vec::with_capacity(self.dim);
                for xi in x {
                    arith.add_assign(&mut prefix, xi);
                    prefixes.push(prefix.clone());
                }
                let mut suffix = arith.zero();
                let mut tail = arith.zero();
                for d in (0..self.dim).rev() {
                    arith.add_assign(&mut suffix, &prefixes[d]);
                    // bracket = 2 * suffix + (D - d) * v_d
                    let count = BigReal::from_i64((self.dim - d) as i64, 64);
                    arith.mul_to(&mut tail, &v[d], &count);
                    twice_plus(arith, &mut bracket, &suffix, &tail);
                    arith.mul_to(&mut out[d], &bracket, &v[d]);
                }
            }
            ObjectiveId::Diagonal => {
                let mut total = arith.zero();
                for xi in x {
                    arith.add_assign(&mut total, xi);
                }
                let coupling = BigReal::from_i64(DIAGONAL_COUPLING, 64);
                let mut coupled = arith.zero();
                for d in 0..self.dim {
                    // bracket = (2 x_d + v_d) + 10^6 (2 s + v_d)
                    twice_plus(arith, &mut coupled, &total, &v[d]);
                    arith.mul_assign(&mut coupled, &coupling);
                    twice_plus(arith, &mut bracket, &x[d], &v[d]);
                    arith.add_assign(&mut bracket, &coupled);
                    arith.mul_to(&mut out[d], &bracket, &v[d]);
                }
            }
        }
    }
}

/// `out = 2a + b`.
fn twice_plus(arith: &mut Arith, out: &mut BigReal, a: &BigReal, b: &BigReal) {
    let mut doubled = a.clone();
    arith.scale_pow2(&mut doubled, 1);
    arith.add_to(out, &doubled, b);
}

/// A dense symmetric matrix defining `f(x) = xᵀ A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    dim: usize,
    entries: Vec<BigReal>,
}

impl QuadraticForm {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> &BigReal {
        &self.entries[i * self.dim + j]
    }

    /// `xᵀ A x` by direct double summation.
    pub fn evaluate(&self, arith: &mut Arith, x: &[BigReal]) -> Result<BigReal, ObjectiveError> {
        if x.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut total = arith.zero();
        let mut term = arith.zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                arith.mul_to(&mut term, &x[i], &x[j]);
                arith.mul_assign(&mut term, self.entry(i, j));
                arith.add_assign(&mut total, &term);
            }
        }
        Ok(total)
    }

    /// The matrix with the rows and columns in `stagnating` (0-based) removed.
    pub fn reduced(&self, stagnating: &BTreeSet<usize>) -> Result<QuadraticForm, ObjectiveError> {
        let keep: Vec<usize> = (0..self.dim).filter(|d| !stagnating.contains(d)).collect();
        if keep.is_empty() {
            return Err(ObjectiveError::EmptyRemainder);
        }
        let mut entries = Vec::with_capacity(keep.len() * keep.len());
        for &i in &keep {
            for &j in &keep {
                entries.push(self.entry(i, j).clone());
            }
        }
        Ok(QuadraticForm { dim: keep.len(), entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::PrecisionPolicy;
    use proptest::prelude::*;

    fn arith() -> Arith {
        Arith::new(PrecisionPolicy::new(512, 64, 256).unwrap())
    }

    fn reals(values: &[f64]) -> Vec<BigReal> {
        values.iter().map(|&v| BigReal::from_f64(v, 512).unwrap()).collect()
    }

    fn eval(id: ObjectiveId, x: &[f64]) -> f64 {
        let f = Objective::new(id, x.len(), 512).unwrap();
        f.evaluate(&mut arith(), &reals(x)).unwrap().to_f64()
    }

    #[test]
    fn sphere_and_schwefel_examples() {
        assert_eq!(eval(ObjectiveId::Sphere, &[1.0, 2.0]), 5.0);
        assert_eq!(eval(ObjectiveId::Schwefel, &[1.0, 2.0]), 10.0);
    }

    #[test]
    fn hce_endpoint_weights() {
        assert_eq!(eval(ObjectiveId::HighConditionedElliptic, &[1.0, 0.0, 0.0]), 1.0);
        assert_eq!(eval(ObjectiveId::HighConditionedElliptic, &[0.0, 0.0, 1.0]), 1e6);
        let mid = eval(ObjectiveId::HighConditionedElliptic, &[0.0, 1.0, 0.0]);
        assert!((mid - 1e3).abs() < 1e-9);
    }

    #[test]
    fn diagonal_example() {
        assert_eq!(eval(ObjectiveId::Diagonal, &[1.0, -1.0]), 2.0);
        assert_eq!(eval(ObjectiveId::Diagonal, &[1.0, 1.0]), 2.0 + 4.0e6);
    }

    #[test]
    fn dimension_checks() {
        assert_eq!(
            Objective::new(ObjectiveId::HighConditionedElliptic, 1, 512).unwrap_err(),
            ObjectiveError::DimensionMismatch { expected: 2, got: 1 }
        );
        let f = Objective::new(ObjectiveId::Sphere, 3, 512).unwrap();
        assert_eq!(
            f.evaluate(&mut arith(), &reals(&[1.0, 2.0])).unwrap_err(),
            ObjectiveError::DimensionMismatch { expected: 3, got: 2 }
        );
        assert_eq!("rastrigin".parse::<ObjectiveId>().unwrap_err(), ObjectiveError::Unknown("rastrigin".into()));
    }

    #[test]
    fn names_roundtrip() {
        for id in ObjectiveId::ALL {
            assert_eq!(id.name().parse::<ObjectiveId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.name()));
        }
        assert!(ObjectiveId::Sphere.is_composite() && ObjectiveId::HighConditionedElliptic.is_composite());
        assert!(!ObjectiveId::Schwefel.is_composite() && !ObjectiveId::Diagonal.is_composite());
    }

    #[test]
    fn reduced_matrix_removes_rows_and_columns() {
        let f = Objective::new(ObjectiveId::Schwefel, 3, 128).unwrap();
        let a = f.matrix_form(128);
        let r = a.reduced(&BTreeSet::from([1])).unwrap();
        assert_eq!(r.dim(), 2);
        // Remaining indices 0 and 2: entries D - max(i, j).
        assert_eq!(r.entry(0, 0).to_f64(), 3.0);
        assert_eq!(r.entry(0, 1).to_f64(), 1.0);
        assert_eq!(r.entry(1, 1).to_f64(), 1.0);
        assert_eq!(a.reduced(&BTreeSet::from([0, 1, 2])).unwrap_err(), ObjectiveError::EmptyRemainder);
    }

    fn finite_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1e3f64..1e3, d)
    }

    proptest! {
        #[test]
        fn evaluation_matches_matrix_form(id in 0usize..4, x in finite_vec(5)) {
            let id = ObjectiveId::ALL[id];
            let f = Objective::new(id, 5, 512).unwrap();
            let xs = reals(&x);
            let mut ar = arith();
            let direct = f.evaluate(&mut ar, &xs).unwrap();
            let quad = f.matrix_form(512).evaluate(&mut ar, &xs).unwrap();
            let diff = ar.sub(&direct, &quad).to_f64().abs();
            prop_assert!(diff <= 1e-100 * (1.0 + direct.to_f64().abs()));
            prop_assert!(direct.signum() >= 0);
        }

        #[test]
        fn axis_deltas_match_direct_evaluation(id in 0usize..4, x in finite_vec(4), v in finite_vec(4)) {
            let id = ObjectiveId::ALL[id];
            let f = Objective::new(id, 4, 512).unwrap();
            let xs = reals(&x);
            let vs = reals(&v);
            let mut ar = arith();
            let mut deltas = vec![ar.zero(); 4];
            f.axis_deltas(&mut ar, &xs, &vs, &mut deltas);
            let base = f.evaluate(&mut ar, &xs).unwrap();
            for d in 0..4 {
                let mut moved = xs.clone();
                moved[d] = ar.add(&xs[d], &vs[d]);
                let fm = f.evaluate(&mut ar, &moved).unwrap();
                let expect = ar.sub(&fm, &base);
                let err = ar.sub(&expect, &deltas[d]).to_f64().abs();
                prop_assert!(err <= 1e-100 * (1.0 + fm.to_f64().abs()));
            }
        }
    }
}
