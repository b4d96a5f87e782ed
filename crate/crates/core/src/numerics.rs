//! Arbitrary-precision reals and the precision-growth policy.
//!
//! Every quantity that enters the swarm dynamics is a [`BigReal`], a thin
//! wrapper around an MPFR float with round-to-nearest-even semantics. The
//! working precision of a run lives in an [`Arith`] context: additions and
//! subtractions are performed at the context precision, which grows
//! monotonically whenever two operands would otherwise lose bits to
//! absorption (see [`required_bits`]).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rug::float::Round;
use rug::integer::Order;
use rug::ops::AssignRound;
use rug::{Assign, Float, Integer};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Smallest mantissa precision accepted anywhere in the crate.
pub const MIN_BITS: u32 = 64;

/// Errors raised by arithmetic on [`BigReal`] values.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumericsError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive value")]
    NonPositiveLog,
    #[error("non-finite value cannot be represented")]
    NonFinite,
    #[error("invalid precision policy: {0}")]
    InvalidPolicy(String),
    #[error("malformed encoded real {0:?}")]
    Malformed(String),
}

/// A finite real number with an explicit binary precision.
///
/// Values are always finite: constructors reject NaN and infinities, and the
/// operations exposed through [`Arith`] cannot produce them.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct BigReal(pub(crate) Float);

impl BigReal {
    /// Exact zero at the given precision.
    pub fn zero(bits: u32) -> Self {
        BigReal(Float::new(bits.max(MIN_BITS)))
    }

    /// Converts an `f64`; the conversion is exact because `bits >= 53`.
    pub fn from_f64(value: f64, bits: u32) -> Result<Self, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite);
        }
        Ok(BigReal(Float::with_val(bits.max(MIN_BITS), value)))
    }

    pub fn from_i64(value: i64, bits: u32) -> Self {
        BigReal(Float::with_val(bits.max(MIN_BITS), value))
    }

    /// Parses a decimal literal such as `"0.72984"`, rounding to nearest.
    pub fn parse_decimal(text: &str, bits: u32) -> Result<Self, NumericsError> {
        let parsed =
            Float::parse(text.trim()).map_err(|_| NumericsError::Malformed(text.to_string()))?;
        let value = Float::with_val(bits.max(MIN_BITS), parsed);
        if !value.is_finite() {
            return Err(NumericsError::NonFinite);
        }
        Ok(BigReal(value))
    }

    /// `2^exp` exactly.
    pub fn power_of_two(exp: i32, bits: u32) -> Self {
        let mut value = Float::with_val(bits.max(MIN_BITS), 1u32);
        value <<= exp;
        BigReal(value)
    }

    /// Mantissa precision in bits.
    pub fn precision(&self) -> u32 {
        self.0.prec()
    }

    /// Binary exponent `e` such that `|x| = m * 2^e` with `m` in `[0.5, 1)`;
    /// `None` for zero.
    pub fn exponent(&self) -> Option<i64> {
        self.0.get_exp().map(i64::from)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// `-1`, `0` or `1`.
    pub fn signum(&self) -> i32 {
        match self.0.cmp0() {
            Some(Ordering::Less) => -1,
            Some(Ordering::Greater) => 1,
            _ => 0,
        }
    }

    /// Nearest `f64`; saturates to `0` or `±inf` outside the `f64` range.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    pub fn abs(&self) -> BigReal {
        BigReal(self.0.clone().abs())
    }

    pub fn neg(&self) -> BigReal {
        BigReal(-self.0.clone())
    }

    /// The same value rounded (to nearest) to `bits` of precision.
    pub fn with_precision(&self, bits: u32) -> BigReal {
        let mut value = Float::new(bits.max(MIN_BITS));
        value.assign_round(&self.0, Round::Nearest);
        BigReal(value)
    }

    /// `log2 |x|` as an `f64`, accurate far outside the `f64` exponent range.
    pub fn log2_magnitude(&self) -> Result<f64, NumericsError> {
        if self.0.is_zero() {
            return Err(NumericsError::NonPositiveLog);
        }
        let (mantissa, exp) = self.0.to_f64_exp();
        Ok(f64::from(exp) + mantissa.abs().log2())
    }

    /// Exact textual encoding `"<bits>:<sign>0x<hex mantissa>p<exp>"`.
    ///
    /// The value equals `mantissa * 2^exp`; decoding with
    /// [`BigReal::from_hex_string`] reproduces the value and precision bit
    /// for bit.
    pub fn to_hex_string(&self) -> String {
        let bits = self.precision();
        match self.0.to_integer_exp() {
            Some((mantissa, exp)) if mantissa != 0 => {
                let (mantissa, exp) = normalize_mantissa(mantissa, exp);
                let sign = if mantissa < 0 { "-" } else { "" };
                let digits = Integer::from(mantissa.abs_ref()).to_string_radix(16);
                format!("{bits}:{sign}0x{digits}p{exp}")
            }
            _ => format!("{bits}:0x0p0"),
        }
    }

    pub fn from_hex_string(text: &str) -> Result<Self, NumericsError> {
        let malformed = || NumericsError::Malformed(text.to_string());
        let (bits, rest) = text.split_once(':').ok_or_else(malformed)?;
        let bits: u32 = bits.parse().map_err(|_| malformed())?;
        if bits < MIN_BITS {
            return Err(malformed());
        }
        let (negative, rest) = match rest.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, rest),
        };
        let rest = rest.strip_prefix("0x").ok_or_else(malformed)?;
        let (digits, exp) = rest.split_once('p').ok_or_else(malformed)?;
        let mut mantissa = Integer::from_str_radix(digits, 16).map_err(|_| malformed())?;
        let exp: i32 = exp.parse().map_err(|_| malformed())?;
        if negative {
            mantissa = -mantissa;
        }
        if mantissa.significant_bits() > bits {
            return Err(malformed());
        }
        let mut value = Float::with_val(bits, &mantissa);
        value <<= exp;
        Ok(BigReal(value))
    }
}

impl BigReal {
    /// Binary form of the hex encoding: the value is
    /// `±magnitude · 2^exp` with `magnitude` as big-endian bytes.
    pub fn to_parts(&self) -> RawParts {
        let bits = self.precision();
        match self.0.to_integer_exp() {
            Some((mantissa, exp)) if mantissa != 0 => {
                let (mantissa, exp) = normalize_mantissa(mantissa, exp);
                RawParts {
                    bits,
                    negative: mantissa < 0,
                    exp,
                    magnitude: mantissa.to_digits::<u8>(Order::Msf),
                }
            }
            _ => RawParts { bits, negative: false, exp: 0, magnitude: Vec::new() },
        }
    }

    pub fn from_parts(parts: &RawParts) -> Result<Self, NumericsError> {
        let malformed = || NumericsError::Malformed(format!("{parts:?}"));
        if parts.bits < MIN_BITS {
            return Err(malformed());
        }
        let mut mantissa = Integer::from_digits(&parts.magnitude, Order::Msf);
        if mantissa.significant_bits() > parts.bits {
            return Err(malformed());
        }
        if parts.negative {
            mantissa = -mantissa;
        }
        let mut value = Float::with_val(parts.bits, &mantissa);
        value <<= parts.exp;
        Ok(BigReal(value))
    }
}

/// See [`BigReal::to_parts`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawParts {
    pub bits: u32,
    pub negative: bool,
    pub exp: i32,
    pub magnitude: Vec<u8>,
}

/// Strips trailing zero bits so the encoding is canonical.
fn normalize_mantissa(mut mantissa: Integer, mut exp: i32) -> (Integer, i32) {
    let zeros = mantissa.find_one(0).unwrap_or(0);
    if zeros > 0 {
        mantissa >>= zeros;
        exp += zeros as i32;
    }
    (mantissa, exp)
}

impl fmt::Debug for BigReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BigReal({:.17e} @ {} bits)", self.0, self.precision())
    }
}

impl fmt::Display for BigReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.*e}", p, self.0),
            None => write!(f, "{:.17e}", self.0),
        }
    }
}

impl FromStr for BigReal {
    type Err = NumericsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BigReal::from_hex_string(s)
    }
}

impl Serialize for BigReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex_string())
    }
}

impl<'de> Deserialize<'de> for BigReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        BigReal::from_hex_string(&text).map_err(serde::de::Error::custom)
    }
}

/// How the working precision of a run starts and grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionPolicy {
    pub initial_bits: u32,
    pub guard_bits: u32,
    pub growth_quantum: u32,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy { initial_bits: 512, guard_bits: 64, growth_quantum: 256 }
    }
}

impl PrecisionPolicy {
    pub fn new(initial_bits: u32, guard_bits: u32, growth_quantum: u32) -> Result<Self, NumericsError> {
        let policy = PrecisionPolicy { initial_bits, guard_bits, growth_quantum };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.initial_bits < MIN_BITS {
            return Err(NumericsError::InvalidPolicy(format!(
                "initial_bits must be at least {MIN_BITS}, got {}",
                self.initial_bits
            )));
        }
        if self.growth_quantum < MIN_BITS {
            return Err(NumericsError::InvalidPolicy(format!(
                "growth_quantum must be at least {MIN_BITS}, got {}",
                self.growth_quantum
            )));
        }
        Ok(())
    }
}

/// Precision needed to add `a` and `b` without absorbing the smaller operand.
///
/// This is the larger of the operand precisions and the exponent gap plus
/// the guard bits, rounded up to a multiple of the growth quantum. Zero
/// operands have no exponent and contribute no gap term.
///
/// ```
/// use swarmlab::numerics::{required_bits, BigReal, PrecisionPolicy};
///
/// let policy = PrecisionPolicy::new(512, 64, 256).unwrap();
/// let a = BigReal::power_of_two(0, 512);
/// let b = BigReal::power_of_two(-1000, 512);
/// assert_eq!(required_bits(&a, &b, &policy), 1280);
/// ```
pub fn required_bits(a: &BigReal, b: &BigReal, policy: &PrecisionPolicy) -> u32 {
    let operand_bits = a.precision().max(b.precision());
    let gap_bits = match (a.exponent(), b.exponent()) {
        (Some(ea), Some(eb)) => {
            let gap = (ea - eb).unsigned_abs() + u64::from(policy.guard_bits);
            u32::try_from(gap).unwrap_or(u32::MAX)
        }
        _ => 0,
    };
    round_up(operand_bits.max(gap_bits), policy.growth_quantum)
}

fn round_up(bits: u32, quantum: u32) -> u32 {
    bits.div_ceil(quantum).saturating_mul(quantum)
}

/// Arithmetic context holding the (monotone) working precision of one run.
///
/// Additions and subtractions first raise the working precision to
/// [`required_bits`] of their operands and then round their result to the
/// working precision. Products and quotients are rounded to the larger
/// operand precision. The `*_to` and `*_assign` variants reuse the storage
/// of their destination, which matters in the inner loop of a swarm run.
#[derive(Debug, Clone)]
pub struct Arith {
    policy: PrecisionPolicy,
    bits: u32,
}

impl Arith {
    pub fn new(policy: PrecisionPolicy) -> Self {
        Arith { bits: round_up(policy.initial_bits, MIN_BITS), policy }
    }

    pub fn policy(&self) -> &PrecisionPolicy {
        &self.policy
    }

    /// Current working precision in bits; never decreases.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    fn grow_for(&mut self, a: &BigReal, b: &BigReal) {
        let need = required_bits(a, b, &self.policy);
        if need > self.bits {
            self.bits = need;
        }
    }

    /// Raises the working precision to at least `bits`.
    pub fn ensure_bits(&mut self, bits: u32) {
        let bits = round_up(bits, self.policy.growth_quantum);
        if bits > self.bits {
            self.bits = bits;
        }
    }

    /// A zero at the working precision.
    pub fn zero(&self) -> BigReal {
        BigReal::zero(self.bits)
    }

    /// An `f64` constant at the working precision.
    pub fn constant(&self, value: f64) -> Result<BigReal, NumericsError> {
        BigReal::from_f64(value, self.bits)
    }

    pub fn add(&mut self, a: &BigReal, b: &BigReal) -> BigReal {
        let mut out = BigReal::zero(MIN_BITS);
        self.add_to(&mut out, a, b);
        out
    }

    pub fn sub(&mut self, a: &BigReal, b: &BigReal) -> BigReal {
        let mut out = BigReal::zero(MIN_BITS);
        self.sub_to(&mut out, a, b);
        out
    }

    pub fn mul(&mut self, a: &BigReal, b: &BigReal) -> BigReal {
        let mut out = BigReal::zero(MIN_BITS);
        self.mul_to(&mut out, a, b);
        out
    }

    pub fn div(&mut self, a: &BigReal, b: &BigReal) -> Result<BigReal, NumericsError> {
        if b.is_zero() {
            return Err(NumericsError::DivisionByZero);
        }
        let bits = a.precision().max(b.precision());
        let mut out = Float::new(bits);
        out.assign(&a.0 / &b.0);
        Ok(BigReal(out))
    }

    /// `out = a + b` at the working precision.
    pub fn add_to(&mut self, out: &mut BigReal, a: &BigReal, b: &BigReal) {
        self.grow_for(a, b);
        set_bits(out, self.bits);
        out.0.assign(&a.0 + &b.0);
    }

    /// `out = a - b` at the working precision.
    pub fn sub_to(&mut self, out: &mut BigReal, a: &BigReal, b: &BigReal) {
        self.grow_for(a, b);
        set_bits(out, self.bits);
        out.0.assign(&a.0 - &b.0);
    }

    /// `out = a * b` at the larger operand precision.
    pub fn mul_to(&mut self, out: &mut BigReal, a: &BigReal, b: &BigReal) {
        set_bits(out, a.precision().max(b.precision()));
        out.0.assign(&a.0 * &b.0);
    }

    /// `out = a * x` for an `f64` factor (treated as a 53-bit real).
    pub fn mul_f64_to(&mut self, out: &mut BigReal, a: &BigReal, x: f64) {
        set_bits(out, a.precision().max(53));
        out.0.assign(&a.0 * x);
    }

    /// `acc += b` at the working precision.
    pub fn add_assign(&mut self, acc: &mut BigReal, b: &BigReal) {
        self.grow_for(acc, b);
        raise_bits(acc, self.bits);
        acc.0 += &b.0;
    }

    /// `acc -= b` at the working precision.
    pub fn sub_assign(&mut self, acc: &mut BigReal, b: &BigReal) {
        self.grow_for(acc, b);
        raise_bits(acc, self.bits);
        acc.0 -= &b.0;
    }

    /// `acc *= b` at the larger operand precision.
    pub fn mul_assign(&mut self, acc: &mut BigReal, b: &BigReal) {
        raise_bits(acc, b.precision());
        acc.0 *= &b.0;
    }

    /// `acc *= 2^exp`, exact.
    pub fn scale_pow2(&mut self, acc: &mut BigReal, exp: i32) {
        acc.0 <<= exp;
    }
}

/// Sets the precision of a destination whose old value is about to be
/// overwritten.
fn set_bits(out: &mut BigReal, bits: u32) {
    if out.0.prec() != bits {
        out.0.set_prec(bits);
    }
}

/// Raises the precision of a value that is still needed; widening is exact.
fn raise_bits(acc: &mut BigReal, bits: u32) {
    if acc.0.prec() < bits {
        acc.0.set_prec(bits);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::new(512, 64, 256).unwrap()
    }

    #[test]
    fn required_bits_covers_exponent_gap() {
        let a = BigReal::power_of_two(0, 512);
        let b = BigReal::power_of_two(-1000, 512);
        assert_eq!(required_bits(&a, &b, &policy()), 1280);
    }

    #[test]
    fn required_bits_equal_operands_stay_put() {
        let p = PrecisionPolicy::new(256, 64, 256).unwrap();
        let one = BigReal::from_i64(1, 256);
        assert_eq!(required_bits(&one, &one, &p), 256);
    }

    #[test]
    fn required_bits_ignores_zero_exponent() {
        let p = PrecisionPolicy::new(256, 64, 256).unwrap();
        let zero = BigReal::zero(256);
        let tiny = BigReal::power_of_two(-500, 256);
        assert_eq!(required_bits(&zero, &tiny, &p), 256);
        assert_eq!(required_bits(&tiny, &zero, &p), 256);
    }

    #[test]
    fn log2_magnitude_of_powers() {
        assert_eq!(BigReal::from_i64(8, 512).log2_magnitude().unwrap(), 3.0);
        assert_eq!(BigReal::from_i64(-8, 512).log2_magnitude().unwrap(), 3.0);
        let tiny = BigReal::power_of_two(-5000, 512);
        assert_eq!(tiny.log2_magnitude().unwrap(), -5000.0);
        assert_eq!(
            BigReal::zero(512).log2_magnitude(),
            Err(NumericsError::NonPositiveLog)
        );
    }

    #[test]
    fn addition_does_not_absorb_small_operand() {
        let mut arith = Arith::new(policy());
        let one = BigReal::from_i64(1, 512);
        let tiny = BigReal::power_of_two(-1000, 512);
        let sum = arith.add(&one, &tiny);
        let back = arith.sub(&sum, &one);
        assert_eq!(back, tiny);
        assert!(arith.bits() >= 1064);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let mut arith = Arith::new(policy());
        let one = BigReal::from_i64(1, 512);
        assert_eq!(
            arith.div(&one, &BigReal::zero(512)),
            Err(NumericsError::DivisionByZero)
        );
    }

    #[test]
    fn invalid_policies_are_rejected() {
        assert!(PrecisionPolicy::new(32, 64, 256).is_err());
        assert!(PrecisionPolicy::new(512, 64, 16).is_err());
        assert!(PrecisionPolicy::new(64, 0, 64).is_ok());
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert_eq!(BigReal::from_f64(f64::NAN, 64), Err(NumericsError::NonFinite));
        assert_eq!(BigReal::from_f64(f64::INFINITY, 64), Err(NumericsError::NonFinite));
    }

    #[test]
    fn hex_encoding_of_simple_values() {
        assert_eq!(BigReal::from_i64(3, 64).to_hex_string(), "64:0x3p0");
        assert_eq!(BigReal::from_f64(-0.75, 128).unwrap().to_hex_string(), "128:-0x3p-2");
        assert_eq!(BigReal::zero(96).to_hex_string(), "96:0x0p0");
    }

    #[test]
    fn decimal_parsing_rounds_to_nearest() {
        let chi = BigReal::parse_decimal("0.72984", 512).unwrap();
        assert!((chi.to_f64() - 0.72984).abs() < 1e-16);
        assert!(BigReal::parse_decimal("nope", 64).is_err());
    }

    proptest! {
        #[test]
        fn hex_roundtrip_is_exact(m in any::<i64>(), e in -20_000i32..20_000, bits in 64u32..2048) {
            let mut value = BigReal::from_i64(m, bits.max(64));
            value.0 <<= e;
            let text = value.to_hex_string();
            let back = BigReal::from_hex_string(&text).unwrap();
            prop_assert_eq!(back.precision(), value.precision());
            prop_assert_eq!(&back, &value);
            prop_assert_eq!(back.to_hex_string(), text);
            let raw = BigReal::from_parts(&value.to_parts()).unwrap();
            prop_assert_eq!(raw.precision(), value.precision());
            prop_assert_eq!(&raw, &value);
        }

        #[test]
        fn precision_never_decreases(ops in proptest::collection::vec((any::<i32>(), -3000i32..3000), 1..40)) {
            let mut arith = Arith::new(PrecisionPolicy::new(128, 64, 64).unwrap());
            let mut acc = arith.constant(1.0).unwrap();
            let mut last = arith.bits();
            for (m, e) in ops {
                let mut term = BigReal::from_i64(i64::from(m), 64);
                term.0 <<= e;
                arith.add_assign(&mut acc, &term);
                prop_assert!(arith.bits() >= last);
                prop_assert_eq!(arith.bits() % 64, 0);
                last = arith.bits();
            }
        }

        #[test]
        fn sums_are_exact_when_precision_follows_the_gap(a in any::<i64>(), b in any::<i64>(), e in -4000i32..4000) {
            // With the guard covering both 64-bit mantissas the sum is exact,
            // so subtracting one operand recovers the other.
            let mut arith = Arith::new(PrecisionPolicy::new(128, 130, 64).unwrap());
            let x = BigReal::from_i64(a, 64);
            let mut y = BigReal::from_i64(b, 64);
            y.0 <<= e;
            let sum = arith.add(&x, &y);
            let back = arith.sub(&sum, &x);
            prop_assert_eq!(back, y);
        }
    }
}
