//! Certified scalar arithmetic and the information-theoretic sizing formulas.
//!
//! Probabilities and targets stay exact as [`Rational`]s. Transcendental
//! quantities (logarithms, exponentials, divergences) are carried as
//! [`Scalar`] intervals over `f64` with outward rounding, so every value has a
//! guaranteed enclosure and every comparison against a threshold either
//! decides correctly or reports that it cannot.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

pub type Rational = BigRational;

/// Small exact probability, used on the hot path of the conditional method.
pub type Prob = Ratio<u64>;

/// Mantissa bits of the interval backend.
pub const BACKEND_BITS: u32 = f64::MANTISSA_DIGITS;

/// Default cap for [`required_sample_size`].
pub const DEFAULT_SIZE_CAP: u64 = 1 << 40;

// libm's ln/exp are within one ulp; widen by a few more.
const TRANSCENDENTAL_ULPS: u32 = 4;

fn down(x: f64, ulps: u32) -> f64 {
    (0..ulps).fold(x, |v, _| v.next_down())
}

fn up(x: f64, ulps: u32) -> f64 {
    (0..ulps).fold(x, |v, _| v.next_up())
}

/// A real number known to lie in `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scalar {
    lo: f64,
    hi: f64,
}

impl Scalar {
    pub const ZERO: Scalar = Scalar { lo: 0.0, hi: 0.0 };
    pub const ONE: Scalar = Scalar { lo: 1.0, hi: 1.0 };

    /// A value exactly representable as `f64`.
    pub fn exact(x: f64) -> Self {
        debug_assert!(x.is_finite());
        Scalar { lo: x, hi: x }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Scalar { lo, hi }
    }

    /// Enclosure of a result that was computed with a single correctly
    /// rounded operation.
    fn rounded(lo: f64, hi: f64) -> Self {
        Scalar {
            lo: lo.next_down(),
            hi: hi.next_up(),
        }
    }

    pub fn from_rational(r: &Rational) -> Self {
        let approx = r.to_f64().unwrap_or(f64::NAN);
        assert!(approx.is_finite(), "rational {r} out of f64 range");
        match Rational::from_float(approx) {
            Some(back) if &back == r => Scalar::exact(approx),
            _ => Scalar {
                lo: down(approx, 2),
                hi: up(approx, 2),
            },
        }
    }

    pub fn from_prob(p: Prob) -> Self {
        let (n, d) = (*p.numer(), *p.denom());
        if n == 0 {
            return Scalar::ZERO;
        }
        if n < (1 << 53) && d < (1 << 53) {
            let q = n as f64 / d as f64;
            if d.is_power_of_two() {
                Scalar::exact(q)
            } else {
                Scalar::rounded(q, q)
            }
        } else {
            Scalar::from_rational(&Rational::new(BigInt::from(n), BigInt::from(d)))
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        self.lo + (self.hi - self.lo) / 2.0
    }

    /// Guaranteed bound on `|mid() - true value|`.
    pub fn error_bound(&self) -> f64 {
        ((self.hi - self.lo) / 2.0).next_up()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Certified `value <= threshold`.
    pub fn certainly_le(&self, threshold: f64) -> bool {
        self.hi <= threshold
    }

    /// Certified `value > threshold`.
    pub fn certainly_gt(&self, threshold: f64) -> bool {
        self.lo > threshold
    }

    /// Decides `value <= threshold` unless the threshold falls inside the
    /// enclosure.
    pub fn decide_le(&self, threshold: f64) -> Option<bool> {
        if self.hi <= threshold {
            Some(true)
        } else if self.lo > threshold {
            Some(false)
        } else {
            None
        }
    }

    pub fn ln(self) -> Result<Scalar> {
        if self.lo <= 0.0 {
            return Err(Error::Domain(format!("ln of non-positive interval {self}")));
        }
        if self.lo == 1.0 && self.hi == 1.0 {
            return Ok(Scalar::ZERO);
        }
        Ok(Scalar {
            lo: down(self.lo.ln(), TRANSCENDENTAL_ULPS),
            hi: up(self.hi.ln(), TRANSCENDENTAL_ULPS),
        })
    }

    pub fn exp(self) -> Scalar {
        if self.lo == 0.0 && self.hi == 0.0 {
            return Scalar::ONE;
        }
        Scalar {
            lo: down(self.lo.exp(), TRANSCENDENTAL_ULPS).max(0.0),
            hi: up(self.hi.exp(), TRANSCENDENTAL_ULPS),
        }
    }

    /// Integer power by repeated squaring.
    pub fn powi(self, exp: u64) -> Scalar {
        let mut base = self;
        let mut acc = Scalar::ONE;
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        acc
    }

    pub fn scale(self, k: f64) -> Scalar {
        self * Scalar::exact(k)
    }

    pub fn recip(self) -> Result<Scalar> {
        if self.lo <= 0.0 && self.hi >= 0.0 {
            return Err(Error::Domain(format!("reciprocal of interval {self} containing 0")));
        }
        let (a, b) = (1.0 / self.hi, 1.0 / self.lo);
        Ok(Scalar::rounded(a, b))
    }

    pub fn div(self, rhs: Scalar) -> Result<Scalar> {
        Ok(self * rhs.recip()?)
    }

    /// Intersection of two enclosures of the same quantity.
    pub fn meet(self, other: Scalar) -> Scalar {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Scalar { lo, hi }
        } else {
            // Disjoint enclosures mean one of them was not an enclosure.
            Scalar {
                lo: self.lo.min(other.lo),
                hi: self.hi.max(other.hi),
            }
        }
    }

    pub fn clamp_lo(self, floor: f64) -> Scalar {
        Scalar {
            lo: self.lo.max(floor),
            hi: self.hi.max(floor),
        }
    }

    pub fn max(self, other: Scalar) -> Scalar {
        Scalar {
            lo: self.lo.max(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

// Knuth's TwoSum: the exact rounding error of `s = fl(a + b)`.
fn two_sum_error(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        let lo = self.lo + rhs.lo;
        let hi = self.hi + rhs.hi;
        if self.lo == self.hi && rhs.lo == rhs.hi && two_sum_error(self.lo, rhs.lo, lo) == 0.0 {
            return Scalar { lo, hi };
        }
        Scalar::rounded(lo, hi)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        self + (-rhs)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        if self.lo == self.hi && rhs.lo == rhs.hi {
            let p = self.lo * rhs.lo;
            if p.is_finite() && self.lo.mul_add(rhs.lo, -p) == 0.0 {
                return Scalar { lo: p, hi: p };
            }
            return Scalar::rounded(p, p);
        }
        let c = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Scalar::rounded(lo, hi)
    }
}

impl std::iter::Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

/// Parses `"3/10"`, `"0.3"`, `"1e-2"` or `"7"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse {text:?} as a rational"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: BigInt = format!("{int_part}{frac_part}0").parse::<BigInt>().map_err(|_| bad())? / 10;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(all);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -value } else { value })
}

/// Canonical `num/den` rendering (integers print without a denominator).
pub fn rational_string(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn in_open_unit(r: &Rational) -> bool {
    r.is_positive() && r < &Rational::one()
}

/// Bernoulli parameters `(lambda, p)` of a Chernoff tail.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DivergenceParams {
    lambda: Rational,
    p: Rational,
}

impl DivergenceParams {
    pub fn new(lambda: Rational, p: Rational) -> Result<Self> {
        if !in_open_unit(&lambda) {
            return Err(Error::Domain(format!("lambda = {lambda} is not in (0,1)")));
        }
        if !in_open_unit(&p) {
            return Err(Error::Domain(format!("p = {p} is not in (0,1)")));
        }
        Ok(DivergenceParams { lambda, p })
    }

    /// Lower-tail parameters: requires `lambda < p`.
    pub fn lower(lambda: Rational, p: Rational) -> Result<Self> {
        let d = Self::new(lambda, p)?;
        if d.lambda >= d.p {
            return Err(Error::Domain(format!(
                "lower tail needs lambda < p, got lambda = {}, p = {}",
                d.lambda, d.p
            )));
        }
        Ok(d)
    }

    /// Upper-tail parameters: requires `lambda > p`.
    pub fn upper(lambda: Rational, p: Rational) -> Result<Self> {
        let d = Self::new(lambda, p)?;
        if d.lambda <= d.p {
            return Err(Error::Domain(format!(
                "upper tail needs lambda > p, got lambda = {}, p = {}",
                d.lambda, d.p
            )));
        }
        Ok(d)
    }

    pub fn lambda(&self) -> &Rational {
        &self.lambda
    }

    pub fn p(&self) -> &Rational {
        &self.p
    }
}

/// `D(lambda || p) = lambda ln(lambda/p) + (1-lambda) ln((1-lambda)/(1-p))`.
pub fn kl_divergence(params: &DivergenceParams) -> Result<Scalar> {
    let DivergenceParams { lambda, p } = params;
    if lambda == p {
        return Ok(Scalar::ZERO);
    }
    let one = Rational::one();
    let head = Scalar::from_rational(lambda) * Scalar::from_rational(&(lambda / p)).ln()?;
    let rest = &one - lambda;
    let tail = Scalar::from_rational(&rest) * Scalar::from_rational(&(&rest / (&one - p))).ln()?;
    Ok((head + tail).clamp_lo(0.0))
}

/// `H_q(p) = p log_q((q-1)/p) + (1-p) log_q(1/(1-p))`.
pub fn q_ary_entropy(p: &Rational, q: &Rational) -> Result<Scalar> {
    if !in_open_unit(p) {
        return Err(Error::Domain(format!("entropy argument p = {p} is not in (0,1)")));
    }
    let one = Rational::one();
    if q <= &one {
        return Err(Error::Domain(format!("entropy base q = {q} must exceed 1")));
    }
    let ln_q = Scalar::from_rational(q).ln()?;
    let rest = &one - p;
    let head = Scalar::from_rational(p) * Scalar::from_rational(&((q - &one) / p)).ln()?;
    let tail = Scalar::from_rational(&rest) * Scalar::from_rational(&(&one / &rest)).ln()?;
    (head + tail).div(ln_q)
}

/// Certified upper bound on `sum_i exp(-D_i * m)`.
pub fn tail_sum(divergences: &[Scalar], m: u64) -> Scalar {
    let m = Scalar::exact(m as f64);
    divergences.iter().map(|d| (-(*d * m)).exp()).sum()
}

/// Least `m >= 1` with `sum_i exp(-D(lambda_i||p_i) m) <= 1`, certified.
pub fn required_sample_size(constraints: &[DivergenceParams], cap: u64) -> Result<u64> {
    let divergences = constraints.iter().map(kl_divergence).collect::<Result<Vec<_>>>()?;
    required_sample_size_from(&divergences, cap)
}

/// [`required_sample_size`] on precomputed divergences.
pub fn required_sample_size_from(divergences: &[Scalar], cap: u64) -> Result<u64> {
    if divergences.is_empty() {
        return Ok(1);
    }
    let d_min = divergences.iter().map(Scalar::lo).fold(f64::INFINITY, f64::min);
    if d_min <= 0.0 {
        return Err(Error::Domain("a constraint has zero divergence (lambda = p)".into()));
    }
    let n = divergences.len() as f64;
    // Each term is at most 1/N at the closed-form size; two more steps absorb rounding.
    let closed_form = (n.ln() / d_min).ceil();
    if !closed_form.is_finite() || closed_form + 2.0 > cap as f64 {
        return Err(Error::Overflow { cap });
    }
    let mut hi = (closed_form as u64 + 2).max(1);
    while !tail_sum(divergences, hi).certainly_le(1.0) {
        hi = hi.checked_mul(2).filter(|&h| h <= cap).ok_or(Error::Overflow { cap })?;
    }
    let mut lo = 1u64;
    if tail_sum(divergences, lo).certainly_le(1.0) {
        return Ok(1);
    }
    // Invariant: lo fails, hi passes.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if tail_sum(divergences, mid).certainly_le(1.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `ceil(max_i ln N / D_i)`, the closed-form sufficient size.
pub fn closed_form_sample_size(divergences: &[Scalar]) -> Option<u64> {
    if divergences.is_empty() {
        return Some(1);
    }
    let d_min = divergences.iter().map(Scalar::lo).fold(f64::INFINITY, f64::min);
    if d_min <= 0.0 {
        return None;
    }
    Some(((divergences.len() as f64).ln() / d_min).ceil().max(1.0) as u64)
}

/// Relative-error sufficient size `ceil(3 ln N / min_i p_i eps_i^2)`.
pub fn relative_sample_size(n_constraints: u64, min_p_eps_sq: f64) -> u64 {
    (3.0 * (n_constraints as f64).ln() / min_p_eps_sq).ceil().max(1.0) as u64
}

/// Worst-case bit budget of a fixed-precision run of the greedy engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrecisionBudget {
    /// Bits of absolute accuracy, `|error| < 2^-B`.
    pub bits: u64,
    /// Total representation width `B + 1 + ceil(log(tau + 1))`.
    pub delta: u64,
}

/// Precision needed so that the accumulated rounding in one step stays below
/// `mu / (4 (m+1) n_coords)`.
///
/// `m` is the potential's horizon; the slackened run takes `m + 1` steps, so
/// `m + 1` is used in the `tau` and `log m` terms.
pub fn precision_budget(m: u64, n_constraints: u64, tau: f64, mu: f64, n_coords: u64) -> PrecisionBudget {
    assert!(tau >= 1.0, "tau must be at least 1");
    assert!(mu > 0.0 && mu <= 1.0, "mu must be in (0, 1]");
    let steps = (m + 1) as f64;
    let raw = 2.0 * steps * tau.log2()
        + (n_constraints.max(1) as f64).log2()
        + 2.0 * steps.log2()
        + (1.0 / mu).log2()
        + 2.0;
    let bits = raw.ceil() as u64 + (n_coords.max(1) as f64).log2().ceil() as u64;
    let delta = bits + 1 + (tau + 1.0).log2().ceil() as u64;
    PrecisionBudget { bits, delta }
}
