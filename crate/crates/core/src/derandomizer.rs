//! Greedy pessimistic-estimator derandomization of Chernoff plus union bounds.
//!
//! Given 0/1 random variables `X_1..X_N` with means `p_i` and targets
//! `lambda_i`, the engine picks sample points one at a time so that the
//! potential
//!
//! ```text
//! P_j = sum_i exp(-D(lambda_i || p_i) M) gamma_i^j alpha_i^Z_{j,i}
//! ```
//!
//! never grows by more than a small certified slack. Here `Z_{j,i}` counts the
//! points so far on which `X_i = 1`, `alpha_i = (1-p_i) lambda_i / (p_i (1-lambda_i))`
//! and `gamma_i = (1-lambda_i)/(1-p_i)`. A final potential below 1 forces every
//! empirical mean to the right side of its target.
//!
//! Two selection strategies are provided: [`derandomize_enumerated`] scans an
//! explicit list of points, [`derandomize_conditional`] fixes the coordinates
//! of a product space one at a time using conditional expectations.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::format::digest;
use crate::numerics::{
    kl_divergence, precision_budget, required_sample_size_from, tail_sum, DivergenceParams, PrecisionBudget, Prob,
    Rational, Scalar, BACKEND_BITS, DEFAULT_SIZE_CAP,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Empirical mean must end at or above `lambda` (`lambda < p`).
    Lower,
    /// Empirical mean must end at or below `lambda` (`lambda > p`).
    Upper,
}

/// One random variable `X_i` with its mean, target and tail direction.
///
/// A constraint's id is its index in the slice handed to the engine; spaces
/// answer queries by that index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConstraintSpec {
    p: Prob,
    lambda: Prob,
    direction: Direction,
}

fn open_unit(x: Prob) -> bool {
    !x.is_zero() && x < Prob::one()
}

impl ConstraintSpec {
    pub fn new(p: Prob, lambda: Prob, direction: Direction) -> Result<Self> {
        if !open_unit(p) {
            return Err(Error::Domain(format!("mean p = {p} is not in (0,1)")));
        }
        if !open_unit(lambda) {
            return Err(Error::Domain(format!("target lambda = {lambda} is not in (0,1)")));
        }
        let ok = match direction {
            Direction::Lower => lambda < p,
            Direction::Upper => lambda > p,
        };
        if !ok {
            return Err(Error::Domain(format!(
                "{direction:?} constraint needs lambda on the far side of p (p = {p}, lambda = {lambda})"
            )));
        }
        Ok(ConstraintSpec { p, lambda, direction })
    }

    pub fn lower(p: Prob, lambda: Prob) -> Result<Self> {
        Self::new(p, lambda, Direction::Lower)
    }

    pub fn upper(p: Prob, lambda: Prob) -> Result<Self> {
        Self::new(p, lambda, Direction::Upper)
    }

    pub fn p(&self) -> Prob {
        self.p
    }

    pub fn lambda(&self) -> Prob {
        self.lambda
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn divergence_params(&self) -> DivergenceParams {
        DivergenceParams::new(big(self.lambda), big(self.p)).expect("validated at construction")
    }

    /// `(1-p) lambda / (p (1-lambda))`.
    pub fn alpha(&self) -> Rational {
        let (p, l) = (big(self.p), big(self.lambda));
        let one = Rational::one();
        (&one - &p) * &l / (&p * (&one - &l))
    }

    /// `(1-lambda) / (1-p)`.
    pub fn gamma(&self) -> Rational {
        let (p, l) = (big(self.p), big(self.lambda));
        let one = Rational::one();
        (&one - &l) / (&one - &p)
    }

    /// Exact check of `hits / total` against the target.
    pub fn satisfied_by(&self, hits: u64, total: u64) -> bool {
        let lhs = hits as u128 * *self.lambda.denom() as u128;
        let rhs = *self.lambda.numer() as u128 * total as u128;
        match self.direction {
            Direction::Lower => lhs >= rhs,
            Direction::Upper => lhs <= rhs,
        }
    }
}

pub(crate) fn big(p: Prob) -> Rational {
    Rational::new(BigInt::from(*p.numer()), BigInt::from(*p.denom()))
}

/// A finite sample space listed point by point, with uniform weight.
pub trait EnumeratedSpace {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn point(&self, index: usize) -> Vec<u32>;

    /// `X_constraint(point(index))`.
    fn evaluate(&self, index: usize, constraint: usize) -> bool;

    /// Ascending ids of the constraints with `X = 1` at `point(index)`.
    fn hits(&self, index: usize, n_constraints: usize) -> Vec<u32> {
        (0..n_constraints)
            .filter(|&i| self.evaluate(index, i))
            .map(|i| i as u32)
            .collect()
    }
}

/// A product `S_1 x ... x S_n` of finite alphabets `{0..|S_j|}` under the
/// uniform product measure.
pub trait ProductSpace {
    fn coordinate_sizes(&self) -> Vec<u32>;

    /// Exact `E[X_constraint | x_1..x_j = prefix]`. For a full-length prefix
    /// this is the 0/1 value of the variable.
    fn conditional_mean(&self, constraint: usize, prefix: &[u32]) -> Prob;

    /// Constraints whose conditional mean can change when `coordinate` is
    /// fixed. `None` means every constraint.
    fn touching(&self, coordinate: usize) -> Option<&[u32]> {
        let _ = coordinate;
        None
    }

    /// Ascending ids of the constraints with `X = 1` at a complete point.
    fn point_hits(&self, point: &[u32], n_constraints: usize) -> Vec<u32> {
        (0..n_constraints)
            .filter(|&i| !self.conditional_mean(i, point).is_zero())
            .map(|i| i as u32)
            .collect()
    }
}

/// All points of a product space in lexicographic order, evaluated through
/// the full-prefix conditional mean.
pub struct ProductEnumeration<'a, S: ProductSpace> {
    space: &'a S,
    sizes: Vec<u32>,
    len: usize,
}

impl<'a, S: ProductSpace> ProductEnumeration<'a, S> {
    pub fn new(space: &'a S) -> Result<Self> {
        let sizes = space.coordinate_sizes();
        let len = sizes
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s as usize))
            .ok_or(Error::BudgetExceeded {
                what: "product space enumeration",
                needed: u128::MAX,
                budget: usize::MAX as u64,
            })?;
        Ok(ProductEnumeration { space, sizes, len })
    }
}

impl<S: ProductSpace> EnumeratedSpace for ProductEnumeration<'_, S> {
    fn len(&self) -> usize {
        self.len
    }

    fn point(&self, index: usize) -> Vec<u32> {
        let mut rest = index;
        let mut out = vec![0; self.sizes.len()];
        for (slot, &size) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = (rest % size as usize) as u32;
            rest /= size as usize;
        }
        out
    }

    fn evaluate(&self, index: usize, constraint: usize) -> bool {
        !self.space.conditional_mean(constraint, &self.point(index)).is_zero()
    }

    fn hits(&self, index: usize, n_constraints: usize) -> Vec<u32> {
        self.space.point_hits(&self.point(index), n_constraints)
    }
}

/// A list of points with an indicator closure.
pub struct ExplicitSpace<F> {
    points: Vec<Vec<u32>>,
    indicator: F,
}

impl<F: Fn(&[u32], usize) -> bool> ExplicitSpace<F> {
    pub fn new(points: Vec<Vec<u32>>, indicator: F) -> Self {
        ExplicitSpace { points, indicator }
    }
}

impl<F: Fn(&[u32], usize) -> bool> EnumeratedSpace for ExplicitSpace<F> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn point(&self, index: usize) -> Vec<u32> {
        self.points[index].clone()
    }

    fn evaluate(&self, index: usize, constraint: usize) -> bool {
        (self.indicator)(&self.points[index], constraint)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SampleSize {
    /// Least `m` with `P_0 <= 1`.
    #[default]
    Auto,
    Fixed(u64),
}

/// How many points are emitted for a horizon `m`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SizeMode {
    /// `m + 1` points, potential weighted by `exp(-D (m+1))`, per-step slack
    /// `mu / (4m)`.
    #[default]
    Slackened,
    /// `m` points; the slack comes from whatever room `P_0 < 1` leaves.
    Exact,
}

#[derive(Clone, Debug)]
pub struct Options {
    pub sample_size: SampleSize,
    pub size_mode: SizeMode,
    /// Take the candidate with the smallest certified potential instead of
    /// the first certified one.
    pub minimize: bool,
    /// Verify `E[X | prefix]` is the average over the next coordinate of the
    /// extended prefixes, and that the empty-prefix mean is `p`.
    pub check_martingale: bool,
    /// Record per-step hit lists when `N * steps` is at most this.
    pub record_hits_limit: u64,
    pub size_cap: u64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            sample_size: SampleSize::Auto,
            size_mode: SizeMode::Slackened,
            minimize: false,
            check_martingale: false,
            record_hits_limit: 1 << 24,
            size_cap: DEFAULT_SIZE_CAP,
        }
    }
}

/// Multipliers shared by every constraint with the same `(p, lambda, direction)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermClass {
    pub p: Prob,
    pub lambda: Prob,
    pub direction: Direction,
    pub divergence: Scalar,
    pub alpha: Scalar,
    pub gamma: Scalar,
    pub ln_alpha: Scalar,
    pub ln_gamma: Scalar,
}

impl TermClass {
    fn new(c: &ConstraintSpec) -> Result<Self> {
        let divergence = kl_divergence(&c.divergence_params())?;
        let alpha = Scalar::from_rational(&c.alpha());
        let gamma = Scalar::from_rational(&c.gamma());
        Ok(TermClass {
            p: c.p,
            lambda: c.lambda,
            direction: c.direction,
            divergence,
            alpha,
            gamma,
            ln_alpha: alpha.ln()?,
            ln_gamma: gamma.ln()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    /// 1-based step number `j`.
    pub index: u64,
    pub chosen: Vec<u32>,
    /// Certified enclosure of `P_j`.
    pub potential: Scalar,
}

/// Record of one run of the engine.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTrace {
    /// Horizon `m` with `sum_i exp(-D_i m) <= 1`.
    pub horizon: u64,
    pub size_mode: SizeMode,
    /// Number of emitted points `M` (also the weight exponent).
    pub output_size: u64,
    /// `min(1, min_i D_i)`, a certified lower bound.
    pub mu: f64,
    /// `max_i max(alpha_i, gamma_i)`, a certified upper bound.
    pub tau: f64,
    pub precision: PrecisionBudget,
    pub backend_bits: u32,
    /// Declared per-step allowance `P_{j+1} <= P_j + slack`.
    pub slack: f64,
    /// Coordinates fixed per step (1 for the enumerated method).
    pub coordinates: usize,
    pub initial: Scalar,
    pub steps: Vec<TraceStep>,
    pub classes: Vec<TermClass>,
    pub class_of: Vec<u32>,
    /// Per step, the constraints with `X_i = 1` on the chosen point.
    pub hits: Option<Vec<Vec<u32>>>,
    /// Final counters `Z_{M,i}`.
    pub counters: Vec<u64>,
}

impl PotentialTrace {
    pub fn n_constraints(&self) -> usize {
        self.class_of.len()
    }

    pub fn final_potential(&self) -> Scalar {
        self.steps.last().map_or(self.initial, |s| s.potential)
    }

    /// One line per step: index, chosen point, certified upper bound on the
    /// potential to 12 significant digits. Line `0` is the initial potential.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "0 - {}", sig12(self.initial.hi()));
        for s in &self.steps {
            let chosen = s.chosen.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
            let _ = writeln!(out, "{} {} {}", s.index, chosen, sig12(s.potential.hi()));
        }
        out
    }

    pub fn digest(&self) -> String {
        digest(self.dump().as_bytes())[..16].to_string()
    }
}

fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Candidate-potential terms `w_i gamma_i^step alpha_i^(Z_i + x_i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialTerm {
    /// `exp(-D_i M)`.
    pub weight: Scalar,
    pub gamma: Scalar,
    pub alpha: Scalar,
}

/// `P'_step(s) = sum_i w_i gamma_i^step alpha_i^(Z_i + X_i(s))`, evaluated
/// directly from counters.
pub fn step_candidate_potential(terms: &[PotentialTerm], counters: &[u64], step: u64, hits: &[bool]) -> Scalar {
    terms
        .iter()
        .zip(counters)
        .zip(hits)
        .map(|((t, &z), &x)| t.weight * t.gamma.powi(step) * t.alpha.powi(z + x as u64))
        .sum()
}

/// Conditional version: `E[P'_step(s) | prefix]` given each variable's
/// conditional mean.
pub fn conditional_step_potential(terms: &[PotentialTerm], counters: &[u64], step: u64, means: &[Prob]) -> Scalar {
    terms
        .iter()
        .zip(counters)
        .zip(means)
        .map(|((t, &z), &e)| {
            let factor = Scalar::ONE + (t.alpha - Scalar::ONE) * Scalar::from_prob(e);
            t.weight * t.gamma.powi(step) * t.alpha.powi(z) * factor
        })
        .sum()
}

/// Output of a derandomization run.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub points: Vec<Vec<u32>>,
    /// Indices into the enumerated space, when the enumerated method ran.
    pub indices: Option<Vec<usize>>,
    pub trace: PotentialTrace,
}

struct Engine<'c> {
    constraints: &'c [ConstraintSpec],
    classes: Vec<TermClass>,
    class_of: Vec<u32>,
    horizon: u64,
    steps_total: u64,
    slack: f64,
    /// Current terms of `P_j`.
    current: Vec<Scalar>,
    potential: Scalar,
    counters: Vec<u64>,
    trace: PotentialTrace,
    record_hits: bool,
}

impl<'c> Engine<'c> {
    fn new(constraints: &'c [ConstraintSpec], options: &Options, coordinates: usize) -> Result<Self> {
        let mut index: HashMap<ConstraintSpec, u32> = HashMap::new();
        let mut classes = Vec::new();
        let mut class_of = Vec::with_capacity(constraints.len());
        for c in constraints {
            let id = match index.get(c) {
                Some(&id) => id,
                None => {
                    let id = classes.len() as u32;
                    classes.push(TermClass::new(c)?);
                    index.insert(*c, id);
                    id
                }
            };
            class_of.push(id);
        }
        let divergences: Vec<Scalar> = class_of.iter().map(|&c| classes[c as usize].divergence).collect();
        let horizon = match options.sample_size {
            SampleSize::Auto => required_sample_size_from(&divergences, options.size_cap)?,
            SampleSize::Fixed(m) => {
                if m == 0 {
                    return Err(Error::InvalidParameter("sample size must be at least 1".into()));
                }
                if m > options.size_cap {
                    return Err(Error::Overflow {
                        cap: options.size_cap,
                    });
                }
                let p0 = tail_sum(&divergences, m);
                if !p0.certainly_le(1.0) {
                    return Err(Error::Infeasible {
                        m,
                        potential: p0.mid(),
                    });
                }
                m
            }
        };
        let steps_total = match options.size_mode {
            SizeMode::Slackened => horizon + 1,
            SizeMode::Exact => horizon,
        };
        let mu = classes
            .iter()
            .map(|c| c.divergence.lo())
            .fold(1.0f64, f64::min)
            .max(f64::MIN_POSITIVE);
        let tau = classes
            .iter()
            .map(|c| c.alpha.hi().max(c.gamma.hi()))
            .fold(1.0f64, f64::max);
        let weight_exp = Scalar::exact(steps_total as f64);
        let current: Vec<Scalar> = class_of
            .iter()
            .map(|&c| (-(classes[c as usize].divergence * weight_exp)).exp())
            .collect();
        let potential: Scalar = current.iter().copied().sum();
        let slack = match options.size_mode {
            SizeMode::Slackened => mu / (4.0 * horizon as f64),
            SizeMode::Exact => {
                if !potential.certainly_le(1.0) || potential.hi() >= 1.0 {
                    return Err(Error::PrecisionExhausted { step: 0, coordinate: 0 });
                }
                (1.0 - potential.hi()) / (2.0 * steps_total as f64)
            }
        };
        let record_hits = (constraints.len() as u128) * (steps_total as u128) <= options.record_hits_limit as u128;
        let trace = PotentialTrace {
            horizon,
            size_mode: options.size_mode,
            output_size: steps_total,
            mu,
            tau,
            precision: precision_budget(horizon, constraints.len() as u64, tau, mu, coordinates as u64),
            backend_bits: BACKEND_BITS,
            slack,
            coordinates,
            initial: potential,
            steps: Vec::with_capacity(steps_total as usize),
            classes: classes.clone(),
            class_of: class_of.clone(),
            hits: record_hits.then(Vec::new),
            counters: Vec::new(),
        };
        Ok(Engine {
            constraints,
            classes,
            class_of,
            horizon,
            steps_total,
            slack,
            current,
            potential,
            counters: vec![0; constraints.len()],
            trace,
            record_hits,
        })
    }

    fn class(&self, i: usize) -> &TermClass {
        &self.classes[self.class_of[i] as usize]
    }

    /// Terms of `P'_{j+1}` before the choice: `current_i * gamma_i`, and the
    /// extra `c_i (alpha_i - 1)` a hit on `i` adds.
    fn candidate_terms(&self) -> (Vec<Scalar>, Vec<Scalar>) {
        let base: Vec<Scalar> = (0..self.current.len())
            .map(|i| self.current[i] * self.class(i).gamma)
            .collect();
        let extra = base
            .iter()
            .enumerate()
            .map(|(i, &c)| c * (self.class(i).alpha - Scalar::ONE))
            .collect();
        (base, extra)
    }

    fn commit(&mut self, point: Vec<u32>, hits: Vec<u32>, candidate: Scalar, base: Vec<Scalar>) -> Result<()> {
        let step = self.trace.steps.len() as u64 + 1;
        let mut is_hit = vec![false; self.current.len()];
        for &i in &hits {
            is_hit[i as usize] = true;
        }
        for (i, b) in base.into_iter().enumerate() {
            self.current[i] = if is_hit[i] {
                self.counters[i] += 1;
                b * self.class(i).alpha
            } else {
                b
            };
        }
        let fresh: Scalar = self.current.iter().copied().sum();
        let potential = fresh.meet(candidate);
        if potential.hi() > self.potential.hi() + self.slack {
            return Err(Error::Internal(format!(
                "step {step}: potential {potential} exceeds previous {} plus slack",
                self.potential
            )));
        }
        self.potential = potential;
        self.trace.steps.push(TraceStep {
            index: step,
            chosen: point,
            potential,
        });
        if self.record_hits {
            if let Some(h) = self.trace.hits.as_mut() {
                h.push(hits);
            }
        }
        Ok(())
    }

    fn finish(mut self, points: Vec<Vec<u32>>, indices: Option<Vec<usize>>) -> Result<Outcome> {
        let total = self.steps_total;
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.satisfied_by(self.counters[i], total) {
                return Err(Error::Internal(format!(
                    "constraint {i} ended at {}/{total}, target {:?} {}",
                    self.counters[i], c.direction, c.lambda
                )));
            }
        }
        if !self.potential.certainly_le(1.0) || self.potential.hi() >= 1.0 {
            return Err(Error::Internal(format!("final potential {} is not below 1", self.potential)));
        }
        debug_assert!(self.horizon >= 1);
        self.trace.counters = std::mem::take(&mut self.counters);
        Ok(Outcome {
            points,
            indices,
            trace: self.trace,
        })
    }
}

/// Greedy selection over an explicitly enumerated space.
///
/// At every step the first point (in index order) whose certified candidate
/// potential is at most the previous potential plus the declared slack is
/// taken, so the result is deterministic.
pub fn derandomize_enumerated<S: EnumeratedSpace + ?Sized>(
    space: &S,
    constraints: &[ConstraintSpec],
    options: &Options,
) -> Result<Outcome> {
    if space.is_empty() {
        return Err(Error::InvalidParameter("sample space is empty".into()));
    }
    let mut engine = Engine::new(constraints, options, 1)?;
    let n = constraints.len();
    let mut points = Vec::with_capacity(engine.steps_total as usize);
    let mut indices = Vec::with_capacity(engine.steps_total as usize);
    for step in 0..engine.steps_total {
        let (base, extra) = engine.candidate_terms();
        let base_sum: Scalar = base.iter().copied().sum();
        let threshold = engine.potential.hi() + engine.slack;
        let extra_hi: Vec<f64> = extra.iter().map(Scalar::hi).collect();
        let mut best: Option<(usize, Scalar, Vec<u32>)> = None;
        for s in 0..space.len() {
            let hits = space.hits(s, n);
            let quick = quick_upper(base_sum.hi(), &extra_hi, &hits);
            if quick > threshold || best.as_ref().is_some_and(|(_, b, _)| quick >= b.hi()) {
                continue;
            }
            let full = hits.iter().fold(base_sum, |acc, &i| acc + extra[i as usize]);
            let value = Scalar::interval(full.lo().min(quick), full.hi().min(quick));
            best = Some((s, value, hits));
            if !options.minimize {
                break;
            }
        }
        let (chosen, value, hits) = best.ok_or(Error::PrecisionExhausted {
            step: step + 1,
            coordinate: 0,
        })?;
        let point = space.point(chosen);
        engine.commit(point.clone(), hits, value, base)?;
        points.push(point);
        indices.push(chosen);
    }
    engine.finish(points, Some(indices))
}

/// Rigorous upper bound on `start + sum extra_hi[hits]` from one plain
/// floating-point pass plus the worst-case error of recursive summation.
fn quick_upper(start: f64, extra_hi: &[f64], hits: &[u32]) -> f64 {
    let (mut sum, mut abs) = (start, start.abs());
    for &i in hits {
        let x = extra_hi[i as usize];
        sum += x;
        abs += x.abs();
    }
    let terms = (hits.len() + 1) as f64;
    let gamma = terms * f64::EPSILON / (1.0 - terms * f64::EPSILON);
    (sum + 2.0 * gamma * abs).next_up()
}

fn mean_average(space: &impl ProductSpace, constraint: usize, prefix: &mut Vec<u32>, size: u32) -> Rational {
    let mut sum = Rational::zero();
    for xi in 0..size {
        prefix.push(xi);
        sum += big(space.conditional_mean(constraint, prefix));
        prefix.pop();
    }
    sum / Rational::from_integer(BigInt::from(size))
}

/// Greedy selection over a product space by the method of conditional
/// probabilities.
///
/// Each step fixes coordinates left to right, taking the first symbol whose
/// certified conditional expectation of the candidate potential stays within
/// `slack / n` of the running bound. Work per step is proportional to
/// `(|S_1| + ... + |S_n|)` times the number of touched constraints.
pub fn derandomize_conditional<S: ProductSpace>(
    space: &S,
    constraints: &[ConstraintSpec],
    options: &Options,
) -> Result<Outcome> {
    let sizes = space.coordinate_sizes();
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidParameter("product space needs at least one non-empty coordinate".into()));
    }
    let n_coords = sizes.len();
    let mut engine = Engine::new(constraints, options, n_coords)?;
    let n = constraints.len();
    let all: Vec<u32> = (0..n as u32).collect();
    let coord_slack = engine.slack / n_coords as f64;
    let mut points = Vec::with_capacity(engine.steps_total as usize);
    let mut means: Vec<Prob> = vec![Prob::zero(); n];
    let mut prefix: Vec<u32> = Vec::with_capacity(n_coords);

    for step in 1..=engine.steps_total {
        let (base, extra) = engine.candidate_terms();
        prefix.clear();
        for (i, m) in means.iter_mut().enumerate() {
            *m = space.conditional_mean(i, &prefix);
            if options.check_martingale && *m != constraints[i].p {
                return Err(Error::ContractViolation(format!(
                    "constraint {i}: unconditional mean {m} differs from p = {}",
                    constraints[i].p
                )));
            }
        }
        let mut phi: Scalar = base.iter().copied().sum::<Scalar>()
            + (0..n)
                .filter(|&i| !means[i].is_zero())
                .map(|i| extra[i] * Scalar::from_prob(means[i]))
                .sum::<Scalar>();
        let mut bound = engine.potential.hi().min(phi.hi());

        for (coord, &size) in sizes.iter().enumerate() {
            let touched: &[u32] = space.touching(coord).unwrap_or(&all);
            if options.check_martingale {
                for &i in touched {
                    let avg = mean_average(space, i as usize, &mut prefix, size);
                    if avg != big(means[i as usize]) {
                        return Err(Error::ContractViolation(format!(
                            "constraint {i} at coordinate {coord}: mean {} is not the average {avg} of its extensions",
                            means[i as usize]
                        )));
                    }
                }
            }
            let threshold = bound + coord_slack;
            let mut best: Option<(u32, Scalar)> = None;
            for xi in 0..size {
                prefix.push(xi);
                let delta: Scalar = touched
                    .iter()
                    .filter_map(|&i| {
                        let i = i as usize;
                        let new = space.conditional_mean(i, &prefix);
                        (new != means[i]).then(|| extra[i] * (Scalar::from_prob(new) - Scalar::from_prob(means[i])))
                    })
                    .sum();
                prefix.pop();
                let value = phi + delta;
                let better = best.map_or(true, |(_, b)| value.hi() < b.hi());
                if value.hi() <= threshold && better {
                    best = Some((xi, value));
                    if !options.minimize {
                        break;
                    }
                }
            }
            let (xi, value) = best.ok_or(Error::PrecisionExhausted { step, coordinate: coord })?;
            prefix.push(xi);
            for &i in touched {
                means[i as usize] = space.conditional_mean(i as usize, &prefix);
            }
            phi = value;
            bound = value.hi();
        }

        let mut hits = Vec::new();
        for (i, m) in means.iter().enumerate() {
            if *m == Prob::one() {
                hits.push(i as u32);
            } else if !m.is_zero() {
                return Err(Error::ContractViolation(format!(
                    "constraint {i} has mean {m} on a complete point"
                )));
            }
        }
        let point = prefix.clone();
        engine.commit(point.clone(), hits, phi, base)?;
        points.push(point);
    }
    engine.finish(points, None)
}

/// Exact brute-force check of every constraint over a list of points.
/// Returns the first violated constraint, if any.
pub fn first_violation<F>(points: &[Vec<u32>], constraints: &[ConstraintSpec], indicator: F) -> Option<usize>
where
    F: Fn(&[u32], usize) -> bool,
{
    let total = points.len() as u64;
    constraints.iter().enumerate().position(|(i, c)| {
        let hits = points.iter().filter(|p| indicator(p, i)).count() as u64;
        !c.satisfied_by(hits, total)
    })
}

/// Convenience: `Ratio<u64>` from a numerator and denominator.
pub fn prob(numer: u64, denom: u64) -> Prob {
    Ratio::new(numer, denom)
}
