//! Concrete objects built with the derandomizer.
//!
//! Each builder lays out a product sample space together with its list of
//! indicator constraints and hands both to the engine. The spaces are public
//! so callers can run either selection method on them directly.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::algebra::{bch_columns, nn_length_bound, Field, LinearCode};
use crate::derandomizer::{
    derandomize_conditional, derandomize_enumerated, prob, ConstraintSpec, Options, Outcome, PotentialTrace,
    ProductEnumeration, ProductSpace,
};
use crate::numerics::{rational_string, rational_to_f64, Prob, Rational};
use crate::sample::{Alphabet, Provenance, SampleMultiset};
use crate::verifier::{combinations, Norm};
use crate::{Error, Result, DEFAULT_BUDGET};

/// Which selection strategy drives the engine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Method {
    /// Coordinate by coordinate, conditional expectations.
    #[default]
    Conditional,
    /// Scan every point of the product space at every step.
    Enumerated,
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Cap on constraint counts, per-step scans and enumerations.
    pub budget: u64,
    pub method: Method,
    pub engine: Options,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            budget: DEFAULT_BUDGET,
            method: Method::Conditional,
            engine: Options::default(),
        }
    }
}

/// A built multiset with the trace that certifies it.
#[derive(Clone, Debug)]
pub struct Construction {
    pub set: SampleMultiset,
    pub trace: PotentialTrace,
    pub n_constraints: usize,
}

#[derive(Clone, Debug)]
pub struct CodeConstruction {
    pub code: LinearCode,
    pub trace: PotentialTrace,
    pub n_constraints: usize,
}

/// Parameters of an almost k-wise independent set.
#[derive(Clone, Debug, PartialEq)]
pub struct KwiseParams {
    pub n: usize,
    pub k: usize,
    pub epsilon: Rational,
    pub norm: Norm,
    /// Prefix length of the L1 grouping; `None` picks it from `n` and `k`.
    pub r: Option<usize>,
}

impl KwiseParams {
    pub fn new(n: usize, k: usize, epsilon: Rational, norm: Norm) -> Self {
        KwiseParams {
            n,
            k,
            epsilon,
            norm,
            r: None,
        }
    }

    pub fn with_r(mut self, r: usize) -> Self {
        self.r = Some(r);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::InvalidParameter(format!(
                "k = {} must satisfy 1 <= k <= n = {}",
                self.k, self.n
            )));
        }
        if self.k > 20 {
            return Err(Error::InvalidParameter(format!("k = {} is too large", self.k)));
        }
        if !open_unit(&self.epsilon) {
            return Err(Error::Domain(format!(
                "eps = {} is not in (0,1)",
                rational_string(&self.epsilon)
            )));
        }
        Ok(())
    }

    fn provenance(&self, construction: &str) -> Provenance {
        Provenance::new(construction)
            .with("n", self.n)
            .with("k", self.k)
            .with("eps", rational_string(&self.epsilon))
            .with("norm", self.norm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhfParams {
    pub n: usize,
    pub q: u32,
    pub k: usize,
    pub epsilon: Rational,
}

fn open_unit(x: &Rational) -> bool {
    x.is_positive() && x < &Rational::one()
}

fn int(x: u64) -> Rational {
    Rational::from_integer(BigInt::from(x))
}

fn pow2(e: usize) -> Rational {
    Rational::from_integer(BigInt::one() << e)
}

/// Exact conversion of a rational in `(0,1)` to the engine's probability type.
fn to_prob(r: &Rational, what: &str) -> Result<Prob> {
    if !open_unit(r) {
        return Err(Error::Domain(format!("{what} = {} is not in (0,1)", rational_string(r))));
    }
    match (r.numer().to_u64(), r.denom().to_u64()) {
        (Some(a), Some(b)) => Ok(prob(a, b)),
        _ => Err(Error::InvalidParameter(format!(
            "{what} = {} needs more than 64-bit numerator or denominator",
            rational_string(r)
        ))),
    }
}

fn guard(what: &'static str, needed: u128, budget: u64) -> Result<()> {
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { what, needed, budget });
    }
    Ok(())
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        0
    } else {
        num_integer::binomial(n as u128, k as u128)
    }
}

/// Runs the engine on `space` with the configured method.
pub fn run<S: ProductSpace>(space: &S, constraints: &[ConstraintSpec], options: &BuildOptions) -> Result<Outcome> {
    let sizes = space.coordinate_sizes();
    guard(
        "per-step coordinate scan",
        sizes.iter().map(|&s| s as u128).sum(),
        options.budget,
    )?;
    match options.method {
        Method::Conditional => derandomize_conditional(space, constraints, &options.engine),
        Method::Enumerated => {
            let points = sizes
                .iter()
                .try_fold(1u128, |acc, &s| acc.checked_mul(s as u128))
                .unwrap_or(u128::MAX);
            guard("enumerated sample space", points, options.budget)?;
            let enumeration = ProductEnumeration::new(space)?;
            derandomize_enumerated(&enumeration, constraints, &options.engine)
        }
    }
}

/// Number of positions of `positions` not yet fixed by `prefix`, or `None`
/// when a fixed one disagrees with `pattern` (bit `width-1` is position 0).
fn prefix_matches(positions: &[u32], pattern: u32, width: usize, prefix: &[u32]) -> Option<u32> {
    let mut free = 0;
    for (j, &pos) in positions.iter().enumerate() {
        let want = (pattern >> (width - 1 - j)) & 1;
        match prefix.get(pos as usize) {
            Some(&b) if b != want => return None,
            Some(_) => {}
            None => free += 1,
        }
    }
    Some(free)
}

/// Space `F_q^k` with variables `[<v, w> = xi]` over canonical monic `v`.
///
/// Constraint `2 (v q + xi) + side` is the lower (`side = 0`) or upper
/// target for vector `v` and symbol `xi`.
pub struct CodeSpace {
    field: Field,
    k: usize,
    /// `(t, v)` with `v_t = 1` and `v_i = 0` for `i > t`.
    vectors: Vec<(usize, Vec<u32>)>,
    /// Vectors as bit masks when `q = 2` and `k <= 64`.
    masks: Option<Vec<u64>>,
    touching: Vec<Vec<u32>>,
    constraints: Vec<ConstraintSpec>,
}

fn pack(bits: &[u32]) -> u64 {
    bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | (b as u64) << i)
}

impl CodeSpace {
    pub fn new(q: u64, k: usize, epsilon: &Rational, budget: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("message length k must be at least 1".into()));
        }
        if !epsilon.is_positive() || epsilon > &Rational::new(1.into(), 2.into()) {
            return Err(Error::Domain(format!(
                "eps = {} must be in (0, 1/2]",
                rational_string(epsilon)
            )));
        }
        let field = Field::with_order(q)?;
        let vectors_total = (1..=k)
            .try_fold(0u128, |acc, t| Some(acc + (q as u128).checked_pow(t as u32 - 1)?))
            .unwrap_or(u128::MAX);
        guard(
            "balanced-code constraints",
            vectors_total.saturating_mul(2 * q as u128),
            budget,
        )?;
        let p = prob(1, q);
        let lower = to_prob(&((Rational::one() - epsilon) / int(q)), "lambda")?;
        let upper = to_prob(&((Rational::one() + epsilon) / int(q)), "lambda")?;
        let pair = [ConstraintSpec::lower(p, lower)?, ConstraintSpec::upper(p, upper)?];

        let mut vectors = Vec::with_capacity(vectors_total as usize);
        let mut touching = vec![Vec::new(); k];
        let mut constraints = Vec::with_capacity(vectors_total as usize * 2 * q as usize);
        for t in 0..k {
            let count = (q as u128).pow(t as u32);
            for idx in 0..count {
                let mut v = vec![0u32; k];
                let mut rest = idx;
                for slot in v[..t].iter_mut().rev() {
                    *slot = (rest % q as u128) as u32;
                    rest /= q as u128;
                }
                v[t] = 1;
                let v_id = vectors.len();
                vectors.push((t, v));
                for xi in 0..q as usize {
                    for (side, spec) in pair.iter().enumerate() {
                        let id = 2 * (v_id * q as usize + xi) + side;
                        debug_assert_eq!(id, constraints.len());
                        constraints.push(*spec);
                        touching[t].push(id as u32);
                    }
                }
            }
        }
        let masks = (q == 2 && k <= 64).then(|| vectors.iter().map(|(_, v)| pack(v)).collect());
        Ok(CodeSpace {
            field,
            k,
            vectors,
            masks,
            touching,
            constraints,
        })
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    /// `<v, w> = xi` for constraint `c` on a full word `w`.
    pub fn indicator(&self, c: usize, w: &[u32]) -> bool {
        let q = self.field.size() as usize;
        let (v_id, xi) = ((c / 2) / q, (c / 2) % q);
        let (t, v) = &self.vectors[v_id];
        self.field.dot(&v[..=*t], &w[..=*t]) == xi as u32
    }
}

impl ProductSpace for CodeSpace {
    fn coordinate_sizes(&self) -> Vec<u32> {
        vec![self.field.size() as u32; self.k]
    }

    fn conditional_mean(&self, constraint: usize, prefix: &[u32]) -> Prob {
        let t = self.vectors[(constraint / 2) / self.field.size() as usize].0;
        if prefix.len() <= t {
            // w_t is still uniform and carries coefficient 1.
            return prob(1, self.field.size());
        }
        if self.indicator(constraint, prefix) {
            Prob::one()
        } else {
            Prob::zero()
        }
    }

    fn touching(&self, coordinate: usize) -> Option<&[u32]> {
        Some(&self.touching[coordinate])
    }

    fn point_hits(&self, point: &[u32], _n_constraints: usize) -> Vec<u32> {
        let q = self.field.size() as usize;
        let mut out = Vec::with_capacity(2 * self.vectors.len());
        if let Some(masks) = &self.masks {
            let w = pack(point);
            for (v_id, v) in masks.iter().enumerate() {
                let id = 2 * (2 * v_id as u32 + (v & w).count_ones() % 2);
                out.extend([id, id + 1]);
            }
            return out;
        }
        for (v_id, (t, v)) in self.vectors.iter().enumerate() {
            let xi = self.field.dot(&v[..=*t], &point[..=*t]) as usize;
            let id = 2 * (v_id * q + xi) as u32;
            out.extend([id, id + 1]);
        }
        out
    }
}

/// Code whose every nonzero codeword has each symbol frequency in
/// `[(1-eps)/q, (1+eps)/q]`.
pub fn build_balanced_code(q: u64, k: usize, epsilon: &Rational, options: &BuildOptions) -> Result<CodeConstruction> {
    let space = CodeSpace::new(q, k, epsilon, options.budget)?;
    let outcome = run(&space, space.constraints(), options)?;
    let code = LinearCode::new(space.field.clone(), k, outcome.points)?;
    Ok(CodeConstruction {
        code,
        trace: outcome.trace,
        n_constraints: space.constraints.len(),
    })
}

/// Multiset of `{0,1}^n` in which every nonempty parity has bias at most `eps`.
pub fn build_bias_set(n: usize, epsilon: &Rational, options: &BuildOptions) -> Result<Construction> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let built = build_balanced_code(2, n, epsilon, options)?;
    let mut provenance = Provenance::new("bias")
        .with("n", n)
        .with("eps", rational_string(epsilon));
    provenance.trace_digest = Some(built.trace.digest());
    let set = SampleMultiset::from_words(Alphabet::Binary, n, built.code.rows())?.with_provenance(provenance);
    Ok(Construction {
        set,
        trace: built.trace,
        n_constraints: built.n_constraints,
    })
}

/// Space `{0,1}^n` with variables `[s_I = sigma]` over all k-subsets `I`.
///
/// Constraint `2 (i 2^k + sigma) + side` belongs to the `i`-th subset in
/// lexicographic order; bit `k-1` of `sigma` is the value at `I[0]`.
pub struct PatternSpace {
    n: usize,
    k: usize,
    subsets: Vec<Vec<u32>>,
    touching: Vec<Vec<u32>>,
    constraints: Vec<ConstraintSpec>,
}

impl PatternSpace {
    pub fn new(params: &KwiseParams, budget: u64) -> Result<Self> {
        params.validate()?;
        let (n, k, eps) = (params.n, params.k, &params.epsilon);
        let cell = pow2(k).recip();
        let (lo, hi) = match params.norm {
            Norm::Linf => {
                if eps >= &cell {
                    return Err(Error::Domain(format!(
                        "eps = {} must be below 2^-k = {}",
                        rational_string(eps),
                        rational_string(&cell)
                    )));
                }
                (&cell - eps, &cell + eps)
            }
            Norm::Multiplicative => (&cell * (Rational::one() - eps), &cell * (Rational::one() + eps)),
            Norm::L1 => {
                return Err(Error::InvalidParameter("pattern constraints are for L-inf norms; use the L1 builder".into()))
            }
        };
        guard("k-wise constraints", binom(n, k) << (k + 1), budget)?;
        let p = to_prob(&cell, "p")?;
        let pair = [
            ConstraintSpec::lower(p, to_prob(&lo, "lambda")?)?,
            ConstraintSpec::upper(p, to_prob(&hi, "lambda")?)?,
        ];
        let subsets: Vec<Vec<u32>> = combinations(n, k)
            .map(|s| s.into_iter().map(|x| x as u32).collect())
            .collect();
        let per_subset = 2usize << k;
        let mut touching = vec![Vec::new(); n];
        for (i, s) in subsets.iter().enumerate() {
            for &pos in s {
                touching[pos as usize].extend((i * per_subset..(i + 1) * per_subset).map(|c| c as u32));
            }
        }
        let constraints = (0..subsets.len() * per_subset).map(|c| pair[c % 2]).collect();
        Ok(PatternSpace {
            n,
            k,
            subsets,
            touching,
            constraints,
        })
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn indicator(&self, c: usize, s: &[u32]) -> bool {
        self.conditional_mean(c, s).is_one()
    }
}

impl ProductSpace for PatternSpace {
    fn coordinate_sizes(&self) -> Vec<u32> {
        vec![2; self.n]
    }

    fn conditional_mean(&self, constraint: usize, prefix: &[u32]) -> Prob {
        let cell = constraint / 2;
        let (subset, sigma) = (cell >> self.k, (cell & ((1 << self.k) - 1)) as u32);
        match prefix_matches(&self.subsets[subset], sigma, self.k, prefix) {
            None => Prob::zero(),
            Some(free) => prob(1, 1 << free),
        }
    }

    fn touching(&self, coordinate: usize) -> Option<&[u32]> {
        Some(&self.touching[coordinate])
    }
}

/// Almost k-wise independent set in the L-inf (or multiplicative) norm from
/// two-sided targets on every pattern of every k-subset.
pub fn build_kwise_direct(params: &KwiseParams, options: &BuildOptions) -> Result<Construction> {
    let space = PatternSpace::new(params, options.budget)?;
    let outcome = run(&space, space.constraints(), options)?;
    let mut provenance = params.provenance("kwise-direct");
    provenance.trace_digest = Some(outcome.trace.digest());
    finish_binary(params.n, outcome, provenance, space.constraints.len())
}

fn finish_binary(n: usize, outcome: Outcome, provenance: Provenance, n_constraints: usize) -> Result<Construction> {
    let set = SampleMultiset::from_words(Alphabet::Binary, n, &outcome.points)?.with_provenance(provenance);
    Ok(Construction {
        set,
        trace: outcome.trace,
        n_constraints,
    })
}

/// One `[s_I in {a} x B]` variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConstraint {
    pub subset: u32,
    pub a: u32,
    /// Bit `b` set when the suffix pattern `b` belongs to `B`.
    pub b_mask: u16,
}

/// Space `{0,1}^n` with variables `[s_I in {a} x B]` for every k-subset `I`,
/// prefix `a` in `{0,1}^r` and nonempty `B` of `{0,1}^(k-r)`.
pub struct BlockSpace {
    n: usize,
    k: usize,
    r: usize,
    subsets: Vec<Vec<u32>>,
    blocks: Vec<BlockConstraint>,
    touching: Vec<Vec<u32>>,
    constraints: Vec<ConstraintSpec>,
}

/// Default grouping prefix: `max(ceil(k - log log n), 0)`, kept within
/// `[k-4, k-1]` so that `2^(2^(k-r))` stays enumerable.
pub fn auto_r(n: usize, k: usize) -> usize {
    let loglog = if n >= 4 { (n as f64).log2().log2() } else { 0.0 };
    let r = (k as f64 - loglog).ceil().max(0.0) as usize;
    r.min(k - 1).max(k.saturating_sub(4))
}

impl BlockSpace {
    pub fn new(params: &KwiseParams, budget: u64) -> Result<Self> {
        params.validate()?;
        if params.norm != Norm::L1 {
            return Err(Error::InvalidParameter("block constraints are for the L1 norm".into()));
        }
        let (n, k, eps) = (params.n, params.k, &params.epsilon);
        let r = params.r.unwrap_or_else(|| auto_r(n, k));
        if r >= k {
            return Err(Error::InvalidParameter(format!("r = {r} must be below k = {k}")));
        }
        let width = k - r;
        if width > 4 {
            return Err(Error::BudgetExceeded {
                what: "subset families 2^(2^(k-r))",
                needed: 1u128 << (1u32 << width.min(6)).min(127),
                budget: 1 << 16,
            });
        }
        let patterns = 1usize << width;
        let families = 1u128 << patterns;
        guard("L1 block constraints", binom(n, k) * (families << (r + 1)), budget)?;
        let shift = eps / pow2(r + 1);
        let cell = pow2(k).recip();

        // One pair of specs per |B|; out-of-range sides are vacuous and dropped.
        let mut by_size: Vec<[Option<ConstraintSpec>; 2]> = vec![[None, None]; patterns + 1];
        for (size, slot) in by_size.iter_mut().enumerate().skip(1) {
            let p = &cell * int(size as u64);
            if p >= Rational::one() {
                continue;
            }
            let pp = to_prob(&p, "p")?;
            let lo = &p - &shift;
            let hi = &p + &shift;
            if lo.is_positive() {
                slot[0] = Some(ConstraintSpec::lower(pp, to_prob(&lo, "lambda")?)?);
            }
            if hi < Rational::one() {
                slot[1] = Some(ConstraintSpec::upper(pp, to_prob(&hi, "lambda")?)?);
            }
        }

        let subsets: Vec<Vec<u32>> = combinations(n, k)
            .map(|s| s.into_iter().map(|x| x as u32).collect())
            .collect();
        let mut blocks = Vec::new();
        let mut constraints = Vec::new();
        let mut touching = vec![Vec::new(); n];
        for (i, subset) in subsets.iter().enumerate() {
            for a in 0..1u32 << r {
                for b_mask in 1..families as u32 {
                    let size = b_mask.count_ones() as usize;
                    for spec in by_size[size].iter().flatten() {
                        let id = constraints.len() as u32;
                        constraints.push(*spec);
                        blocks.push(BlockConstraint {
                            subset: i as u32,
                            a,
                            b_mask: b_mask as u16,
                        });
                        for &pos in subset {
                            touching[pos as usize].push(id);
                        }
                    }
                }
            }
        }
        Ok(BlockSpace {
            n,
            k,
            r,
            subsets,
            blocks,
            touching,
            constraints,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn blocks(&self) -> &[BlockConstraint] {
        &self.blocks
    }

    pub fn indicator(&self, c: usize, s: &[u32]) -> bool {
        self.conditional_mean(c, s).is_one()
    }
}

impl ProductSpace for BlockSpace {
    fn coordinate_sizes(&self) -> Vec<u32> {
        vec![2; self.n]
    }

    fn conditional_mean(&self, constraint: usize, prefix: &[u32]) -> Prob {
        let block = self.blocks[constraint];
        let subset = &self.subsets[block.subset as usize];
        let (head, tail) = subset.split_at(self.r);
        let Some(free_a) = prefix_matches(head, block.a, self.r, prefix) else {
            return Prob::zero();
        };
        let width = self.k - self.r;
        let mut consistent = 0u64;
        let mut free_b = 0u32;
        for &pos in tail {
            if pos as usize >= prefix.len() {
                free_b += 1;
            }
        }
        for b in 0..1u32 << width {
            if block.b_mask >> b & 1 == 1 && prefix_matches(tail, b, width, prefix).is_some() {
                consistent += 1;
            }
        }
        if consistent == 0 {
            return Prob::zero();
        }
        prob(consistent, 1u64 << (free_a + free_b))
    }

    fn touching(&self, coordinate: usize) -> Option<&[u32]> {
        Some(&self.touching[coordinate])
    }
}

/// Almost k-wise independent set in the L1 norm from prefix-and-family
/// constraints.
pub fn build_kwise_l1(params: &KwiseParams, options: &BuildOptions) -> Result<Construction> {
    let space = BlockSpace::new(params, options.budget)?;
    let outcome = run(&space, space.constraints(), options)?;
    let mut provenance = params.provenance("kwise-l1").with("r", space.r);
    provenance.trace_digest = Some(outcome.trace.digest());
    finish_binary(params.n, outcome, provenance, space.constraints.len())
}

/// Space `[q]^n` with upper targets on every pairwise collision `[s_i = s_j]`.
pub struct PairSpace {
    n: usize,
    q: u32,
    pairs: Vec<(u32, u32)>,
    touching: Vec<Vec<u32>>,
    constraints: Vec<ConstraintSpec>,
}

/// `ceil(k^2 / eps)`.
pub fn collision_denominator(k: usize, epsilon: &Rational) -> u64 {
    let v = (int((k * k) as u64) / epsilon).ceil();
    v.to_integer().to_u64().unwrap_or(u64::MAX)
}

impl PairSpace {
    pub fn new(params: &PhfParams, budget: u64) -> Result<Self> {
        let PhfParams { n, q, k, ref epsilon } = *params;
        if k == 0 || k > n {
            return Err(Error::InvalidParameter(format!("k = {k} must satisfy 1 <= k <= n = {n}")));
        }
        if n < 2 {
            return Err(Error::InvalidParameter("a hash family needs n >= 2".into()));
        }
        if !open_unit(epsilon) {
            return Err(Error::Domain(format!("eps = {} is not in (0,1)", rational_string(epsilon))));
        }
        let floor = int(4 * (k * k) as u64) / epsilon;
        if int(q as u64) <= floor {
            return Err(Error::InvalidParameter(format!(
                "q = {q} must exceed 4k^2/eps = {}",
                rational_string(&floor)
            )));
        }
        guard("pair constraints", binom(n, 2), budget)?;
        let h = collision_denominator(k, epsilon);
        let spec = ConstraintSpec::upper(prob(1, q as u64), prob(1, h))?;
        let mut pairs = Vec::new();
        let mut touching = vec![Vec::new(); n];
        for j in 1..n {
            for i in 0..j {
                touching[j].push(pairs.len() as u32);
                pairs.push((i as u32, j as u32));
            }
        }
        let constraints = vec![spec; pairs.len()];
        Ok(PairSpace {
            n,
            q,
            pairs,
            touching,
            constraints,
        })
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn indicator(&self, c: usize, s: &[u32]) -> bool {
        let (i, j) = self.pairs[c];
        s[i as usize] == s[j as usize]
    }
}

impl ProductSpace for PairSpace {
    fn coordinate_sizes(&self) -> Vec<u32> {
        vec![self.q; self.n]
    }

    fn conditional_mean(&self, constraint: usize, prefix: &[u32]) -> Prob {
        let (i, j) = self.pairs[constraint];
        if (j as usize) < prefix.len() {
            if prefix[i as usize] == prefix[j as usize] {
                Prob::one()
            } else {
                Prob::zero()
            }
        } else {
            prob(1, self.q as u64)
        }
    }

    fn touching(&self, coordinate: usize) -> Option<&[u32]> {
        Some(&self.touching[coordinate])
    }
}

/// Family in `[q]^n` injective on each k-tuple for at least a `1 - eps`
/// fraction of members.
pub fn build_phf(params: &PhfParams, options: &BuildOptions) -> Result<Construction> {
    let space = PairSpace::new(params, options.budget)?;
    let outcome = run(&space, space.constraints(), options)?;
    let mut provenance = Provenance::new("phf")
        .with("n", params.n)
        .with("q", params.q)
        .with("k", params.k)
        .with("eps", rational_string(&params.epsilon));
    provenance.trace_digest = Some(outcome.trace.digest());
    let set = SampleMultiset::from_words(Alphabet::Qary(params.q), params.n, &outcome.points)?
        .with_provenance(provenance);
    Ok(Construction {
        set,
        trace: outcome.trace,
        n_constraints: space.constraints.len(),
    })
}

/// `{(v_{u_1}, ..., v_{u_n}) : u in H, v in R}`, ordered by `u` then `v`.
pub fn compose(phf: &SampleMultiset, inner: &SampleMultiset) -> Result<SampleMultiset> {
    let q = phf.alphabet().size() as usize;
    if inner.word_length() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: inner.word_length(),
        });
    }
    let mut out = SampleMultiset::new(inner.alphabet(), phf.word_length());
    let mut word = vec![0u32; phf.word_length()];
    for u in phf.words() {
        for v in inner.words() {
            for (slot, &h) in word.iter_mut().zip(u) {
                *slot = v[h as usize];
            }
            out.push(&word)?;
        }
    }
    out.provenance = Provenance::new("compose")
        .with("phf_size", phf.len())
        .with("inner_size", inner.len())
        .with("q", q);
    Ok(out)
}

/// Maps each `s in {0,1}^m` to `r_j = <s, col_j>` over the first `n`
/// columns of a BCH-type set in which any `k` columns are independent.
///
/// The smallest column degree `t` that supplies `n` columns is used.
pub fn nn_reduce(bias_set: &SampleMultiset, n: usize, k: u32) -> Result<SampleMultiset> {
    if bias_set.alphabet() != Alphabet::Binary {
        return Err(Error::InvalidParameter("input must be binary".into()));
    }
    if k % 2 == 0 {
        return Err(Error::InvalidParameter(format!("k = {k} must be odd")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let m = bias_set.word_length();
    if m == 0 || m > 64 {
        return Err(Error::InvalidParameter(format!("input length m = {m} must be in 1..=64")));
    }
    let columns: Vec<u64> = if k == 1 {
        vec![1; n]
    } else {
        if n as u128 > nn_length_bound(m, k) {
            return Err(Error::InvalidParameter(format!(
                "n = {n} exceeds 2^floor(2(m-1)/(k-1)) - 1 = {} for m = {m}, k = {k}",
                nn_length_bound(m, k)
            )));
        }
        let mut t = 1u32;
        while ((1u64 << t) - 1) < n as u64 || (k as u64 - 2) >= (1u64 << t) {
            t += 1;
        }
        let set = bch_columns(t, k)?;
        if set.length() > m {
            return Err(Error::InvalidParameter(format!(
                "columns of length {} do not fit in m = {m}",
                set.length()
            )));
        }
        set.columns()[..n].to_vec()
    };
    let mut out = SampleMultiset::new(Alphabet::Binary, n);
    let mut word = vec![0u32; n];
    for i in 0..bias_set.len() {
        let s = bias_set.packed(i);
        for (slot, col) in word.iter_mut().zip(&columns) {
            *slot = (s & col).count_ones() & 1;
        }
        out.push(&word)?;
    }
    out.provenance = Provenance::new("nn-reduce").with("n", n).with("k", k).with("m", m);
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RouteChoice {
    /// Pick by comparing `n` with the composition thresholds.
    #[default]
    Auto,
    Direct,
    Composed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Direct,
    /// Hash family into `[q]` composed with an inner set of length `q`.
    Composed { q: u64 },
}

#[derive(Clone, Debug)]
pub struct PolytimeConstruction {
    pub set: SampleMultiset,
    pub route: Route,
    /// One trace for the direct route; hash family then inner set otherwise.
    pub traces: Vec<PotentialTrace>,
}

fn ceil_u64(x: &Rational) -> u64 {
    x.ceil().to_integer().to_u64().unwrap_or(u64::MAX)
}

/// Alphabet size of the composed route, or `None` when `n` is small enough
/// for the direct builders.
pub fn composition_alphabet(params: &KwiseParams, choice: RouteChoice) -> Option<u64> {
    let (n, k) = (params.n as f64, params.k as i32);
    let eps = &params.epsilon;
    let eps_f = rational_to_f64(eps);
    let kk = (params.k * params.k) as u64;
    let cube = || ceil_u64(&(int(params.k as u64) / eps).pow(3));
    let l1_large = || (2f64.powf(2f64.powi(k) / k as f64) * kk as f64 / eps_f).ceil() as u64;
    let natural = match params.norm {
        Norm::Linf | Norm::Multiplicative => {
            if n >= (params.k as f64 / eps_f).powi(3 * k) {
                Some(cube())
            } else {
                None
            }
        }
        Norm::L1 => {
            let tower = 2f64.powf(2f64.powi(k));
            if n > tower && eps_f >= 2f64.powf(-(2f64.powi(k)) / k as f64) {
                Some(l1_large())
            } else if n <= tower && n >= (4.0 * kk as f64 / eps_f).powi(2 * k) {
                Some(n.powf(1.0 / k as f64).ceil() as u64)
            } else {
                None
            }
        }
    };
    let q = match choice {
        RouteChoice::Direct => return None,
        RouteChoice::Auto => natural?,
        RouteChoice::Composed => natural.unwrap_or_else(|| match params.norm {
            Norm::L1 => l1_large(),
            _ => cube(),
        }),
    };
    // The hash family is built at eps/4 and needs q > 16 k^2 / eps.
    let phf_floor = (int(16 * kk) / eps).floor().to_integer().to_u64().unwrap_or(u64::MAX - 1) + 1;
    Some(q.max(phf_floor).max(params.k as u64))
}

fn build_direct(params: &KwiseParams, options: &BuildOptions) -> Result<Construction> {
    match params.norm {
        Norm::L1 => build_kwise_l1(params, options),
        Norm::Linf | Norm::Multiplicative => build_kwise_direct(params, options),
    }
}

/// Direct construction for small `n`; for large `n` a hash family at
/// `eps/4` composed with an inner set of length `q` at `eps/4`.
pub fn build_kwise_polytime(
    params: &KwiseParams,
    choice: RouteChoice,
    options: &BuildOptions,
) -> Result<PolytimeConstruction> {
    params.validate()?;
    let Some(q) = composition_alphabet(params, choice) else {
        let built = build_direct(params, options)?;
        return Ok(PolytimeConstruction {
            set: built.set,
            route: Route::Direct,
            traces: vec![built.trace],
        });
    };
    let q32 = u32::try_from(q).map_err(|_| Error::BudgetExceeded {
        what: "composition alphabet",
        needed: q as u128,
        budget: u32::MAX as u64,
    })?;
    let quarter = &params.epsilon / int(4);
    let phf = build_phf(
        &PhfParams {
            n: params.n,
            q: q32,
            k: params.k,
            epsilon: quarter.clone(),
        },
        options,
    )?;
    let inner_params = KwiseParams {
        n: q as usize,
        epsilon: quarter,
        ..params.clone()
    };
    let inner = build_direct(&inner_params, options)?;
    let mut set = compose(&phf.set, &inner.set)?;
    let mut provenance = params.provenance("kwise-composed").with("q", q);
    if let Some(r) = params.r {
        provenance = provenance.with("r", r);
    }
    provenance.trace_digest = Some(crate::format::digest(
        format!("{}{}", phf.trace.digest(), inner.trace.digest()).as_bytes(),
    )[..16]
        .to_string());
    set.provenance = provenance;
    Ok(PolytimeConstruction {
        set,
        route: Route::Composed { q },
        traces: vec![phf.trace, inner.trace],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derandomizer::first_violation;
    use crate::numerics::parse_rational;
    use crate::verifier::{check_bias, check_code_balance, check_kwise, check_phf_density, check_trace};

    fn r(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn canonical_vector_count() {
        let space = CodeSpace::new(3, 2, &r("1/2"), DEFAULT_BUDGET).unwrap();
        assert_eq!(space.constraints().len(), 2 * 3 * (9 - 1) / 2);
        let bias = CodeSpace::new(2, 4, &r("0.4"), DEFAULT_BUDGET).unwrap();
        assert_eq!(bias.constraints().len(), 4 * 15);
    }

    #[test]
    fn code_space_means() {
        let space = CodeSpace::new(3, 2, &r("1/2"), DEFAULT_BUDGET).unwrap();
        // Vector (1,0) comes first; constraints 0..6 cover xi = 0,1,2.
        assert_eq!(space.conditional_mean(0, &[]), prob(1, 3));
        assert_eq!(space.conditional_mean(0, &[0]), Prob::one());
        assert_eq!(space.conditional_mean(2, &[0]), Prob::zero());
        // Vector (2,1) is last: id 4 among (1,0),(0,1),(1,1),(2,1).
        let c = 2 * (3 * 3 + 1);
        assert_eq!(space.conditional_mean(c, &[2]), prob(1, 3));
        // 2*1 + 1*1 = 0 in F_3.
        assert_eq!(space.conditional_mean(c, &[1, 1]), Prob::zero());
        assert_eq!(space.conditional_mean(2 * (3 * 3), &[1, 1]), Prob::one());
    }

    #[test]
    fn rejects_bad_parameters() {
        let o = BuildOptions::default();
        assert!(matches!(build_balanced_code(2, 3, &r("0.6"), &o), Err(Error::Domain(_))));
        assert!(matches!(build_balanced_code(6, 1, &r("0.5"), &o), Err(Error::UnsupportedField { .. })));
        let p = KwiseParams::new(8, 3, r("0.2"), Norm::Linf);
        assert!(matches!(build_kwise_direct(&p, &o), Err(Error::Domain(_))));
        let p = KwiseParams::new(3, 4, r("0.01"), Norm::Linf);
        assert!(build_kwise_direct(&p, &o).is_err());
        let phf = PhfParams {
            n: 10,
            q: 32,
            k: 2,
            epsilon: r("1/2"),
        };
        assert!(build_phf(&phf, &o).is_err());
        let p = KwiseParams::new(8, 3, r("0.4"), Norm::L1).with_r(3);
        assert!(build_kwise_l1(&p, &o).is_err());
    }

    #[test]
    fn budget_guard_trips() {
        let o = BuildOptions {
            budget: 100,
            ..Default::default()
        };
        let p = KwiseParams::new(8, 3, r("0.1"), Norm::Linf);
        assert!(matches!(build_kwise_direct(&p, &o), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn single_bit_code() {
        let built = build_balanced_code(2, 1, &r("1/2"), &BuildOptions::default()).unwrap();
        let m = built.code.block_length() as u64;
        let ones = built.code.rows().iter().filter(|w| w[0] == 1).count() as u64;
        assert!(4 * ones >= m && 4 * ones <= 3 * m);
    }

    #[test]
    fn small_bias_set() {
        let built = build_bias_set(4, &r("0.4"), &BuildOptions::default()).unwrap();
        let rep = check_bias(&built.set, Some(&r("0.4"))).unwrap();
        assert!(rep.passed, "{}", rep.to_table());
        assert!(check_trace(&built.trace).passed);
        assert_eq!(built.set.len() as u64, built.trace.horizon + 1);
    }

    #[test]
    fn ternary_code() {
        let built = build_balanced_code(3, 2, &r("1/2"), &BuildOptions::default()).unwrap();
        let rep = check_code_balance(&built.code, &r("1/2")).unwrap();
        assert!(rep.passed, "{}", rep.to_table());
        assert_eq!(rep.enumerated, 8);
    }

    #[test]
    fn gf4_code() {
        let built = build_balanced_code(4, 2, &r("1/2"), &BuildOptions::default()).unwrap();
        assert!(check_code_balance(&built.code, &r("1/2")).unwrap().passed);
    }

    #[test]
    fn pattern_means() {
        let p = KwiseParams::new(4, 2, r("0.1"), Norm::Linf);
        let space = PatternSpace::new(&p, DEFAULT_BUDGET).unwrap();
        assert_eq!(space.constraints().len(), 6 * 4 * 2);
        // Subset (0,1), sigma = 0b10: s_0 = 1, s_1 = 0.
        let c = 2 * 0b10;
        assert_eq!(space.conditional_mean(c, &[]), prob(1, 4));
        assert_eq!(space.conditional_mean(c, &[1]), prob(1, 2));
        assert_eq!(space.conditional_mean(c, &[0]), Prob::zero());
        assert_eq!(space.conditional_mean(c, &[1, 0]), Prob::one());
        assert_eq!(space.touching(3).unwrap().len(), 3 * 8);
    }

    #[test]
    fn kwise_n_equals_k() {
        let p = KwiseParams::new(3, 3, r("0.1"), Norm::Linf);
        let built = build_kwise_direct(&p, &BuildOptions::default()).unwrap();
        assert!(check_kwise(&built.set, 3, Norm::Linf, Some(&r("0.1"))).unwrap().passed);
    }

    #[test]
    fn multiplicative_targets() {
        let p = KwiseParams::new(5, 2, r("1/2"), Norm::Multiplicative);
        let built = build_kwise_direct(&p, &BuildOptions::default()).unwrap();
        let rep = check_kwise(&built.set, 2, Norm::Multiplicative, Some(&r("1/2"))).unwrap();
        assert!(rep.passed, "{}", rep.to_table());
    }

    #[test]
    fn block_means() {
        let p = KwiseParams::new(4, 3, r("0.4"), Norm::L1).with_r(1);
        let space = BlockSpace::new(&p, DEFAULT_BUDGET).unwrap();
        let c = space
            .blocks()
            .iter()
            .position(|b| b.subset == 0 && b.a == 1 && b.b_mask == 0b1001)
            .unwrap();
        // I = (0,1,2), s_0 = 1, (s_1, s_2) in {00, 11}.
        assert_eq!(space.conditional_mean(c, &[]), prob(1, 4));
        assert_eq!(space.conditional_mean(c, &[1]), prob(1, 2));
        assert_eq!(space.conditional_mean(c, &[0]), Prob::zero());
        assert_eq!(space.conditional_mean(c, &[1, 1]), prob(1, 2));
        assert_eq!(space.conditional_mean(c, &[1, 1, 0]), Prob::zero());
        assert_eq!(space.conditional_mean(c, &[1, 0, 0]), Prob::one());
    }

    #[test]
    fn block_skips_vacuous_sides() {
        // r = 0: the full B has p = 1 and contributes nothing.
        let p = KwiseParams::new(2, 2, r("0.4"), Norm::L1).with_r(0);
        let space = BlockSpace::new(&p, DEFAULT_BUDGET).unwrap();
        assert!(space.blocks().iter().all(|b| b.b_mask != 0 && b.b_mask != 0b1111));
        // |B| = 1: p = 1/4, shift = 1/5, both sides kept.
        let singles = space.blocks().iter().filter(|b| b.b_mask.count_ones() == 1).count();
        assert_eq!(singles, 8);
    }

    #[test]
    fn auto_r_clamps() {
        assert_eq!(auto_r(8, 3), 2);
        assert_eq!(auto_r(1 << 16, 3), 0);
        assert_eq!(auto_r(1 << 16, 8), 4);
        assert_eq!(auto_r(2, 1), 0);
    }

    #[test]
    fn small_l1() {
        let p = KwiseParams::new(5, 2, r("0.4"), Norm::L1).with_r(1);
        let built = build_kwise_l1(&p, &BuildOptions::default()).unwrap();
        let rep = check_kwise(&built.set, 2, Norm::L1, Some(&r("0.4"))).unwrap();
        assert!(rep.passed, "{}", rep.to_table());
    }

    #[test]
    fn phf_small() {
        let params = PhfParams {
            n: 6,
            q: 33,
            k: 2,
            epsilon: r("1/2"),
        };
        let built = build_phf(&params, &BuildOptions::default()).unwrap();
        assert!(check_phf_density(&built.set, 2, Some(&r("1/2"))).unwrap().passed);
        let space = PairSpace::new(&params, DEFAULT_BUDGET).unwrap();
        let points: Vec<Vec<u32>> = built.set.words().map(<[u32]>::to_vec).collect();
        assert_eq!(first_violation(&points, space.constraints(), |s, c| space.indicator(c, s)), None);
    }

    #[test]
    fn compose_examples() {
        let identity = SampleMultiset::from_words(Alphabet::Qary(2), 2, [[0, 1]]).unwrap();
        let cube = SampleMultiset::full_cube(2);
        let out = compose(&identity, &cube).unwrap();
        assert_eq!(out.words().collect::<Vec<_>>(), cube.words().collect::<Vec<_>>());
        let swap = SampleMultiset::from_words(Alphabet::Qary(2), 3, [[1, 0, 1], [0, 0, 0]]).unwrap();
        let out = compose(&swap, &cube).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out.word(1), &[1, 0, 1]);
        assert_eq!(out.word(7), &[1, 1, 1]);
        assert!(matches!(
            compose(&swap, &SampleMultiset::full_cube(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reduce_cube_is_exact() {
        let out = nn_reduce(&SampleMultiset::full_cube(4), 7, 3).unwrap();
        assert_eq!(out.len(), 16);
        assert!(check_kwise(&out, 3, Norm::Linf, None).unwrap().statistic.is_zero());
        assert!(nn_reduce(&SampleMultiset::full_cube(4), 8, 3).is_err());
        assert!(nn_reduce(&SampleMultiset::full_cube(4), 3, 2).is_err());
    }

    #[test]
    fn reduce_single_word() {
        let one = SampleMultiset::from_words(Alphabet::Binary, 4, [[1, 0, 1, 1]]).unwrap();
        let out = nn_reduce(&one, 5, 3).unwrap();
        assert_eq!(out.len(), 1);
        // Column 0 is x = 1: rows 0 and 1..=3 hold (1, 1, 0, 0).
        assert_eq!(out.word(0)[0], 1);
    }

    #[test]
    fn route_selection() {
        let small = KwiseParams::new(20, 2, r("0.1"), Norm::Linf);
        assert_eq!(composition_alphabet(&small, RouteChoice::Auto), None);
        assert_eq!(composition_alphabet(&small, RouteChoice::Direct), None);
        // (2/0.1)^3 = 8000 dominates 16*4/0.1 + 1 = 641.
        assert_eq!(composition_alphabet(&small, RouteChoice::Composed), Some(8000));
        let l1 = KwiseParams::new(20, 2, r("0.9"), Norm::L1);
        assert_eq!(composition_alphabet(&l1, RouteChoice::Composed), Some(72));
        let huge = KwiseParams::new(1 << 40, 2, r("0.2"), Norm::Linf);
        assert_eq!(composition_alphabet(&huge, RouteChoice::Auto), Some(1000));
    }

    #[test]
    fn direct_route_matches_direct_builder() {
        let p = KwiseParams::new(6, 2, r("0.1"), Norm::Linf);
        let o = BuildOptions::default();
        let a = build_kwise_polytime(&p, RouteChoice::Auto, &o).unwrap();
        let b = build_kwise_direct(&p, &o).unwrap();
        assert_eq!(a.route, Route::Direct);
        assert_eq!(a.set, b.set);
    }
}
