//! Brute-force certificates for constructed objects.
//!
//! Everything here is recomputed from the raw multiset with exact integer
//! counts; deviations are reported as exact rationals. Nothing reads the
//! engine's internal state except [`check_trace`], whose input is the trace
//! itself.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::binomial;
use num_traits::{One, Zero};

use crate::algebra::LinearCode;
use crate::derandomizer::PotentialTrace;
use crate::numerics::{rational_string, Rational};
use crate::sample::{Alphabet, SampleMultiset};
use crate::{Error, Result, DEFAULT_BUDGET};

/// Distance used for almost k-wise independence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    /// `max_{I, sigma} |Pr[s_I = sigma] - 2^-k|`.
    Linf,
    /// `max_I sum_sigma |Pr[s_I = sigma] - 2^-k|`.
    L1,
    /// `max_{I, sigma} |2^k Pr[s_I = sigma] - 1|`.
    Multiplicative,
}

impl Norm {
    pub fn as_str(self) -> &'static str {
        match self {
            Norm::Linf => "linf",
            Norm::L1 => "l1",
            Norm::Multiplicative => "mult",
        }
    }
}

impl FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Norm> {
        match s.to_ascii_lowercase().as_str() {
            "linf" | "inf" | "l-inf" => Ok(Norm::Linf),
            "l1" => Ok(Norm::L1),
            "mult" | "multiplicative" => Ok(Norm::Multiplicative),
            _ => Err(Error::InvalidParameter(format!("unknown norm {s:?}"))),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub property: String,
    pub passed: bool,
    /// The certified statistic: a maximum deviation, or a minimum density.
    pub statistic: Rational,
    /// What `statistic` was compared against, if anything.
    pub threshold: Option<Rational>,
    /// Where the statistic is attained.
    pub witness: String,
    /// Number of objects enumerated.
    pub enumerated: u64,
    pub notes: Vec<(String, String)>,
}

impl VerificationReport {
    fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.push((key.to_string(), value.to_string()));
        self
    }

    pub fn note_value(&self, key: &str) -> Option<&str> {
        self.notes.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// `key=value` lines; rationals as `num/den`.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "property={}", self.property);
        let _ = writeln!(out, "result={}", if self.passed { "pass" } else { "fail" });
        let _ = writeln!(out, "statistic={}", rational_string(&self.statistic));
        if let Some(t) = &self.threshold {
            let _ = writeln!(out, "threshold={}", rational_string(t));
        }
        let _ = writeln!(out, "witness={}", self.witness);
        let _ = writeln!(out, "enumerated={}", self.enumerated);
        for (k, v) in &self.notes {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("property".into(), self.property.clone()),
            ("result".into(), if self.passed { "PASS" } else { "FAIL" }.into()),
            (
                "statistic".into(),
                format!("{} (~{:.6})", rational_string(&self.statistic), approx(&self.statistic)),
            ),
        ];
        if let Some(t) = &self.threshold {
            rows.push(("threshold".into(), rational_string(t)));
        }
        rows.push(("witness".into(), self.witness.clone()));
        rows.push(("enumerated".into(), self.enumerated.to_string()));
        rows.extend(self.notes.iter().cloned());
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

fn approx(r: &Rational) -> f64 {
    crate::numerics::rational_to_f64(r)
}

fn ratio(n: impl Into<BigInt>, d: impl Into<BigInt>) -> Rational {
    Rational::new(n.into(), d.into())
}

fn guard(what: &'static str, needed: u128, budget: u64) -> Result<()> {
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { what, needed, budget });
    }
    Ok(())
}

fn require_binary(set: &SampleMultiset) -> Result<()> {
    if set.alphabet() != Alphabet::Binary {
        return Err(Error::InvalidParameter(format!(
            "expected a binary multiset, got alphabet {}",
            set.alphabet()
        )));
    }
    if set.is_empty() {
        return Err(Error::InvalidParameter("multiset is empty".into()));
    }
    Ok(())
}

fn subset_string(mask: u64, n: usize) -> String {
    let items: Vec<String> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", items.join(","))
}

/// Maximum bias over all nonempty parities, via a Walsh-Hadamard transform
/// of the word histogram.
pub fn check_bias(set: &SampleMultiset, epsilon: Option<&Rational>) -> Result<VerificationReport> {
    check_bias_with_budget(set, epsilon, DEFAULT_BUDGET)
}

pub fn check_bias_with_budget(
    set: &SampleMultiset,
    epsilon: Option<&Rational>,
    budget: u64,
) -> Result<VerificationReport> {
    require_binary(set)?;
    let n = set.word_length();
    if n > 24 {
        return Err(Error::BudgetExceeded {
            what: "bias check (2^n parities)",
            needed: 1u128 << n.min(127),
            budget: 1 << 24,
        });
    }
    guard("bias check (2^n parities)", 1u128 << n, budget)?;
    let mut hist = vec![0i64; 1 << n];
    for i in 0..set.len() {
        hist[set.packed(i) as usize] += 1;
    }
    // In-place Walsh-Hadamard: hist[I] becomes sum_s (-1)^{<s, I>}.
    let mut h = 1;
    while h < hist.len() {
        for block in hist.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
    let (arg, worst) = hist
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, v)| (i, v.unsigned_abs()))
        .fold((1usize, 0u64), |best, cur| if cur.1 > best.1 { cur } else { best });
    let statistic = ratio(worst, set.len() as u64);
    let passed = epsilon.map_or(true, |e| &statistic <= e);
    Ok(VerificationReport {
        property: "bias".into(),
        passed,
        statistic,
        threshold: epsilon.cloned(),
        witness: format!("I={}", subset_string(arg as u64, n)),
        enumerated: (1u64 << n) - 1,
        notes: vec![("size".into(), set.len().to_string())],
    })
}

/// Lexicographic k-subsets of `0..n`.
pub(crate) fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut current: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = current.clone()?;
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                current = None;
                break;
            }
            i -= 1;
            if next[i] < n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                current = Some(next);
                break;
            }
        }
        Some(out)
    })
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        0
    } else {
        binomial(n as u128, k as u128)
    }
}

/// Distance of every k-coordinate restriction from uniform.
pub fn check_kwise(set: &SampleMultiset, k: usize, norm: Norm, epsilon: Option<&Rational>) -> Result<VerificationReport> {
    check_kwise_with_budget(set, k, norm, epsilon, DEFAULT_BUDGET)
}

pub fn check_kwise_with_budget(
    set: &SampleMultiset,
    k: usize,
    norm: Norm,
    epsilon: Option<&Rational>,
    budget: u64,
) -> Result<VerificationReport> {
    require_binary(set)?;
    let n = set.word_length();
    if k == 0 || k > n || k > 20 {
        return Err(Error::InvalidParameter(format!("k = {k} must be in 1..=min(n, 20) with n = {n}")));
    }
    let subsets = binom(n, k);
    guard("k-wise check (C(n,k) 2^k patterns)", subsets << k, budget)?;
    let m = set.len() as u64;
    let cells = 1usize << k;
    let scale = cells as u64;
    let columns: Vec<Vec<u8>> = (0..n)
        .map(|j| set.words().map(|w| w[j] as u8).collect())
        .collect();
    let mut counts = vec![0u64; cells];
    let mut worst_cell = (0u64, String::new());
    let mut worst_l1 = (0u64, String::new());
    let mut enumerated = 0u64;
    for subset in combinations(n, k) {
        counts.iter_mut().for_each(|c| *c = 0);
        for row in 0..m as usize {
            let idx = subset.iter().fold(0usize, |acc, &j| (acc << 1) | columns[j][row] as usize);
            counts[idx] += 1;
        }
        let mut l1 = 0u64;
        for (sigma, &c) in counts.iter().enumerate() {
            let dev = (c * scale).abs_diff(m);
            l1 += dev;
            if dev > worst_cell.0 || (worst_cell.1.is_empty() && sigma == 0) {
                worst_cell = (dev, format!("I={} sigma={sigma:0k$b}", tuple_string(&subset)));
            }
        }
        if l1 > worst_l1.0 || worst_l1.1.is_empty() {
            worst_l1 = (l1, format!("I={}", tuple_string(&subset)));
        }
        enumerated += 1;
    }
    let linf = ratio(worst_cell.0, m * scale);
    let l1 = ratio(worst_l1.0, m * scale);
    let mult = ratio(worst_cell.0, m);
    let (statistic, witness) = match norm {
        Norm::Linf => (linf.clone(), worst_cell.1.clone()),
        Norm::L1 => (l1.clone(), worst_l1.1.clone()),
        Norm::Multiplicative => (mult, worst_cell.1.clone()),
    };
    let passed = epsilon.map_or(true, |e| &statistic <= e);
    let cross_ok = l1 <= &linf * Rational::from_integer(BigInt::from(scale));
    Ok(VerificationReport {
        property: format!("{k}-wise {norm}"),
        passed,
        statistic,
        threshold: epsilon.cloned(),
        witness,
        enumerated,
        notes: vec![],
    }
    .note("size", m)
    .note("linf", rational_string(&linf))
    .note("l1", rational_string(&l1))
    .note("l1_le_2^k_linf", cross_ok))
}

fn tuple_string(subset: &[usize]) -> String {
    let items: Vec<String> = subset.iter().map(|i| (i + 1).to_string()).collect();
    format!("({})", items.join(","))
}

/// Symbol balance of every nonzero codeword; also reports the minimum weight.
pub fn check_code_balance(code: &LinearCode, epsilon: &Rational) -> Result<VerificationReport> {
    check_code_balance_with_budget(code, epsilon, DEFAULT_BUDGET)
}

pub fn check_code_balance_with_budget(code: &LinearCode, epsilon: &Rational, budget: u64) -> Result<VerificationReport> {
    let q = code.q();
    let k = code.dimension();
    let m = code.block_length() as u64;
    if m == 0 {
        return Err(Error::InvalidParameter("code has no rows".into()));
    }
    let messages = (q as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    guard("code balance check (q^k messages)", messages.saturating_mul(m as u128), budget)?;
    let mut message = vec![0u32; k];
    let mut counts = vec![0u64; q as usize];
    let mut worst = (0u64, String::new());
    let mut min_weight = u64::MAX;
    let mut enumerated = 0u64;
    for _ in 1..messages {
        // Increment the message as a base-q counter.
        for digit in message.iter_mut() {
            *digit += 1;
            if (*digit as u64) < q {
                break;
            }
            *digit = 0;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for s in code.encode(&message)? {
            counts[s as usize] += 1;
        }
        min_weight = min_weight.min(m - counts[0]);
        for (xi, &c) in counts.iter().enumerate() {
            let dev = (c * q).abs_diff(m);
            if dev > worst.0 || worst.1.is_empty() {
                worst = (dev, format!("u={message:?} symbol={xi} count={c}"));
            }
        }
        enumerated += 1;
    }
    let statistic = ratio(worst.0, m);
    let passed = &statistic <= epsilon;
    // Balance forces wt(w) >= (1 - (1+eps)/q) m.
    let weight_bound =
        (Rational::one() - (Rational::one() + epsilon) / Rational::from_integer(BigInt::from(q))) * ratio(m, 1u64);
    let weight_ok = Rational::from_integer(BigInt::from(min_weight)) >= weight_bound;
    Ok(VerificationReport {
        property: format!("code balance q={q} k={k}"),
        passed,
        statistic,
        threshold: Some(epsilon.clone()),
        witness: worst.1,
        enumerated,
        notes: vec![],
    }
    .note("block_length", m)
    .note("min_weight", min_weight)
    .note("weight_bound", rational_string(&weight_bound))
    .note("weight_bound_holds", weight_ok))
}

/// Minimum over k-tuples of coordinates of the fraction of family members
/// that are injective on the tuple.
pub fn check_phf_density(
    family: &SampleMultiset,
    k: usize,
    epsilon: Option<&Rational>,
) -> Result<VerificationReport> {
    check_phf_density_with_budget(family, k, epsilon, DEFAULT_BUDGET)
}

pub fn check_phf_density_with_budget(
    family: &SampleMultiset,
    k: usize,
    epsilon: Option<&Rational>,
    budget: u64,
) -> Result<VerificationReport> {
    if family.is_empty() {
        return Err(Error::InvalidParameter("family is empty".into()));
    }
    let n = family.word_length();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in 1..=n with n = {n}")));
    }
    let h = family.len() as u64;
    guard("PHF density check (C(n,k) |H|)", binom(n, k).saturating_mul(h as u128), budget)?;
    let mut worst = (u64::MAX, String::new());
    let mut enumerated = 0u64;
    let mut seen: Vec<u32> = Vec::with_capacity(k);
    for subset in combinations(n, k) {
        let good = family
            .words()
            .filter(|w| {
                seen.clear();
                subset.iter().all(|&i| {
                    let v = w[i];
                    if seen.contains(&v) {
                        false
                    } else {
                        seen.push(v);
                        true
                    }
                })
            })
            .count() as u64;
        if good < worst.0 {
            worst = (good, format!("I={} distinct={good}/{h}", tuple_string(&subset)));
        }
        enumerated += 1;
    }
    let statistic = ratio(worst.0, h);
    let threshold = epsilon.map(|e| Rational::one() - e);
    let passed = threshold.as_ref().map_or(true, |t| &statistic >= t);
    let collision = pair_collision_frequency(family);
    Ok(VerificationReport {
        property: format!("{k}-perfect hash density"),
        passed,
        statistic,
        threshold,
        witness: worst.1,
        enumerated,
        notes: vec![],
    }
    .note("size", h)
    .note("max_pair_collision", collision.map_or("-".to_string(), |c| rational_string(&c))))
}

/// `max_{i<j} Pr[s_i = s_j]` over the family; `None` when `n < 2`.
pub fn pair_collision_frequency(family: &SampleMultiset) -> Option<Rational> {
    let n = family.word_length();
    if n < 2 || family.is_empty() {
        return None;
    }
    let mut worst = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            let c = family.words().filter(|w| w[i] == w[j]).count() as u64;
            worst = worst.max(c);
        }
    }
    Some(ratio(worst, family.len() as u64))
}

/// Per-step monotonicity within the declared slack, a final potential below
/// 1, and, when hit lists were recorded, an independent recomputation of
/// every potential from the counters and multipliers.
pub fn check_trace(trace: &PotentialTrace) -> VerificationReport {
    // Relative allowance for the floating sum `prev + slack` itself.
    let tolerance = |x: f64| x * (1.0 + 8.0 * f64::EPSILON);
    let mut prev = trace.initial.hi();
    let mut worst_increase = f64::NEG_INFINITY;
    let mut worst_step = 0u64;
    let mut failure: Option<String> = None;
    for step in &trace.steps {
        let now = step.potential.hi();
        let increase = now - prev;
        if increase > worst_increase {
            worst_increase = increase;
            worst_step = step.index;
        }
        if failure.is_none() && now > tolerance(prev + trace.slack) {
            failure = Some(format!("step {} exceeds previous potential plus slack", step.index));
        }
        prev = now;
    }
    let final_hi = trace.final_potential().hi();
    if failure.is_none() && !trace.steps.is_empty() && final_hi >= 1.0 {
        failure = Some(format!("final potential {final_hi} is not below 1"));
    }

    let mut max_recompute_gap = 0.0f64;
    if let (Some(hits), None) = (&trace.hits, &failure) {
        if hits.len() != trace.steps.len() {
            failure = Some("hit lists and steps differ in length".into());
        } else {
            let n = trace.n_constraints();
            let weight = trace.output_size as f64;
            let mut counters = vec![0u64; n];
            let terms: Vec<(f64, f64, f64)> = trace
                .class_of
                .iter()
                .map(|&c| {
                    let class = &trace.classes[c as usize];
                    (class.divergence.mid(), class.ln_gamma.mid(), class.ln_alpha.mid())
                })
                .collect();
            for (j, (step, list)) in trace.steps.iter().zip(hits).enumerate() {
                let mut last: Option<u32> = None;
                for &i in list {
                    if (i as usize) >= n || last.is_some_and(|l| l >= i) {
                        failure = Some(format!("step {}: malformed hit list", step.index));
                        break;
                    }
                    last = Some(i);
                    counters[i as usize] += 1;
                }
                if failure.is_some() {
                    break;
                }
                let steps_so_far = (j + 1) as f64;
                let recomputed: f64 = terms
                    .iter()
                    .zip(&counters)
                    .map(|(&(d, lg, la), &z)| (-d * weight + steps_so_far * lg + z as f64 * la).exp())
                    .sum();
                let gap = (recomputed - step.potential.mid()).abs();
                max_recompute_gap = max_recompute_gap.max(gap);
                let allowed = step.potential.width() + 1e-9 * recomputed.abs().max(1.0);
                if gap > allowed {
                    failure = Some(format!(
                        "step {}: recomputed potential {recomputed} disagrees with recorded {}",
                        step.index, step.potential
                    ));
                    break;
                }
            }
            if failure.is_none() && !trace.counters.is_empty() && counters != trace.counters {
                failure = Some("recomputed counters differ from the recorded final counters".into());
            }
        }
    }

    let statistic = if trace.steps.is_empty() {
        Rational::zero()
    } else {
        Rational::from_float(worst_increase).unwrap_or_else(Rational::zero)
    };
    VerificationReport {
        property: "potential trace".into(),
        passed: failure.is_none(),
        statistic,
        threshold: Rational::from_float(trace.slack),
        witness: failure.unwrap_or_else(|| format!("largest increase at step {worst_step}")),
        enumerated: trace.steps.len() as u64,
        notes: vec![],
    }
    .note("initial_potential", trace.initial.hi())
    .note("final_potential", final_hi)
    .note("recomputed", trace.hits.is_some())
    .note("max_recompute_gap", max_recompute_gap)
}

/// Constant-free size expressions for comparison; logarithms are base 2.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub n: u64,
    pub k: u32,
    pub epsilon: f64,
    pub norm: Norm,
    /// `log n / (2^k eps^2 log(1/(2^{k+1} eps)))`.
    pub lb_linf: f64,
    /// `k log n / (eps^2 log(1/eps))`.
    pub lb_l1: f64,
    /// Rows `(label, L-inf, L-inf multiplicative, L1)`.
    pub table: Vec<(String, f64, f64, f64)>,
    pub achieved: Option<u64>,
    pub warnings: Vec<String>,
}

pub fn lower_bound_report(n: u64, k: u32, epsilon: f64, norm: Norm) -> BoundsReport {
    let log_n = (n as f64).log2();
    let two_k = 2f64.powi(k as i32);
    let e2 = epsilon * epsilon;
    let e3 = e2 * epsilon;
    let lb_linf = log_n / (two_k * e2 * (1.0 / (2.0 * two_k * epsilon)).log2());
    let lb_l1 = k as f64 * log_n / (e2 * (1.0 / epsilon).log2());
    let table = vec![
        ("poly-time".to_string(), log_n / (two_k * e3), two_k * two_k * log_n / e3, (two_k + log_n) / e3),
        ("n^O(k)-time".to_string(), log_n / (two_k * e2), two_k * log_n / e2, (two_k + log_n) / e2),
        ("lower bound".to_string(), log_n / (two_k * e2), two_k * log_n / e2, log_n / e2),
    ];
    let mut warnings = Vec::new();
    if !(epsilon < 1.0 / (2.0 * two_k)) {
        warnings.push(format!("L-inf lower bound assumes eps < 1/2^(k+1) = {}", 1.0 / (2.0 * two_k)));
    }
    if !((k as f64) < n as f64 / 2.0) {
        warnings.push("L-inf lower bound assumes k < n/2".into());
    }
    warnings.push("L-inf lower bound also assumes 1/poly(n) <= eps (polynomial unspecified)".into());
    let l1_floor = (n as f64).powf(-(k as f64) / 5.0);
    if !(epsilon > l1_floor) {
        warnings.push(format!("L1 lower bound assumes eps > n^(-k/5) = {l1_floor:.3e}"));
    }
    BoundsReport {
        n,
        k,
        epsilon,
        norm,
        lb_linf,
        lb_l1,
        table,
        achieved: None,
        warnings,
    }
}

impl BoundsReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "n={} k={} eps={} norm={} (up to unspecified constants; log base 2)",
            self.n, self.k, self.epsilon, self.norm
        );
        let _ = writeln!(out, "{:<12} {:>14} {:>14} {:>14}", "row", "L-inf", "L-inf*", "L1");
        for (label, a, b, c) in &self.table {
            let _ = writeln!(out, "{label:<12} {a:>14.4e} {b:>14.4e} {c:>14.4e}");
        }
        let _ = writeln!(out, "lower bound (L-inf): {:.4e}", self.lb_linf);
        let _ = writeln!(out, "lower bound (L1):    {:.4e}", self.lb_l1);
        if let Some(a) = self.achieved {
            let _ = writeln!(out, "achieved size:       {a}");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Field;

    fn set(words: &[&str]) -> SampleMultiset {
        let n = words[0].len();
        SampleMultiset::from_words(
            Alphabet::Binary,
            n,
            words.iter().map(|w| w.bytes().map(|b| (b - b'0') as u32).collect::<Vec<_>>()),
        )
        .unwrap()
    }

    fn r(s: &str) -> Rational {
        crate::numerics::parse_rational(s).unwrap()
    }

    #[test]
    fn combinations_lex() {
        let all: Vec<Vec<usize>> = combinations(4, 2).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 1]);
        assert_eq!(all[5], vec![2, 3]);
        assert_eq!(combinations(3, 3).count(), 1);
        assert_eq!(combinations(2, 3).count(), 0);
    }

    #[test]
    fn bias_of_cube_is_zero() {
        let rep = check_bias(&SampleMultiset::full_cube(5), Some(&r("0"))).unwrap();
        assert!(rep.passed);
        assert!(rep.statistic.is_zero());
        assert_eq!(rep.enumerated, 31);
    }

    #[test]
    fn bias_of_repetition_pair() {
        let rep = check_bias(&set(&["00", "11"]), None).unwrap();
        assert_eq!(rep.statistic, r("1"));
        assert_eq!(rep.witness, "I={1,2}");
    }

    #[test]
    fn bias_of_even_weight_code() {
        let s = set(&["000", "011", "101", "110"]);
        let rep = check_bias(&s, None).unwrap();
        assert_eq!(rep.statistic, r("1"));
        assert_eq!(rep.witness, "I={1,2,3}");
        // Every proper parity is unbiased.
        let two = check_kwise(&s, 2, Norm::Linf, None).unwrap();
        assert!(two.statistic.is_zero());
    }

    #[test]
    fn kwise_of_cube() {
        let cube = SampleMultiset::full_cube(5);
        for k in 1..=5 {
            for norm in [Norm::Linf, Norm::L1, Norm::Multiplicative] {
                assert!(check_kwise(&cube, k, norm, None).unwrap().statistic.is_zero());
            }
        }
    }

    #[test]
    fn kwise_of_constant_pair() {
        let s = set(&["0000", "1111"]);
        let linf = check_kwise(&s, 2, Norm::Linf, Some(&r("0.2"))).unwrap();
        assert_eq!(linf.statistic, r("1/4"));
        assert!(!linf.passed);
        assert!(linf.witness.starts_with("I=(1,2)"));
        let l1 = check_kwise(&s, 2, Norm::L1, None).unwrap();
        assert_eq!(l1.statistic, r("1"));
        assert_eq!(l1.note_value("l1_le_2^k_linf"), Some("true"));
        let mult = check_kwise(&s, 2, Norm::Multiplicative, None).unwrap();
        assert_eq!(mult.statistic, r("1"));
    }

    #[test]
    fn kwise_budget_guard() {
        let s = set(&["0000", "1111"]);
        assert!(matches!(
            check_kwise_with_budget(&s, 2, Norm::Linf, None, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn code_balance_examples() {
        let f2 = Field::new(2, 1).unwrap();
        let k = 3;
        let rows = (0..8u32).map(|x| (0..k).map(|i| (x >> i) & 1).collect()).collect();
        let hadamard = LinearCode::new(f2, k, rows).unwrap();
        let rep = check_code_balance(&hadamard, &r("0")).unwrap();
        assert!(rep.passed);
        assert!(rep.statistic.is_zero());
        assert_eq!(rep.enumerated, 7);
        assert_eq!(rep.note_value("min_weight"), Some("4"));

        let f3 = Field::new(3, 1).unwrap();
        let bad = LinearCode::new(f3, 1, vec![vec![1], vec![1], vec![2]]).unwrap();
        let rep = check_code_balance(&bad, &r("1/2")).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.statistic, r("1"));
        assert!(rep.witness.contains("symbol=0 count=0"), "{}", rep.witness);
    }

    #[test]
    fn phf_density_examples() {
        let one = SampleMultiset::from_words(Alphabet::Qary(5), 4, [[0, 1, 2, 3]]).unwrap();
        assert_eq!(check_phf_density(&one, 3, None).unwrap().statistic, r("1"));
        let constant = SampleMultiset::from_words(Alphabet::Qary(5), 4, [[2, 2, 2, 2]]).unwrap();
        assert!(check_phf_density(&constant, 2, None).unwrap().statistic.is_zero());
        // Mixed family on n=5: pair (1,2) collides in two of four words.
        let mixed = SampleMultiset::from_words(
            Alphabet::Qary(3),
            5,
            [[0, 0, 1, 2, 0], [1, 1, 0, 2, 1], [0, 1, 2, 0, 1], [2, 1, 0, 1, 2]],
        )
        .unwrap();
        let rep = check_phf_density(&mixed, 2, Some(&r("1/2"))).unwrap();
        let mut brute = Rational::one();
        for i in 0..5 {
            for j in i + 1..5 {
                let good = mixed.words().filter(|w| w[i] != w[j]).count() as u64;
                brute = brute.min(ratio(good, 4u64));
            }
        }
        assert_eq!(rep.statistic, brute);
        assert_eq!(rep.statistic, r("1/4"));
        assert!(!rep.passed);
    }

    #[test]
    fn bounds_formulas() {
        let base = lower_bound_report(1 << 20, 3, 0.01, Norm::L1);
        let doubled = lower_bound_report(1 << 20, 6, 0.01, Norm::L1);
        assert!((doubled.lb_l1 / base.lb_l1 - 2.0).abs() < 1e-12);
        let k0 = lower_bound_report(1 << 10, 0, 0.05, Norm::Linf);
        let expected = 10.0 / (0.05f64.powi(2) * (1.0 / (2.0 * 0.05f64)).log2());
        assert!((k0.lb_linf - expected).abs() < 1e-9 * expected);
    }
}
