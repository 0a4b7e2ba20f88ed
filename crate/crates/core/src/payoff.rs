//! Payoff aggregation.
//!
//! Mean-payoff, limsup and parity aggregation of integer stage-payoff
//! streams, with exact rational evaluation on ultimately periodic sequences
//! (lassos) and a documented finite-prefix surrogate for everything else.
//! Exactness matters: payoff-equality checks elsewhere compare rationals for
//! equality, never within a tolerance.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use num::rational::Rational64;
use num::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// The built-in payoff aggregation functions. All three are shift-invariant
/// and submixing, which [`check_shift_invariance_on`] and
/// [`check_submixing_on`] verify executably.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggregatorKind {
    MeanPayoff,
    Limsup,
    Parity,
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregatorKind::MeanPayoff => "mean-payoff",
            AggregatorKind::Limsup => "limsup",
            AggregatorKind::Parity => "parity",
        })
    }
}

impl FromStr for AggregatorKind {
    type Err = PayoffError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean-payoff" => Ok(AggregatorKind::MeanPayoff),
            "limsup" => Ok(AggregatorKind::Limsup),
            "parity" => Ok(AggregatorKind::Parity),
            other => Err(PayoffError::UnknownAggregator(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayoffError {
    #[error("unknown aggregator `{0}`")]
    UnknownAggregator(String),
    #[error("lasso cycle must be nonempty")]
    EmptyCycle,
    #[error("parity aggregation requires non-negative entries, found {0}")]
    NegativePriority(i64),
    #[error("prefix aggregation needs at least one entry")]
    EmptyPrefix,
    #[error("prefix length {0} exceeds sequence length {1}")]
    PrefixTooLong(usize, usize),
    #[error("shuffle factors have lengths {0} + {1}, target has length {2}")]
    LengthMismatch(usize, usize, usize),
    #[error("partition pattern must keep taking from both factors")]
    DegeneratePartition,
    #[error("payoff sum overflows 64-bit arithmetic")]
    Overflow,
}

/// Finite representation `prefix . cycle^omega` of an ultimately periodic
/// integer sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LassoSequence {
    prefix: Vec<i64>,
    cycle: Vec<i64>,
}

impl LassoSequence {
    pub fn new(prefix: Vec<i64>, cycle: Vec<i64>) -> Result<Self, PayoffError> {
        if cycle.is_empty() {
            return Err(PayoffError::EmptyCycle);
        }
        Ok(LassoSequence { prefix, cycle })
    }

    pub fn cycle_only(cycle: Vec<i64>) -> Result<Self, PayoffError> {
        Self::new(Vec::new(), cycle)
    }

    pub fn prefix(&self) -> &[i64] {
        &self.prefix
    }

    pub fn cycle(&self) -> &[i64] {
        &self.cycle
    }

    /// Entry at 0-based position `i` of the denoted infinite sequence.
    pub fn at(&self, i: usize) -> i64 {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.cycle[(i - self.prefix.len()) % self.cycle.len()]
        }
    }

    /// The first `n` entries, materialised.
    pub fn take(&self, n: usize) -> Vec<i64> {
        (0..n).map(|i| self.at(i)).collect()
    }

    /// Same sequence with `head` prepended.
    pub fn with_head(&self, head: i64) -> LassoSequence {
        let mut prefix = Vec::with_capacity(self.prefix.len() + 1);
        prefix.push(head);
        prefix.extend_from_slice(&self.prefix);
        LassoSequence { prefix, cycle: self.cycle.clone() }
    }
}

fn checked_sum(entries: &[i64]) -> Result<i64, PayoffError> {
    let mut acc: i64 = 0;
    for e in entries {
        acc = acc.checked_add(*e).ok_or(PayoffError::Overflow)?;
    }
    Ok(acc)
}

/// Exact value of the aggregation function on `prefix . cycle^omega`:
/// mean-payoff is the arithmetic mean of the cycle (the prefix is
/// shift-invariantly irrelevant), limsup is the cycle maximum, parity is 1
/// when the least entry of the cycle is even and 0 otherwise.
pub fn aggregate_lasso(kind: AggregatorKind, s: &LassoSequence) -> Result<Rational64, PayoffError> {
    match kind {
        AggregatorKind::MeanPayoff => {
            let sum = checked_sum(s.cycle())?;
            Ok(Rational64::new(sum, s.cycle().len() as i64))
        }
        AggregatorKind::Limsup => Ok(Rational64::from_integer(*s.cycle().iter().max().unwrap())),
        AggregatorKind::Parity => {
            if let Some(neg) = s.prefix.iter().chain(&s.cycle).find(|p| **p < 0) {
                return Err(PayoffError::NegativePriority(*neg));
            }
            let least = *s.cycle().iter().min().unwrap();
            Ok(if least % 2 == 0 { Rational64::one() } else { Rational64::zero() })
        }
    }
}

/// Finite-horizon surrogate of the aggregation functions on the first `t`
/// entries of `s`. Mean-payoff is the running mean; limsup and parity use
/// the last `ceil(t/2)` entries as the stand-in for the infinite tail. The
/// result approximates the true limit and is never used in exact
/// comparisons; for a mean-payoff lasso tail the error is bounded by
/// `2 * prefix_len * max_abs / t`.
pub fn aggregate_prefix(kind: AggregatorKind, s: &[i64], t: usize) -> Result<Rational64, PayoffError> {
    if t == 0 || s.is_empty() {
        return Err(PayoffError::EmptyPrefix);
    }
    if t > s.len() {
        return Err(PayoffError::PrefixTooLong(t, s.len()));
    }
    let used = &s[..t];
    match kind {
        AggregatorKind::MeanPayoff => {
            let sum = checked_sum(used)?;
            Ok(Rational64::new(sum, t as i64))
        }
        AggregatorKind::Limsup => {
            let window = &used[t - t.div_ceil(2)..];
            Ok(Rational64::from_integer(*window.iter().max().unwrap()))
        }
        AggregatorKind::Parity => {
            if let Some(neg) = used.iter().find(|p| **p < 0) {
                return Err(PayoffError::NegativePriority(*neg));
            }
            let window = &used[t - t.div_ceil(2)..];
            let least = *window.iter().min().unwrap();
            Ok(if least % 2 == 0 { Rational64::one() } else { Rational64::zero() })
        }
    }
}

/// A stage-payoff stream extracted from a play: either an exact lasso or a
/// plain finite prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PayoffStream {
    Lasso(LassoSequence),
    Finite(Vec<i64>),
}

/// An aggregation value tagged with whether it is the true limit or a
/// finite-horizon approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaggedPayoff {
    pub value: Rational64,
    pub exact: bool,
}

impl TaggedPayoff {
    pub fn exact(value: Rational64) -> Self {
        TaggedPayoff { value, exact: true }
    }

    pub fn approximate(value: Rational64) -> Self {
        TaggedPayoff { value, exact: false }
    }
}

impl fmt::Display for TaggedPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} {}",
            self.value.numer(),
            self.value.denom(),
            if self.exact { "exact" } else { "approx" }
        )
    }
}

/// Aggregates a payoff stream with the given aggregator, exact on lassos and
/// tagged approximate otherwise.
pub fn aggregate_stream(kind: AggregatorKind, stream: &PayoffStream) -> Result<TaggedPayoff, PayoffError> {
    match stream {
        PayoffStream::Lasso(lasso) => Ok(TaggedPayoff::exact(aggregate_lasso(kind, lasso)?)),
        PayoffStream::Finite(s) => Ok(TaggedPayoff::approximate(aggregate_prefix(kind, s, s.len())?)),
    }
}

/// Utility of a play of `g`, dispatching on the graph's aggregator.
pub fn utility_of_play(
    g: &crate::game::GameGraph,
    stream: &PayoffStream,
) -> Result<TaggedPayoff, PayoffError> {
    aggregate_stream(g.aggregator(), stream)
}

/// Decides whether `alpha` is an order-preserving interleaving of `beta`
/// and `gamma`, by dynamic programming over prefix pairs.
pub fn is_shuffle(alpha: &[i64], beta: &[i64], gamma: &[i64]) -> Result<bool, PayoffError> {
    if alpha.len() != beta.len() + gamma.len() {
        return Err(PayoffError::LengthMismatch(beta.len(), gamma.len(), alpha.len()));
    }
    // reachable[j] alongside a row sweep over i: alpha[..i+j] splits into
    // beta[..i] and gamma[..j].
    let mut reachable = vec![false; gamma.len() + 1];
    reachable[0] = true;
    for j in 1..=gamma.len() {
        reachable[j] = reachable[j - 1] && gamma[j - 1] == alpha[j - 1];
    }
    for i in 1..=beta.len() {
        reachable[0] = reachable[0] && beta[i - 1] == alpha[i - 1];
        for j in 1..=gamma.len() {
            let from_beta = reachable[j] && beta[i - 1] == alpha[i + j - 1];
            let from_gamma = reachable[j - 1] && gamma[j - 1] == alpha[i + j - 1];
            reachable[j] = from_beta || from_gamma;
        }
    }
    Ok(reachable[gamma.len()])
}

/// An ultimately periodic split of the positions of an infinite sequence
/// into two infinite sets: `true` takes the next entry from the first
/// factor, `false` from the second. The cycle must contain both.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionPattern {
    prefix: Vec<bool>,
    cycle: Vec<bool>,
}

impl PartitionPattern {
    pub fn new(prefix: Vec<bool>, cycle: Vec<bool>) -> Result<Self, PayoffError> {
        if !cycle.contains(&true) || !cycle.contains(&false) {
            return Err(PayoffError::DegeneratePartition);
        }
        Ok(PartitionPattern { prefix, cycle })
    }

    pub fn alternating() -> Self {
        PartitionPattern { prefix: Vec::new(), cycle: vec![true, false] }
    }

    fn at(&self, k: usize) -> bool {
        if k < self.prefix.len() {
            self.prefix[k]
        } else {
            self.cycle[(k - self.prefix.len()) % self.cycle.len()]
        }
    }
}

/// Position descriptor inside an ultimately periodic object: either still in
/// the prefix (absolute index) or at an offset into the cycle.
fn phase(prefix_len: usize, cycle_len: usize, i: usize) -> (bool, usize) {
    if i < prefix_len {
        (false, i)
    } else {
        (true, (i - prefix_len) % cycle_len)
    }
}

/// The shuffle of two lassos along an ultimately periodic partition is again
/// a lasso; this computes it exactly by stepping the interleaving until the
/// joint phase of (pattern, beta, gamma) repeats.
pub fn shuffle_lassos(
    beta: &LassoSequence,
    gamma: &LassoSequence,
    pattern: &PartitionPattern,
) -> Result<LassoSequence, PayoffError> {
    let mut emitted: Vec<i64> = Vec::new();
    let mut seen: HashMap<((bool, usize), (bool, usize), (bool, usize)), usize> = HashMap::new();
    let mut bcount = 0usize;
    let mut gcount = 0usize;
    let mut k = 0usize;
    loop {
        let state = (
            phase(pattern.prefix.len(), pattern.cycle.len(), k),
            phase(beta.prefix().len(), beta.cycle().len(), bcount),
            phase(gamma.prefix().len(), gamma.cycle().len(), gcount),
        );
        // A repeat is only a true period once all three components have left
        // their prefixes.
        if state.0 .0 && state.1 .0 && state.2 .0 {
            if let Some(&first) = seen.get(&state) {
                let cycle = emitted.split_off(first);
                return LassoSequence::new(emitted, cycle);
            }
            seen.insert(state, k);
        }
        if pattern.at(k) {
            emitted.push(beta.at(bcount));
            bcount += 1;
        } else {
            emitted.push(gamma.at(gcount));
            gcount += 1;
        }
        k += 1;
    }
}

/// Verifies the submixing sandwich `min{u(beta),u(gamma)} <= u(alpha) <=
/// max{u(beta),u(gamma)}` on the shuffle induced by `pattern`, exactly.
pub fn check_submixing_on(
    kind: AggregatorKind,
    beta: &LassoSequence,
    gamma: &LassoSequence,
    pattern: &PartitionPattern,
) -> Result<bool, PayoffError> {
    let alpha = shuffle_lassos(beta, gamma, pattern)?;
    let ub = aggregate_lasso(kind, beta)?;
    let ug = aggregate_lasso(kind, gamma)?;
    let ua = aggregate_lasso(kind, &alpha)?;
    Ok(ub.min(ug) <= ua && ua <= ub.max(ug))
}

/// Verifies `u(head . s) == u(s)`, exactly.
pub fn check_shift_invariance_on(
    kind: AggregatorKind,
    s: &LassoSequence,
    head: i64,
) -> Result<bool, PayoffError> {
    Ok(aggregate_lasso(kind, &s.with_head(head))? == aggregate_lasso(kind, s)?)
}

type AggregatorFn = Box<dyn Fn(&LassoSequence) -> Result<Rational64, PayoffError> + Send + Sync>;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("aggregator `{0}` is already registered")]
    Duplicate(String),
    #[error("aggregator `{name}` failed the shift-invariance spot check on case {case}")]
    NotShiftInvariant { name: String, case: usize },
    #[error("aggregator `{name}` failed the submixing spot check on case {case}")]
    NotSubmixing { name: String, case: usize },
    #[error("aggregator `{name}` errored during the spot check: {source}")]
    Errored {
        name: String,
        #[source]
        source: PayoffError,
    },
}

/// Registry of payoff aggregation functions. The built-ins are always
/// present; additional aggregators must pass a randomized spot check of
/// shift-invariance and the submixing sandwich before they are admitted.
pub struct AggregatorRegistry {
    custom: HashMap<String, AggregatorFn>,
    spot_cases: usize,
}

impl Default for AggregatorRegistry {
    fn default() -> Self {
        AggregatorRegistry { custom: HashMap::new(), spot_cases: 2000 }
    }
}

impl AggregatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_spot_cases(spot_cases: usize) -> Self {
        AggregatorRegistry { custom: HashMap::new(), spot_cases }
    }

    pub fn evaluate(&self, name: &str, s: &LassoSequence) -> Result<Rational64, PayoffError> {
        if let Ok(kind) = name.parse::<AggregatorKind>() {
            return aggregate_lasso(kind, s);
        }
        match self.custom.get(name) {
            Some(f) => f(s),
            None => Err(PayoffError::UnknownAggregator(name.to_string())),
        }
    }

    /// Registers a custom aggregator after spot-checking shift invariance
    /// and submixing on seeded random lassos; a failing aggregator is
    /// refused and not stored.
    pub fn register(
        &mut self,
        name: &str,
        f: AggregatorFn,
    ) -> Result<(), RegistrationError> {
        if self.custom.contains_key(name) || name.parse::<AggregatorKind>().is_ok() {
            return Err(RegistrationError::Duplicate(name.to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5baa_a665);
        for case in 0..self.spot_cases {
            let beta = random_lasso(&mut rng);
            let gamma = random_lasso(&mut rng);
            let head = rng.gen_range(0..=5i64);
            let err = |source| RegistrationError::Errored { name: name.to_string(), source };
            let ub = f(&beta).map_err(err)?;
            let shifted = f(&beta.with_head(head))
                .map_err(|source| RegistrationError::Errored { name: name.to_string(), source })?;
            if shifted != ub {
                return Err(RegistrationError::NotShiftInvariant { name: name.to_string(), case });
            }
            let pattern = random_pattern(&mut rng);
            let alpha = shuffle_lassos(&beta, &gamma, &pattern)
                .map_err(|source| RegistrationError::Errored { name: name.to_string(), source })?;
            let ug = f(&gamma)
                .map_err(|source| RegistrationError::Errored { name: name.to_string(), source })?;
            let ua = f(&alpha)
                .map_err(|source| RegistrationError::Errored { name: name.to_string(), source })?;
            if !(ub.min(ug) <= ua && ua <= ub.max(ug)) {
                return Err(RegistrationError::NotSubmixing { name: name.to_string(), case });
            }
        }
        self.custom.insert(name.to_string(), f);
        Ok(())
    }
}

/// Random lasso with non-negative small entries (valid input for every
/// built-in, parity included).
pub fn random_lasso(rng: &mut ChaCha8Rng) -> LassoSequence {
    let plen = rng.gen_range(0..4);
    let clen = rng.gen_range(1..5);
    let prefix = (0..plen).map(|_| rng.gen_range(0..=5i64)).collect();
    let cycle = (0..clen).map(|_| rng.gen_range(0..=5i64)).collect();
    LassoSequence::new(prefix, cycle).unwrap()
}

/// Random ultimately periodic partition whose cycle draws from both factors.
pub fn random_pattern(rng: &mut ChaCha8Rng) -> PartitionPattern {
    let plen = rng.gen_range(0..4);
    let prefix = (0..plen).map(|_| rng.gen_bool(0.5)).collect();
    let clen = rng.gen_range(2..6);
    loop {
        let cycle: Vec<bool> = (0..clen).map(|_| rng.gen_bool(0.5)).collect();
        if cycle.contains(&true) && cycle.contains(&false) {
            return PartitionPattern::new(prefix, cycle).unwrap();
        }
    }
}

/// Error bound of the mean-payoff prefix surrogate on a lasso tail, used by
/// convergence tests: `2 * prefix_len * max_abs / t`.
pub fn mean_prefix_bound(lasso: &LassoSequence, t: usize) -> Rational64 {
    let max_abs = lasso.prefix.iter().chain(&lasso.cycle).map(|p| p.abs()).max().unwrap_or(0);
    // The cycle acts like a further prefix until t is a multiple of it.
    let eff = (lasso.prefix().len() + lasso.cycle().len()) as i64;
    Rational64::new(2 * eff * max_abs.max(1), t as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lasso(prefix: &[i64], cycle: &[i64]) -> LassoSequence {
        LassoSequence::new(prefix.to_vec(), cycle.to_vec()).unwrap()
    }

    #[test]
    fn lasso_values() {
        assert_eq!(
            aggregate_lasso(AggregatorKind::MeanPayoff, &lasso(&[5], &[1, 3])).unwrap(),
            Rational64::from_integer(2)
        );
        assert_eq!(
            aggregate_lasso(AggregatorKind::Limsup, &lasso(&[9], &[1, 2])).unwrap(),
            Rational64::from_integer(2)
        );
        assert_eq!(
            aggregate_lasso(AggregatorKind::Parity, &lasso(&[1], &[2, 3])).unwrap(),
            Rational64::one()
        );
    }

    #[test]
    fn parity_refuses_negative_entries() {
        assert_eq!(
            aggregate_lasso(AggregatorKind::Parity, &lasso(&[], &[-1])),
            Err(PayoffError::NegativePriority(-1))
        );
    }

    #[test]
    fn prefix_values() {
        assert_eq!(
            aggregate_prefix(AggregatorKind::MeanPayoff, &[1, 0, 1, 0], 4).unwrap(),
            Rational64::new(1, 2)
        );
        // Window is the last ceil(t/2) entries; agrees with the lasso value
        // of [9] . (1,2)^omega.
        let s = lasso(&[9], &[1, 2]).take(6);
        assert_eq!(s, vec![9, 1, 2, 1, 2, 1]);
        assert_eq!(
            aggregate_prefix(AggregatorKind::Limsup, &s, 6).unwrap(),
            aggregate_lasso(AggregatorKind::Limsup, &lasso(&[9], &[1, 2])).unwrap()
        );
        assert!(aggregate_prefix(AggregatorKind::MeanPayoff, &[], 0).is_err());
    }

    #[test]
    fn mean_prefix_converges_to_lasso() {
        let l = lasso(&[7, -2], &[1, 3, 5]);
        let exact = aggregate_lasso(AggregatorKind::MeanPayoff, &l).unwrap();
        for t in [10usize, 50, 200, 1000] {
            let s = l.take(t);
            let approx = aggregate_prefix(AggregatorKind::MeanPayoff, &s, t).unwrap();
            let diff = (approx - exact).abs();
            assert!(diff <= mean_prefix_bound(&l, t), "t={t}: diff {diff} too large");
        }
    }

    #[test]
    fn shuffle_examples() {
        assert!(is_shuffle(&[1, 0, 1, 0], &[1, 1], &[0, 0]).unwrap());
        assert!(is_shuffle(&[1, 1, 0], &[1, 0], &[1]).unwrap());
        assert!(!is_shuffle(&[0, 1], &[1], &[1]).unwrap());
        assert!(is_shuffle(&[1], &[1], &[1]).is_err());
    }

    #[test]
    fn submixing_examples() {
        let alternating = PartitionPattern::alternating();
        assert!(check_submixing_on(
            AggregatorKind::MeanPayoff,
            &lasso(&[], &[1]),
            &lasso(&[], &[0]),
            &alternating
        )
        .unwrap());
        assert!(check_submixing_on(
            AggregatorKind::Limsup,
            &lasso(&[], &[3]),
            &lasso(&[], &[1]),
            &alternating
        )
        .unwrap());
        // beta = 2^omega has parity 1, gamma = 1^omega has parity 0, the
        // alternating shuffle has least recurring priority 1, value 0.
        let alpha = shuffle_lassos(&lasso(&[], &[2]), &lasso(&[], &[1]), &alternating).unwrap();
        assert_eq!(aggregate_lasso(AggregatorKind::Parity, &alpha).unwrap(), Rational64::zero());
        assert!(check_submixing_on(
            AggregatorKind::Parity,
            &lasso(&[], &[2]),
            &lasso(&[], &[1]),
            &alternating
        )
        .unwrap());
    }

    #[test]
    fn shift_invariance_examples() {
        assert!(check_shift_invariance_on(AggregatorKind::MeanPayoff, &lasso(&[], &[1, 3]), 100).unwrap());
        assert!(check_shift_invariance_on(AggregatorKind::Limsup, &lasso(&[], &[1, 2]), 9).unwrap());
        assert!(check_shift_invariance_on(AggregatorKind::Parity, &lasso(&[], &[2, 3]), 1).unwrap());
    }

    #[test]
    fn shuffled_lasso_of_constants_alternates() {
        let alpha = shuffle_lassos(
            &lasso(&[], &[1]),
            &lasso(&[], &[0]),
            &PartitionPattern::alternating(),
        )
        .unwrap();
        assert_eq!(alpha.take(6), vec![1, 0, 1, 0, 1, 0]);
        assert_eq!(
            aggregate_lasso(AggregatorKind::MeanPayoff, &alpha).unwrap(),
            Rational64::new(1, 2)
        );
    }

    #[test]
    fn degenerate_partition_is_refused() {
        assert!(PartitionPattern::new(vec![], vec![true, true]).is_err());
    }

    #[test]
    fn registry_refuses_discounted_sum() {
        let mut reg = AggregatorRegistry::with_spot_cases(500);
        // Discounted sum is not shift-invariant.
        let result = reg.register(
            "discounted",
            Box::new(|s| {
                let mut acc = Rational64::zero();
                let mut w = Rational64::one();
                for i in 0..32 {
                    acc += w * Rational64::from_integer(s.at(i));
                    w *= Rational64::new(1, 2);
                }
                Ok(acc)
            }),
        );
        assert!(matches!(result, Err(RegistrationError::NotShiftInvariant { .. })));
    }

    #[test]
    fn registry_accepts_liminf() {
        let mut reg = AggregatorRegistry::with_spot_cases(500);
        reg.register(
            "liminf",
            Box::new(|s| Ok(Rational64::from_integer(*s.cycle().iter().min().unwrap()))),
        )
        .unwrap();
        assert_eq!(
            reg.evaluate("liminf", &lasso(&[9], &[1, 2])).unwrap(),
            Rational64::one()
        );
        // Built-ins resolve through the registry as well.
        assert_eq!(
            reg.evaluate("mean-payoff", &lasso(&[], &[1, 3])).unwrap(),
            Rational64::from_integer(2)
        );
    }

    #[test]
    fn rotation_and_unrolling_invariance() {
        let kinds = [AggregatorKind::MeanPayoff, AggregatorKind::Limsup, AggregatorKind::Parity];
        let cycle = vec![2, 0, 4, 2];
        for kind in kinds {
            let base = aggregate_lasso(kind, &lasso(&[], &cycle)).unwrap();
            for rot in 0..cycle.len() {
                let mut rotated = cycle.clone();
                rotated.rotate_left(rot);
                assert_eq!(aggregate_lasso(kind, &lasso(&[], &rotated)).unwrap(), base);
            }
            let mut doubled = cycle.clone();
            doubled.extend_from_slice(&cycle);
            assert_eq!(aggregate_lasso(kind, &lasso(&[], &doubled)).unwrap(), base);
        }
    }
}
