//! The transfer pipeline: given an instant-monitoring game with an ergodic
//! equilibrium profile and a delay space, build the delayed-monitoring
//! variant, wrap each strategy in the thread-stitching procedure, and verify
//! empirically that the payoff carries over exactly under a battery of
//! adversarial schedulers.
//!
//! Exactness under Nature's choices rests on two mechanisms. Runs driven by
//! a finite-state scheduler find a configuration lasso and are evaluated
//! exactly on their own. Runs driven by a seeded random scheduler cannot
//! repeat a configuration, so instead the harness checks that their play
//! stream (states, joint actions, payoffs) coincides period by period with
//! a fixed-scheduler reference run — under the delayed-monitoring
//! uniqueness assumption an undeviated profile must produce the same play
//! stream for every delay choice — and adopts the reference's exact value.
//! A stream mismatch is reported as a model violation, never papered over.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::frankenstein::{BaseStrategy, Frankenstein, FrankensteinRuntime};
use crate::game::transform::{lift_to_delayed, min_cycle_length, unravel_indexed, TransformError};
use crate::game::{DelaySpace, GameGraph, PlayerId, StateId, Violation};
use crate::monitoring::ObservedHistory;
use crate::payoff::{aggregate_prefix, Rational64, TaggedPayoff};
use crate::strategy::{enumerate_schedulers, PlayerStrategy, SchedulerSpec, StrategyProfile};

use super::{simulate, SimError, SimOptions, SimulationResult};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("transfer needs an instant-monitoring input game")]
    ExpectedInstant,
    #[error("input game fails validation ({0} violations, first: {1})")]
    Invalid(usize, Violation),
    #[error("delay space declares {0} players, the game has {1}")]
    PlayerMismatch(usize, usize),
    #[error("profile entry for player {0} is already a stitching wrapper")]
    AlreadyWrapped(PlayerId),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Stitcher(#[from] crate::frankenstein::FkError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug)]
pub struct TransferOptions {
    /// Unravelling modulus; defaults to one more than the maximal delay.
    pub modulus: Option<u32>,
    /// Upper bound on the number of exhaustively enumerated delay prefixes.
    pub exhaustive_budget: usize,
    /// Longest exhaustive prefix, in periods.
    pub exhaustive_horizon_cap: usize,
    pub random_schedulers: usize,
    /// Horizon of random-scheduler and reference runs.
    pub random_horizon: usize,
    /// Exhaustive runs stop at their lasso, but not before this many
    /// periods, so run-level statistics have something to chew on.
    pub min_run_periods: usize,
    pub seed: u64,
    /// Worker threads for the scheduler battery; 1 runs sequentially.
    /// Results are merged by index, so the output never depends on this.
    pub jobs: usize,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions {
            modulus: None,
            exhaustive_budget: 4096,
            exhaustive_horizon_cap: 6,
            random_schedulers: 20,
            random_horizon: 1000,
            min_run_periods: 64,
            seed: 0x00d1_a75e_ed00,
            jobs: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqVerdict {
    Equal,
    Unequal,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct TransferReport {
    pub instant_payoffs: Vec<TaggedPayoff>,
    pub delayed_payoffs: Vec<Option<TaggedPayoff>>,
    pub payoff_equal: Vec<EqVerdict>,
    /// Modulus actually used (1 when no unravelling was needed).
    pub modulus: u32,
    pub unravelled: bool,
    /// Hard assertion failures of the stitching machines; any entry fails
    /// the transfer.
    pub assertion_failures: Vec<String>,
    pub shuffle_ok: bool,
    pub thread_validity_ok: bool,
    pub variants_agree: bool,
    pub sandwich_ok: bool,
    pub streams_matched: bool,
    pub reference_lasso: Option<(usize, usize)>,
    pub total_runs: usize,
    pub exhaustive_runs: usize,
    pub exhaustive_horizon: usize,
    pub random_runs: usize,
    /// Human-readable notes for every failed check.
    pub problems: Vec<String>,
}

impl TransferReport {
    pub fn all_ok(&self) -> bool {
        self.assertion_failures.is_empty()
            && self.shuffle_ok
            && self.thread_validity_ok
            && self.variants_agree
            && self.sandwich_ok
            && self.streams_matched
            && self.payoff_equal.iter().all(|v| *v == EqVerdict::Equal)
    }

    pub fn inconclusive(&self) -> bool {
        self.payoff_equal.contains(&EqVerdict::Inconclusive)
    }
}

#[derive(Debug)]
pub struct TransferOutcome {
    /// The delayed-monitoring game that was actually played (lifted from the
    /// unravelled instant graph).
    pub delayed: Arc<GameGraph>,
    /// The instant graph the stitching machines run on.
    pub unravelled_instant: Arc<GameGraph>,
    /// The wrapped profile for the delayed game.
    pub profile: StrategyProfile,
    pub report: TransferReport,
}

/// Outcome of one battery run, reduced to what the report needs.
struct RunOutcome {
    descriptor: String,
    error: Option<(bool, String)>, // (is_assertion_failure, message)
    exact_payoffs: Option<Vec<Rational64>>,
    stream_matches_reference: bool,
    shuffle_ok: Result<(), String>,
    threads_ok: Result<(), String>,
    sandwich_ok: Result<(), String>,
}

pub fn transfer(
    g: &Arc<GameGraph>,
    profile: &StrategyProfile,
    space: &DelaySpace,
    opts: &TransferOptions,
) -> Result<TransferOutcome, TransferError> {
    if !g.mode().is_instant() {
        return Err(TransferError::ExpectedInstant);
    }
    if space.num_players() != g.num_players() {
        return Err(TransferError::PlayerMismatch(space.num_players(), g.num_players()));
    }
    let violations = g.validate();
    if let Some(first) = violations.first() {
        return Err(TransferError::Invalid(violations.len(), first.clone()));
    }

    // Step 1: stretch small cycles so that every cycle is longer than the
    // maximal delay.
    let m = space.max_delay();
    let needs_unravelling =
        min_cycle_length(g).is_some_and(|len| len <= m as usize);
    let modulus = opts.modulus.unwrap_or(m + 1).max(1);
    let (unravelled, layers, effective_modulus) = if needs_unravelling {
        let (u, layers) = unravel_indexed(g, modulus)?;
        (Arc::new(u), layers, modulus)
    } else {
        (g.clone(), vec![0; g.num_states()], 1)
    };

    // Step 2: the delayed-monitoring variant that will actually be played.
    let delayed = Arc::new(lift_to_delayed(&unravelled, space.clone())?);

    // Step 3: wrap each player's strategy in the stitching procedure over
    // the unravelled instant graph.
    let mut wrapped = Vec::with_capacity(profile.players.len());
    for (i, entry) in profile.players.iter().enumerate() {
        let base = match entry {
            PlayerStrategy::FiniteState(fs) => BaseStrategy::FiniteState(fs.clone()),
            PlayerStrategy::Opaque(s) => BaseStrategy::Opaque(s.clone()),
            PlayerStrategy::Frankenstein(_) => {
                return Err(TransferError::AlreadyWrapped(PlayerId(i)))
            }
        };
        let spec = Frankenstein::with_layers(
            unravelled.clone(),
            base,
            PlayerId(i),
            space.player(PlayerId(i)),
            layers.clone(),
            effective_modulus,
        )?;
        wrapped.push(PlayerStrategy::Frankenstein(Arc::new(spec)));
    }
    let wrapped = StrategyProfile { players: wrapped };

    // Instant baseline on the original game.
    let baseline = simulate(
        g,
        profile,
        &SchedulerSpec::RoundRobin,
        &SimOptions { horizon: opts.random_horizon, ..SimOptions::default() },
    )?;

    // Step 4: the scheduler battery.
    let reference_spec = SchedulerSpec::Fixed(space.min_profile());
    let reference = simulate(
        &delayed,
        &wrapped,
        &reference_spec,
        &SimOptions { horizon: opts.random_horizon, ..SimOptions::default() },
    )?;
    let reference_stream = reference.stream(&delayed);

    let mut battery: Vec<SchedulerSpec> = Vec::new();
    let exhaustive_horizon = {
        let per_period = space.profile_count();
        let mut t0 = 0usize;
        let mut count = 1usize;
        while t0 < opts.exhaustive_horizon_cap {
            match count.checked_mul(per_period) {
                Some(next) if next <= opts.exhaustive_budget => {
                    count = next;
                    t0 += 1;
                }
                _ => break,
            }
        }
        t0
    };
    if exhaustive_horizon > 0 {
        for prefix in enumerate_schedulers(space, exhaustive_horizon, opts.exhaustive_budget)
            .expect("budget respected by construction")
        {
            battery.push(SchedulerSpec::Chain { prefix, then: Box::new(reference_spec.clone()) });
        }
    }
    let exhaustive_runs = battery.len();
    for k in 0..opts.random_schedulers {
        let seed = opts.seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        battery.push(SchedulerSpec::Seeded(seed));
    }
    let random_runs = opts.random_schedulers;

    let run_one = |(idx, spec): (usize, &SchedulerSpec)| -> RunOutcome {
        let is_random = idx >= exhaustive_runs;
        let sim_opts = SimOptions {
            horizon: opts.random_horizon,
            stop_at_lasso: !is_random,
            min_periods: opts.min_run_periods,
            ..SimOptions::default()
        };
        check_run(&delayed, &wrapped, spec, &sim_opts, &reference_stream)
    };
    let indexed: Vec<(usize, &SchedulerSpec)> = battery.iter().enumerate().collect();
    let outcomes: Vec<RunOutcome> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| indexed.par_iter().map(|x| run_one(*x)).collect())
    } else {
        indexed.iter().map(|x| run_one(*x)).collect()
    };

    // Step 5: aggregate verdicts.
    let mut report = TransferReport {
        instant_payoffs: baseline.payoffs.clone(),
        delayed_payoffs: vec![None; g.num_players()],
        payoff_equal: vec![EqVerdict::Inconclusive; g.num_players()],
        modulus: effective_modulus,
        unravelled: needs_unravelling,
        assertion_failures: Vec::new(),
        shuffle_ok: true,
        thread_validity_ok: true,
        variants_agree: true,
        sandwich_ok: true,
        streams_matched: true,
        reference_lasso: reference.lasso,
        total_runs: outcomes.len() + 1,
        exhaustive_runs,
        exhaustive_horizon,
        random_runs,
        problems: Vec::new(),
    };

    // The reference run is itself subject to every per-run check.
    let reference_outcome = check_run(
        &delayed,
        &wrapped,
        &reference_spec,
        &SimOptions { horizon: opts.random_horizon, ..SimOptions::default() },
        &reference_stream,
    );
    let reference_exact = reference_outcome.exact_payoffs.clone();
    for outcome in std::iter::once(&reference_outcome).chain(outcomes.iter()) {
        if let Some((is_assertion, msg)) = &outcome.error {
            let line = format!("{}: {msg}", outcome.descriptor);
            if *is_assertion {
                report.assertion_failures.push(line);
            } else {
                report.problems.push(line);
            }
            continue;
        }
        if !outcome.stream_matches_reference {
            report.streams_matched = false;
            report.problems.push(format!(
                "{}: play stream diverges from the fixed-scheduler reference",
                outcome.descriptor
            ));
        }
        if let Err(msg) = &outcome.shuffle_ok {
            report.shuffle_ok = false;
            report.problems.push(format!("{}: {msg}", outcome.descriptor));
        }
        if let Err(msg) = &outcome.threads_ok {
            report.thread_validity_ok = false;
            report.problems.push(format!("{}: {msg}", outcome.descriptor));
        }
        if let Err(msg) = &outcome.sandwich_ok {
            report.sandwich_ok = false;
            report.problems.push(format!("{}: {msg}", outcome.descriptor));
        }
        if let (Some(run_exact), Some(ref_exact)) =
            (&outcome.exact_payoffs, &reference_exact)
        {
            if run_exact != ref_exact {
                report.streams_matched = false;
                report.problems.push(format!(
                    "{}: exact payoffs {:?} differ from reference {:?}",
                    outcome.descriptor, run_exact, ref_exact
                ));
            }
        }
        // Mismatch between the between-variant check is reported through
        // errors; nothing to do here.
    }
    for failure in outcomes.iter().filter_map(|o| o.error.as_ref()) {
        // A mismatch between the two stitching realisations is an error
        // with its own category.
        if failure.1.contains("variants disagree") {
            report.variants_agree = false;
        }
    }

    // Exact delayed payoff: from the reference lasso; every other battery
    // run either found the same exact value or matched the reference
    // stream.
    if let Some(values) = &reference_exact {
        let every_run_accounted = outcomes.iter().all(|o| {
            o.error.is_none() && (o.exact_payoffs.is_some() || o.stream_matches_reference)
        });
        if every_run_accounted {
            for (i, v) in values.iter().enumerate() {
                report.delayed_payoffs[i] = Some(TaggedPayoff::exact(*v));
            }
        }
    }
    for i in 0..g.num_players() {
        report.payoff_equal[i] = match (&baseline.payoffs[i], &report.delayed_payoffs[i]) {
            (inst, Some(del)) if inst.exact && del.exact => {
                if inst.value == del.value {
                    EqVerdict::Equal
                } else {
                    EqVerdict::Unequal
                }
            }
            _ => EqVerdict::Inconclusive,
        };
    }

    Ok(TransferOutcome { delayed, unravelled_instant: unravelled, profile: wrapped, report })
}

/// Runs one battery scheduler and applies every per-run check.
fn check_run(
    delayed: &Arc<GameGraph>,
    wrapped: &StrategyProfile,
    spec: &SchedulerSpec,
    sim_opts: &SimOptions,
    reference_stream: &[(StateId, Vec<crate::game::ActionIdx>, Vec<i64>)],
) -> RunOutcome {
    let descriptor = spec.describe();
    let result = match simulate(delayed, wrapped, spec, sim_opts) {
        Ok(r) => r,
        Err(e) => {
            return RunOutcome {
                descriptor,
                error: Some((e.is_assertion_failure(), e.to_string())),
                exact_payoffs: None,
                stream_matches_reference: false,
                shuffle_ok: Ok(()),
                threads_ok: Ok(()),
                sandwich_ok: Ok(()),
            }
        }
    };
    let stream = result.stream(delayed);
    let common = stream.len().min(reference_stream.len());
    let stream_matches_reference = stream[..common] == reference_stream[..common];
    let exact_payoffs = result
        .lasso
        .map(|_| result.payoffs.iter().map(|p| p.value).collect::<Vec<_>>());
    let mut shuffle_ok = Ok(());
    let mut threads_ok = Ok(());
    let mut sandwich_ok = Ok(());
    for i in 0..delayed.num_players() {
        let player = PlayerId(i);
        let Some(rt) = result.franken(player) else { continue };
        if let Err(msg) = check_shuffle_reconstruction(delayed, rt, &result, player) {
            shuffle_ok = Err(msg);
        }
        if let Err(msg) = rt.full().verify_threads() {
            threads_ok = Err(format!("player {player}: {msg}"));
        }
        if let Err(msg) = check_sandwich(delayed, rt, &result, player) {
            sandwich_ok = Err(msg);
        }
    }
    RunOutcome {
        descriptor,
        error: None,
        exact_payoffs,
        stream_matches_reference,
        shuffle_ok,
        threads_ok,
        sandwich_ok,
    }
}

/// Concatenating thread slots in period order must reproduce the player's
/// observed play exactly: actions, the basic signal of each period when it
/// was delivered by the horizon (a placeholder otherwise), and states.
fn check_shuffle_reconstruction(
    g: &GameGraph,
    rt: &FrankensteinRuntime,
    result: &SimulationResult,
    player: PlayerId,
) -> Result<(), String> {
    let reconstruction = rt.full().reconstruct_observed();
    let oh: &ObservedHistory = &result.observed[player.0];
    if reconstruction.len() != oh.len() {
        return Err(format!(
            "player {player}: reconstruction covers {} periods, observed play has {}",
            reconstruction.len(),
            oh.len()
        ));
    }
    // Delivered basic signal per emission period, from the observed play.
    let mut delivered: HashMapDelivered = HashMapDelivered::new(oh.len());
    for step in &oh.steps {
        for rec in step.observation.records() {
            delivered.set(rec.emitted, rec.basic);
        }
    }
    for (r, (action, slot, full_state)) in reconstruction.iter().enumerate() {
        let step = &oh.steps[r];
        if *action != step.action {
            return Err(format!("player {player}: action mismatch at period {}", r + 1));
        }
        if g.base_of(*full_state) != step.state {
            return Err(format!("player {player}: state mismatch at period {}", r + 1));
        }
        let tr = g.transition(result.history.step(r + 1));
        if tr.target != *full_state {
            return Err(format!("player {player}: product state mismatch at period {}", r + 1));
        }
        if *slot != delivered.get(r + 1) {
            return Err(format!(
                "player {player}: signal slot mismatch at period {} ({:?} vs {:?})",
                r + 1,
                slot,
                delivered.get(r + 1)
            ));
        }
    }
    Ok(())
}

struct HashMapDelivered {
    slots: Vec<Option<crate::game::SignalIdx>>,
}

impl HashMapDelivered {
    fn new(len: usize) -> Self {
        HashMapDelivered { slots: vec![None; len + 1] }
    }

    fn set(&mut self, emitted: usize, basic: crate::game::SignalIdx) {
        self.slots[emitted] = Some(basic);
    }

    fn get(&self, emitted: usize) -> Option<crate::game::SignalIdx> {
        self.slots[emitted]
    }
}

/// Finite-run form of the thread sandwich: the player's approximate run
/// payoff must lie within [min, max] of the approximate payoffs of the
/// recurrent threads' period streams, within the tolerance
/// `2 * max_abs_payoff * (settle_period + 1) / shortest_stream`, which
/// bounds the transient's weight in the prefix surrogate.
fn check_sandwich(
    g: &GameGraph,
    rt: &FrankensteinRuntime,
    result: &SimulationResult,
    player: PlayerId,
) -> Result<(), String> {
    let len = result.history.len();
    if len < 8 {
        return Ok(());
    }
    let full = rt.full();
    let recurrent = full
        .recurrent_threads()
        .map_err(|e| format!("player {player}: {e}"))?;
    let stream = &result.payoff_streams[player.0];
    let decomp = full.shuffle_decomposition();
    let mut per_thread: Vec<Vec<i64>> = vec![Vec::new(); full.threads().len()];
    for (r, (k, _)) in decomp.iter().enumerate() {
        per_thread[*k].push(stream[r]);
    }
    let agg = g.aggregator();
    let mut min_len = usize::MAX;
    let mut values = Vec::new();
    for k in &recurrent.recurrent {
        let s = &per_thread[*k];
        if s.is_empty() {
            continue;
        }
        min_len = min_len.min(s.len());
        values.push(
            aggregate_prefix(agg, s, s.len()).map_err(|e| format!("player {player}: {e}"))?,
        );
    }
    if values.is_empty() {
        return Ok(());
    }
    let run_value =
        aggregate_prefix(agg, stream, len).map_err(|e| format!("player {player}: {e}"))?;
    let lo = *values.iter().min().unwrap();
    let hi = *values.iter().max().unwrap();
    let eps = Rational64::new(
        2 * g.max_abs_payoff().max(1) * (recurrent.settle_period as i64 + 1),
        min_len as i64,
    );
    if run_value < lo - eps || run_value > hi + eps {
        return Err(format!(
            "player {player}: run payoff {run_value} outside thread sandwich [{lo}, {hi}] ± {eps}"
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::match_game;
    use crate::strategy::FiniteStateStrategy;

    fn always_a_profile() -> StrategyProfile {
        let always_a = FiniteStateStrategy::memoryless(vec![
            ("P".to_string(), "a".to_string()),
            ("Q".to_string(), "a".to_string()),
        ]);
        StrategyProfile::finite_state(vec![always_a.clone(), always_a])
    }

    fn space2(d: &[u32]) -> DelaySpace {
        DelaySpace::new(vec![d.to_vec(), d.to_vec()]).unwrap()
    }

    #[test]
    fn match_transfer_preserves_the_payoff() {
        let g = Arc::new(match_game());
        let opts = TransferOptions {
            exhaustive_budget: 256,
            random_schedulers: 5,
            random_horizon: 400,
            ..TransferOptions::default()
        };
        let outcome = transfer(&g, &always_a_profile(), &space2(&[0, 1]), &opts).unwrap();
        let report = &outcome.report;
        assert!(report.unravelled);
        assert_eq!(report.modulus, 2);
        assert!(report.assertion_failures.is_empty(), "{:?}", report.assertion_failures);
        assert!(report.all_ok(), "problems: {:?}", report.problems);
        for i in 0..2 {
            assert_eq!(report.instant_payoffs[i].value, Rational64::from_integer(1));
            assert_eq!(report.delayed_payoffs[i].unwrap().value, Rational64::from_integer(1));
            assert_eq!(report.payoff_equal[i], EqVerdict::Equal);
        }
        assert_eq!(outcome.delayed.num_states(), 4);
        assert!(outcome.delayed.delay_space().is_some());
    }

    #[test]
    fn zero_delay_transfer_is_trivially_equal() {
        let g = Arc::new(match_game());
        let opts = TransferOptions {
            random_schedulers: 2,
            random_horizon: 200,
            ..TransferOptions::default()
        };
        let outcome = transfer(&g, &always_a_profile(), &space2(&[0]), &opts).unwrap();
        // Max delay 0 and min cycle 1 > 0: no unravelling.
        assert!(!outcome.report.unravelled);
        assert_eq!(outcome.report.modulus, 1);
        assert!(outcome.report.all_ok(), "problems: {:?}", outcome.report.problems);
    }

    #[test]
    fn forced_modulus_one_surfaces_the_short_cycle() {
        let g = Arc::new(match_game());
        let opts = TransferOptions { modulus: Some(1), ..TransferOptions::default() };
        let err = transfer(&g, &always_a_profile(), &space2(&[0, 1]), &opts).unwrap_err();
        assert!(matches!(
            err,
            TransferError::Stitcher(crate::frankenstein::FkError::ShortCycle { .. })
        ));
    }

    #[test]
    fn jobs_do_not_change_the_report() {
        let g = Arc::new(match_game());
        let opts = TransferOptions {
            exhaustive_budget: 64,
            random_schedulers: 3,
            random_horizon: 200,
            ..TransferOptions::default()
        };
        let seq = transfer(&g, &always_a_profile(), &space2(&[0, 1]), &opts).unwrap();
        let par = transfer(
            &g,
            &always_a_profile(),
            &space2(&[0, 1]),
            &TransferOptions { jobs: 4, ..opts },
        )
        .unwrap();
        assert_eq!(format!("{:?}", seq.report), format!("{:?}", par.report));
    }
}
