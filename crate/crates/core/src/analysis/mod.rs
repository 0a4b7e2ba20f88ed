//! Simulation loop, lasso detection and profile payoff evaluation.
//!
//! Runs are deterministic: identical inputs (game, profile, scheduler spec,
//! horizon) produce identical results. When every component of a run is
//! finite-state — the strategies, the stitching machines in bounded-memory
//! form, the scheduler — each period has a finite configuration fingerprint,
//! and the first repeated fingerprint yields an ultimately periodic play
//! whose payoff is evaluated exactly.

pub mod equilibrium;
pub mod generator;
pub mod transfer;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::frankenstein::{FkError, FrankensteinRuntime};
use crate::game::{ActionIdx, GameGraph, History, HistoryError, PlayerId, StateId, Violation};
use crate::monitoring::{ObsRecord, ObservationSet, ObservedHistory};
use crate::payoff::{aggregate_lasso, aggregate_prefix, LassoSequence, TaggedPayoff};
use crate::strategy::{
    FsCursor, PlayerStrategy, SchedulerError, SchedulerSpec, SchedulerState, Strategy,
    StrategyError, StrategyProfile,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("graph fails validation ({0} violations, first: {1})")]
    Invalid(usize, Violation),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("profile has {0} players, the game has {1}")]
    ProfileArity(usize, usize),
    #[error("player {player} strategy error at period {period}: {source}")]
    Strategy {
        player: PlayerId,
        period: usize,
        #[source]
        source: StrategyError,
    },
    #[error("player {player} stitching error at period {period}: {source}")]
    Frankenstein {
        player: PlayerId,
        period: usize,
        #[source]
        source: FkError,
    },
    #[error("scheduler error at period {period}: {source}")]
    Scheduler {
        period: usize,
        #[source]
        source: SchedulerError,
    },
    #[error("no transition from `{state}` under {profile:?}")]
    NoTransition { state: String, profile: Vec<String> },
    #[error("instant simulation needs a deterministic graph; `{state}` has {count} transitions under {profile:?}")]
    Nondeterministic { state: String, profile: Vec<String>, count: usize },
    #[error("delay profile {delays:?} has no variant at `{state}`")]
    NoDelayVariant { state: String, delays: Vec<u32> },
    #[error("stitching profile was built for a different graph")]
    GraphMismatch,
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("payoff error: {0}")]
    Payoff(#[from] crate::payoff::PayoffError),
    #[error("detected lasso failed verification at period {0}")]
    LassoUnsound(usize),
}

impl SimError {
    /// True when the error is one of the three hard assertions of the
    /// stitching procedure.
    pub fn is_assertion_failure(&self) -> bool {
        matches!(
            self,
            SimError::Frankenstein {
                source: FkError::ScheduledThreadPending { .. }
                    | FkError::NoActiveThread { .. }
                    | FkError::NoPendingSlot { .. },
                ..
            }
        )
    }
}

/// Per-player strategy runtime driving one simulation.
#[derive(Clone)]
pub enum PlayerRuntime {
    Fs(FsCursor),
    Franken(Box<FrankensteinRuntime>),
    /// Stateless replay of an opaque strategy on the growing observed
    /// history. Has no finite fingerprint.
    Replay { strategy: Arc<dyn Strategy>, oh: ObservedHistory },
}

impl PlayerRuntime {
    fn build(
        g: &Arc<GameGraph>,
        player: PlayerId,
        spec: &PlayerStrategy,
        initial: StateId,
    ) -> Result<Self, SimError> {
        match spec {
            PlayerStrategy::FiniteState(fs) => {
                let cursor = FsCursor::new(fs, g, player, g.base_of(initial))
                    .map_err(|source| SimError::Strategy { player, period: 0, source })?;
                Ok(PlayerRuntime::Fs(cursor))
            }
            PlayerStrategy::Frankenstein(spec) => {
                let own = spec.graph();
                if own.num_states() != g.num_states()
                    || own.states().any(|v| own.state_name(v) != g.state_name(v))
                {
                    return Err(SimError::GraphMismatch);
                }
                let rt = FrankensteinRuntime::new(spec.clone())
                    .map_err(|source| SimError::Frankenstein { player, period: 0, source })?;
                Ok(PlayerRuntime::Franken(Box::new(rt)))
            }
            PlayerStrategy::Opaque(s) => Ok(PlayerRuntime::Replay {
                strategy: s.clone(),
                oh: ObservedHistory::trivial(g.base_of(initial)),
            }),
        }
    }

    fn next_action(
        &mut self,
        g: &GameGraph,
        player: PlayerId,
        period: usize,
    ) -> Result<ActionIdx, SimError> {
        match self {
            PlayerRuntime::Fs(cursor) => cursor
                .next_action()
                .map_err(|source| SimError::Strategy { player, period, source }),
            PlayerRuntime::Franken(rt) => rt
                .next_action()
                .map_err(|source| SimError::Frankenstein { player, period, source }),
            PlayerRuntime::Replay { strategy, oh } => strategy
                .respond(g, player, oh)
                .map_err(|source| SimError::Strategy { player, period, source }),
        }
    }

    fn observe(
        &mut self,
        g: &GameGraph,
        player: PlayerId,
        period: usize,
        own: ActionIdx,
        z: &ObservationSet,
        state: StateId,
    ) -> Result<(), SimError> {
        match self {
            PlayerRuntime::Fs(cursor) => cursor
                .observe(own, z, g.base_of(state))
                .map_err(|source| SimError::Strategy { player, period, source }),
            PlayerRuntime::Franken(rt) => rt
                .observe(own, z, state)
                .map_err(|source| SimError::Frankenstein { player, period, source }),
            PlayerRuntime::Replay { oh, .. } => {
                oh.push(own, z.clone(), g.base_of(state));
                Ok(())
            }
        }
    }

    fn fingerprint(&self, out: &mut Vec<u64>) -> bool {
        match self {
            PlayerRuntime::Fs(cursor) => {
                cursor.fingerprint(out);
                true
            }
            PlayerRuntime::Franken(rt) => rt.fingerprint(out),
            PlayerRuntime::Replay { .. } => false,
        }
    }

    /// The stitching runtime behind this player, when there is one.
    pub fn franken(&self) -> Option<&FrankensteinRuntime> {
        match self {
            PlayerRuntime::Franken(rt) => Some(rt),
            _ => None,
        }
    }

    pub fn franken_mut(&mut self) -> Option<&mut FrankensteinRuntime> {
        match self {
            PlayerRuntime::Franken(rt) => Some(rt),
            _ => None,
        }
    }
}

/// A stepping world: the game, the per-player runtimes, Nature's scheduler
/// and the in-flight signal queues. Cloneable, so searches can branch.
#[derive(Clone)]
pub struct SimCursor {
    g: Arc<GameGraph>,
    history: History,
    observed: Vec<ObservedHistory>,
    runtimes: Vec<PlayerRuntime>,
    sched: Option<SchedulerState>,
    /// Per player: (due period, record) of emitted, undelivered signals.
    pending: Vec<Vec<(usize, ObsRecord)>>,
    period: usize,
}

impl SimCursor {
    pub fn new(
        g: &Arc<GameGraph>,
        profile: &StrategyProfile,
        sched: &SchedulerSpec,
        initial: StateId,
    ) -> Result<Self, SimError> {
        let n = g.num_players();
        if profile.num_players() != n {
            return Err(SimError::ProfileArity(profile.num_players(), n));
        }
        let mut runtimes = Vec::with_capacity(n);
        for (i, spec) in profile.players.iter().enumerate() {
            runtimes.push(PlayerRuntime::build(g, PlayerId(i), spec, initial)?);
        }
        let sched_state = match g.delay_space() {
            None => None,
            Some(space) => Some(
                sched
                    .instantiate(space)
                    .map_err(|source| SimError::Scheduler { period: 0, source })?,
            ),
        };
        Ok(SimCursor {
            g: g.clone(),
            history: History::from_state(initial),
            observed: vec![ObservedHistory::trivial(g.base_of(initial)); n],
            runtimes,
            sched: sched_state,
            pending: vec![Vec::new(); n],
            period: 0,
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn state(&self) -> StateId {
        self.history.current_state()
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn observed(&self) -> &[ObservedHistory] {
        &self.observed
    }

    pub fn runtimes(&self) -> &[PlayerRuntime] {
        &self.runtimes
    }

    /// Queries every runtime for the next action profile.
    pub fn next_actions(&mut self) -> Result<Vec<ActionIdx>, SimError> {
        let g = self.g.clone();
        let t = self.period + 1;
        let mut actions = Vec::with_capacity(self.runtimes.len());
        for (i, rt) in self.runtimes.iter_mut().enumerate() {
            actions.push(rt.next_action(&g, PlayerId(i), t)?);
        }
        Ok(actions)
    }

    /// Plays one period with the given joint action: resolves the
    /// transition, queues the emitted signals with the delays Nature picks,
    /// delivers everything due this period and notifies the runtimes.
    pub fn advance(&mut self, actions: &[ActionIdx]) -> Result<(), SimError> {
        let g = self.g.clone();
        let t = self.period + 1;
        let state = self.history.current_state();
        let profile_names = || -> Vec<String> {
            actions
                .iter()
                .enumerate()
                .map(|(i, a)| g.action_name(PlayerId(i), *a).to_string())
                .collect()
        };
        let tid = match g.delay_space() {
            None => {
                let tids = g.outgoing(state, actions);
                match tids.len() {
                    0 => {
                        return Err(SimError::NoTransition {
                            state: g.state_name(state).to_string(),
                            profile: profile_names(),
                        })
                    }
                    1 => tids[0],
                    count => {
                        return Err(SimError::Nondeterministic {
                            state: g.state_name(state).to_string(),
                            profile: profile_names(),
                            count,
                        })
                    }
                }
            }
            Some(_) => {
                let basics = g
                    .basics_for(state, actions)
                    .map_err(|v| SimError::Invalid(1, v))?
                    .ok_or_else(|| SimError::NoTransition {
                        state: g.state_name(state).to_string(),
                        profile: profile_names(),
                    })?;
                let delays = self
                    .sched
                    .as_mut()
                    .expect("delayed graph has a scheduler")
                    .next_delays(t, &basics.0)
                    .map_err(|source| SimError::Scheduler { period: t, source })?;
                g.resolve_delayed(state, actions, &delays).ok_or(SimError::NoDelayVariant {
                    state: g.state_name(state).to_string(),
                    delays,
                })?
            }
        };
        self.history.push(&g, tid)?;
        let tr = g.transition(tid);
        for i in 0..g.num_players() {
            let delay = tr.delays.as_ref().map(|d| d[i]).unwrap_or(0);
            self.pending[i].push((
                t + delay as usize,
                ObsRecord { basic: tr.signals[i], delay, emitted: t },
            ));
        }
        for i in 0..g.num_players() {
            let mut due = Vec::new();
            self.pending[i].retain(|(d, rec)| {
                if *d == t {
                    due.push(*rec);
                    false
                } else {
                    true
                }
            });
            let z = ObservationSet::from_records(t, due);
            self.observed[i].push(actions[i], z.clone(), g.base_of(tr.target));
            self.runtimes[i].observe(&g, PlayerId(i), t, actions[i], &z, tr.target)?;
        }
        self.period = t;
        Ok(())
    }

    /// Configuration fingerprint after the current period, or `None` when
    /// some component has no finite encoding.
    pub fn fingerprint(&self) -> Option<Vec<u64>> {
        let mut out = Vec::with_capacity(16);
        out.push(self.state().0 as u64);
        for rt in &self.runtimes {
            out.push(u64::MAX); // separator
            if !rt.fingerprint(&mut out) {
                return None;
            }
        }
        for queue in &self.pending {
            out.push(u64::MAX);
            let mut inflight: Vec<(u64, u64, u64)> = queue
                .iter()
                .map(|(due, rec)| ((due - self.period) as u64, rec.basic.0 as u64, rec.delay as u64))
                .collect();
            inflight.sort_unstable();
            for (a, b, c) in inflight {
                out.push(a);
                out.push(b);
                out.push(c);
            }
        }
        if let Some(sched) = &self.sched {
            out.push(u64::MAX);
            sched.fingerprint(self.period, &mut out);
        }
        Some(out)
    }
}

/// First repeated configuration fingerprint: `(first occurrence, distance)`.
pub fn detect_lasso(fingerprints: &[Vec<u64>]) -> Option<(usize, usize)> {
    let mut seen: HashMap<&[u64], usize> = HashMap::new();
    for (i, fp) in fingerprints.iter().enumerate() {
        if let Some(first) = seen.get(fp.as_slice()) {
            return Some((*first, i - first));
        }
        seen.insert(fp, i);
    }
    None
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub horizon: usize,
    /// Attempt configuration-fingerprint lasso detection.
    pub detect_lasso: bool,
    /// Stop once a lasso has been found (but never before `min_periods`).
    pub stop_at_lasso: bool,
    pub min_periods: usize,
    /// Capture per-period scheduling records inside stitching runtimes.
    pub trace_stitcher: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            horizon: 1000,
            detect_lasso: true,
            stop_at_lasso: false,
            min_periods: 0,
            trace_stitcher: false,
        }
    }
}

impl SimOptions {
    pub fn horizon(horizon: usize) -> Self {
        SimOptions { horizon, ..SimOptions::default() }
    }
}

/// Everything recorded about one run.
pub struct SimulationResult {
    pub history: History,
    pub observed: Vec<ObservedHistory>,
    pub payoff_streams: Vec<Vec<i64>>,
    /// `(prefix, cycle)` in periods, when a configuration repeat was found.
    pub lasso: Option<(usize, usize)>,
    pub payoffs: Vec<TaggedPayoff>,
    pub runtimes: Vec<PlayerRuntime>,
}

impl SimulationResult {
    pub fn franken(&self, i: PlayerId) -> Option<&FrankensteinRuntime> {
        self.runtimes[i.0].franken()
    }

    /// The per-period play stream: state, joint action, payoff vector.
    pub fn stream(&self, g: &GameGraph) -> Vec<(StateId, Vec<ActionIdx>, Vec<i64>)> {
        (1..=self.history.len())
            .map(|r| {
                let tr = g.transition(self.history.step(r));
                (tr.target, tr.actions.clone(), tr.payoffs.clone())
            })
            .collect()
    }
}

pub fn simulate(
    g: &Arc<GameGraph>,
    profile: &StrategyProfile,
    sched: &SchedulerSpec,
    opts: &SimOptions,
) -> Result<SimulationResult, SimError> {
    simulate_from(g, g.initial(), profile, sched, opts)
}

pub fn simulate_from(
    g: &Arc<GameGraph>,
    initial: StateId,
    profile: &StrategyProfile,
    sched: &SchedulerSpec,
    opts: &SimOptions,
) -> Result<SimulationResult, SimError> {
    if opts.horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    let violations = g.validate();
    if let Some(first) = violations.first() {
        return Err(SimError::Invalid(violations.len(), first.clone()));
    }
    let mut cursor = SimCursor::new(g, profile, sched, initial)?;
    if opts.trace_stitcher {
        for rt in &mut cursor.runtimes {
            if let Some(franken) = rt.franken_mut() {
                franken.enable_trace();
            }
        }
    }
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut fingerprinting = opts.detect_lasso;
    let mut lasso: Option<(usize, usize)> = None;
    if fingerprinting {
        match cursor.fingerprint() {
            Some(fp) => {
                seen.insert(fp, 0);
            }
            None => fingerprinting = false,
        }
    }
    for t in 1..=opts.horizon {
        let actions = cursor.next_actions()?;
        cursor.advance(&actions)?;
        if fingerprinting && lasso.is_none() {
            match cursor.fingerprint() {
                Some(fp) => {
                    if let Some(first) = seen.get(&fp) {
                        lasso = Some((*first, t - first));
                    } else {
                        seen.insert(fp, t);
                    }
                }
                None => fingerprinting = false,
            }
        }
        if opts.stop_at_lasso && lasso.is_some() && t >= opts.min_periods {
            break;
        }
    }
    let payoff_streams: Vec<Vec<i64>> =
        (0..g.num_players()).map(|i| cursor.history.payoff_stream(g, PlayerId(i))).collect();
    // A detected lasso predicts the continuation; if the run went on past
    // the repeat, hold the prediction against what actually happened.
    if let Some((p, c)) = lasso {
        for stream in &payoff_streams {
            for (idx, v) in stream.iter().enumerate().skip(p + c) {
                if *v != stream[p + (idx - p) % c] {
                    return Err(SimError::LassoUnsound(idx + 1));
                }
            }
        }
    }
    let mut payoffs = Vec::with_capacity(g.num_players());
    for stream in &payoff_streams {
        let tagged = match lasso {
            Some((p, c)) => TaggedPayoff::exact(aggregate_lasso(
                g.aggregator(),
                &LassoSequence::new(stream[..p].to_vec(), stream[p..p + c].to_vec())?,
            )?),
            None => TaggedPayoff::approximate(aggregate_prefix(g.aggregator(), stream, stream.len())?),
        };
        payoffs.push(tagged);
    }
    Ok(SimulationResult {
        history: cursor.history,
        observed: cursor.observed,
        payoff_streams,
        lasso,
        payoffs,
        runtimes: cursor.runtimes,
    })
}

/// Payoff of a strategy profile: the per-player worst case over the tested
/// schedulers. When the delayed-monitoring uniqueness assumption holds and
/// nobody deviates, all schedulers must produce identical payoffs;
/// `all_identical` reports whether they did.
pub struct ProfilePayoff {
    pub per_player: Vec<TaggedPayoff>,
    pub all_identical: bool,
    pub runs: usize,
}

pub fn payoff_of_profile(
    g: &Arc<GameGraph>,
    profile: &StrategyProfile,
    schedulers: &[SchedulerSpec],
    opts: &SimOptions,
) -> Result<ProfilePayoff, SimError> {
    let specs: Vec<SchedulerSpec> = if g.mode().is_instant() || schedulers.is_empty() {
        vec![SchedulerSpec::RoundRobin]
    } else {
        schedulers.to_vec()
    };
    let mut all: Vec<Vec<TaggedPayoff>> = Vec::with_capacity(specs.len());
    for spec in &specs {
        let result = simulate(g, profile, spec, opts)?;
        all.push(result.payoffs);
    }
    let mut per_player = all[0].clone();
    let mut all_identical = true;
    for run in &all[1..] {
        for (i, p) in run.iter().enumerate() {
            if p.value != per_player[i].value {
                all_identical = false;
            }
            if p.value < per_player[i].value {
                per_player[i] = *p;
            }
            if !p.exact {
                per_player[i].exact = false;
            }
        }
    }
    Ok(ProfilePayoff { per_player, all_identical, runs: specs.len() })
}

/// Per-initial-state payoff table. The payoff is ergodic when every state
/// yields the same per-player value.
pub struct ErgodicReport {
    pub table: Vec<(String, Vec<TaggedPayoff>)>,
    pub ergodic: bool,
    pub all_exact: bool,
}

pub fn check_ergodic(
    g: &Arc<GameGraph>,
    profile: &StrategyProfile,
    sched: &SchedulerSpec,
    opts: &SimOptions,
) -> Result<ErgodicReport, SimError> {
    let mut table = Vec::with_capacity(g.num_states());
    for v in g.states() {
        let result = simulate_from(g, v, profile, sched, opts)?;
        table.push((g.state_name(v).to_string(), result.payoffs));
    }
    let first = &table[0].1;
    let ergodic = table.iter().all(|(_, p)| p.iter().zip(first).all(|(a, b)| a.value == b.value));
    let all_exact = table.iter().all(|(_, p)| p.iter().all(|x| x.exact));
    Ok(ErgodicReport { table, ergodic, all_exact })
}
