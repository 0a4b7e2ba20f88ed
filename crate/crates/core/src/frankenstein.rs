//! The thread-stitching procedure: a reactive machine that plays a
//! delayed-monitoring game by maintaining a collection of virtual
//! instant-monitoring plays (*threads*) and scheduling their continuations.
//!
//! The machine keeps `|V| + 1` threads indexed by an ordered set
//! `K = {eps} U V` (eps first, then states by lexicographic name). Each
//! thread is an observed history of the instant game that follows the base
//! strategy. A thread whose last signal slot is still the placeholder is
//! *pending*; once the signal arrives the slot is overwritten and the thread
//! is *active* again. Every period the machine
//!
//! 1. plays the base strategy's response to the thread scheduled by the log
//!    entry `h[t]` (the thread must be active),
//! 2. on seeing the new state `v`, extends that thread with
//!    `(action, PENDING, v)` and schedules as `h[t+1]` the least other
//!    active thread ending at `v` (one must exist),
//! 3. on receiving the period's observation, routes each delivered record
//!    emitted in period `r` to thread `h[r-1]` — the thread that prescribed
//!    period `r`'s action — whose trailing placeholder it fills.
//!
//! The three numbered obligations are hard assertions: a violation is an
//! error, never a recoverable state. They cannot fire as long as every cycle
//! of the graph is longer than the maximal delay, which the constructor
//! enforces (callers unravel the graph first to make it true).
//!
//! Two observationally equivalent realisations are provided: the
//! full-history form keeps entire threads (needed for shuffle decomposition
//! and replay checks), and a bounded-memory form that stores only each
//! thread's automaton memory, end state and pending flag plus a short window
//! of the log. The bounded form has a finite state fingerprint, which makes
//! lasso detection and therefore exact payoff evaluation possible.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::game::transform::{min_cycle_length, shortest_cycle};
use crate::game::{ActionIdx, GameGraph, PlayerId, SignalIdx, StateId};
use crate::monitoring::{ObservationSet, ObservedHistory};
use crate::strategy::{CompiledStrategy, FiniteStateStrategy, Strategy, StrategyError};

#[derive(Debug, Error)]
pub enum FkError {
    #[error("base graph must use instant monitoring")]
    ExpectedInstant,
    #[error("delay set must be nonempty")]
    EmptyDelaySet,
    #[error(
        "graph has a cycle of length {len} through {cycle:?} but the maximal delay is {max_delay}; \
         every cycle must be longer than the maximal delay (unravel the graph first)"
    )]
    ShortCycle { len: usize, cycle: Vec<String>, max_delay: u32 },
    #[error("scheduled thread `{thread}` is pending at period {period}")]
    ScheduledThreadPending { period: usize, thread: String },
    #[error("no active thread other than the current one ends at `{state}` at period {period}")]
    NoActiveThread { period: usize, state: String },
    #[error("thread `{thread}` has no trailing pending slot for the signal emitted in period {emitted}")]
    NoPendingSlot { emitted: usize, thread: String },
    #[error("observation record does not belong to the current period: {0}")]
    BadObservation(String),
    #[error("played action does not match the last prescribed action")]
    ActionMismatch,
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
    #[error("full and bounded-memory variants disagree at period {period}: {full} vs {compact}")]
    VariantMismatch { period: usize, full: String, compact: String },
    #[error("cannot resolve product states from base observations (ambiguous projection)")]
    AmbiguousResolution,
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// The base strategy a stitcher wraps: the strategy of the instant game that
/// is queried on threads.
#[derive(Clone)]
pub enum BaseStrategy {
    FiniteState(Arc<FiniteStateStrategy>),
    Opaque(Arc<dyn Strategy>),
}

/// Immutable description of the stitching procedure for one player: the
/// instant-monitoring graph (already unravelled where necessary), the base
/// strategy, the player's delay set and the canonical thread order.
#[derive(Clone)]
pub struct Frankenstein {
    graph: Arc<GameGraph>,
    base: BaseStrategy,
    player: PlayerId,
    delays: Vec<u32>,
    max_delay: u32,
    /// Thread index 1.. maps to this state (index 0 is eps).
    thread_states: Vec<StateId>,
    /// Index component of each state in the unravelled product, used to
    /// resolve full states from base observations during stateless replay.
    layer: Vec<u32>,
    modulus: u32,
    resolve: Option<HashMap<(u32, u32), StateId>>,
}

impl std::fmt::Debug for Frankenstein {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frankenstein")
            .field("player", &self.player)
            .field("delays", &self.delays)
            .field("threads", &self.num_threads())
            .field("modulus", &self.modulus)
            .finish()
    }
}

impl Frankenstein {
    /// Builds the procedure description. Refuses graphs with a cycle no
    /// longer than the maximal delay, naming a shortest cycle.
    pub fn new(
        graph: Arc<GameGraph>,
        base: BaseStrategy,
        player: PlayerId,
        delays: &[u32],
    ) -> Result<Self, FkError> {
        let layer = vec![0; graph.num_states()];
        Self::with_layers(graph, base, player, delays, layer, 1)
    }

    /// Like [`Frankenstein::new`] for a graph produced by unravelling, with
    /// the index component of each product state and the modulus used.
    pub fn with_layers(
        graph: Arc<GameGraph>,
        base: BaseStrategy,
        player: PlayerId,
        delays: &[u32],
        layer: Vec<u32>,
        modulus: u32,
    ) -> Result<Self, FkError> {
        if !graph.mode().is_instant() {
            return Err(FkError::ExpectedInstant);
        }
        if delays.is_empty() {
            return Err(FkError::EmptyDelaySet);
        }
        let mut delays = delays.to_vec();
        delays.sort_unstable();
        delays.dedup();
        let max_delay = *delays.last().unwrap();
        if let Some(len) = min_cycle_length(&graph) {
            if len <= max_delay as usize {
                let cycle = shortest_cycle(&graph).unwrap_or_default();
                return Err(FkError::ShortCycle { len, cycle, max_delay });
            }
        }
        let mut thread_states: Vec<StateId> = graph.states().collect();
        thread_states.sort_by(|a, b| graph.state_name(*a).cmp(graph.state_name(*b)));
        let mut resolve = HashMap::new();
        let mut ambiguous = false;
        for v in graph.states() {
            let key = (graph.base_of(v).0, layer[v.0 as usize]);
            if resolve.insert(key, v).is_some() {
                ambiguous = true;
            }
        }
        Ok(Frankenstein {
            graph,
            base,
            player,
            delays,
            max_delay,
            thread_states,
            layer,
            modulus,
            resolve: if ambiguous { None } else { Some(resolve) },
        })
    }

    pub fn graph(&self) -> &Arc<GameGraph> {
        &self.graph
    }

    pub fn player(&self) -> PlayerId {
        self.player
    }

    pub fn max_delay(&self) -> u32 {
        self.max_delay
    }

    /// The player's delay set, sorted.
    pub fn delays(&self) -> &[u32] {
        &self.delays
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn num_threads(&self) -> usize {
        self.thread_states.len() + 1
    }

    pub fn has_finite_state_base(&self) -> bool {
        matches!(self.base, BaseStrategy::FiniteState(_))
    }

    /// Display name of a thread index: `eps` or the state name.
    pub fn thread_name(&self, k: usize) -> &str {
        if k == 0 {
            "eps"
        } else {
            self.graph.state_name(self.thread_states[k - 1])
        }
    }

    fn initial_of_thread(&self, k: usize) -> StateId {
        if k == 0 {
            self.graph.initial()
        } else {
            self.thread_states[k - 1]
        }
    }
}

/// One signal slot of a thread: filled with a basic signal or still pending.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalSlot {
    Pending,
    Filled(SignalIdx),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadStep {
    pub action: ActionIdx,
    pub signal: SignalSlot,
    pub state: StateId,
}

/// A virtual observed history of the instant game. At most the last slot
/// may be pending: a thread is only continued while active, so earlier
/// slots are always filled first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thread {
    pub initial: StateId,
    pub steps: Vec<ThreadStep>,
}

impl Thread {
    fn trivial(initial: StateId) -> Self {
        Thread { initial, steps: Vec::new() }
    }

    pub fn end(&self) -> StateId {
        self.steps.last().map(|s| s.state).unwrap_or(self.initial)
    }

    pub fn is_pending(&self) -> bool {
        matches!(self.steps.last(), Some(ThreadStep { signal: SignalSlot::Pending, .. }))
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The thread as an instant-game observed history over base states.
    /// Requires the thread to be fully filled up to `len` steps.
    fn observed_prefix(&self, g: &GameGraph, len: usize) -> ObservedHistory {
        let mut oh = ObservedHistory::trivial(g.base_of(self.initial));
        for (q, step) in self.steps[..len].iter().enumerate() {
            let SignalSlot::Filled(b) = step.signal else {
                panic!("observed_prefix on a pending slot");
            };
            oh.push(
                step.action,
                ObservationSet::singleton(q + 1, b, 0, q + 1),
                g.base_of(step.state),
            );
        }
        oh
    }
}

#[derive(Clone)]
enum Cursor {
    Fs { compiled: CompiledStrategy, mem: Vec<usize> },
    Opaque,
}

/// Full-history realisation of the procedure.
#[derive(Clone)]
pub struct FrankensteinState {
    spec: Arc<Frankenstein>,
    threads: Vec<Thread>,
    log: Vec<usize>,
    /// Period `r` (1-based) maps to `decomp[r-1] = (thread, 1-based slot)`.
    decomp: Vec<(usize, usize)>,
    period: usize,
    pending_action: Option<ActionIdx>,
}

impl FrankensteinState {
    pub fn new(spec: Arc<Frankenstein>) -> Result<Self, FkError> {
        let mut threads = Vec::with_capacity(spec.num_threads());
        for k in 0..spec.num_threads() {
            threads.push(Thread::trivial(spec.initial_of_thread(k)));
        }
        Ok(FrankensteinState {
            spec,
            threads,
            log: vec![0],
            decomp: Vec::new(),
            period: 0,
            pending_action: None,
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn log(&self) -> &[usize] {
        &self.log
    }

    pub fn threads(&self) -> &[Thread] {
        &self.threads
    }

    pub fn spec(&self) -> &Arc<Frankenstein> {
        &self.spec
    }

    fn query(&self, k: usize, cursor: &Cursor) -> Result<ActionIdx, FkError> {
        let g = &self.spec.graph;
        let th = &self.threads[k];
        match cursor {
            Cursor::Fs { compiled, mem } => {
                Ok(compiled.output(mem[k], g.base_of(th.end()))?)
            }
            Cursor::Opaque => {
                let BaseStrategy::Opaque(s) = &self.spec.base else {
                    return Err(FkError::Protocol("cursor kind mismatch"));
                };
                let oh = th.observed_prefix(g, th.len());
                Ok(s.respond(g, self.spec.player, &oh)?)
            }
        }
    }

    /// The action prescribed for the current period: the base strategy
    /// applied to the scheduled thread. Errors when that thread is pending.
    /// Idempotent until the next `on_state`.
    fn next_action(&mut self, cursor: &Cursor) -> Result<ActionIdx, FkError> {
        if let Some(a) = self.pending_action {
            return Ok(a);
        }
        let k = *self.log.last().unwrap();
        if self.threads[k].is_pending() {
            return Err(FkError::ScheduledThreadPending {
                period: self.period,
                thread: self.spec.thread_name(k).to_string(),
            });
        }
        let a = self.query(k, cursor)?;
        self.pending_action = Some(a);
        Ok(a)
    }

    /// Records the played action and the state the play moved to: extends
    /// the scheduled thread with a pending slot and schedules the least
    /// other active thread ending at the new state.
    fn on_state(&mut self, action: ActionIdx, new_state: StateId) -> Result<(), FkError> {
        let Some(prescribed) = self.pending_action.take() else {
            return Err(FkError::Protocol("on_state before next_action"));
        };
        if prescribed != action {
            return Err(FkError::ActionMismatch);
        }
        let t = self.period;
        let k = self.log[t];
        debug_assert!(!self.threads[k].is_pending());
        self.threads[k].steps.push(ThreadStep {
            action,
            signal: SignalSlot::Pending,
            state: new_state,
        });
        self.decomp.push((k, self.threads[k].len()));
        let next = (0..self.threads.len()).find(|k2| {
            *k2 != k && !self.threads[*k2].is_pending() && self.threads[*k2].end() == new_state
        });
        match next {
            Some(k2) => {
                self.log.push(k2);
                Ok(())
            }
            None => Err(FkError::NoActiveThread {
                period: t,
                state: self.spec.graph.state_name(new_state).to_string(),
            }),
        }
    }

    /// Routes each delivered record to the thread that prescribed the action
    /// of its emission period and fills that thread's trailing placeholder.
    /// Records are processed in ascending emission order; the period then
    /// advances.
    fn on_signals(&mut self, z: &ObservationSet, cursor: &mut Cursor) -> Result<(), FkError> {
        let t = self.period;
        if z.period() != t + 1 {
            return Err(FkError::BadObservation(format!(
                "observation for period {} received at period {}",
                z.period(),
                t + 1
            )));
        }
        for rec in z.records() {
            if rec.emitted + rec.delay as usize != t + 1 {
                return Err(FkError::BadObservation(format!(
                    "record emitted {} with delay {} delivered at {}",
                    rec.emitted,
                    rec.delay,
                    t + 1
                )));
            }
            if rec.emitted == 0 || rec.emitted > t + 1 {
                return Err(FkError::BadObservation(format!(
                    "emission period {} out of range",
                    rec.emitted
                )));
            }
            let k = self.log[rec.emitted - 1];
            let th = &mut self.threads[k];
            match th.steps.last_mut() {
                Some(step) if step.signal == SignalSlot::Pending => {
                    step.signal = SignalSlot::Filled(rec.basic);
                    let (action, state) = (step.action, step.state);
                    if let Cursor::Fs { compiled, mem } = cursor {
                        let pos = th.len();
                        let obs = ObservationSet::singleton(pos, rec.basic, 0, pos);
                        mem[k] = compiled.step(
                            mem[k],
                            action,
                            &obs,
                            self.spec.graph.base_of(state),
                        )?;
                    }
                }
                _ => {
                    return Err(FkError::NoPendingSlot {
                        emitted: rec.emitted,
                        thread: self.spec.thread_name(k).to_string(),
                    })
                }
            }
        }
        self.period = t + 1;
        Ok(())
    }

    /// For each period `r <= t`, the thread that prescribed period `r`'s
    /// action and the slot within it holding period `r`'s triple.
    pub fn shuffle_decomposition(&self) -> &[(usize, usize)] {
        &self.decomp
    }

    /// Rebuilds the player's observed play from the threads alone:
    /// concatenating thread slots in period order must reproduce the actual
    /// observed play, with `None` where a signal is still undelivered.
    pub fn reconstruct_observed(&self) -> Vec<(ActionIdx, Option<SignalIdx>, StateId)> {
        self.decomp
            .iter()
            .map(|(k, pos)| {
                let step = &self.threads[*k].steps[pos - 1];
                let sig = match step.signal {
                    SignalSlot::Pending => None,
                    SignalSlot::Filled(b) => Some(b),
                };
                (step.action, sig, step.state)
            })
            .collect()
    }

    /// Replays the base strategy over every thread and checks that each
    /// recorded action is what the strategy prescribes on the filled prefix
    /// before it, and that each filled step is consistent with some
    /// transition of the instant graph. For a finite-state base the replay
    /// folds the compiled automaton incrementally; for an opaque base each
    /// prefix is queried through `respond`.
    pub fn verify_threads(&self) -> Result<(), String> {
        let g = &self.spec.graph;
        let player = self.spec.player;
        let compiled = match &self.spec.base {
            BaseStrategy::FiniteState(fs) => {
                Some(fs.compile(g, player).map_err(|e| e.to_string())?)
            }
            BaseStrategy::Opaque(_) => None,
        };
        for (k, th) in self.threads.iter().enumerate() {
            let name = self.spec.thread_name(k);
            let mut prev = th.initial;
            let mut mem = compiled.as_ref().map(|c| c.init());
            for (q, step) in th.steps.iter().enumerate() {
                let expected = match (&compiled, &self.spec.base) {
                    (Some(c), _) => c.output(mem.unwrap(), g.base_of(prev)),
                    (None, BaseStrategy::Opaque(s)) => {
                        s.respond(g, player, &th.observed_prefix(g, q))
                    }
                    (None, BaseStrategy::FiniteState(_)) => unreachable!(),
                }
                .map_err(|e| format!("thread `{name}` slot {}: {e}", q + 1))?;
                if expected != step.action {
                    return Err(format!(
                        "thread `{name}` slot {}: recorded action {} but strategy prescribes {}",
                        q + 1,
                        g.action_name(player, step.action),
                        g.action_name(player, expected),
                    ));
                }
                if let SignalSlot::Filled(b) = step.signal {
                    let consistent = g.transitions().iter().any(|tr| {
                        tr.source == prev
                            && tr.actions[player.0] == step.action
                            && tr.signals[player.0] == b
                            && tr.target == step.state
                    });
                    if !consistent {
                        return Err(format!(
                            "thread `{name}` slot {} is not a transition of the instant game",
                            q + 1
                        ));
                    }
                    if let (Some(c), Some(m)) = (&compiled, mem) {
                        let obs = ObservationSet::singleton(q + 1, b, 0, q + 1);
                        mem = Some(
                            c.step(m, step.action, &obs, g.base_of(step.state))
                                .map_err(|e| format!("thread `{name}` slot {}: {e}", q + 1))?,
                        );
                    }
                } else if q + 1 != th.len() {
                    return Err(format!("thread `{name}` has a pending slot before its end"));
                }
                prev = step.state;
            }
        }
        Ok(())
    }
}

/// Scheduling statistics of a finished run: per-index schedule counts, the
/// set of indices still scheduled near the end of the run, and the period
/// from which only those indices are scheduled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecurrentThreads {
    pub counts: Vec<usize>,
    /// Indices scheduled within the final window (a heuristic stand-in for
    /// "scheduled infinitely often"): the last `max(2, (t+1)/4)` log
    /// entries.
    pub recurrent: Vec<usize>,
    /// One past the last log position scheduling an index outside
    /// `recurrent`; 1 when there is none.
    pub settle_period: usize,
}

impl FrankensteinState {
    pub fn recurrent_threads(&self) -> Result<RecurrentThreads, FkError> {
        let t = self.period;
        if t < 4 {
            return Err(FkError::Protocol("recurrent_threads needs a run of at least 4 periods"));
        }
        let mut counts = vec![0usize; self.threads.len()];
        for k in &self.log {
            counts[*k] += 1;
        }
        let window = ((t + 1) / 4).max(2);
        let mut recurrent: Vec<usize> = self.log[self.log.len() - window..].to_vec();
        recurrent.sort_unstable();
        recurrent.dedup();
        let settle_period = self
            .log
            .iter()
            .enumerate()
            .rev()
            .find(|(_, k)| !recurrent.contains(k))
            .map(|(r, _)| r + 1)
            .unwrap_or(0)
            .max(1);
        Ok(RecurrentThreads { counts, recurrent, settle_period })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct CompactThread {
    mem: usize,
    end: StateId,
    pending: Option<ActionIdx>,
}

/// Bounded-memory realisation for finite-state base strategies: threads
/// store only the automaton memory after their filled prefix, their end
/// state and the pending action, and the log shrinks to the window needed
/// to address deliveries (the last `max_delay + 2` entries).
#[derive(Clone)]
pub struct FrankensteinCompact {
    spec: Arc<Frankenstein>,
    compiled: CompiledStrategy,
    threads: Vec<CompactThread>,
    ring: VecDeque<usize>,
    /// Absolute log position of `ring[0]`.
    ring_start: usize,
    period: usize,
    pending_action: Option<ActionIdx>,
}

impl FrankensteinCompact {
    pub fn new(spec: Arc<Frankenstein>) -> Result<Self, FkError> {
        let BaseStrategy::FiniteState(fs) = &spec.base else {
            return Err(FkError::Protocol("bounded-memory form needs a finite-state base strategy"));
        };
        let compiled = fs.compile(&spec.graph, spec.player)?;
        let threads = (0..spec.num_threads())
            .map(|k| CompactThread { mem: compiled.init(), end: spec.initial_of_thread(k), pending: None })
            .collect();
        let mut ring = VecDeque::new();
        ring.push_back(0);
        Ok(FrankensteinCompact {
            spec,
            compiled,
            threads,
            ring,
            ring_start: 0,
            period: 0,
            pending_action: None,
        })
    }

    fn log_at(&self, pos: usize) -> Result<usize, FkError> {
        pos.checked_sub(self.ring_start)
            .and_then(|i| self.ring.get(i).copied())
            .ok_or(FkError::Protocol("delivery addresses a log entry outside the window"))
    }

    fn next_action(&mut self) -> Result<ActionIdx, FkError> {
        if let Some(a) = self.pending_action {
            return Ok(a);
        }
        let k = *self.ring.back().unwrap();
        let th = self.threads[k];
        if th.pending.is_some() {
            return Err(FkError::ScheduledThreadPending {
                period: self.period,
                thread: self.spec.thread_name(k).to_string(),
            });
        }
        let a = self.compiled.output(th.mem, self.spec.graph.base_of(th.end))?;
        self.pending_action = Some(a);
        Ok(a)
    }

    fn on_state(&mut self, action: ActionIdx, new_state: StateId) -> Result<(), FkError> {
        let Some(prescribed) = self.pending_action.take() else {
            return Err(FkError::Protocol("on_state before next_action"));
        };
        if prescribed != action {
            return Err(FkError::ActionMismatch);
        }
        let k = *self.ring.back().unwrap();
        self.threads[k].pending = Some(action);
        self.threads[k].end = new_state;
        let next = (0..self.threads.len()).find(|k2| {
            *k2 != k && self.threads[*k2].pending.is_none() && self.threads[*k2].end == new_state
        });
        match next {
            Some(k2) => {
                self.ring.push_back(k2);
                let window = self.spec.max_delay as usize + 2;
                while self.ring.len() > window {
                    self.ring.pop_front();
                    self.ring_start += 1;
                }
                Ok(())
            }
            None => Err(FkError::NoActiveThread {
                period: self.period,
                state: self.spec.graph.state_name(new_state).to_string(),
            }),
        }
    }

    fn on_signals(&mut self, z: &ObservationSet) -> Result<(), FkError> {
        let t = self.period;
        for rec in z.records() {
            if rec.emitted == 0 || rec.emitted + rec.delay as usize != t + 1 {
                return Err(FkError::BadObservation(format!(
                    "record emitted {} with delay {} delivered at {}",
                    rec.emitted,
                    rec.delay,
                    t + 1
                )));
            }
            let k = self.log_at(rec.emitted - 1)?;
            let th = &mut self.threads[k];
            let Some(action) = th.pending.take() else {
                return Err(FkError::NoPendingSlot {
                    emitted: rec.emitted,
                    thread: self.spec.thread_name(k).to_string(),
                });
            };
            // The slot position inside the thread is not tracked here; any
            // consistent position gives the same letter, so use 1.
            let obs = ObservationSet::singleton(1, rec.basic, 0, 1);
            th.mem = self.compiled.step(th.mem, action, &obs, self.spec.graph.base_of(th.end))?;
        }
        self.period = t + 1;
        Ok(())
    }

    /// Encodes the machine state for configuration fingerprints: the log
    /// window (padded), and per thread the memory, end state and pending
    /// action.
    pub fn fingerprint(&self, out: &mut Vec<u64>) {
        let window = self.spec.max_delay as usize + 2;
        for i in 0..window {
            out.push(self.ring.get(i).map(|k| *k as u64).unwrap_or(u64::MAX));
        }
        for th in &self.threads {
            out.push(th.mem as u64);
            out.push(th.end.0 as u64);
            out.push(th.pending.map(|a| a.0 as u64 + 1).unwrap_or(0));
        }
    }
}

/// Per-period capture for trace output.
#[derive(Clone, Debug)]
pub struct FkTraceRecord {
    pub period: usize,
    /// Log entry that prescribed this period's action.
    pub scheduled: usize,
    /// Pending flag per thread after the period's deliveries.
    pub pending: Vec<bool>,
}

/// Runtime combining the full-history machine with (when the base strategy
/// is finite-state) the bounded-memory machine, checking period by period
/// that both prescribe the same action.
#[derive(Clone)]
pub struct FrankensteinRuntime {
    full: FrankensteinState,
    cursor: Cursor,
    compact: Option<FrankensteinCompact>,
    trace: Option<Vec<FkTraceRecord>>,
}

impl FrankensteinRuntime {
    pub fn new(spec: Arc<Frankenstein>) -> Result<Self, FkError> {
        let cursor = match &spec.base {
            BaseStrategy::FiniteState(fs) => {
                let compiled = fs.compile(&spec.graph, spec.player)?;
                let mem = vec![compiled.init(); spec.num_threads()];
                Cursor::Fs { compiled, mem }
            }
            BaseStrategy::Opaque(_) => Cursor::Opaque,
        };
        let compact = if spec.has_finite_state_base() {
            Some(FrankensteinCompact::new(spec.clone())?)
        } else {
            None
        };
        Ok(FrankensteinRuntime { full: FrankensteinState::new(spec)?, cursor, compact, trace: None })
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[FkTraceRecord]> {
        self.trace.as_deref()
    }

    pub fn full(&self) -> &FrankensteinState {
        &self.full
    }

    pub fn next_action(&mut self) -> Result<ActionIdx, FkError> {
        let a = self.full.next_action(&self.cursor)?;
        if let Some(compact) = &mut self.compact {
            let b = compact.next_action()?;
            if a != b {
                let g = self.full.spec.graph.clone();
                let player = self.full.spec.player;
                return Err(FkError::VariantMismatch {
                    period: self.full.period,
                    full: g.action_name(player, a).to_string(),
                    compact: g.action_name(player, b).to_string(),
                });
            }
        }
        Ok(a)
    }

    /// Feeds the period's outcome: the played action, the observation set
    /// delivered after the state update, and the new state.
    pub fn observe(
        &mut self,
        action: ActionIdx,
        z: &ObservationSet,
        new_state: StateId,
    ) -> Result<(), FkError> {
        let scheduled = *self.full.log.last().unwrap();
        self.full.on_state(action, new_state)?;
        self.full.on_signals(z, &mut self.cursor)?;
        if let Some(compact) = &mut self.compact {
            compact.on_state(action, new_state)?;
            compact.on_signals(z)?;
        }
        if let Some(trace) = &mut self.trace {
            trace.push(FkTraceRecord {
                period: self.full.period,
                scheduled,
                pending: self.full.threads.iter().map(Thread::is_pending).collect(),
            });
        }
        Ok(())
    }

    /// Finite configuration fingerprint; available only in bounded-memory
    /// form.
    pub fn fingerprint(&self, out: &mut Vec<u64>) -> bool {
        match &self.compact {
            Some(c) => {
                c.fingerprint(out);
                true
            }
            None => false,
        }
    }
}

impl Strategy for Frankenstein {
    /// Stateless replay: rebuilds the machine along the delayed-game
    /// observed history (which must follow this very strategy) and returns
    /// the next prescribed action. Product states are resolved from the
    /// observed base states and the period index.
    fn respond(
        &self,
        _g: &GameGraph,
        _player: PlayerId,
        oh: &ObservedHistory,
    ) -> Result<ActionIdx, StrategyError> {
        let to_strategy_err = |e: FkError| StrategyError::Undefined(e.to_string());
        let resolve = self
            .resolve
            .as_ref()
            .ok_or_else(|| to_strategy_err(FkError::AmbiguousResolution))?;
        let spec = Arc::new(self.clone());
        let mut runtime = FrankensteinRuntime::new(spec).map_err(to_strategy_err)?;
        let j0 = self.layer[self.graph.initial().0 as usize];
        for (q, step) in oh.steps.iter().enumerate() {
            let prescribed = runtime.next_action().map_err(to_strategy_err)?;
            if prescribed != step.action {
                return Err(StrategyError::NotFollowing(q + 1));
            }
            let j = (j0 + q as u32 + 1) % self.modulus;
            let full = resolve
                .get(&(step.state.0, j))
                .copied()
                .ok_or_else(|| to_strategy_err(FkError::AmbiguousResolution))?;
            runtime.observe(step.action, &step.observation, full).map_err(to_strategy_err)?;
        }
        runtime.next_action().map_err(to_strategy_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::match_game;
    use crate::game::transform::unravel_indexed;
    use crate::monitoring::ObsRecord;

    fn always_a() -> FiniteStateStrategy {
        FiniteStateStrategy::memoryless(vec![
            ("P".to_string(), "a".to_string()),
            ("Q".to_string(), "a".to_string()),
        ])
    }

    fn unravelled_match(modulus: u32) -> (Arc<GameGraph>, Vec<u32>) {
        let (g, layers) = unravel_indexed(&match_game(), modulus).unwrap();
        (Arc::new(g), layers)
    }

    fn stitcher(modulus: u32, delays: &[u32]) -> Arc<Frankenstein> {
        let (g, layers) = unravelled_match(modulus);
        Arc::new(
            Frankenstein::with_layers(
                g,
                BaseStrategy::FiniteState(Arc::new(always_a())),
                PlayerId(0),
                delays,
                layers,
                modulus,
            )
            .unwrap(),
        )
    }

    /// Drives one player's machine against an opponent who always plays `a`,
    /// with every signal delayed by the same fixed amount. Returns the
    /// final runtime.
    fn drive(spec: Arc<Frankenstein>, fixed_delay: u32, periods: usize) -> FrankensteinRuntime {
        let g = spec.graph().clone();
        let player = spec.player();
        let mut rt = FrankensteinRuntime::new(spec).unwrap();
        let mut state = g.initial();
        let mut emitted: Vec<(usize, SignalIdx)> = Vec::new();
        for t in 1..=periods {
            let own = rt.next_action().unwrap();
            // Opponent always plays a; joint profile in the instant graph.
            let a_opp = g.action_index(PlayerId(1 - player.0), "a").unwrap();
            let profile = if player.0 == 0 { vec![own, a_opp] } else { vec![a_opp, own] };
            let tid = g.outgoing(state, &profile)[0];
            let tr = g.transition(tid);
            emitted.push((t, tr.signals[player.0]));
            state = tr.target;
            let records: Vec<ObsRecord> = emitted
                .iter()
                .filter(|(r, _)| r + fixed_delay as usize == t)
                .map(|(r, b)| ObsRecord { basic: *b, delay: fixed_delay, emitted: *r })
                .collect();
            let z = ObservationSet::from_records(t, records);
            rt.observe(own, &z, state).unwrap();
        }
        rt
    }

    #[test]
    fn initialisation_matches_the_thread_layout() {
        let spec = stitcher(2, &[0, 1]);
        let st = FrankensteinState::new(spec.clone()).unwrap();
        assert_eq!(st.threads().len(), 5);
        assert_eq!(spec.thread_name(0), "eps");
        assert_eq!(spec.thread_name(1), "P@0");
        assert_eq!(spec.thread_name(4), "Q@1");
        assert_eq!(st.log(), &[0]);
        assert!(!st.threads()[0].is_pending());
        assert_eq!(st.threads()[0].end(), spec.graph().initial());
        // Base states exposed to the strategy are P,P,Q,Q.
        let g = spec.graph();
        let bases: Vec<&str> = (1..5)
            .map(|k| g.base_name(g.base_of(st.threads()[k].end())))
            .collect();
        assert_eq!(bases, ["P", "P", "Q", "Q"]);
    }

    #[test]
    fn short_cycle_is_refused_with_a_diagnostic() {
        let g = Arc::new(match_game());
        let err = Frankenstein::new(
            g,
            BaseStrategy::FiniteState(Arc::new(always_a())),
            PlayerId(0),
            &[0, 1],
        )
        .unwrap_err();
        match err {
            FkError::ShortCycle { len, max_delay, cycle } => {
                assert_eq!(len, 1);
                assert_eq!(max_delay, 1);
                assert!(!cycle.is_empty());
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn zero_delay_run_alternates_between_two_threads() {
        // With zero delays the match graph itself qualifies (cycles of
        // length 1 > max delay 0). Thread order: eps, P, Q.
        let g = Arc::new(match_game());
        let spec = Arc::new(
            Frankenstein::new(g, BaseStrategy::FiniteState(Arc::new(always_a())), PlayerId(0), &[0])
                .unwrap(),
        );
        let rt = drive(spec, 0, 9);
        assert_eq!(rt.full().log(), &[0, 2, 0, 2, 0, 2, 0, 2, 0, 2]);
        let rec = rt.full().recurrent_threads().unwrap();
        assert_eq!(rec.recurrent, vec![0, 2]);
        assert_eq!(rec.settle_period, 1);
        assert_eq!(rec.counts.iter().sum::<usize>(), 10);
        rt.full().verify_threads().unwrap();
    }

    #[test]
    fn fixed_delay_one_cycles_three_threads() {
        // Hand-traced on the modulus-2 unravelling with all delays 1:
        // the log settles into the cycle (Q@1, Q@0, eps).
        let spec = stitcher(2, &[0, 1]);
        let rt = drive(spec, 1, 20);
        assert_eq!(&rt.full().log()[..9], &[0, 4, 3, 0, 4, 3, 0, 4, 3]);
        rt.full().verify_threads().unwrap();
        let rec = rt.full().recurrent_threads().unwrap();
        assert_eq!(rec.recurrent, vec![0, 3, 4]);
        assert_eq!(rec.settle_period, 1);
        // Decomposition covers every period once, in thread order.
        let decomp = rt.full().shuffle_decomposition();
        assert_eq!(decomp.len(), 20);
        assert_eq!(decomp[0], (0, 1));
        let mut per_thread: Vec<Vec<usize>> = vec![Vec::new(); 5];
        for (period, (k, pos)) in decomp.iter().enumerate() {
            per_thread[*k].push(*pos);
            let _ = period;
        }
        for positions in per_thread {
            assert!(positions.windows(2).all(|w| w[0] + 1 == w[1]));
        }
    }

    #[test]
    fn reconstruction_flattens_to_the_observed_play() {
        let spec = stitcher(2, &[0, 1]);
        let g = spec.graph().clone();
        let rt = drive(spec, 1, 8);
        let flat = rt.full().reconstruct_observed();
        assert_eq!(flat.len(), 8);
        // All actions a, states alternate Q@1, Q@0, the last signal is
        // still in flight (delay 1).
        for (r, (a, sig, v)) in flat.iter().enumerate() {
            assert_eq!(g.action_name(PlayerId(0), *a), "a");
            let expected_state = if r % 2 == 0 { "Q@1" } else { "Q@0" };
            assert_eq!(g.state_name(*v), expected_state);
            if r + 1 < 8 {
                assert_eq!(sig.map(|s| g.signal_name(PlayerId(0), s)), Some("a"));
            } else {
                assert_eq!(*sig, None);
            }
        }
    }

    #[test]
    fn immediate_delivery_reactivates_the_current_thread() {
        let g = Arc::new(match_game());
        let spec = Arc::new(
            Frankenstein::new(g, BaseStrategy::FiniteState(Arc::new(always_a())), PlayerId(0), &[0])
                .unwrap(),
        );
        let mut rt = FrankensteinRuntime::new(spec.clone()).unwrap();
        let own = rt.next_action().unwrap();
        let q = spec.graph().state_id("Q").unwrap();
        let b = spec.graph().signal_index(PlayerId(0), "a").unwrap();
        let z = ObservationSet::singleton(1, b, 0, 1);
        rt.observe(own, &z, q).unwrap();
        // Thread eps was extended and immediately refilled.
        assert!(!rt.full().threads()[0].is_pending());
        assert_eq!(rt.full().threads()[0].len(), 1);
    }

    #[test]
    fn empty_observation_leaves_threads_pending() {
        let spec = stitcher(2, &[0, 1]);
        let mut rt = FrankensteinRuntime::new(spec.clone()).unwrap();
        let own = rt.next_action().unwrap();
        let q1 = spec.graph().state_id("Q@1").unwrap();
        rt.observe(own, &ObservationSet::empty(1), q1).unwrap();
        assert!(rt.full().threads()[0].is_pending());
        assert_eq!(rt.full().period(), 1);
    }

    #[test]
    fn co_arriving_records_address_distinct_threads() {
        // Modulus 3, delays {0,2}: deliver period 1's signal (delay 2)
        // together with period 3's (delay 0) at period 3.
        let (g, layers) = unravelled_match(3);
        let spec = Arc::new(
            Frankenstein::with_layers(
                g.clone(),
                BaseStrategy::FiniteState(Arc::new(always_a())),
                PlayerId(0),
                &[0, 2],
                layers,
                3,
            )
            .unwrap(),
        );
        let mut rt = FrankensteinRuntime::new(spec).unwrap();
        let b = g.signal_index(PlayerId(0), "a").unwrap();
        let states = ["Q@1", "Q@2", "Q@0"];
        let delays = [2u32, 0, 0];
        for t in 1..=3usize {
            let own = rt.next_action().unwrap();
            let mut records = Vec::new();
            for (r, d) in delays.iter().enumerate().take(t) {
                if r + 1 + *d as usize == t {
                    records.push(ObsRecord { basic: b, delay: *d, emitted: r + 1 });
                }
            }
            let z = ObservationSet::from_records(t, records);
            if t == 3 {
                assert_eq!(z.len(), 2);
                assert_eq!(z.records()[0].emitted, 1);
                assert_eq!(z.records()[1].emitted, 3);
            }
            rt.observe(own, &z, g.state_id(states[t - 1]).unwrap()).unwrap();
        }
        rt.full().verify_threads().unwrap();
        // Both threads addressed at period 3 are now active.
        let log = rt.full().log().to_vec();
        assert!(!rt.full().threads()[log[0]].is_pending());
        assert!(!rt.full().threads()[log[2]].is_pending());
    }

    #[test]
    fn next_action_is_idempotent() {
        let spec = stitcher(2, &[0, 1]);
        let mut rt = FrankensteinRuntime::new(spec).unwrap();
        let a1 = rt.next_action().unwrap();
        let a2 = rt.next_action().unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn respond_replays_the_runtime() {
        let spec = stitcher(2, &[0, 1]);
        let g = spec.graph().clone();
        // Build the delayed-game observed history of a d=1 run and check
        // that stateless replay prescribes the same actions as the runtime.
        let rt = drive(spec.clone(), 1, 6);
        let flat = rt.full().reconstruct_observed();
        let mut oh = ObservedHistory::trivial(g.base_of(g.initial()));
        let b = g.signal_index(PlayerId(0), "a").unwrap();
        for (r, (a, _, v)) in flat.iter().enumerate() {
            let t = r + 1;
            let records: Vec<ObsRecord> = if t >= 2 {
                vec![ObsRecord { basic: b, delay: 1, emitted: t - 1 }]
            } else {
                Vec::new()
            };
            oh.push(*a, ObservationSet::from_records(t, records), g.base_of(*v));
        }
        let next = spec.respond(&g, PlayerId(0), &oh).unwrap();
        assert_eq!(g.action_name(PlayerId(0), next), "a");
        // A history that does not follow the strategy is rejected.
        let mut bad = oh.clone();
        bad.steps[0].action = g.action_index(PlayerId(0), "b").unwrap();
        assert!(matches!(
            spec.respond(&g, PlayerId(0), &bad),
            Err(StrategyError::NotFollowing(1))
        ));
    }
}
