//! Strategies, finite-state strategy automata and Nature's delay schedulers.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{ActionIdx, BaseId, DelaySpace, GameGraph, PlayerId, SignalIdx};
use crate::monitoring::{all_letters, ObservationSet, ObservedHistory};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StrategyError {
    #[error("output undefined for memory `{mem}` at state `{state}`")]
    OutputUndefined { mem: String, state: String },
    #[error("update undefined for memory `{mem}`, action `{action}`, observation {observation:?}, state `{state}`")]
    UpdateUndefined { mem: String, action: String, observation: Vec<(String, u32)>, state: String },
    #[error("strategy refers to unknown name `{0}`")]
    UnknownName(String),
    #[error("observed history does not follow this strategy at period {0}")]
    NotFollowing(usize),
    #[error("strategy is undefined on the given observed history: {0}")]
    Undefined(String),
}

/// A strategy maps a player's observed history to their next action.
/// Strategies may be partial; querying one outside its domain is an error,
/// never a silent default.
pub trait Strategy: Send + Sync {
    fn respond(
        &self,
        g: &GameGraph,
        player: PlayerId,
        oh: &ObservedHistory,
    ) -> Result<ActionIdx, StrategyError>;
}

/// How a finite-state strategy advances its memory on one observed step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UpdateRule {
    /// Memory never changes (memoryless strategies).
    Stay,
    /// Memory cycles through `0..n` regardless of the input.
    Cycle,
    /// Explicit table keyed by (memory, own action, observation letter,
    /// base state), all by name.
    Table(HashMap<UpdateKey, String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UpdateKey {
    pub mem: String,
    pub action: String,
    /// Canonical letter: (basic signal, delay) pairs ordered by descending
    /// delay, i.e. ascending emission period.
    pub observation: Vec<(String, u32)>,
    pub state: String,
}

/// How a finite-state strategy picks an action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutputRule {
    /// Keyed by (memory, current base state), by name.
    ByState(HashMap<(String, String), String>),
    /// One action per memory state, ignoring the current state.
    ByMemory(Vec<String>),
}

/// A finite transducer from observed histories to actions: a finite memory
/// set, an update function over (action, observation, state) triples and an
/// output function over (memory, current state).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteStateStrategy {
    pub mem_names: Vec<String>,
    pub init: usize,
    pub update: UpdateRule,
    pub output: OutputRule,
}

impl FiniteStateStrategy {
    /// A one-memory strategy given by a base-state-to-action map.
    pub fn memoryless(map: impl IntoIterator<Item = (String, String)>) -> Self {
        let output = map.into_iter().map(|(s, a)| (("m".to_string(), s), a)).collect();
        FiniteStateStrategy {
            mem_names: vec!["m".to_string()],
            init: 0,
            update: UpdateRule::Stay,
            output: OutputRule::ByState(output),
        }
    }

    /// Plays the given actions cyclically, ignoring all observations.
    pub fn cyclic(actions: Vec<String>) -> Self {
        let n = actions.len().max(1);
        FiniteStateStrategy {
            mem_names: (0..n).map(|i| format!("t{i}")).collect(),
            init: 0,
            update: UpdateRule::Cycle,
            output: OutputRule::ByMemory(actions),
        }
    }

    pub fn num_memories(&self) -> usize {
        self.mem_names.len()
    }

    /// Resolves all names against a graph and player, yielding the
    /// index-keyed form used by simulation.
    pub fn compile(&self, g: &GameGraph, player: PlayerId) -> Result<CompiledStrategy, StrategyError> {
        let mem_of = |name: &str| {
            self.mem_names
                .iter()
                .position(|m| m == name)
                .ok_or_else(|| StrategyError::UnknownName(name.to_string()))
        };
        let update = match &self.update {
            UpdateRule::Stay => UpdateLookup::Stay,
            UpdateRule::Cycle => UpdateLookup::Cycle(self.mem_names.len()),
            UpdateRule::Table(table) => {
                let mut compiled = HashMap::with_capacity(table.len());
                for (key, to) in table {
                    let mem = mem_of(&key.mem)?;
                    let action = g
                        .action_index(player, &key.action)
                        .ok_or_else(|| StrategyError::UnknownName(key.action.clone()))?;
                    let mut letter = Vec::with_capacity(key.observation.len());
                    for (sig, delay) in &key.observation {
                        let s = g
                            .signal_index(player, sig)
                            .ok_or_else(|| StrategyError::UnknownName(sig.clone()))?;
                        letter.push((s.0, *delay));
                    }
                    let state = g
                        .base_id(&key.state)
                        .ok_or_else(|| StrategyError::UnknownName(key.state.clone()))?;
                    compiled.insert((mem, action.0, letter, state.0), mem_of(to)?);
                }
                UpdateLookup::Table(compiled)
            }
        };
        let output = match &self.output {
            OutputRule::ByState(table) => {
                let mut compiled = HashMap::with_capacity(table.len());
                for ((mem, state), action) in table {
                    let m = mem_of(mem)?;
                    let s = g
                        .base_id(state)
                        .ok_or_else(|| StrategyError::UnknownName(state.clone()))?;
                    let a = g
                        .action_index(player, action)
                        .ok_or_else(|| StrategyError::UnknownName(action.clone()))?;
                    compiled.insert((m, s.0), a);
                }
                OutputLookup::ByState(compiled)
            }
            OutputRule::ByMemory(actions) => {
                let mut compiled = Vec::with_capacity(actions.len());
                for action in actions {
                    compiled.push(
                        g.action_index(player, action)
                            .ok_or_else(|| StrategyError::UnknownName(action.clone()))?,
                    );
                }
                OutputLookup::ByMemory(compiled)
            }
        };
        Ok(CompiledStrategy {
            mem_names: self.mem_names.clone(),
            init: self.init,
            update,
            output,
        })
    }

    /// Totality check against the declared alphabets of a game: the update
    /// table must cover every (memory, action, letter, base) combination and
    /// the output table every (memory, base).
    pub fn validate_total(&self, g: &GameGraph, player: PlayerId) -> Vec<String> {
        let mut problems = Vec::new();
        let letters = all_letters(g, player);
        let actions = &g.player(player).actions;
        let bases: Vec<&str> = (0..g.num_bases() as u32)
            .map(|b| g.base_name(BaseId(b)))
            .collect();
        if let UpdateRule::Table(table) = &self.update {
            for mem in &self.mem_names {
                for action in actions {
                    for letter in &letters {
                        let named: Vec<(String, u32)> = letter
                            .iter()
                            .map(|(s, d)| (g.signal_name(player, *s).to_string(), *d))
                            .collect();
                        for base in &bases {
                            let key = UpdateKey {
                                mem: mem.clone(),
                                action: action.clone(),
                                observation: named.clone(),
                                state: base.to_string(),
                            };
                            if !table.contains_key(&key) {
                                problems.push(format!(
                                    "update missing: memory `{mem}`, action `{action}`, observation {named:?}, state `{base}`"
                                ));
                            }
                        }
                    }
                }
            }
        }
        if let OutputRule::ByState(table) = &self.output {
            for mem in &self.mem_names {
                for base in &bases {
                    if !table.contains_key(&(mem.clone(), base.to_string())) {
                        problems.push(format!("output missing: memory `{mem}`, state `{base}`"));
                    }
                }
            }
        }
        problems
    }
}

impl Strategy for FiniteStateStrategy {
    /// Folds the update function over the observed history from the initial
    /// memory, then applies the output function at the final state.
    fn respond(
        &self,
        g: &GameGraph,
        player: PlayerId,
        oh: &ObservedHistory,
    ) -> Result<ActionIdx, StrategyError> {
        let compiled = self.compile(g, player)?;
        let mut mem = compiled.init;
        for step in &oh.steps {
            mem = compiled.step(mem, step.action, &step.observation, step.state)?;
        }
        compiled.output(mem, oh.last_state())
    }
}

enum UpdateLookup {
    Stay,
    Cycle(usize),
    Table(HashMap<(usize, u32, Vec<(u32, u32)>, u32), usize>),
}

impl Clone for UpdateLookup {
    fn clone(&self) -> Self {
        match self {
            UpdateLookup::Stay => UpdateLookup::Stay,
            UpdateLookup::Cycle(n) => UpdateLookup::Cycle(*n),
            UpdateLookup::Table(t) => UpdateLookup::Table(t.clone()),
        }
    }
}

#[derive(Clone)]
enum OutputLookup {
    ByState(HashMap<(usize, u32), ActionIdx>),
    ByMemory(Vec<ActionIdx>),
}

/// Index-keyed form of a [`FiniteStateStrategy`], bound to one graph and
/// player.
#[derive(Clone)]
pub struct CompiledStrategy {
    mem_names: Vec<String>,
    init: usize,
    update: UpdateLookup,
    output: OutputLookup,
}

impl CompiledStrategy {
    pub fn init(&self) -> usize {
        self.init
    }

    pub fn step(
        &self,
        mem: usize,
        action: ActionIdx,
        observation: &ObservationSet,
        state: BaseId,
    ) -> Result<usize, StrategyError> {
        match &self.update {
            UpdateLookup::Stay => Ok(mem),
            UpdateLookup::Cycle(n) => Ok((mem + 1) % n),
            UpdateLookup::Table(table) => {
                let letter: Vec<(u32, u32)> =
                    observation.letter().iter().map(|(s, d)| (s.0, *d)).collect();
                table
                    .get(&(mem, action.0, letter.clone(), state.0))
                    .copied()
                    .ok_or_else(|| StrategyError::UpdateUndefined {
                        mem: self.mem_names[mem].clone(),
                        action: format!("#{}", action.0),
                        observation: letter.iter().map(|(s, d)| (format!("#{s}"), *d)).collect(),
                        state: format!("#{}", state.0),
                    })
            }
        }
    }

    pub fn output(&self, mem: usize, state: BaseId) -> Result<ActionIdx, StrategyError> {
        match &self.output {
            OutputLookup::ByState(table) => {
                table.get(&(mem, state.0)).copied().ok_or_else(|| StrategyError::OutputUndefined {
                    mem: self.mem_names[mem].clone(),
                    state: format!("#{}", state.0),
                })
            }
            OutputLookup::ByMemory(actions) => Ok(actions[mem]),
        }
    }
}

/// Incremental cursor over a finite-state strategy; observationally
/// equivalent to replaying [`FiniteStateStrategy::respond`] on the growing
/// observed history.
#[derive(Clone)]
pub struct FsCursor {
    compiled: CompiledStrategy,
    mem: usize,
    state: BaseId,
}

impl FsCursor {
    pub fn new(
        fs: &FiniteStateStrategy,
        g: &GameGraph,
        player: PlayerId,
        initial: BaseId,
    ) -> Result<Self, StrategyError> {
        let compiled = fs.compile(g, player)?;
        let mem = compiled.init();
        Ok(FsCursor { compiled, mem, state: initial })
    }

    pub fn next_action(&self) -> Result<ActionIdx, StrategyError> {
        self.compiled.output(self.mem, self.state)
    }

    pub fn observe(
        &mut self,
        own: ActionIdx,
        obs: &ObservationSet,
        state: BaseId,
    ) -> Result<(), StrategyError> {
        self.mem = self.compiled.step(self.mem, own, obs, state)?;
        self.state = state;
        Ok(())
    }

    pub fn memory(&self) -> usize {
        self.mem
    }

    pub fn fingerprint(&self, out: &mut Vec<u64>) {
        out.push(self.mem as u64);
    }
}

/// One entry of a strategy profile.
#[derive(Clone)]
pub enum PlayerStrategy {
    FiniteState(Arc<FiniteStateStrategy>),
    Frankenstein(Arc<crate::frankenstein::Frankenstein>),
    Opaque(Arc<dyn Strategy>),
}

impl std::fmt::Debug for PlayerStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlayerStrategy::FiniteState(fs) => {
                write!(f, "FiniteState({} memories)", fs.num_memories())
            }
            PlayerStrategy::Frankenstein(spec) => write!(f, "{spec:?}"),
            PlayerStrategy::Opaque(_) => write!(f, "Opaque"),
        }
    }
}

impl PlayerStrategy {
    pub fn finite_state(fs: FiniteStateStrategy) -> Self {
        PlayerStrategy::FiniteState(Arc::new(fs))
    }
}

/// One strategy per player.
#[derive(Clone, Debug)]
pub struct StrategyProfile {
    pub players: Vec<PlayerStrategy>,
}

impl StrategyProfile {
    pub fn finite_state(list: Vec<FiniteStateStrategy>) -> Self {
        StrategyProfile { players: list.into_iter().map(PlayerStrategy::finite_state).collect() }
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    /// Replaces one player's strategy, keeping the others.
    pub fn with_player(&self, i: PlayerId, s: PlayerStrategy) -> Self {
        let mut players = self.players.clone();
        players[i.0] = s;
        StrategyProfile { players }
    }
}

/// All memoryless strategies of one player: every map from base states to
/// actions, enumerated in a fixed order.
pub fn enumerate_memoryless(g: &GameGraph, player: PlayerId) -> Vec<FiniteStateStrategy> {
    let bases: Vec<String> = (0..g.num_bases() as u32)
        .map(|b| g.base_name(BaseId(b)).to_string())
        .collect();
    let actions = &g.player(player).actions;
    let count = actions.len().pow(bases.len() as u32);
    let mut out = Vec::with_capacity(count);
    for code in 0..count {
        let mut c = code;
        let mut map = Vec::with_capacity(bases.len());
        for base in &bases {
            map.push((base.clone(), actions[c % actions.len()].clone()));
            c /= actions.len();
        }
        out.push(FiniteStateStrategy::memoryless(map));
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("fixed delay profile {0:?} lies outside the delay space")]
    FixedOutOfSpace(Vec<u32>),
    #[error("explicit delay list entry {0:?} lies outside the delay space")]
    ExplicitOutOfSpace(Vec<u32>),
    #[error("explicit delay list exhausted at period {0}")]
    Exhausted(usize),
    #[error("enumerating {count} schedulers exceeds the budget of {budget}")]
    BudgetExceeded { count: u128, budget: usize },
}

/// Description of how Nature picks delay profiles, one per period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchedulerSpec {
    /// The same delay profile every period.
    Fixed(Vec<u32>),
    /// Each player's delay set cycled in sorted order.
    RoundRobin,
    /// Uniform draws from a seeded generator (ChaCha8, stable across
    /// platforms), reproducible from the seed.
    Seeded(u64),
    /// A finite list of delay profiles; running past its end is an error.
    Explicit(Vec<Vec<u32>>),
    /// A finite list followed by another scheduler.
    Chain { prefix: Vec<Vec<u32>>, then: Box<SchedulerSpec> },
}

impl SchedulerSpec {
    pub fn describe(&self) -> String {
        match self {
            SchedulerSpec::Fixed(d) => format!(
                "fixed:{}",
                d.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
            ),
            SchedulerSpec::RoundRobin => "rr".to_string(),
            SchedulerSpec::Seeded(seed) => format!("seed:{seed}"),
            SchedulerSpec::Explicit(list) => format!("explicit[{}]", list.len()),
            SchedulerSpec::Chain { prefix, then } => {
                format!("prefix[{}]+{}", prefix.len(), then.describe())
            }
        }
    }

    pub fn instantiate(&self, space: &DelaySpace) -> Result<SchedulerState, SchedulerError> {
        let kind = self.instantiate_kind(space)?;
        Ok(SchedulerState { space: space.clone(), kind })
    }

    fn instantiate_kind(&self, space: &DelaySpace) -> Result<KindState, SchedulerError> {
        match self {
            SchedulerSpec::Fixed(d) => {
                if !space.contains(d) {
                    return Err(SchedulerError::FixedOutOfSpace(d.clone()));
                }
                Ok(KindState::Fixed(d.clone()))
            }
            SchedulerSpec::RoundRobin => Ok(KindState::RoundRobin),
            SchedulerSpec::Seeded(seed) => Ok(KindState::Seeded(ChaCha8Rng::seed_from_u64(*seed))),
            SchedulerSpec::Explicit(list) => {
                for d in list {
                    if !space.contains(d) {
                        return Err(SchedulerError::ExplicitOutOfSpace(d.clone()));
                    }
                }
                Ok(KindState::Explicit { list: list.clone(), pos: 0 })
            }
            SchedulerSpec::Chain { prefix, then } => {
                for d in prefix {
                    if !space.contains(d) {
                        return Err(SchedulerError::ExplicitOutOfSpace(d.clone()));
                    }
                }
                Ok(KindState::Chain {
                    prefix: prefix.clone(),
                    pos: 0,
                    then: Box::new(then.instantiate_kind(space)?),
                })
            }
        }
    }
}

#[derive(Clone)]
enum KindState {
    Fixed(Vec<u32>),
    RoundRobin,
    Seeded(ChaCha8Rng),
    Explicit { list: Vec<Vec<u32>>, pos: usize },
    Chain { prefix: Vec<Vec<u32>>, pos: usize, then: Box<KindState> },
}

/// A scheduler instantiated for one run.
#[derive(Clone)]
pub struct SchedulerState {
    space: DelaySpace,
    kind: KindState,
}

impl SchedulerState {
    /// The delay profile Nature attaches to the signals emitted in period
    /// `t` (1-based). The emitted basic signals are provided for interface
    /// completeness; none of the built-in schedulers read them.
    pub fn next_delays(&mut self, t: usize, emitted: &[SignalIdx]) -> Result<Vec<u32>, SchedulerError> {
        let profile = Self::next_of(&mut self.kind, &self.space, t, emitted)?;
        debug_assert!(self.space.contains(&profile));
        Ok(profile)
    }

    fn next_of(
        kind: &mut KindState,
        space: &DelaySpace,
        t: usize,
        emitted: &[SignalIdx],
    ) -> Result<Vec<u32>, SchedulerError> {
        match kind {
            KindState::Fixed(d) => Ok(d.clone()),
            KindState::RoundRobin => Ok((0..space.num_players())
                .map(|i| {
                    let set = space.player(PlayerId(i));
                    set[(t - 1) % set.len()]
                })
                .collect()),
            KindState::Seeded(rng) => Ok((0..space.num_players())
                .map(|i| {
                    let set = space.player(PlayerId(i));
                    set[rng.gen_range(0..set.len())]
                })
                .collect()),
            KindState::Explicit { list, pos } => {
                if *pos >= list.len() {
                    return Err(SchedulerError::Exhausted(t));
                }
                *pos += 1;
                Ok(list[*pos - 1].clone())
            }
            KindState::Chain { prefix, pos, then } => {
                if *pos < prefix.len() {
                    *pos += 1;
                    Ok(prefix[*pos - 1].clone())
                } else {
                    Self::next_of(then, space, t, emitted)
                }
            }
        }
    }

    /// Encodes the scheduler's state after period `t` for configuration
    /// fingerprints. A seeded generator encodes its stream position, which
    /// never repeats, so runs driven by it never report a lasso.
    pub fn fingerprint(&self, t: usize, out: &mut Vec<u64>) {
        Self::fingerprint_of(&self.kind, &self.space, t, out);
    }

    fn fingerprint_of(kind: &KindState, space: &DelaySpace, t: usize, out: &mut Vec<u64>) {
        match kind {
            KindState::Fixed(_) => out.push(0),
            KindState::RoundRobin => {
                out.push(1);
                for i in 0..space.num_players() {
                    let len = space.player(PlayerId(i)).len();
                    out.push((t % len) as u64);
                }
            }
            KindState::Seeded(rng) => {
                let pos = rng.get_word_pos();
                out.push(2);
                out.push(pos as u64);
                out.push((pos >> 64) as u64);
            }
            KindState::Explicit { pos, .. } => {
                out.push(3);
                out.push(*pos as u64);
            }
            KindState::Chain { prefix, pos, then } => {
                if *pos < prefix.len() {
                    out.push(4);
                    out.push(*pos as u64);
                } else {
                    out.push(5);
                    Self::fingerprint_of(then, space, t, out);
                }
            }
        }
    }
}

/// Enumerates every explicit delay-profile sequence of the given horizon in
/// lexicographic order, for exhaustive adversary batteries. Errors when the
/// count exceeds the budget.
pub fn enumerate_schedulers(
    space: &DelaySpace,
    horizon: usize,
    budget: usize,
) -> Result<SchedulerEnumeration, SchedulerError> {
    let per_period = space.profile_count() as u128;
    let mut count: u128 = 1;
    for _ in 0..horizon {
        count = count.checked_mul(per_period).ok_or(SchedulerError::BudgetExceeded {
            count: u128::MAX,
            budget,
        })?;
        if count > budget as u128 {
            return Err(SchedulerError::BudgetExceeded { count, budget });
        }
    }
    Ok(SchedulerEnumeration {
        profiles: space.profiles(),
        horizon,
        count: count as usize,
        next: 0,
    })
}

pub struct SchedulerEnumeration {
    profiles: Vec<Vec<u32>>,
    horizon: usize,
    count: usize,
    next: usize,
}

impl SchedulerEnumeration {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

impl Iterator for SchedulerEnumeration {
    type Item = Vec<Vec<u32>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let mut code = self.next;
        self.next += 1;
        // Most-significant digit first keeps the enumeration lexicographic.
        let base = self.profiles.len();
        let mut seq = vec![Vec::new(); self.horizon];
        for k in (0..self.horizon).rev() {
            seq[k] = self.profiles[code % base].clone();
            code /= base;
        }
        Some(seq)
    }
}
