//! Game graphs, transitions, histories and validation.
//!
//! States, actions and basic signals are opaque strings in the external
//! format and are interned to dense indices here. Every state also carries a
//! *base* state: transforms such as [`transform::unravel`] produce product
//! states whose index component must stay invisible to strategies, so the
//! observation layer only ever exposes base states.

pub mod transform;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::payoff::AggregatorKind;

/// Hard caps that keep profile codes packable and diagnostics readable.
/// All are far above desk scale.
pub const MAX_PLAYERS: usize = 8;
pub const MAX_ALPHABET: usize = 256;
pub const MAX_DELAY: u32 = 63;

/// A player, 0-based internally, displayed 1-based.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct PlayerId(pub usize);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

/// Index into [`GameGraph::state_names`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct StateId(pub u32);

/// Index into the graph's base-state table.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct BaseId(pub u32);

/// Index into one player's action alphabet.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ActionIdx(pub u32);

/// Index into one player's basic-signal alphabet.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct SignalIdx(pub u32);

/// Action and basic-signal alphabets of one player.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlayerAlphabets {
    pub actions: Vec<String>,
    pub signals: Vec<String>,
}

/// Per-player finite, nonempty sets of possible delays.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelaySpace {
    per_player: Vec<Vec<u32>>,
}

impl DelaySpace {
    /// Builds a delay space; each player's set is sorted and deduplicated.
    pub fn new(per_player: Vec<Vec<u32>>) -> Result<Self, BuildError> {
        if per_player.is_empty() {
            return Err(BuildError::NoPlayers);
        }
        let mut sets = Vec::with_capacity(per_player.len());
        for (i, mut set) in per_player.into_iter().enumerate() {
            if set.is_empty() {
                return Err(BuildError::EmptyDelaySet(PlayerId(i)));
            }
            set.sort_unstable();
            set.dedup();
            if *set.last().unwrap() > MAX_DELAY {
                return Err(BuildError::DelayTooLarge(*set.last().unwrap()));
            }
            sets.push(set);
        }
        Ok(DelaySpace { per_player: sets })
    }

    pub fn num_players(&self) -> usize {
        self.per_player.len()
    }

    pub fn player(&self, i: PlayerId) -> &[u32] {
        &self.per_player[i.0]
    }

    /// The greatest delay over all players.
    pub fn max_delay(&self) -> u32 {
        self.per_player.iter().map(|s| *s.last().unwrap()).max().unwrap()
    }

    pub fn contains(&self, profile: &[u32]) -> bool {
        profile.len() == self.per_player.len()
            && profile
                .iter()
                .zip(&self.per_player)
                .all(|(d, set)| set.binary_search(d).is_ok())
    }

    /// Number of delay profiles, i.e. the size of the product of the sets.
    pub fn profile_count(&self) -> usize {
        self.per_player.iter().map(Vec::len).product()
    }

    /// All delay profiles in lexicographic order.
    pub fn profiles(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new()];
        for set in &self.per_player {
            let mut next = Vec::with_capacity(out.len() * set.len());
            for prefix in &out {
                for d in set {
                    let mut p = prefix.clone();
                    p.push(*d);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    /// The profile of per-player minimum delays.
    pub fn min_profile(&self) -> Vec<u32> {
        self.per_player.iter().map(|s| s[0]).collect()
    }
}

/// Monitoring structure of a game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    Instant,
    Delayed(DelaySpace),
}

impl Mode {
    pub fn is_instant(&self) -> bool {
        matches!(self, Mode::Instant)
    }
}

/// One labelled edge: joint action, per-player basic signals, optionally a
/// delay profile (delayed mode only), a target and per-player stage payoffs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub source: StateId,
    pub actions: Vec<ActionIdx>,
    pub signals: Vec<SignalIdx>,
    pub delays: Option<Vec<u32>>,
    pub target: StateId,
    pub payoffs: Vec<i64>,
}

/// Packed encoding of an action profile, used as a lookup key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ProfileCode(u64);

pub fn profile_code(actions: &[ActionIdx]) -> ProfileCode {
    debug_assert!(actions.len() <= MAX_PLAYERS);
    let mut code = 0u64;
    for a in actions {
        debug_assert!((a.0 as usize) < MAX_ALPHABET);
        code = (code << 8) | (a.0 as u64 + 1);
    }
    ProfileCode(code)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("game has no players")]
    NoPlayers,
    #[error("game has no states")]
    NoStates,
    #[error("more than {MAX_PLAYERS} players")]
    TooManyPlayers,
    #[error("alphabet of player {0} exceeds {MAX_ALPHABET} entries")]
    AlphabetTooLarge(PlayerId),
    #[error("player {0} has an empty action or signal alphabet")]
    EmptyAlphabet(PlayerId),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("no initial state declared")]
    NoInitial,
    #[error("unknown action `{name}` for player {player}")]
    UnknownAction { player: PlayerId, name: String },
    #[error("unknown signal `{name}` for player {player}")]
    UnknownSignal { player: PlayerId, name: String },
    #[error("transition from `{0}` lists {1} actions, game has {2} players")]
    ProfileArity(String, usize, usize),
    #[error("transition from `{0}` lists {1} payoffs, game has {2} players")]
    PayoffArity(String, usize, usize),
    #[error("delayed-mode transition from `{0}` is missing a delay profile")]
    MissingDelays(String),
    #[error("instant-mode transition from `{0}` carries a delay profile")]
    UnexpectedDelays(String),
    #[error("delay profile {0:?} lies outside the declared delay space")]
    DelayOutOfSpace(Vec<u32>),
    #[error("player {0} has an empty delay set")]
    EmptyDelaySet(PlayerId),
    #[error("delay {0} exceeds the supported maximum {MAX_DELAY}")]
    DelayTooLarge(u32),
    #[error("state `{0}` declares base `{1}` which is not a known base name")]
    BadBase(String, String),
}

/// A violation found by [`GameGraph::validate`]. Violations are reported,
/// not thrown, so a caller can list all problems at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// No outgoing transition for a (state, action-profile) pair.
    MissingTransition { state: String, profile: Vec<String> },
    /// Instant mode, graph declared deterministic, but several transitions
    /// share a (state, action-profile) pair.
    NondeterministicInstant { state: String, profile: Vec<String>, count: usize },
    /// Delayed mode: basic signals, target or payoffs differ across delay
    /// variants of the same (state, action-profile) pair.
    DelayedAmbiguous { state: String, profile: Vec<String> },
    /// Delayed mode: some delay profile of the delay space has no variant.
    MissingDelayVariant { state: String, profile: Vec<String>, missing: Vec<u32> },
    /// Parity aggregation requires non-negative stage payoffs.
    NegativePriority { state: String, profile: Vec<String>, payoff: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingTransition { state, profile } => {
                write!(f, "state `{state}` has no transition for profile {profile:?}")
            }
            Violation::NondeterministicInstant { state, profile, count } => write!(
                f,
                "state `{state}` has {count} transitions for profile {profile:?} but the game is declared deterministic"
            ),
            Violation::DelayedAmbiguous { state, profile } => write!(
                f,
                "state `{state}`, profile {profile:?}: basic signals, target or payoffs differ across delay variants"
            ),
            Violation::MissingDelayVariant { state, profile, missing } => write!(
                f,
                "state `{state}`, profile {profile:?}: no variant for delay profile {missing:?}"
            ),
            Violation::NegativePriority { state, profile, payoff } => write!(
                f,
                "state `{state}`, profile {profile:?}: payoff {payoff} is negative but the aggregator is parity"
            ),
        }
    }
}

/// A finite labelled game graph together with its monitoring mode and the
/// name of the payoff aggregation function.
///
/// Immutable after construction; simulations share it freely.
#[derive(Clone, Debug)]
pub struct GameGraph {
    state_names: Vec<String>,
    bases: Vec<String>,
    state_base: Vec<BaseId>,
    state_index: HashMap<String, StateId>,
    base_index: HashMap<String, BaseId>,
    players: Vec<PlayerAlphabets>,
    initial: StateId,
    mode: Mode,
    aggregator: AggregatorKind,
    deterministic: bool,
    transitions: Vec<Transition>,
    outgoing: HashMap<(StateId, ProfileCode), Vec<u32>>,
}

impl GameGraph {
    pub fn builder() -> GameGraphBuilder {
        GameGraphBuilder::default()
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.state_names.len() as u32).map(StateId)
    }

    pub fn state_name(&self, v: StateId) -> &str {
        &self.state_names[v.0 as usize]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_index.get(name).copied()
    }

    pub fn base_of(&self, v: StateId) -> BaseId {
        self.state_base[v.0 as usize]
    }

    pub fn base_name(&self, b: BaseId) -> &str {
        &self.bases[b.0 as usize]
    }

    pub fn base_id(&self, name: &str) -> Option<BaseId> {
        self.base_index.get(name).copied()
    }

    pub fn num_bases(&self) -> usize {
        self.bases.len()
    }

    /// True when some state is a proper product state (base differs from the
    /// state itself).
    pub fn has_nontrivial_bases(&self) -> bool {
        self.state_names.len() != self.bases.len()
            || self
                .states()
                .any(|v| self.state_name(v) != self.base_name(self.base_of(v)))
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn delay_space(&self) -> Option<&DelaySpace> {
        match &self.mode {
            Mode::Instant => None,
            Mode::Delayed(d) => Some(d),
        }
    }

    pub fn aggregator(&self) -> AggregatorKind {
        self.aggregator
    }

    pub fn deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn player(&self, i: PlayerId) -> &PlayerAlphabets {
        &self.players[i.0]
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> {
        (0..self.players.len()).map(PlayerId)
    }

    pub fn action_name(&self, i: PlayerId, a: ActionIdx) -> &str {
        &self.players[i.0].actions[a.0 as usize]
    }

    pub fn action_index(&self, i: PlayerId, name: &str) -> Option<ActionIdx> {
        self.players[i.0]
            .actions
            .iter()
            .position(|n| n == name)
            .map(|p| ActionIdx(p as u32))
    }

    pub fn signal_name(&self, i: PlayerId, s: SignalIdx) -> &str {
        &self.players[i.0].signals[s.0 as usize]
    }

    pub fn signal_index(&self, i: PlayerId, name: &str) -> Option<SignalIdx> {
        self.players[i.0]
            .signals
            .iter()
            .position(|n| n == name)
            .map(|p| SignalIdx(p as u32))
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn transition(&self, id: u32) -> &Transition {
        &self.transitions[id as usize]
    }

    /// Ids of transitions leaving `v` under the joint action `profile`.
    pub fn outgoing(&self, v: StateId, profile: &[ActionIdx]) -> &[u32] {
        self.outgoing
            .get(&(v, profile_code(profile)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All joint action profiles, lexicographic in per-player indices.
    pub fn action_profiles(&self) -> Vec<Vec<ActionIdx>> {
        let mut out = vec![Vec::new()];
        for p in &self.players {
            let mut next = Vec::with_capacity(out.len() * p.actions.len());
            for prefix in &out {
                for a in 0..p.actions.len() as u32 {
                    let mut q = prefix.clone();
                    q.push(ActionIdx(a));
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }

    /// The basic data of a (state, action-profile) pair: basic signals,
    /// target and payoffs. `None` if there is no outgoing transition, an
    /// error if the pair is ambiguous (several distinct basic variants).
    pub fn basics_for(
        &self,
        v: StateId,
        profile: &[ActionIdx],
    ) -> Result<Option<(Vec<SignalIdx>, StateId, Vec<i64>)>, Violation> {
        let tids = self.outgoing(v, profile);
        let Some(first) = tids.first() else {
            return Ok(None);
        };
        let t0 = self.transition(*first);
        let key = (t0.signals.clone(), t0.target, t0.payoffs.clone());
        for tid in &tids[1..] {
            let t = self.transition(*tid);
            if (t.signals.clone(), t.target, t.payoffs.clone()) != key {
                return Err(Violation::DelayedAmbiguous {
                    state: self.state_name(v).to_string(),
                    profile: self.profile_names(profile),
                });
            }
        }
        Ok(Some(key))
    }

    /// The unique transition for `(v, profile, delays)` in a delayed graph.
    pub fn resolve_delayed(&self, v: StateId, profile: &[ActionIdx], delays: &[u32]) -> Option<u32> {
        self.outgoing(v, profile)
            .iter()
            .copied()
            .find(|tid| self.transition(*tid).delays.as_deref() == Some(delays))
    }

    fn profile_names(&self, profile: &[ActionIdx]) -> Vec<String> {
        profile
            .iter()
            .enumerate()
            .map(|(i, a)| self.action_name(PlayerId(i), *a).to_string())
            .collect()
    }

    /// Checks totality, determinism and delay-variant completeness and
    /// returns all violations found. An empty result means the graph is a
    /// well-formed game.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let space = self.delay_space().cloned();
        for v in self.states() {
            for profile in self.action_profiles() {
                let tids = self.outgoing(v, &profile);
                if tids.is_empty() {
                    out.push(Violation::MissingTransition {
                        state: self.state_name(v).to_string(),
                        profile: self.profile_names(&profile),
                    });
                    continue;
                }
                match &space {
                    None => {
                        if self.deterministic && tids.len() > 1 {
                            out.push(Violation::NondeterministicInstant {
                                state: self.state_name(v).to_string(),
                                profile: self.profile_names(&profile),
                                count: tids.len(),
                            });
                        }
                    }
                    Some(space) => {
                        if let Err(v) = self.basics_for(v, &profile) {
                            out.push(v);
                        }
                        let mut seen: Vec<&[u32]> =
                            tids.iter().filter_map(|t| self.transition(*t).delays.as_deref()).collect();
                        seen.sort_unstable();
                        seen.dedup();
                        for d in space.profiles() {
                            if !seen.contains(&d.as_slice()) {
                                out.push(Violation::MissingDelayVariant {
                                    state: self.state_name(v).to_string(),
                                    profile: self.profile_names(&profile),
                                    missing: d,
                                });
                            }
                        }
                    }
                }
                if self.aggregator == AggregatorKind::Parity {
                    for tid in tids {
                        if let Some(p) = self.transition(*tid).payoffs.iter().find(|p| **p < 0) {
                            out.push(Violation::NegativePriority {
                                state: self.state_name(v).to_string(),
                                profile: self.profile_names(&profile),
                                payoff: *p,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Greatest absolute stage payoff in the graph; 0 for an empty graph.
    pub fn max_abs_payoff(&self) -> i64 {
        self.transitions
            .iter()
            .flat_map(|t| t.payoffs.iter())
            .map(|p| p.abs())
            .max()
            .unwrap_or(0)
    }
}

/// Raw transition as fed to the builder, by names.
#[derive(Clone, Debug)]
struct RawTransition {
    from: String,
    actions: Vec<String>,
    signals: Vec<String>,
    delays: Option<Vec<u32>>,
    to: String,
    payoffs: Vec<i64>,
}

/// Incremental constructor for [`GameGraph`]. All mutation happens here,
/// single-threaded, before validation.
#[derive(Default)]
pub struct GameGraphBuilder {
    states: Vec<String>,
    players: Vec<PlayerAlphabets>,
    initial: Option<String>,
    mode: Option<Mode>,
    aggregator: Option<AggregatorKind>,
    deterministic: bool,
    transitions: Vec<RawTransition>,
    state_bases: BTreeMap<String, String>,
}

impl GameGraphBuilder {
    pub fn state(mut self, name: &str) -> Self {
        self.states.push(name.to_string());
        self
    }

    pub fn states<'a>(mut self, names: impl IntoIterator<Item = &'a str>) -> Self {
        self.states.extend(names.into_iter().map(str::to_string));
        self
    }

    pub fn player<'a>(
        mut self,
        actions: impl IntoIterator<Item = &'a str>,
        signals: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        self.players.push(PlayerAlphabets {
            actions: actions.into_iter().map(str::to_string).collect(),
            signals: signals.into_iter().map(str::to_string).collect(),
        });
        self
    }

    pub fn initial(mut self, name: &str) -> Self {
        self.initial = Some(name.to_string());
        self
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = Some(mode);
        self
    }

    pub fn aggregator(mut self, agg: AggregatorKind) -> Self {
        self.aggregator = Some(agg);
        self
    }

    pub fn deterministic(mut self, flag: bool) -> Self {
        self.deterministic = flag;
        self
    }

    /// Declares a product state's projection back to its base state.
    pub fn state_base(mut self, state: &str, base: &str) -> Self {
        self.state_bases.insert(state.to_string(), base.to_string());
        self
    }

    pub fn transition(
        mut self,
        from: &str,
        actions: &[&str],
        signals: &[&str],
        to: &str,
        payoffs: &[i64],
    ) -> Self {
        self.transitions.push(RawTransition {
            from: from.to_string(),
            actions: actions.iter().map(|s| s.to_string()).collect(),
            signals: signals.iter().map(|s| s.to_string()).collect(),
            delays: None,
            to: to.to_string(),
            payoffs: payoffs.to_vec(),
        });
        self
    }

    pub fn delayed_transition(
        mut self,
        from: &str,
        actions: &[&str],
        signals: &[&str],
        delays: &[u32],
        to: &str,
        payoffs: &[i64],
    ) -> Self {
        self.transitions.push(RawTransition {
            from: from.to_string(),
            actions: actions.iter().map(|s| s.to_string()).collect(),
            signals: signals.iter().map(|s| s.to_string()).collect(),
            delays: Some(delays.to_vec()),
            to: to.to_string(),
            payoffs: payoffs.to_vec(),
        });
        self
    }

    /// Interns everything and checks structural well-formedness. Semantic
    /// problems (missing transitions, ambiguity) are left to
    /// [`GameGraph::validate`].
    pub fn build(self) -> Result<GameGraph, BuildError> {
        if self.players.is_empty() {
            return Err(BuildError::NoPlayers);
        }
        if self.players.len() > MAX_PLAYERS {
            return Err(BuildError::TooManyPlayers);
        }
        for (i, p) in self.players.iter().enumerate() {
            if p.actions.is_empty() || p.signals.is_empty() {
                return Err(BuildError::EmptyAlphabet(PlayerId(i)));
            }
            if p.actions.len() > MAX_ALPHABET || p.signals.len() > MAX_ALPHABET {
                return Err(BuildError::AlphabetTooLarge(PlayerId(i)));
            }
        }
        if self.states.is_empty() {
            return Err(BuildError::NoStates);
        }
        let mut state_index = HashMap::new();
        for (i, name) in self.states.iter().enumerate() {
            if state_index.insert(name.clone(), StateId(i as u32)).is_some() {
                return Err(BuildError::DuplicateState(name.clone()));
            }
        }
        // Base table in order of first appearance over the state list.
        let mut bases: Vec<String> = Vec::new();
        let mut base_index: HashMap<String, BaseId> = HashMap::new();
        let mut state_base = Vec::with_capacity(self.states.len());
        for name in &self.states {
            let base = self.state_bases.get(name).unwrap_or(name).clone();
            let id = *base_index.entry(base.clone()).or_insert_with(|| {
                bases.push(base.clone());
                BaseId(bases.len() as u32 - 1)
            });
            state_base.push(id);
        }
        for (state, base) in &self.state_bases {
            if !state_index.contains_key(state) {
                return Err(BuildError::UnknownState(state.clone()));
            }
            if !base_index.contains_key(base) {
                return Err(BuildError::BadBase(state.clone(), base.clone()));
            }
        }
        let initial_name = self.initial.ok_or(BuildError::NoInitial)?;
        let initial = *state_index
            .get(&initial_name)
            .ok_or_else(|| BuildError::UnknownState(initial_name.clone()))?;
        let mode = self.mode.unwrap_or(Mode::Instant);
        if let Mode::Delayed(space) = &mode {
            if space.num_players() != self.players.len() {
                return Err(BuildError::NoPlayers);
            }
        }
        let n = self.players.len();
        let mut transitions = Vec::with_capacity(self.transitions.len());
        let mut outgoing: HashMap<(StateId, ProfileCode), Vec<u32>> = HashMap::new();
        for raw in self.transitions {
            let source = *state_index
                .get(&raw.from)
                .ok_or_else(|| BuildError::UnknownState(raw.from.clone()))?;
            let target = *state_index
                .get(&raw.to)
                .ok_or_else(|| BuildError::UnknownState(raw.to.clone()))?;
            if raw.actions.len() != n || raw.signals.len() != n {
                return Err(BuildError::ProfileArity(raw.from.clone(), raw.actions.len(), n));
            }
            if raw.payoffs.len() != n {
                return Err(BuildError::PayoffArity(raw.from.clone(), raw.payoffs.len(), n));
            }
            let mut actions = Vec::with_capacity(n);
            let mut signals = Vec::with_capacity(n);
            for (i, (a, s)) in raw.actions.iter().zip(&raw.signals).enumerate() {
                let player = PlayerId(i);
                let ai = self.players[i]
                    .actions
                    .iter()
                    .position(|x| x == a)
                    .ok_or_else(|| BuildError::UnknownAction { player, name: a.clone() })?;
                let si = self.players[i]
                    .signals
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| BuildError::UnknownSignal { player, name: s.clone() })?;
                actions.push(ActionIdx(ai as u32));
                signals.push(SignalIdx(si as u32));
            }
            let delays = match (&mode, raw.delays) {
                (Mode::Instant, None) => None,
                (Mode::Instant, Some(_)) => return Err(BuildError::UnexpectedDelays(raw.from)),
                (Mode::Delayed(_), None) => return Err(BuildError::MissingDelays(raw.from)),
                (Mode::Delayed(space), Some(d)) => {
                    if !space.contains(&d) {
                        return Err(BuildError::DelayOutOfSpace(d));
                    }
                    Some(d)
                }
            };
            let t = Transition { source, actions, signals, delays, target, payoffs: raw.payoffs };
            // Drop exact duplicates; transitions form a set.
            if transitions.contains(&t) {
                continue;
            }
            let tid = transitions.len() as u32;
            outgoing.entry((source, profile_code(&t.actions))).or_default().push(tid);
            transitions.push(t);
        }
        Ok(GameGraph {
            state_names: self.states,
            bases,
            state_base,
            state_index,
            base_index,
            players: self.players,
            initial,
            mode,
            aggregator: self.aggregator.unwrap_or(AggregatorKind::MeanPayoff),
            deterministic: self.deterministic,
            transitions,
            outgoing,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("transition source `{0}` does not match the current state `{1}`")]
    Discontinuous(String, String),
}

/// A finite prefix of a play: the interleaved sequence
/// `v0, a1, y1, v1, ..., at, yt, vt`, stored as transition ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History {
    initial: StateId,
    current: StateId,
    steps: Vec<u32>,
}

impl History {
    pub fn new(g: &GameGraph) -> Self {
        History { initial: g.initial(), current: g.initial(), steps: Vec::new() }
    }

    pub fn from_state(v: StateId) -> Self {
        History { initial: v, current: v, steps: Vec::new() }
    }

    /// Number of stages played.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn initial_state(&self) -> StateId {
        self.initial
    }

    pub fn current_state(&self) -> StateId {
        self.current
    }

    /// Appends one stage; the transition must leave the current state.
    pub fn push(&mut self, g: &GameGraph, tid: u32) -> Result<(), HistoryError> {
        let t = g.transition(tid);
        if t.source != self.current {
            return Err(HistoryError::Discontinuous(
                g.state_name(t.source).to_string(),
                g.state_name(self.current).to_string(),
            ));
        }
        self.current = t.target;
        self.steps.push(tid);
        Ok(())
    }

    /// Transition id of stage `r`, 1-based.
    pub fn step(&self, r: usize) -> u32 {
        self.steps[r - 1]
    }

    /// State after stage `r`; `r = 0` is the initial state.
    pub fn state_at(&self, g: &GameGraph, r: usize) -> StateId {
        if r == 0 {
            self.initial
        } else {
            g.transition(self.steps[r - 1]).target
        }
    }

    /// Stage payoffs of one player along the history.
    pub fn payoff_stream(&self, g: &GameGraph, i: PlayerId) -> Vec<i64> {
        self.steps.iter().map(|tid| g.transition(*tid).payoffs[i.0]).collect()
    }
}
