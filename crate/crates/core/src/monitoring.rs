//! Observation functions for instant and delayed monitoring.
//!
//! A player always sees the current (base) state and their own action; the
//! private basic signal emitted in period `r` with delay `d` is seen in
//! period `r + d`. Observation sets carry the emission period explicitly so
//! that co-arriving records stay distinguishable.

use thiserror::Error;

use crate::game::{ActionIdx, BaseId, GameGraph, History, Mode, PlayerId, SignalIdx};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitoringError {
    #[error("observation of an empty history (no stage played yet)")]
    EmptyHistory,
    #[error("observation function does not match the graph's monitoring mode")]
    WrongMode,
}

/// One delivered signal record: the basic signal, the delay Nature attached
/// to it, and the period it was emitted in. Within an observation set at
/// period `t`, every record satisfies `emitted + delay == t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ObsRecord {
    pub basic: SignalIdx,
    pub delay: u32,
    pub emitted: usize,
}

/// The set of signal records delivered to one player in one period, ordered
/// by ascending emission period (equivalently, descending delay).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ObservationSet {
    period: usize,
    records: Vec<ObsRecord>,
}

impl ObservationSet {
    pub fn empty(period: usize) -> Self {
        ObservationSet { period, records: Vec::new() }
    }

    pub fn singleton(period: usize, basic: SignalIdx, delay: u32, emitted: usize) -> Self {
        debug_assert_eq!(emitted + delay as usize, period);
        ObservationSet { period, records: vec![ObsRecord { basic, delay, emitted }] }
    }

    pub fn from_records(period: usize, mut records: Vec<ObsRecord>) -> Self {
        records.sort_by_key(|r| r.emitted);
        debug_assert!(records.iter().all(|r| r.emitted + r.delay as usize == period));
        ObservationSet { period, records }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn records(&self) -> &[ObsRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// The finite-alphabet letter this set presents to a strategy automaton:
    /// the (basic, delay) pairs in canonical order. Emission periods are
    /// dropped; they are recoverable as `period - delay`.
    pub fn letter(&self) -> Vec<(SignalIdx, u32)> {
        self.records.iter().map(|r| (r.basic, r.delay)).collect()
    }
}

/// One period of a player's view: own action, delivered records, base state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ObservedStep {
    pub action: ActionIdx,
    pub observation: ObservationSet,
    pub state: BaseId,
}

/// One player's view of a play: the initial base state and one
/// [`ObservedStep`] per period.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ObservedHistory {
    pub initial: BaseId,
    pub steps: Vec<ObservedStep>,
}

impl ObservedHistory {
    pub fn trivial(initial: BaseId) -> Self {
        ObservedHistory { initial, steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Base state after the last period.
    pub fn last_state(&self) -> BaseId {
        self.steps.last().map(|s| s.state).unwrap_or(self.initial)
    }

    pub fn push(&mut self, action: ActionIdx, observation: ObservationSet, state: BaseId) {
        self.steps.push(ObservedStep { action, observation, state });
    }

    pub fn prefix(&self, len: usize) -> ObservedHistory {
        ObservedHistory { initial: self.initial, steps: self.steps[..len].to_vec() }
    }
}

/// Instant observation: the singleton holding the signal emitted this
/// period, with delay 0.
pub fn observe_instant(g: &GameGraph, h: &History, i: PlayerId) -> Result<ObservationSet, MonitoringError> {
    if !g.mode().is_instant() {
        return Err(MonitoringError::WrongMode);
    }
    if h.is_empty() {
        return Err(MonitoringError::EmptyHistory);
    }
    let t = h.len();
    let last = g.transition(h.step(t));
    Ok(ObservationSet::singleton(t, last.signals[i.0], 0, t))
}

/// Delayed observation: exactly the records whose emission period plus
/// attached delay equals the current period. May be empty, may hold several.
pub fn observe_delayed(g: &GameGraph, h: &History, i: PlayerId) -> Result<ObservationSet, MonitoringError> {
    if g.mode().is_instant() {
        return Err(MonitoringError::WrongMode);
    }
    if h.is_empty() {
        return Err(MonitoringError::EmptyHistory);
    }
    let t = h.len();
    let mut records = Vec::new();
    for r in 1..=t {
        let step = g.transition(h.step(r));
        let d = step.delays.as_ref().expect("delayed graph")[i.0];
        if r + d as usize == t {
            records.push(ObsRecord { basic: step.signals[i.0], delay: d, emitted: r });
        }
    }
    Ok(ObservationSet::from_records(t, records))
}

/// Mode-appropriate observation of the last period of `h`.
pub fn observe(g: &GameGraph, h: &History, i: PlayerId) -> Result<ObservationSet, MonitoringError> {
    match g.mode() {
        Mode::Instant => observe_instant(g, h, i),
        Mode::Delayed(_) => observe_delayed(g, h, i),
    }
}

/// The full observed history of player `i` along `h`: per period the own
/// action, the records delivered in that period, and the base state.
pub fn observed_history(g: &GameGraph, h: &History, i: PlayerId) -> ObservedHistory {
    let t = h.len();
    let mut per_period: Vec<Vec<ObsRecord>> = vec![Vec::new(); t + 1];
    for r in 1..=t {
        let step = g.transition(h.step(r));
        let (basic, delay) = match &step.delays {
            None => (step.signals[i.0], 0),
            Some(d) => (step.signals[i.0], d[i.0]),
        };
        let due = r + delay as usize;
        if due <= t {
            per_period[due].push(ObsRecord { basic, delay, emitted: r });
        }
    }
    let mut oh = ObservedHistory::trivial(g.base_of(h.initial_state()));
    for r in 1..=t {
        let step = g.transition(h.step(r));
        oh.push(
            step.actions[i.0],
            ObservationSet::from_records(r, std::mem::take(&mut per_period[r])),
            g.base_of(step.target),
        );
    }
    oh
}

/// All observation letters a player can see in one period of `g`: for
/// instant monitoring the singletons, for delayed monitoring every set of
/// (basic, delay) pairs with pairwise distinct delays (at most one signal
/// per in-flight period can co-arrive), the empty set included.
pub fn all_letters(g: &GameGraph, i: PlayerId) -> Vec<Vec<(SignalIdx, u32)>> {
    let signals: Vec<SignalIdx> = (0..g.player(i).signals.len() as u32).map(SignalIdx).collect();
    match g.mode() {
        Mode::Instant => signals.iter().map(|s| vec![(*s, 0)]).collect(),
        Mode::Delayed(space) => {
            // Letters are ordered by descending delay (ascending emission).
            let mut delays: Vec<u32> = space.player(i).to_vec();
            delays.sort_unstable_by(|a, b| b.cmp(a));
            let mut out: Vec<Vec<(SignalIdx, u32)>> = vec![Vec::new()];
            for d in delays {
                let mut next = Vec::new();
                for letter in &out {
                    next.push(letter.clone());
                    for s in &signals {
                        let mut l = letter.clone();
                        l.push((*s, d));
                        next.push(l);
                    }
                }
                out = next;
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::match_game;
    use crate::game::transform::lift_to_delayed;
    use crate::game::{ActionIdx, DelaySpace, History};

    fn play_match(g: &GameGraph, moves: &[(&str, &str)]) -> History {
        let mut h = History::new(g);
        for (a1, a2) in moves {
            let profile = vec![
                g.action_index(PlayerId(0), a1).unwrap(),
                g.action_index(PlayerId(1), a2).unwrap(),
            ];
            let tid = g.outgoing(h.current_state(), &profile)[0];
            h.push(g, tid).unwrap();
        }
        h
    }

    #[test]
    fn instant_observation_is_the_current_signal() {
        let g = match_game();
        let h = play_match(&g, &[("a", "a")]);
        let z = observe_instant(&g, &h, PlayerId(0)).unwrap();
        assert_eq!(z.len(), 1);
        let rec = z.records()[0];
        assert_eq!(g.signal_name(PlayerId(0), rec.basic), "a");
        assert_eq!(rec.emitted, 1);
        assert_eq!(rec.delay, 0);

        let h2 = play_match(&g, &[("a", "a"), ("a", "b")]);
        let z2 = observe_instant(&g, &h2, PlayerId(0)).unwrap();
        // Only the period-2 signal, never period 1's.
        assert_eq!(z2.records()[0].emitted, 2);
        assert_eq!(g.signal_name(PlayerId(0), z2.records()[0].basic), "b");
        assert_eq!(z2.len(), 1);
    }

    #[test]
    fn empty_history_is_an_error() {
        let g = match_game();
        let h = History::new(&g);
        assert_eq!(observe_instant(&g, &h, PlayerId(0)), Err(MonitoringError::EmptyHistory));
    }

    fn delayed_match_history(delays: &[(u32, u32)]) -> (GameGraph, History) {
        let g = match_game();
        let lifted = lift_to_delayed(&g, DelaySpace::new(vec![vec![0, 1], vec![0, 1]]).unwrap()).unwrap();
        let mut h = History::new(&lifted);
        for (d1, d2) in delays {
            let profile = vec![ActionIdx(0), ActionIdx(0)];
            let tid = lifted
                .resolve_delayed(h.current_state(), &profile, &[*d1, *d2])
                .unwrap();
            h.push(&lifted, tid).unwrap();
        }
        (lifted, h)
    }

    #[test]
    fn delayed_observation_collects_due_records() {
        // Period-1 signal has delay 1, period-2 signal delay 0: both arrive
        // in period 2.
        let (g, h) = delayed_match_history(&[(1, 0), (0, 0)]);
        let z = observe_delayed(&g, &h, PlayerId(0)).unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!(z.records()[0].emitted, 1);
        assert_eq!(z.records()[1].emitted, 2);

        // A single period with delay 1 yields an empty observation.
        let (g, h) = delayed_match_history(&[(1, 0)]);
        let z = observe_delayed(&g, &h, PlayerId(0)).unwrap();
        assert!(z.is_empty());
        // ... while player 2's delay-0 record is already there.
        let z2 = observe_delayed(&g, &h, PlayerId(1)).unwrap();
        assert_eq!(z2.len(), 1);
    }

    #[test]
    fn zero_delay_matches_instant() {
        let g = match_game();
        let lifted = lift_to_delayed(&g, DelaySpace::new(vec![vec![0], vec![0]]).unwrap()).unwrap();
        let moves = [("a", "a"), ("b", "a"), ("a", "b")];
        let hi = play_match(&g, &moves);
        let mut hd = History::new(&lifted);
        for (a1, a2) in moves {
            let profile = vec![
                lifted.action_index(PlayerId(0), a1).unwrap(),
                lifted.action_index(PlayerId(1), a2).unwrap(),
            ];
            let tid = lifted.resolve_delayed(hd.current_state(), &profile, &[0, 0]).unwrap();
            hd.push(&lifted, tid).unwrap();
        }
        for r in 1..=moves.len() {
            let mut hi_prefix = History::new(&g);
            let mut hd_prefix = History::new(&lifted);
            for k in 1..=r {
                hi_prefix.push(&g, hi.step(k)).unwrap();
                hd_prefix.push(&lifted, hd.step(k)).unwrap();
            }
            assert_eq!(
                observe_instant(&g, &hi_prefix, PlayerId(0)).unwrap(),
                observe_delayed(&lifted, &hd_prefix, PlayerId(0)).unwrap()
            );
        }
    }

    #[test]
    fn observed_history_of_match() {
        let g = match_game();
        let h = play_match(&g, &[("a", "a"), ("a", "a")]);
        let oh = observed_history(&g, &h, PlayerId(0));
        assert_eq!(g.base_name(oh.initial), "P");
        assert_eq!(oh.len(), 2);
        for (r, step) in oh.steps.iter().enumerate() {
            assert_eq!(g.action_name(PlayerId(0), step.action), "a");
            assert_eq!(g.base_name(step.state), "Q");
            assert_eq!(step.observation.len(), 1);
            assert_eq!(step.observation.records()[0].emitted, r + 1);
        }
        // Length-0 histories observe just the initial state.
        let empty = observed_history(&g, &History::new(&g), PlayerId(0));
        assert!(empty.is_empty());
    }

    #[test]
    fn undelivered_signals_do_not_appear() {
        // Two histories differing only in the delay of the last signal have
        // the same observed history while that signal is in flight.
        let (g, h1) = delayed_match_history(&[(0, 0), (1, 1)]);
        let (_, h2) = delayed_match_history(&[(0, 0), (1, 0)]);
        assert_eq!(observed_history(&g, &h1, PlayerId(0)), observed_history(&g, &h2, PlayerId(0)));
    }

    #[test]
    fn observed_history_is_monotone() {
        let (g, h) = delayed_match_history(&[(1, 0), (0, 1), (1, 1), (0, 0)]);
        let full = observed_history(&g, &h, PlayerId(0));
        let mut prefix = History::new(&g);
        for r in 1..=h.len() {
            prefix.push(&g, h.step(r)).unwrap();
            let oh = observed_history(&g, &prefix, PlayerId(0));
            // Undelivered records make earlier periods' sets differ from the
            // full history's, so compare only delivered-by-r content.
            for (q, step) in oh.steps.iter().enumerate() {
                assert_eq!(step.action, full.steps[q].action);
                assert_eq!(step.state, full.steps[q].state);
                for rec in step.observation.records() {
                    assert!(full.steps[q].observation.records().contains(rec));
                }
            }
        }
    }

    #[test]
    fn delivery_is_unique_over_a_play() {
        let (g, h) = delayed_match_history(&[(1, 1), (0, 0), (1, 0), (1, 1), (0, 0), (0, 0)]);
        let oh = observed_history(&g, &h, PlayerId(0));
        let mut seen = std::collections::HashSet::new();
        for step in &oh.steps {
            for rec in step.observation.records() {
                assert!(seen.insert(rec.emitted), "emission period {} delivered twice", rec.emitted);
            }
        }
        // Completeness at the horizon: everything emitted by t - max_delay
        // has been delivered.
        let delivered: Vec<usize> = seen.into_iter().collect();
        for r in 1..=h.len() - 1 {
            assert!(delivered.contains(&r), "emission period {r} never delivered");
        }
    }

    #[test]
    fn letters_enumerate_observation_alphabet() {
        let g = match_game();
        assert_eq!(all_letters(&g, PlayerId(0)).len(), 2);
        let lifted = lift_to_delayed(&g, DelaySpace::new(vec![vec![0, 1], vec![0, 1]]).unwrap()).unwrap();
        // (|B| + 1)^|D| = 9 letters for B = {a,b}, D = {0,1}.
        assert_eq!(all_letters(&lifted, PlayerId(0)).len(), 9);
    }
}
