//! Bounded refutation search for the equilibrium condition.
//!
//! Proving a profile is an equilibrium is out of reach; this module searches
//! for *counterexamples* within an enumerable deviator class — memoryless
//! maps, short cyclic action loops and candidates extracted from a
//! horizon-bounded best-response tree search — and evaluates each candidate
//! at its worst case over the tested schedulers. Any reported deviation is
//! re-simulated from scratch before it makes it into the report.

use std::sync::Arc;

use crate::game::{GameGraph, PlayerId};
use crate::payoff::TaggedPayoff;
use crate::strategy::{
    enumerate_memoryless, FiniteStateStrategy, PlayerStrategy, SchedulerSpec, StrategyProfile,
};

use super::{payoff_of_profile, simulate, SimCursor, SimError, SimOptions};

#[derive(Clone, Debug)]
pub struct DeviationSearch {
    /// Memory bound for enumerated deviators; 1 enumerates exactly the
    /// memoryless strategies, larger bounds add cyclic action loops up to
    /// that period (the full automaton space is far beyond any budget).
    pub deviator_memory: usize,
    /// Depth of the best-response tree search; 0 disables it.
    pub tree_horizon: usize,
    /// Cap on the number of evaluated candidates per player.
    pub enumeration_budget: usize,
    /// Schedulers over which the deviator's worst case is taken; ignored
    /// for instant games.
    pub schedulers: Vec<SchedulerSpec>,
    /// Evaluation horizon (runs stop early at their lasso).
    pub horizon: usize,
}

impl Default for DeviationSearch {
    fn default() -> Self {
        DeviationSearch {
            deviator_memory: 1,
            tree_horizon: 8,
            enumeration_budget: 20_000,
            schedulers: Vec::new(),
            horizon: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FoundDeviation {
    pub player: PlayerId,
    pub payoff: TaggedPayoff,
    pub baseline: TaggedPayoff,
    pub strategy: FiniteStateStrategy,
    pub description: String,
    /// Scheduler achieving the deviator's worst case.
    pub scheduler: String,
}

#[derive(Clone, Debug)]
pub struct EquilibriumReport {
    pub baseline: Vec<TaggedPayoff>,
    /// Best verified strict improvement per player, if any.
    pub deviations: Vec<Option<FoundDeviation>>,
    pub examined: usize,
    pub budget_exhausted: bool,
}

impl EquilibriumReport {
    pub fn deviation_found(&self) -> bool {
        self.deviations.iter().any(Option::is_some)
    }
}

/// Evaluates one candidate deviation: the deviator's worst case over the
/// schedulers. The value is exact only when every run found a lasso.
fn evaluate_candidate(
    g: &Arc<GameGraph>,
    deviated: &StrategyProfile,
    player: PlayerId,
    schedulers: &[SchedulerSpec],
    opts: &SimOptions,
) -> Result<(TaggedPayoff, String), SimError> {
    let specs: Vec<SchedulerSpec> = if g.mode().is_instant() || schedulers.is_empty() {
        vec![SchedulerSpec::RoundRobin]
    } else {
        schedulers.to_vec()
    };
    let mut worst: Option<(TaggedPayoff, String)> = None;
    for spec in &specs {
        let result = simulate(g, deviated, spec, opts)?;
        let p = result.payoffs[player.0];
        let replace = match &worst {
            None => true,
            Some((w, _)) => p.value < w.value,
        };
        if replace {
            worst = Some((p, spec.describe()));
        } else if !p.exact {
            // An inexact run anywhere makes the inf inexact.
            if let Some((w, _)) = &mut worst {
                w.exact = false;
            }
        }
    }
    Ok(worst.expect("at least one scheduler"))
}

/// Action sequences reaching the best horizon-limited payoffs for the
/// deviator, found by exhaustive tree search against the fixed co-players.
fn tree_candidates(
    g: &Arc<GameGraph>,
    profile: &StrategyProfile,
    player: PlayerId,
    schedulers: &[SchedulerSpec],
    depth: usize,
    keep: usize,
) -> Result<Vec<Vec<String>>, SimError> {
    let specs: Vec<SchedulerSpec> = if g.mode().is_instant() || schedulers.is_empty() {
        vec![SchedulerSpec::RoundRobin]
    } else {
        schedulers.to_vec()
    };
    let num_actions = g.player(player).actions.len();
    let mut scored: Vec<(crate::payoff::Rational64, Vec<usize>)> = Vec::new();
    for spec in &specs {
        // Iterative deepening is unnecessary at desk scale: enumerate all
        // |A|^depth sequences and replay each from the start.
        let total = num_actions.checked_pow(depth as u32).unwrap_or(usize::MAX);
        for code in 0..total {
            let mut c = code;
            let seq: Vec<usize> = (0..depth)
                .map(|_| {
                    let a = c % num_actions;
                    c /= num_actions;
                    a
                })
                .collect();
            let mut cursor = SimCursor::new(g, profile, spec, g.initial())?;
            let mut ok = true;
            for a in &seq {
                let mut actions = match cursor.next_actions() {
                    Ok(x) => x,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                };
                actions[player.0] = crate::game::ActionIdx(*a as u32);
                if cursor.advance(&actions).is_err() {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let stream = cursor.history().payoff_stream(g, player);
            if stream.is_empty() {
                continue;
            }
            if let Ok(v) = crate::payoff::aggregate_prefix(g.aggregator(), &stream, stream.len()) {
                scored.push((v, seq));
            }
        }
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.dedup_by(|a, b| a.1 == b.1);
    let names: Vec<Vec<String>> = scored
        .into_iter()
        .take(keep)
        .map(|(_, seq)| {
            seq.into_iter()
                .map(|a| g.player(player).actions[a].clone())
                .collect()
        })
        .collect();
    Ok(names)
}

pub fn check_equilibrium(
    g: &Arc<GameGraph>,
    profile: &StrategyProfile,
    search: &DeviationSearch,
) -> Result<EquilibriumReport, SimError> {
    let opts = SimOptions {
        horizon: search.horizon,
        stop_at_lasso: true,
        ..SimOptions::default()
    };
    let baseline = payoff_of_profile(g, profile, &search.schedulers, &opts)?;
    let mut deviations: Vec<Option<FoundDeviation>> = vec![None; g.num_players()];
    let mut examined = 0usize;
    let mut budget_exhausted = false;

    for i in 0..g.num_players() {
        let player = PlayerId(i);
        let mut candidates: Vec<(FiniteStateStrategy, String)> = Vec::new();
        for (idx, fs) in enumerate_memoryless(g, player).into_iter().enumerate() {
            candidates.push((fs, format!("memoryless #{idx}")));
        }
        // Cyclic loops for memory bounds above 1. The full space of
        // observation-reading automata with k >= 2 memories is astronomical,
        // so asking for it flags the report as a partial search.
        if search.deviator_memory >= 2 {
            budget_exhausted = true;
            let actions = &g.player(player).actions;
            for period in 2..=search.deviator_memory {
                let total = actions.len().pow(period as u32);
                for code in 0..total {
                    let mut c = code;
                    let seq: Vec<String> = (0..period)
                        .map(|_| {
                            let a = actions[c % actions.len()].clone();
                            c /= actions.len();
                            a
                        })
                        .collect();
                    candidates.push((
                        FiniteStateStrategy::cyclic(seq.clone()),
                        format!("cycle {seq:?}"),
                    ));
                }
            }
        }
        if search.tree_horizon > 0 {
            for seq in tree_candidates(g, profile, player, &search.schedulers, search.tree_horizon, 3)? {
                candidates.push((FiniteStateStrategy::cyclic(seq.clone()), format!("loop {seq:?}")));
            }
        }
        if candidates.len() > search.enumeration_budget {
            candidates.truncate(search.enumeration_budget);
            budget_exhausted = true;
        }

        let base_i = baseline.per_player[i];
        let mut best: Option<(TaggedPayoff, FiniteStateStrategy, String, String)> = None;
        for (fs, description) in candidates {
            examined += 1;
            let deviated = profile.with_player(player, PlayerStrategy::finite_state(fs.clone()));
            let (value, sched) =
                match evaluate_candidate(g, &deviated, player, &search.schedulers, &opts) {
                    Ok(v) => v,
                    // A deviator may steer the play outside its own domain;
                    // such a candidate simply does not witness anything.
                    Err(SimError::Strategy { .. }) => continue,
                    Err(e) => return Err(e),
                };
            // Only exact, strict improvements over an exact baseline count.
            if value.exact && base_i.exact && value.value > base_i.value {
                let better = match &best {
                    None => true,
                    Some((b, ..)) => value.value > b.value,
                };
                if better {
                    best = Some((value, fs, description, sched));
                }
            }
        }
        if let Some((value, fs, description, scheduler)) = best {
            // Independent re-simulation before reporting.
            let deviated = profile.with_player(player, PlayerStrategy::finite_state(fs.clone()));
            let (re_value, _) = evaluate_candidate(g, &deviated, player, &search.schedulers, &opts)?;
            if re_value == value && value.value > base_i.value {
                deviations[i] = Some(FoundDeviation {
                    player,
                    payoff: value,
                    baseline: base_i,
                    strategy: fs,
                    description,
                    scheduler,
                });
            }
        }
    }

    Ok(EquilibriumReport {
        baseline: baseline.per_player,
        deviations,
        examined,
        budget_exhausted,
    })
}
