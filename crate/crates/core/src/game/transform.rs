//! Structural transforms: projection to instant monitoring, lifting to
//! delayed monitoring, and cycle unravelling.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use super::{DelaySpace, GameGraph, Mode, StateId, Violation};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("input graph fails validation: {0} violation(s), first: {1}")]
    InvalidInput(usize, Violation),
    #[error("input graph must use instant monitoring")]
    ExpectedInstant,
    #[error("input graph must use delayed monitoring")]
    ExpectedDelayed,
    #[error("state `{state}` has {count} transitions for {profile:?}; lifting needs a deterministic graph")]
    Nondeterministic { state: String, profile: Vec<String>, count: usize },
    #[error("delay space declares {0} players, the graph has {1}")]
    PlayerMismatch(usize, usize),
    #[error("unravelling modulus must be at least 1")]
    BadModulus,
}

fn ensure_valid(g: &GameGraph) -> Result<(), TransformError> {
    let violations = g.validate();
    match violations.first() {
        None => Ok(()),
        Some(first) => Err(TransformError::InvalidInput(violations.len(), first.clone())),
    }
}

/// Length of the shortest directed cycle in the state graph, ignoring
/// labels; `None` when the graph is acyclic.
pub fn min_cycle_length(g: &GameGraph) -> Option<usize> {
    // Deduplicated successor lists.
    let n = g.num_states();
    let mut succ: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    for t in g.transitions() {
        succ[t.source.0 as usize].insert(t.target.0);
    }
    let mut best: Option<usize> = None;
    for start in 0..n as u32 {
        // BFS from start back to start.
        let mut dist: Vec<Option<usize>> = vec![None; n];
        let mut queue = VecDeque::new();
        queue.push_back(start);
        dist[start as usize] = Some(0);
        'bfs: while let Some(v) = queue.pop_front() {
            let d = dist[v as usize].unwrap();
            for &w in &succ[v as usize] {
                if w == start {
                    let len = d + 1;
                    if best.is_none_or(|b| len < b) {
                        best = Some(len);
                    }
                    break 'bfs;
                }
                if dist[w as usize].is_none() {
                    dist[w as usize] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        if best == Some(1) {
            break;
        }
    }
    best
}

/// One shortest cycle, as state names, for diagnostics. `None` if acyclic.
pub fn shortest_cycle(g: &GameGraph) -> Option<Vec<String>> {
    let n = g.num_states();
    let mut succ: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    for t in g.transitions() {
        succ[t.source.0 as usize].insert(t.target.0);
    }
    let mut best: Option<Vec<u32>> = None;
    for start in 0..n as u32 {
        let mut parent: Vec<Option<u32>> = vec![None; n];
        let mut dist: Vec<Option<usize>> = vec![None; n];
        let mut queue = VecDeque::new();
        queue.push_back(start);
        dist[start as usize] = Some(0);
        while let Some(v) = queue.pop_front() {
            for &w in &succ[v as usize] {
                if w == start {
                    let mut path = vec![v];
                    let mut cur = v;
                    while let Some(p) = parent[cur as usize] {
                        path.push(p);
                        cur = p;
                    }
                    path.reverse();
                    if best.as_ref().is_none_or(|b| path.len() < b.len()) {
                        best = Some(path);
                    }
                } else if dist[w as usize].is_none() {
                    dist[w as usize] = Some(dist[v as usize].unwrap() + 1);
                    parent[w as usize] = Some(v);
                    queue.push_back(w);
                }
            }
        }
    }
    best.map(|path| path.into_iter().map(|v| g.state_name(StateId(v)).to_string()).collect())
}

/// Drops the delay component of every signal and merges the resulting
/// duplicate transitions. Refuses inputs whose basic structure is ambiguous.
pub fn project_to_instant(g: &GameGraph) -> Result<GameGraph, TransformError> {
    if g.mode().is_instant() {
        return Err(TransformError::ExpectedDelayed);
    }
    ensure_valid(g)?;
    let mut b = builder_like(g, Mode::Instant).deterministic(true);
    let mut seen = HashSet::new();
    for t in g.transitions() {
        let key = (t.source, t.actions.clone(), t.signals.clone(), t.target, t.payoffs.clone());
        if !seen.insert(key) {
            continue;
        }
        b = b.transition(
            g.state_name(t.source),
            &t.actions
                .iter()
                .enumerate()
                .map(|(i, a)| g.action_name(super::PlayerId(i), *a))
                .collect::<Vec<_>>(),
            &t.signals
                .iter()
                .enumerate()
                .map(|(i, s)| g.signal_name(super::PlayerId(i), *s))
                .collect::<Vec<_>>(),
            g.state_name(t.target),
            &t.payoffs,
        );
    }
    Ok(b.build().expect("projection preserves structural well-formedness"))
}

/// Replicates every instant transition once per delay profile of `space`,
/// copying payoffs. The input must be deterministic per (state, profile) so
/// that the result satisfies the delayed-monitoring uniqueness assumption.
pub fn lift_to_delayed(g: &GameGraph, space: DelaySpace) -> Result<GameGraph, TransformError> {
    if !g.mode().is_instant() {
        return Err(TransformError::ExpectedInstant);
    }
    if space.num_players() != g.num_players() {
        return Err(TransformError::PlayerMismatch(space.num_players(), g.num_players()));
    }
    ensure_valid(g)?;
    for v in g.states() {
        for profile in g.action_profiles() {
            let count = g.outgoing(v, &profile).len();
            if count > 1 {
                return Err(TransformError::Nondeterministic {
                    state: g.state_name(v).to_string(),
                    profile: profile
                        .iter()
                        .enumerate()
                        .map(|(i, a)| g.action_name(super::PlayerId(i), *a).to_string())
                        .collect(),
                    count,
                });
            }
        }
    }
    let profiles = space.profiles();
    let mut b = builder_like(g, Mode::Delayed(space)).deterministic(g.deterministic());
    for t in g.transitions() {
        let actions: Vec<&str> = t
            .actions
            .iter()
            .enumerate()
            .map(|(i, a)| g.action_name(super::PlayerId(i), *a))
            .collect();
        let signals: Vec<&str> = t
            .signals
            .iter()
            .enumerate()
            .map(|(i, s)| g.signal_name(super::PlayerId(i), *s))
            .collect();
        for d in &profiles {
            b = b.delayed_transition(
                g.state_name(t.source),
                &actions,
                &signals,
                d,
                g.state_name(t.target),
                &t.payoffs,
            );
        }
    }
    Ok(b.build().expect("lifting preserves structural well-formedness"))
}

/// Product of the graph with the cyclic group of order `modulus`: state
/// `(v, j)` steps to `(v', j+1 mod modulus)`, payoffs unchanged. Every cycle
/// of the result has length a positive multiple of `modulus`. Product states
/// are named `v@j` and project back to the base of `v`, so strategies never
/// see the index component. With `modulus == 1` the graph is returned
/// unchanged.
pub fn unravel(g: &GameGraph, modulus: u32) -> Result<GameGraph, TransformError> {
    Ok(unravel_indexed(g, modulus)?.0)
}

/// Like [`unravel`] but also returns each product state's index component
/// (all zeros when `modulus == 1`).
pub fn unravel_indexed(g: &GameGraph, modulus: u32) -> Result<(GameGraph, Vec<u32>), TransformError> {
    if modulus == 0 {
        return Err(TransformError::BadModulus);
    }
    if modulus == 1 {
        return Ok((g.clone(), vec![0; g.num_states()]));
    }
    let mut b = GameGraphBuilderProxy::new(g);
    let mut layers = Vec::with_capacity(g.num_states() * modulus as usize);
    for v in g.states() {
        for j in 0..modulus {
            let name = format!("{}@{}", g.state_name(v), j);
            b.builder = b.builder.state(&name).state_base(&name, g.base_name(g.base_of(v)));
            layers.push(j);
        }
    }
    let initial = format!("{}@0", g.state_name(g.initial()));
    b.builder = b.builder.initial(&initial);
    for t in g.transitions() {
        let actions: Vec<&str> = t
            .actions
            .iter()
            .enumerate()
            .map(|(i, a)| g.action_name(super::PlayerId(i), *a))
            .collect();
        let signals: Vec<&str> = t
            .signals
            .iter()
            .enumerate()
            .map(|(i, s)| g.signal_name(super::PlayerId(i), *s))
            .collect();
        for j in 0..modulus {
            let from = format!("{}@{}", g.state_name(t.source), j);
            let to = format!("{}@{}", g.state_name(t.target), (j + 1) % modulus);
            b.builder = match &t.delays {
                None => b.builder.transition(&from, &actions, &signals, &to, &t.payoffs),
                Some(d) => b.builder.delayed_transition(&from, &actions, &signals, d, &to, &t.payoffs),
            };
        }
    }
    let graph = b.builder.build().expect("unravelling preserves structural well-formedness");
    Ok((graph, layers))
}

/// Builder pre-seeded with the players, mode, aggregator and base mapping of
/// an existing graph (states and transitions are up to the caller).
struct GameGraphBuilderProxy {
    builder: super::GameGraphBuilder,
}

impl GameGraphBuilderProxy {
    fn new(g: &GameGraph) -> Self {
        let mut builder = GameGraph::builder()
            .mode(g.mode().clone())
            .aggregator(g.aggregator())
            .deterministic(g.deterministic());
        for i in g.players() {
            let p = g.player(i);
            builder = builder.player(
                p.actions.iter().map(String::as_str),
                p.signals.iter().map(String::as_str),
            );
        }
        GameGraphBuilderProxy { builder }
    }
}

/// Builder with the same states, players, aggregator and base mapping as
/// `g`, but the given mode.
fn builder_like(g: &GameGraph, mode: Mode) -> super::GameGraphBuilder {
    let mut b = GameGraph::builder().mode(mode).aggregator(g.aggregator());
    for i in g.players() {
        let p = g.player(i);
        b = b.player(p.actions.iter().map(String::as_str), p.signals.iter().map(String::as_str));
    }
    for v in g.states() {
        b = b.state(g.state_name(v));
        let base = g.base_name(g.base_of(v));
        if base != g.state_name(v) {
            b = b.state_base(g.state_name(v), base);
        }
    }
    b.initial(g.state_name(g.initial()))
}

/// Canonical multiset of transitions by names, for isomorphism-style
/// comparisons in tests and round-trip checks.
pub fn transition_keys(g: &GameGraph) -> Vec<(String, Vec<String>, Vec<String>, Option<Vec<u32>>, String, Vec<i64>)> {
    let mut keys: Vec<_> = g
        .transitions()
        .iter()
        .map(|t| {
            (
                g.state_name(t.source).to_string(),
                t.actions
                    .iter()
                    .enumerate()
                    .map(|(i, a)| g.action_name(super::PlayerId(i), *a).to_string())
                    .collect::<Vec<_>>(),
                t.signals
                    .iter()
                    .enumerate()
                    .map(|(i, s)| g.signal_name(super::PlayerId(i), *s).to_string())
                    .collect::<Vec<_>>(),
                t.delays.clone(),
                g.state_name(t.target).to_string(),
                t.payoffs.clone(),
            )
        })
        .collect();
    keys.sort();
    keys
}

/// Checks that `g` and `h` have identical states, alphabets and transition
/// sets (ordering ignored).
pub fn same_game(g: &GameGraph, h: &GameGraph) -> bool {
    let mut gs: Vec<_> = g.states().map(|v| g.state_name(v).to_string()).collect();
    let mut hs: Vec<_> = h.states().map(|v| h.state_name(v).to_string()).collect();
    gs.sort();
    hs.sort();
    gs == hs
        && g.state_name(g.initial()) == h.state_name(h.initial())
        && g.players().map(|i| g.player(i).clone()).collect::<Vec<_>>()
            == h.players().map(|i| h.player(i).clone()).collect::<Vec<_>>()
        && g.mode() == h.mode()
        && transition_keys(g) == transition_keys(h)
}

/// Per-SCC consistency check that every directed cycle has length divisible
/// by `modulus`. Within a strongly connected component this is equivalent to
/// the existence of a potential that increases by one along every edge,
/// which is what is verified here.
pub fn cycles_multiple_of(g: &GameGraph, modulus: u32) -> bool {
    let n = g.num_states();
    let mut succ: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    for t in g.transitions() {
        succ[t.source.0 as usize].insert(t.target.0);
    }
    let sccs = tarjan_sccs(n, &succ);
    let mut comp = vec![usize::MAX; n];
    for (c, members) in sccs.iter().enumerate() {
        for &v in members {
            comp[v as usize] = c;
        }
    }
    for members in &sccs {
        let root = members[0];
        let mut phi: HashMap<u32, u32> = HashMap::new();
        phi.insert(root, 0);
        let mut queue = VecDeque::new();
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            let pv = phi[&v];
            for &w in &succ[v as usize] {
                if comp[w as usize] != comp[v as usize] {
                    continue;
                }
                let expected = (pv + 1) % modulus;
                match phi.get(&w) {
                    None => {
                        phi.insert(w, expected);
                        queue.push_back(w);
                    }
                    Some(&pw) => {
                        if pw != expected {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

fn tarjan_sccs(n: usize, succ: &[HashSet<u32>]) -> Vec<Vec<u32>> {
    struct Frame {
        v: u32,
        iter: Vec<u32>,
        pos: usize,
    }
    let mut index = vec![usize::MAX; n];
    let mut lowlink = vec![usize::MAX; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut next_index = 0usize;
    let mut sccs = Vec::new();
    for start in 0..n as u32 {
        if index[start as usize] != usize::MAX {
            continue;
        }
        let mut frames = vec![Frame {
            v: start,
            iter: succ[start as usize].iter().copied().collect(),
            pos: 0,
        }];
        index[start as usize] = next_index;
        lowlink[start as usize] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start as usize] = true;
        while let Some(frame) = frames.last_mut() {
            let v = frame.v;
            if frame.pos < frame.iter.len() {
                let w = frame.iter[frame.pos];
                frame.pos += 1;
                if index[w as usize] == usize::MAX {
                    index[w as usize] = next_index;
                    lowlink[w as usize] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w as usize] = true;
                    frames.push(Frame {
                        v: w,
                        iter: succ[w as usize].iter().copied().collect(),
                        pos: 0,
                    });
                } else if on_stack[w as usize] {
                    lowlink[v as usize] = lowlink[v as usize].min(index[w as usize]);
                }
            } else {
                frames.pop();
                if let Some(parent) = frames.last() {
                    lowlink[parent.v as usize] = lowlink[parent.v as usize].min(lowlink[v as usize]);
                }
                if lowlink[v as usize] == index[v as usize] {
                    let mut members = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w as usize] = false;
                        members.push(w);
                        if w == v {
                            break;
                        }
                    }
                    members.sort_unstable();
                    sccs.push(members);
                }
            }
        }
    }
    sccs
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::match_game;
    use super::*;
    use crate::game::{ActionIdx, GameGraph, PlayerId};

    fn delay_space_2(d: &[u32]) -> DelaySpace {
        DelaySpace::new(vec![d.to_vec(), d.to_vec()]).unwrap()
    }

    #[test]
    fn min_cycle_of_match_is_one() {
        assert_eq!(min_cycle_length(&match_game()), Some(1));
    }

    #[test]
    fn min_cycle_of_three_cycle() {
        let g = GameGraph::builder()
            .states(["v1", "v2", "v3"])
            .player(["a"], ["x"])
            .initial("v1")
            .transition("v1", &["a"], &["x"], "v2", &[0])
            .transition("v2", &["a"], &["x"], "v3", &[0])
            .transition("v3", &["a"], &["x"], "v1", &[0])
            .build()
            .unwrap();
        assert_eq!(min_cycle_length(&g), Some(3));
        assert_eq!(shortest_cycle(&g).unwrap().len(), 3);
    }

    #[test]
    fn min_cycle_of_dag_is_infinite() {
        let g = GameGraph::builder()
            .states(["u", "w"])
            .player(["a"], ["x"])
            .initial("u")
            .transition("u", &["a"], &["x"], "w", &[0])
            .build()
            .unwrap();
        assert_eq!(min_cycle_length(&g), None);
    }

    #[test]
    fn lift_counts_and_roundtrip() {
        let g = match_game();
        let zero = lift_to_delayed(&g, delay_space_2(&[0])).unwrap();
        assert_eq!(zero.transitions().len(), 8);
        let lifted = lift_to_delayed(&g, delay_space_2(&[0, 1])).unwrap();
        assert_eq!(lifted.transitions().len(), 32);
        assert!(lifted.validate().is_empty());
        let back = project_to_instant(&lifted).unwrap();
        assert_eq!(back.transitions().len(), 8);
        assert!(same_game(&g, &back));
    }

    #[test]
    fn project_merges_delay_variants_of_a_loop() {
        let space = DelaySpace::new(vec![vec![0, 1]]).unwrap();
        let g = GameGraph::builder()
            .states(["v"])
            .player(["a"], ["x"])
            .initial("v")
            .mode(Mode::Delayed(space))
            .delayed_transition("v", &["a"], &["x"], &[0], "v", &[0])
            .delayed_transition("v", &["a"], &["x"], &[1], "v", &[0])
            .build()
            .unwrap();
        let back = project_to_instant(&g).unwrap();
        assert_eq!(back.transitions().len(), 1);
    }

    #[test]
    fn project_refuses_ambiguous_input() {
        let space = DelaySpace::new(vec![vec![0, 1]]).unwrap();
        let g = GameGraph::builder()
            .states(["P", "Q"])
            .player(["a"], ["x"])
            .initial("P")
            .mode(Mode::Delayed(space))
            .delayed_transition("P", &["a"], &["x"], &[0], "Q", &[0])
            .delayed_transition("P", &["a"], &["x"], &[1], "P", &[0])
            .delayed_transition("Q", &["a"], &["x"], &[0], "Q", &[0])
            .delayed_transition("Q", &["a"], &["x"], &[1], "Q", &[0])
            .build()
            .unwrap();
        assert!(project_to_instant(&g).is_err());
    }

    #[test]
    fn unravel_match_by_three() {
        let g = match_game();
        let u = unravel(&g, 3).unwrap();
        assert_eq!(u.num_states(), 6);
        assert_eq!(u.transitions().len(), 24);
        assert_eq!(min_cycle_length(&u), Some(3));
        assert!(cycles_multiple_of(&u, 3));
        assert!(u.validate().is_empty());
        // Index component is invisible: bases are the original states.
        assert_eq!(u.num_bases(), 2);
        let p0 = u.state_id("P@0").unwrap();
        assert_eq!(u.base_name(u.base_of(p0)), "P");
    }

    #[test]
    fn unravel_by_one_is_identity() {
        let g = match_game();
        let u = unravel(&g, 1).unwrap();
        assert!(same_game(&g, &u));
        assert_eq!(u.state_name(StateId(0)), "P");
    }

    #[test]
    fn unravelling_preserves_observable_behaviour() {
        let g = match_game();
        let u = unravel(&g, 4).unwrap();
        // Feed the same joint actions into both graphs and compare the
        // projected traces.
        let feeds = [
            [ActionIdx(0), ActionIdx(0)],
            [ActionIdx(0), ActionIdx(1)],
            [ActionIdx(1), ActionIdx(1)],
            [ActionIdx(0), ActionIdx(0)],
            [ActionIdx(1), ActionIdx(0)],
        ];
        let mut gv = g.initial();
        let mut uv = u.initial();
        for profile in feeds {
            let gt = g.transition(g.outgoing(gv, &profile)[0]);
            let ut = u.transition(u.outgoing(uv, &profile)[0]);
            assert_eq!(g.state_name(gt.target), u.base_name(u.base_of(ut.target)));
            assert_eq!(gt.signals, ut.signals);
            assert_eq!(gt.payoffs, ut.payoffs);
            gv = gt.target;
            uv = ut.target;
        }
    }

    #[test]
    fn lift_requires_deterministic_input() {
        let g = GameGraph::builder()
            .states(["P"])
            .player(["a"], ["x", "y"])
            .initial("P")
            .transition("P", &["a"], &["x"], "P", &[0])
            .transition("P", &["a"], &["y"], "P", &[0])
            .build()
            .unwrap();
        assert!(matches!(
            lift_to_delayed(&g, DelaySpace::new(vec![vec![0]]).unwrap()),
            Err(TransformError::Nondeterministic { .. })
        ));
        let _ = PlayerId(0);
    }
}
