//! Shared fixtures and an independent brute-force oracle for the `match`
//! game, kept deliberately separate from the library's own machinery.

use delaymon::game::{GameGraph, Mode};
use delaymon::payoff::AggregatorKind;
use delaymon::strategy::FiniteStateStrategy;

/// Two states P and Q, two players with actions {a,b}; each player's basic
/// signal is the opponent's action; matching actions move to Q and pay both
/// players 1, anything else moves to P and pays 0.
pub fn match_game() -> GameGraph {
    let mut b = GameGraph::builder()
        .states(["P", "Q"])
        .player(["a", "b"], ["a", "b"])
        .player(["a", "b"], ["a", "b"])
        .initial("P")
        .mode(Mode::Instant)
        .aggregator(AggregatorKind::MeanPayoff)
        .deterministic(true);
    for from in ["P", "Q"] {
        for a1 in ["a", "b"] {
            for a2 in ["a", "b"] {
                let (to, pay) = if a1 == a2 { ("Q", 1) } else { ("P", 0) };
                b = b.transition(from, &[a1, a2], &[a2, a1], to, &[pay, pay]);
            }
        }
    }
    b.build().unwrap()
}

pub fn memoryless(p: &str, q: &str) -> FiniteStateStrategy {
    FiniteStateStrategy::memoryless(vec![
        ("P".to_string(), p.to_string()),
        ("Q".to_string(), q.to_string()),
    ])
}

/// Hand dynamics of `match`, independent of the library's graph machinery:
/// one step from a state under a joint action gives the next state, the
/// common stage payoff and each player's basic signal.
pub fn match_oracle_step(a1: char, a2: char) -> (char, i64, char, char) {
    if a1 == a2 {
        ('Q', 1, a2, a1)
    } else {
        ('P', 0, a2, a1)
    }
}

/// The oracle's play under constant action choices: state sequence and the
/// common payoff stream.
pub fn match_oracle_play(a1: char, a2: char, periods: usize) -> (Vec<char>, Vec<i64>) {
    let mut states = Vec::with_capacity(periods);
    let mut payoffs = Vec::with_capacity(periods);
    for _ in 0..periods {
        let (next, pay, _, _) = match_oracle_step(a1, a2);
        states.push(next);
        payoffs.push(pay);
    }
    (states, payoffs)
}
