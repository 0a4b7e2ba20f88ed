//! Concurrent games on finite graphs with instant and bounded-delay signal
//! monitoring.
//!
//! The library models `n`-player concurrent games where every period each
//! player picks an action, the joint action selects a labelled transition,
//! and each player privately receives a basic signal. Under *instant*
//! monitoring the signal arrives in the same period; under *delayed*
//! monitoring Nature attaches a bounded delay to each emitted signal and the
//! player observes it that many periods later.
//!
//! On top of the game model the crate provides:
//!
//! * structural transforms (projection to instant, lifting to delayed,
//!   cycle unravelling) in [`game::transform`],
//! * payoff aggregation (mean-payoff, limsup, parity) with exact evaluation
//!   on ultimately periodic sequences in [`payoff`],
//! * finite-state strategies and delay schedulers in [`strategy`],
//! * the thread-stitching procedure that replays an instant-monitoring
//!   strategy inside the delayed game in [`frankenstein`],
//! * a deterministic simulation and analysis harness (lasso detection,
//!   payoff transfer, ergodicity and bounded equilibrium checks) in
//!   [`analysis`].

pub mod analysis;
pub mod frankenstein;
pub mod game;
pub mod monitoring;
pub mod payoff;
pub mod strategy;

pub use game::{ActionIdx, BaseId, DelaySpace, GameGraph, History, Mode, PlayerId, SignalIdx, StateId};
pub use payoff::{AggregatorKind, LassoSequence, Rational64, TaggedPayoff};
