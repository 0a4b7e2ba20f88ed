//! JSON file formats: games, strategy profiles, explicit schedulers, traces
//! and reports.
//!
//! Game files are canonical: keys in fixed order, states and transitions
//! sorted, so that parse -> serialize -> parse is the identity and
//! transforms compose to byte-identical files. Delayed-mode files list
//! basic signals only; the delay variants are implicit and expanded on
//! load.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use delaymon::analysis::transfer::TransferOutcome;
use delaymon::analysis::SimulationResult;
use delaymon::game::{DelaySpace, GameGraph, Mode, PlayerId};
use delaymon::strategy::{
    FiniteStateStrategy, OutputRule, StrategyProfile, UpdateKey, UpdateRule,
};

fn default_true() -> bool {
    true
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct PlayerDecl {
    pub actions: Vec<String>,
    pub signals: Vec<String>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TransitionDecl {
    pub actions: Vec<String>,
    pub from: String,
    pub payoffs: Vec<i64>,
    pub signals: Vec<String>,
    pub to: String,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct GameFile {
    pub aggregator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays: Option<Vec<Vec<u32>>>,
    #[serde(default = "default_true")]
    pub deterministic: bool,
    pub initial: String,
    pub mode: String,
    pub players: Vec<PlayerDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_bases: Option<BTreeMap<String, String>>,
    pub states: Vec<String>,
    pub transitions: Vec<TransitionDecl>,
}

impl GameFile {
    pub fn build(&self) -> Result<GameGraph, String> {
        let aggregator = self.aggregator.parse().map_err(|e| format!("{e}"))?;
        let mode = match self.mode.as_str() {
            "instant" => {
                if self.delays.is_some() {
                    return Err("instant mode must not declare delays".to_string());
                }
                Mode::Instant
            }
            "delayed" => {
                let delays =
                    self.delays.clone().ok_or("delayed mode requires a `delays` key")?;
                Mode::Delayed(DelaySpace::new(delays).map_err(|e| e.to_string())?)
            }
            other => return Err(format!("unknown mode `{other}`")),
        };
        let space = match &mode {
            Mode::Instant => None,
            Mode::Delayed(d) => Some(d.clone()),
        };
        let mut b = GameGraph::builder()
            .mode(mode)
            .aggregator(aggregator)
            .deterministic(self.deterministic)
            .initial(&self.initial);
        for p in &self.players {
            b = b.player(p.actions.iter().map(String::as_str), p.signals.iter().map(String::as_str));
        }
        for s in &self.states {
            b = b.state(s);
        }
        if let Some(bases) = &self.state_bases {
            for (state, base) in bases {
                b = b.state_base(state, base);
            }
        }
        for t in &self.transitions {
            let actions: Vec<&str> = t.actions.iter().map(String::as_str).collect();
            let signals: Vec<&str> = t.signals.iter().map(String::as_str).collect();
            match &space {
                None => b = b.transition(&t.from, &actions, &signals, &t.to, &t.payoffs),
                Some(space) => {
                    // Delay variants are implicit in the file.
                    for d in space.profiles() {
                        b = b.delayed_transition(&t.from, &actions, &signals, &d, &t.to, &t.payoffs);
                    }
                }
            }
        }
        b.build().map_err(|e| e.to_string())
    }

    pub fn from_graph(g: &GameGraph) -> GameFile {
        let players: Vec<PlayerDecl> = g
            .players()
            .map(|i| {
                let p = g.player(i);
                PlayerDecl { actions: p.actions.clone(), signals: p.signals.clone() }
            })
            .collect();
        let mut states: Vec<String> = g.states().map(|v| g.state_name(v).to_string()).collect();
        states.sort();
        let mut bases = BTreeMap::new();
        for v in g.states() {
            let base = g.base_name(g.base_of(v));
            if base != g.state_name(v) {
                bases.insert(g.state_name(v).to_string(), base.to_string());
            }
        }
        let mut transitions: Vec<TransitionDecl> = Vec::new();
        for t in g.transitions() {
            let decl = TransitionDecl {
                actions: t
                    .actions
                    .iter()
                    .enumerate()
                    .map(|(i, a)| g.action_name(PlayerId(i), *a).to_string())
                    .collect(),
                from: g.state_name(t.source).to_string(),
                payoffs: t.payoffs.clone(),
                signals: t
                    .signals
                    .iter()
                    .enumerate()
                    .map(|(i, s)| g.signal_name(PlayerId(i), *s).to_string())
                    .collect(),
                to: g.state_name(t.target).to_string(),
            };
            // Delay variants collapse to one basic transition in the file.
            if !transitions.contains(&decl) {
                transitions.push(decl);
            }
        }
        transitions.sort();
        let (mode, delays) = match g.mode() {
            Mode::Instant => ("instant".to_string(), None),
            Mode::Delayed(space) => (
                "delayed".to_string(),
                Some((0..g.num_players()).map(|i| space.player(PlayerId(i)).to_vec()).collect()),
            ),
        };
        GameFile {
            aggregator: g.aggregator().to_string(),
            delays,
            deterministic: g.deterministic(),
            initial: g.state_name(g.initial()).to_string(),
            mode,
            players,
            state_bases: if bases.is_empty() { None } else { Some(bases) },
            states,
            transitions,
        }
    }

    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("game file serializes");
        text.push('\n');
        text
    }
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct OutputDecl {
    pub action: String,
    pub memory: String,
    pub state: String,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct UpdateDecl {
    pub action: String,
    pub from: String,
    pub observation: Vec<(String, u32)>,
    pub state: String,
    pub to: String,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct AutomatonDecl {
    pub initial: String,
    pub memory: Vec<String>,
    pub output: Vec<OutputDecl>,
    pub update: Vec<UpdateDecl>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(untagged)]
pub enum StrategyDecl {
    Memoryless { memoryless: BTreeMap<String, String> },
    Automaton { automaton: AutomatonDecl },
}

impl StrategyDecl {
    fn build(&self) -> Result<FiniteStateStrategy, String> {
        match self {
            StrategyDecl::Memoryless { memoryless } => Ok(FiniteStateStrategy::memoryless(
                memoryless.iter().map(|(s, a)| (s.clone(), a.clone())),
            )),
            StrategyDecl::Automaton { automaton } => {
                let init = automaton
                    .memory
                    .iter()
                    .position(|m| *m == automaton.initial)
                    .ok_or_else(|| format!("initial memory `{}` not declared", automaton.initial))?;
                let mut update = std::collections::HashMap::new();
                for u in &automaton.update {
                    update.insert(
                        UpdateKey {
                            mem: u.from.clone(),
                            action: u.action.clone(),
                            observation: u.observation.clone(),
                            state: u.state.clone(),
                        },
                        u.to.clone(),
                    );
                }
                let mut output = std::collections::HashMap::new();
                for o in &automaton.output {
                    output.insert((o.memory.clone(), o.state.clone()), o.action.clone());
                }
                Ok(FiniteStateStrategy {
                    mem_names: automaton.memory.clone(),
                    init,
                    update: UpdateRule::Table(update),
                    output: OutputRule::ByState(output),
                })
            }
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ProfileFile {
    pub players: Vec<StrategyDecl>,
}

impl ProfileFile {
    pub fn build(&self, g: &GameGraph) -> Result<StrategyProfile, String> {
        if self.players.len() != g.num_players() {
            return Err(format!(
                "profile has {} players, the game has {}",
                self.players.len(),
                g.num_players()
            ));
        }
        let mut strategies = Vec::with_capacity(self.players.len());
        for (i, decl) in self.players.iter().enumerate() {
            let fs = decl.build()?;
            let problems = fs.validate_total(g, PlayerId(i));
            if !problems.is_empty() {
                return Err(format!(
                    "player {} strategy is not total on the declared alphabets: {} (and {} more)",
                    i + 1,
                    problems[0],
                    problems.len() - 1
                ));
            }
            strategies.push(fs);
        }
        Ok(StrategyProfile::finite_state(strategies))
    }
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct SchedulerFile {
    pub delays: Vec<Vec<u32>>,
}

fn payoff_json(p: &delaymon::TaggedPayoff) -> serde_json::Value {
    json!({
        "value": format!("{}/{}", p.value.numer(), p.value.denom()),
        "exact": p.exact,
    })
}

/// One JSON record per period: state, actions, emitted signals with their
/// delays, per-player delivered records, stage payoffs.
pub fn render_trace(g: &GameGraph, result: &SimulationResult) -> String {
    let mut out = String::new();
    for r in 1..=result.history.len() {
        let tr = g.transition(result.history.step(r));
        let actions: Vec<String> = tr
            .actions
            .iter()
            .enumerate()
            .map(|(i, a)| g.action_name(PlayerId(i), *a).to_string())
            .collect();
        let signals: Vec<serde_json::Value> = tr
            .signals
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let delay = tr.delays.as_ref().map(|d| d[i]).unwrap_or(0);
                json!([g.signal_name(PlayerId(i), *s), delay])
            })
            .collect();
        let delivered: Vec<serde_json::Value> = (0..g.num_players())
            .map(|i| {
                let step = &result.observed[i].steps[r - 1];
                let records: Vec<serde_json::Value> = step
                    .observation
                    .records()
                    .iter()
                    .map(|rec| {
                        json!([g.signal_name(PlayerId(i), rec.basic), rec.delay, rec.emitted])
                    })
                    .collect();
                json!(records)
            })
            .collect();
        let mut record = json!({
            "t": r,
            "state": g.state_name(tr.target),
            "base": g.base_name(g.base_of(tr.target)),
            "actions": actions,
            "signals": signals,
            "delivered": delivered,
            "payoffs": tr.payoffs,
        });
        let stitchers: Vec<serde_json::Value> = (0..g.num_players())
            .filter_map(|i| {
                let rt = result.runtimes[i].franken()?;
                let trace = rt.trace()?;
                let rec = trace.get(r - 1)?;
                let pending: Vec<serde_json::Value> = rec
                    .pending
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        json!({
                            "thread": rt.full().spec().thread_name(k),
                            "status": if *p { "pending" } else { "active" },
                        })
                    })
                    .collect();
                Some(json!({
                    "player": i + 1,
                    "scheduled": rt.full().spec().thread_name(rec.scheduled),
                    "threads": pending,
                }))
            })
            .collect();
        if !stitchers.is_empty() {
            record["stitchers"] = json!(stitchers);
        }
        out.push_str(&record.to_string());
        out.push('\n');
    }
    out
}

pub fn render_transfer_report(g: &GameGraph, outcome: &TransferOutcome) -> String {
    let report = &outcome.report;
    let per_player: Vec<serde_json::Value> = (0..g.num_players())
        .map(|i| {
            json!({
                "player": i + 1,
                "instant": payoff_json(&report.instant_payoffs[i]),
                "delayed": report.delayed_payoffs[i].as_ref().map(payoff_json),
                "equal": format!("{:?}", report.payoff_equal[i]),
            })
        })
        .collect();
    let wrapped: Vec<serde_json::Value> = outcome
        .profile
        .players
        .iter()
        .enumerate()
        .map(|(i, p)| match p {
            delaymon::strategy::PlayerStrategy::Frankenstein(spec) => json!({
                "player": i + 1,
                "kind": "thread-stitcher",
                "threads": spec.num_threads(),
                "delays": spec.delays(),
                "max_delay": spec.max_delay(),
                "modulus": spec.modulus(),
                "finite_state": spec.has_finite_state_base(),
            }),
            _ => json!({"player": i + 1, "kind": "other"}),
        })
        .collect();
    let value = json!({
        "delayed_game": {
            "states": outcome.delayed.num_states(),
            "transitions": outcome.delayed.transitions().len(),
        },
        "unravelled": report.unravelled,
        "modulus": report.modulus,
        "payoffs": per_player,
        "wrapped_profile": wrapped,
        "verdicts": {
            "assertion_safety": report.assertion_failures.is_empty(),
            "shuffle_reconstruction": report.shuffle_ok,
            "thread_validity": report.thread_validity_ok,
            "variants_agree": report.variants_agree,
            "thread_sandwich": report.sandwich_ok,
            "streams_matched": report.streams_matched,
        },
        "battery": {
            "total_runs": report.total_runs,
            "exhaustive_runs": report.exhaustive_runs,
            "exhaustive_horizon": report.exhaustive_horizon,
            "random_runs": report.random_runs,
            "reference_lasso": report.reference_lasso,
        },
        "assertion_failures": report.assertion_failures,
        "problems": report.problems,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    text
}
