mod format;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use delaymon::analysis::equilibrium::{check_equilibrium, DeviationSearch};
use delaymon::analysis::transfer::{transfer, TransferOptions};
use delaymon::analysis::{simulate, SimOptions};
use delaymon::game::transform::{lift_to_delayed, project_to_instant, unravel};
use delaymon::game::{DelaySpace, PlayerId};
use delaymon::strategy::SchedulerSpec;

// Stable exit-code contract.
const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 1;
const EXIT_SYNTAX: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;
const EXIT_DEVIATION: u8 = 4;
const EXIT_BUDGET: u8 = 5;

#[derive(Parser)]
#[command(name = "delaymon", version, about = "Concurrent games with delayed signal monitoring")]
struct Cli {
    /// Worker threads for scheduler batteries (1 = sequential). Never
    /// changes any output bytes.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a game file, reporting all violations.
    Validate { game: PathBuf },
    /// Apply one structural transform and write the result.
    Transform(TransformArgs),
    /// Simulate a strategy profile and print the payoffs.
    Simulate(SimulateArgs),
    /// Lift an instant game to delayed monitoring and verify that the
    /// wrapped profile preserves the payoff.
    Transfer(TransferArgs),
    /// Search for profitable deviations from a profile.
    Check(CheckArgs),
}

#[derive(Args)]
struct TransformArgs {
    game: PathBuf,
    /// Unravel: product with the cyclic group of this order.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    unravel: Option<u32>,
    /// Lift to delayed monitoring with these delays (e.g. `0,1` for all
    /// players or `0,1;0,2` per player).
    #[arg(long)]
    lift: Option<String>,
    /// Project a delayed game back to instant monitoring.
    #[arg(long)]
    project: bool,
    /// Output file.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    game: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    /// Scheduler spec: `fixed:<d>` or `fixed:<d1,d2,..>`, `rr`,
    /// `seed:<n>`, `explicit:<file>`.
    #[arg(long, default_value = "fixed:0")]
    scheduler: String,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    /// Write one JSON record per period to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct TransferArgs {
    game: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    /// Delay space, e.g. `0,1` (all players) or `0,1;0,2` (per player).
    #[arg(long)]
    delays: String,
    /// Unravelling modulus (default: maximal delay + 1).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    modulus: Option<u32>,
    /// Write the full report as JSON to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the delayed game produced by the pipeline to this file.
    #[arg(long)]
    out_game: Option<PathBuf>,
    /// Write a per-period trace of a reference run of the wrapped profile,
    /// including each stitcher's scheduling log and thread statuses.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Number of seeded random schedulers in the battery.
    #[arg(long, default_value_t = 20)]
    random_schedulers: usize,
    /// Horizon of random-scheduler and reference runs.
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    /// Budget for the exhaustive scheduler battery.
    #[arg(long, default_value_t = 4096)]
    budget: usize,
    #[arg(long, default_value_t = 0x00d1_a75e_ed00)]
    seed: u64,
}

#[derive(Args)]
struct CheckArgs {
    game: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    /// Memory bound for enumerated deviators.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    deviator_memory: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    /// Budget for the scheduler battery of delayed games.
    #[arg(long, default_value_t = 64)]
    schedulers: usize,
    /// Depth of the best-response tree search (0 disables it).
    #[arg(long, default_value_t = 8)]
    tree_horizon: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    };
    ExitCode::from(code)
}

struct CmdError {
    code: u8,
    message: String,
}

impl CmdError {
    fn syntax(message: impl Into<String>) -> Self {
        CmdError { code: EXIT_SYNTAX, message: message.into() }
    }

    fn validation(message: impl Into<String>) -> Self {
        CmdError { code: EXIT_VALIDATION, message: message.into() }
    }
}

fn run(cli: Cli) -> Result<u8, CmdError> {
    match cli.command {
        Command::Validate { game } => cmd_validate(&game),
        Command::Transform(args) => cmd_transform(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Transfer(args) => cmd_transfer(&args, cli.jobs),
        Command::Check(args) => cmd_check(&args),
    }
}

fn load_game(path: &PathBuf) -> Result<Arc<delaymon::GameGraph>, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::syntax(format!("{}: {e}", path.display())))?;
    let file: format::GameFile = serde_json::from_str(&text)
        .map_err(|e| CmdError::syntax(format!("{}: {e}", path.display())))?;
    let g = file
        .build()
        .map_err(|e| CmdError::validation(format!("{}: {e}", path.display())))?;
    Ok(Arc::new(g))
}

fn load_profile(
    path: &PathBuf,
    g: &delaymon::GameGraph,
) -> Result<delaymon::strategy::StrategyProfile, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::syntax(format!("{}: {e}", path.display())))?;
    let file: format::ProfileFile = serde_json::from_str(&text)
        .map_err(|e| CmdError::syntax(format!("{}: {e}", path.display())))?;
    file.build(g).map_err(|e| CmdError::validation(format!("{}: {e}", path.display())))
}

fn cmd_validate(path: &PathBuf) -> Result<u8, CmdError> {
    let g = load_game(path)?;
    let violations = g.validate();
    if violations.is_empty() {
        println!("ok: {} states, {} transitions", g.num_states(), g.transitions().len());
        Ok(EXIT_OK)
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        println!("{} violation(s)", violations.len());
        Ok(EXIT_VALIDATION)
    }
}

fn parse_delays(spec: &str, players: usize) -> Result<DelaySpace, CmdError> {
    let lists: Vec<Vec<u32>> = if spec.contains(';') {
        spec.split(';')
            .map(|part| {
                part.split(',')
                    .map(|d| d.trim().parse::<u32>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CmdError::syntax(format!("bad delay spec `{spec}`: {e}")))?
    } else {
        let one: Vec<u32> = spec
            .split(',')
            .map(|d| d.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CmdError::syntax(format!("bad delay spec `{spec}`: {e}")))?;
        vec![one; players]
    };
    DelaySpace::new(lists).map_err(|e| CmdError::syntax(format!("bad delay spec `{spec}`: {e}")))
}

fn parse_scheduler(spec: &str) -> Result<SchedulerSpec, CmdError> {
    if spec == "rr" {
        return Ok(SchedulerSpec::RoundRobin);
    }
    if let Some(rest) = spec.strip_prefix("fixed:") {
        let delays: Vec<u32> = rest
            .split(',')
            .map(|d| d.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CmdError::syntax(format!("bad scheduler `{spec}`: {e}")))?;
        return Ok(SchedulerSpec::Fixed(delays));
    }
    if let Some(rest) = spec.strip_prefix("seed:") {
        let seed: u64 = rest
            .parse()
            .map_err(|e| CmdError::syntax(format!("bad scheduler `{spec}`: {e}")))?;
        return Ok(SchedulerSpec::Seeded(seed));
    }
    if let Some(path) = spec.strip_prefix("explicit:") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::syntax(format!("{path}: {e}")))?;
        let file: format::SchedulerFile = serde_json::from_str(&text)
            .map_err(|e| CmdError::syntax(format!("{path}: {e}")))?;
        return Ok(SchedulerSpec::Explicit(file.delays));
    }
    Err(CmdError::syntax(format!("unknown scheduler spec `{spec}`")))
}

fn cmd_transform(args: &TransformArgs) -> Result<u8, CmdError> {
    let picked = [args.unravel.is_some(), args.lift.is_some(), args.project]
        .iter()
        .filter(|x| **x)
        .count();
    if picked != 1 {
        return Err(CmdError::syntax("pick exactly one of --unravel, --lift, --project"));
    }
    let g = load_game(&args.game)?;
    let transformed = if let Some(m) = args.unravel {
        unravel(&g, m).map_err(|e| CmdError::validation(e.to_string()))?
    } else if let Some(spec) = &args.lift {
        let space = parse_delays(spec, g.num_players())?;
        lift_to_delayed(&g, space).map_err(|e| CmdError::validation(e.to_string()))?
    } else {
        project_to_instant(&g).map_err(|e| CmdError::validation(e.to_string()))?
    };
    let text = format::GameFile::from_graph(&transformed).to_canonical_json();
    std::fs::write(&args.out, text)
        .map_err(|e| CmdError::syntax(format!("{}: {e}", args.out.display())))?;
    println!(
        "wrote {}: {} states, {} transitions",
        args.out.display(),
        transformed.num_states(),
        transformed.transitions().len()
    );
    Ok(EXIT_OK)
}

/// Delay variants are implicit in game files, so the in-memory transition
/// count differs from the file's; report the file's view.
fn ensure_valid(g: &delaymon::GameGraph) -> Result<(), CmdError> {
    let violations = g.validate();
    if violations.is_empty() {
        return Ok(());
    }
    let mut message = format!("{} validation violation(s):", violations.len());
    for v in &violations {
        message.push_str(&format!("\n  {v}"));
    }
    Err(CmdError::validation(message))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8, CmdError> {
    let g = load_game(&args.game)?;
    ensure_valid(&g)?;
    let profile = load_profile(&args.profile, &g)?;
    let sched = parse_scheduler(&args.scheduler)?;
    let opts = SimOptions { horizon: args.horizon as usize, ..SimOptions::default() };
    let result =
        simulate(&g, &profile, &sched, &opts).map_err(|e| CmdError::validation(e.to_string()))?;
    let payoffs: Vec<String> = result.payoffs.iter().map(|p| p.to_string()).collect();
    println!("payoffs: {}", payoffs.join(", "));
    match result.lasso {
        Some((p, c)) => println!("lasso: prefix={p} cycle={c}"),
        None => println!("lasso: none within horizon"),
    }
    if let Some(path) = &args.trace {
        let trace = format::render_trace(&g, &result);
        std::fs::write(path, trace)
            .map_err(|e| CmdError::syntax(format!("{}: {e}", path.display())))?;
    }
    Ok(EXIT_OK)
}

fn cmd_transfer(args: &TransferArgs, jobs: usize) -> Result<u8, CmdError> {
    let g = load_game(&args.game)?;
    ensure_valid(&g)?;
    let profile = load_profile(&args.profile, &g)?;
    let space = parse_delays(&args.delays, g.num_players())?;
    let opts = TransferOptions {
        modulus: args.modulus,
        exhaustive_budget: args.budget,
        random_schedulers: args.random_schedulers,
        random_horizon: args.horizon,
        seed: args.seed,
        jobs: jobs.max(1),
        ..TransferOptions::default()
    };
    let outcome =
        transfer(&g, &profile, &space, &opts).map_err(|e| CmdError::validation(e.to_string()))?;
    let report = &outcome.report;
    println!(
        "unravelled: {} (modulus {}), battery: {} runs ({} exhaustive to horizon {}, {} random)",
        report.unravelled,
        report.modulus,
        report.total_runs,
        report.exhaustive_runs,
        report.exhaustive_horizon,
        report.random_runs
    );
    for i in 0..g.num_players() {
        let delayed = report.delayed_payoffs[i]
            .map(|p| p.to_string())
            .unwrap_or_else(|| "inconclusive".to_string());
        println!(
            "player {}: instant {} | delayed {} | {:?}",
            i + 1,
            report.instant_payoffs[i],
            delayed,
            report.payoff_equal[i]
        );
    }
    println!(
        "assertions: {} | shuffle: {} | threads: {} | variants: {} | sandwich: {} | streams: {}",
        if report.assertion_failures.is_empty() { "safe" } else { "VIOLATED" },
        report.shuffle_ok,
        report.thread_validity_ok,
        report.variants_agree,
        report.sandwich_ok,
        report.streams_matched
    );
    for p in &report.problems {
        println!("problem: {p}");
    }
    if let Some(path) = &args.report {
        let json = format::render_transfer_report(&g, &outcome);
        std::fs::write(path, json)
            .map_err(|e| CmdError::syntax(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.out_game {
        let text = format::GameFile::from_graph(&outcome.delayed).to_canonical_json();
        std::fs::write(path, text)
            .map_err(|e| CmdError::syntax(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.trace {
        let space = outcome.delayed.delay_space().expect("delayed game").clone();
        let opts = SimOptions {
            horizon: args.horizon.min(200),
            stop_at_lasso: false,
            trace_stitcher: true,
            ..SimOptions::default()
        };
        let reference = simulate(
            &outcome.delayed,
            &outcome.profile,
            &SchedulerSpec::Fixed(space.min_profile()),
            &opts,
        )
        .map_err(|e| CmdError::validation(e.to_string()))?;
        let text = format::render_trace(&outcome.delayed, &reference);
        std::fs::write(path, text)
            .map_err(|e| CmdError::syntax(format!("{}: {e}", path.display())))?;
    }
    if report.all_ok() {
        Ok(EXIT_OK)
    } else if report.inconclusive() {
        Ok(EXIT_INCONCLUSIVE)
    } else {
        Ok(EXIT_VALIDATION)
    }
}

fn cmd_check(args: &CheckArgs) -> Result<u8, CmdError> {
    let g = load_game(&args.game)?;
    ensure_valid(&g)?;
    let profile = load_profile(&args.profile, &g)?;
    let schedulers = if g.mode().is_instant() {
        Vec::new()
    } else {
        let space = g.delay_space().expect("delayed graph").clone();
        let mut battery = vec![
            SchedulerSpec::Fixed(space.min_profile()),
            SchedulerSpec::RoundRobin,
        ];
        let mut horizon = 0usize;
        let mut count = 1usize;
        while horizon < 4 {
            match count.checked_mul(space.profile_count()) {
                Some(next) if next <= args.schedulers => {
                    count = next;
                    horizon += 1;
                }
                _ => break,
            }
        }
        if horizon > 0 {
            for prefix in
                delaymon::strategy::enumerate_schedulers(&space, horizon, args.schedulers)
                    .map_err(|e| CmdError::syntax(e.to_string()))?
            {
                battery.push(SchedulerSpec::Chain {
                    prefix,
                    then: Box::new(SchedulerSpec::Fixed(space.min_profile())),
                });
            }
        }
        battery
    };
    let search = DeviationSearch {
        deviator_memory: args.deviator_memory as usize,
        tree_horizon: args.tree_horizon,
        enumeration_budget: 20_000,
        schedulers,
        horizon: args.horizon as usize,
    };
    let report =
        check_equilibrium(&g, &profile, &search).map_err(|e| CmdError::validation(e.to_string()))?;
    let baseline: Vec<String> = report.baseline.iter().map(|p| p.to_string()).collect();
    println!("baseline: {}", baseline.join(", "));
    println!("candidates examined: {}", report.examined);
    for (i, dev) in report.deviations.iter().enumerate() {
        match dev {
            None => println!("player {}: no profitable deviation found", i + 1),
            Some(d) => println!(
                "player {}: deviation found — {} improves {} to {} (worst case under {})",
                i + 1,
                d.description,
                d.baseline,
                d.payoff,
                d.scheduler
            ),
        }
    }
    let _ = PlayerId(0);
    if report.deviation_found() {
        Ok(EXIT_DEVIATION)
    } else if report.budget_exhausted {
        println!("search budget exhausted: partial report");
        Ok(EXIT_BUDGET)
    } else {
        Ok(EXIT_OK)
    }
}
