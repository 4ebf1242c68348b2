//! `clio`: batch front end for the power-allocation models.

mod commands;
mod report;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use clio_core::conflict::BattleSpec;
use clio_core::inference::ForestConfig;
use clio_core::pipeline::Ablation;
use clio_core::uncertainty::MCConfig;

use report::{Format, RunReport};

/// Soft wall-clock budget for a default run, reported by `--timing`.
const BUDGET_SECS: f64 = 25.0;

#[derive(Debug, Parser)]
#[command(
    name = "clio",
    version,
    about = "Shapley power allocation, uncertainty and conflict models for historical scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format for stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Also write the main table as CSV to this file (`bundle`: the output directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print wall-clock time to stderr.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Args, Clone)]
struct McArgs {
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 1000)]
    sims: usize,
    #[arg(long, env = "CLIO_SEED", default_value_t = 42)]
    seed: u64,
    /// Central interval level in percent.
    #[arg(long, default_value_t = 95.0)]
    confidence: f64,
}

impl McArgs {
    fn config(&self) -> clio_core::Result<MCConfig> {
        MCConfig::new(self.sims, self.seed, self.confidence)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AblationArg {
    Attention,
    Shapley,
    MonteCarlo,
    Causal,
    EqualWeights,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Attention => Ablation::Attention,
            AblationArg::Shapley => Ablation::Shapley,
            AblationArg::MonteCarlo => Ablation::MonteCarlo,
            AblationArg::Causal => Ablation::Causal,
            AblationArg::EqualWeights => Ablation::EqualWeights,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Shapley shares, discrepancies, intervals, tension and conflict probability.
    Allocate {
        /// Scenario file, or a bundled name (colonial_1890, punic_218bce).
        scenario: String,
        #[command(flatten)]
        mc: McArgs,
        /// Point estimates only.
        #[arg(long)]
        no_mc: bool,
    },
    /// Forest importances and weights calibrated to historical shares.
    Weights {
        scenario: String,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, env = "CLIO_SEED", default_value_t = 42)]
        seed: u64,
    },
    /// Win probabilities for shipped or ad hoc battles.
    Battle {
        scenario: String,
        #[arg(long)]
        battle: Option<String>,
        #[arg(long)]
        attacker: Option<String>,
        #[arg(long)]
        defender: Option<String>,
        /// Overrides each battle's commander coefficient.
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Resource/commander blend for one battle.
    Blend {
        scenario: String,
        #[arg(long)]
        battle: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        resource: f64,
        #[arg(long, default_value_t = 0.5)]
        commander: f64,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Commander effectiveness, support scores and comparisons.
    Commanders { scenario: String },
    /// Abduction-action-prediction queries on the scenario's causal graphs.
    Counterfactual {
        scenario: String,
        #[arg(long)]
        entity: Option<String>,
        /// Intervention in raw units, e.g. `--do naval=980`. Repeatable.
        #[arg(long = "do", value_name = "NODE=VALUE", value_parser = parse_intervention)]
        interventions: Vec<(String, f64)>,
        #[arg(long)]
        graph: Option<String>,
    },
    /// Ablation table: full model against configurations with parts removed.
    Ablate {
        scenario: String,
        /// Comma-separated subset of ablations (default: all).
        #[arg(long, value_enum, value_delimiter = ',', num_args = 0..)]
        only: Option<Vec<AblationArg>>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Every applicable analysis written as CSV files plus summary.json.
    Bundle {
        scenario: String,
        /// Output directory; `--out` works too.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[command(flatten)]
        mc: McArgs,
    },
}

fn parse_intervention(text: &str) -> Result<(String, f64), String> {
    let (node, value) = text
        .split_once('=')
        .ok_or_else(|| format!("expected NODE=VALUE, got `{text}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{text}`: value must be finite"));
    }
    Ok((node.trim().to_string(), value))
}

fn run(cli: &Cli) -> Result<RunReport> {
    use commands as c;
    let report = match &cli.command {
        Command::Allocate { scenario, mc, no_mc } => {
            let s = c::open_scenario(scenario)?;
            let config = mc.config()?;
            c::allocate(&s, scenario, (!no_mc).then_some(&config))?.0
        }
        Command::Weights { scenario, trees, seed } => {
            let s = c::open_scenario(scenario)?;
            let forest = ForestConfig {
                tree_count: *trees,
                seed: *seed,
                ..ForestConfig::default()
            };
            c::weights(&s, scenario, &forest)?
        }
        Command::Battle {
            scenario,
            battle,
            attacker,
            defender,
            gamma,
            mc,
        } => {
            let s = c::open_scenario(scenario)?;
            let config = mc.config()?;
            let battles = c::select_battles(&s, battle.as_deref(), attacker.as_deref(), defender.as_deref())?;
            for b in &battles {
                check_battle(&s, b)?;
            }
            c::battle(&s, scenario, &battles, *gamma, &config)?.0
        }
        Command::Blend {
            scenario,
            battle,
            resource,
            commander,
            mc,
        } => {
            let s = c::open_scenario(scenario)?;
            let config = mc.config()?;
            let battles = c::select_battles(&s, battle.as_deref(), None, None)?;
            c::blend(&s, scenario, &battles[0], *resource, *commander, &config)?
        }
        Command::Commanders { scenario } => c::commanders(&c::open_scenario(scenario)?, scenario)?,
        Command::Counterfactual {
            scenario,
            entity,
            interventions,
            graph,
        } => {
            let s = c::open_scenario(scenario)?;
            let mut map = BTreeMap::new();
            for (node, value) in interventions {
                if map.insert(node.clone(), *value).is_some() {
                    return Err(anyhow!("node `{node}` is intervened on twice"));
                }
            }
            c::counterfactual(&s, scenario, entity.as_deref(), &map, graph.as_deref())?
        }
        Command::Ablate { scenario, only, mc } => {
            let s = c::open_scenario(scenario)?;
            let config = mc.config()?;
            let selected: Vec<Ablation> = match only {
                None => Ablation::ALL.to_vec(),
                Some(list) => list.iter().map(|a| Ablation::from(*a)).collect(),
            };
            c::ablate(&s, scenario, &selected, &config)?.0
        }
        Command::Bundle { scenario, dir, mc } => {
            let dir = dir
                .as_ref()
                .or(cli.out.as_ref())
                .context("bundle needs an output directory (--out DIR)")?;
            let s = c::open_scenario(scenario)?;
            c::bundle(&s, scenario, dir, &mc.config()?)?
        }
    };
    Ok(report)
}

fn check_battle(scenario: &clio_core::Scenario, battle: &BattleSpec) -> Result<()> {
    let setup = scenario.conflict.as_ref().context("scenario has no conflict section")?;
    setup.check_battle(battle, scenario, "battle")?;
    Ok(())
}

/// 2 for bad input, 3 for failed computation.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<clio_core::Error>() {
            return if e.is_input_error() { 2 } else { 3 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    2
}

/// Error chain joined with ": ", skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = run(&cli).and_then(|mut report| {
        report.duration_ms = started.elapsed().as_secs_f64() * 1e3;
        let is_bundle = matches!(cli.command, Command::Bundle { .. });
        if let Some(path) = cli.out.as_ref().filter(|_| !is_bundle) {
            report
                .tables
                .first()
                .context("command produced no table")?
                .write_csv(path)?;
        }
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        report.emit(cli.format, &mut lock)?;
        lock.flush()?;
        Ok(report)
    });
    let elapsed = started.elapsed().as_secs_f64();
    if cli.timing {
        let verdict = if elapsed <= BUDGET_SECS { "within" } else { "over" };
        eprintln!("elapsed {elapsed:.3} s ({verdict} the {BUDGET_SECS:.0} s budget)");
    }
    match result {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if report.violations.is_empty() {
                ExitCode::SUCCESS
            } else {
                for v in &report.violations {
                    eprintln!("invariant violated: {v}");
                }
                ExitCode::from(3)
            }
        }
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
