use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use fiun::dataset::LabelSet;
use fiun::engine::Method;
use fiun_cli::run::{self, format_compare, in_stage};
use fiun_cli::{parse_config, ExperimentConfig, MethodName, Overrides, Stage, StageError};

#[derive(Parser)]
#[command(
    name = "fiun",
    version,
    about = "Unlearning experiments over model-inheritance graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory, overriding the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Forget labels, e.g. `0,3,7`.
    #[arg(long, global = true, value_name = "L1,L2,...", value_parser = LabelSet::from_str)]
    labels: Option<LabelSet>,

    /// Run only this method: fiun, retrain, finetune or ga.
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<MethodName>,

    /// Global seed, overriding the config.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the base dataset and the generated graph.
    GenTopo,
    /// Train every node of the generated graph.
    Train,
    /// Unlearn the forget labels with each configured method.
    Unlearn,
    /// Accuracy of the trained and unlearned graphs.
    Evaluate,
    /// Aggregate the method reports.
    Compare,
    /// All stages in order.
    Run,
}

fn parse_method(s: &str) -> Result<MethodName, String> {
    Method::from_str(s).map(MethodName::from).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<(), StageError> {
    let cfg = in_stage(Stage::Config, load_config(cli))?;
    let out = cfg.output.dir.display().to_string();
    match cli.command {
        Command::GenTopo => {
            let g = in_stage(Stage::Generate, run::gen_topo(&cfg))?;
            println!("generated {} nodes, {} edges in {out}", g.len(), g.edge_count());
        }
        Command::Train => {
            let g = in_stage(Stage::Train, run::train(&cfg))?;
            println!("trained {} nodes in {out}", g.len());
        }
        Command::Unlearn => {
            for r in in_stage(Stage::Unlearn, run::unlearn(&cfg))? {
                print_report(&r);
            }
        }
        Command::Evaluate => {
            let rows = in_stage(Stage::Evaluate, run::evaluate_stage(&cfg))?;
            println!("evaluated {} node states; see {out}/reports/evaluation.csv", rows.len());
        }
        Command::Compare => {
            let rows = in_stage(Stage::Compare, run::compare(&cfg))?;
            print!("{}", in_stage(Stage::Compare, format_compare(&rows))?);
        }
        Command::Run => {
            let summary = fiun_cli::run_experiment(&cfg)?;
            for r in &summary.reports {
                print_report(r);
            }
            print!("{}", in_stage(Stage::Compare, format_compare(&summary.compare))?);
        }
    }
    Ok(())
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let mut cfg = parse_config(path)?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        workers: cli.workers,
        labels: cli.labels.clone(),
        method: cli.method,
    };
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn print_report(r: &fiun::engine::UnlearnReport) {
    println!(
        "{}: {} nodes updated, {} discovery, max cumulative time {:.6} s",
        r.method,
        r.nodes.len(),
        r.discovery.len(),
        r.max_cumulative_time()
    );
}
