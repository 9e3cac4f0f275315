use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mra_cli::run::{render_bench, render_explain};
use mra_cli::{base_dir, load, PipelineError, RunOptions};
use mra_core::Strategy;

#[derive(Parser)]
#[command(name = "mra", version, about = "Run multi-relational algebra pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Overrides the strategy of every crawl step.
    #[arg(long, global = true, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Seed for synthetic generators (currently unused).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Dump every slice-relation binding as JSON under `<out>/debug/`.
    #[arg(long, global = true)]
    debug_json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a pipeline and write its sinks.
    Run {
        pipeline: PathBuf,
        /// Root directory for sinks.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check a pipeline without reading any data.
    Validate {
        pipeline: PathBuf,
        /// Print the canonical form of the document.
        #[arg(long)]
        canonical: bool,
    },
    /// Print the resolved plan and the members each block reads.
    Explain {
        pipeline: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run under several strategies and require identical outputs.
    Bench {
        pipeline: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy,
              default_value = "naive,degree_first,depth_first,optimistic")]
        strategies: Vec<Strategy>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.global.threads > 0 {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn dispatch(cli: &Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { pipeline, out, json: as_json } => {
            let doc = load(pipeline)?;
            let opts = RunOptions { out_dir: out.clone(), strategy: g.strategy, debug_json: g.debug_json };
            let (_, report) = mra_cli::run(&doc, base_dir(pipeline), &opts)?;
            if *as_json {
                println!("{}", json(&report));
            } else {
                print!("{}", report.render());
            }
        }
        Command::Validate { pipeline, canonical } => {
            let doc = load(pipeline)?;
            if *canonical {
                print!("{}", doc.to_canonical_string());
            } else {
                println!("ok: {} sources, {} steps, {} sinks", doc.sources.len(), doc.steps.len(), doc.sinks.len());
            }
        }
        Command::Explain { pipeline, json: as_json } => {
            let doc = load(pipeline)?;
            let steps = mra_cli::explain(&doc, base_dir(pipeline))?;
            if *as_json {
                println!("{}", json(&steps));
            } else {
                print!("{}", render_explain(&steps));
            }
        }
        Command::Bench { pipeline, strategies } => {
            let doc = load(pipeline)?;
            let strategies = match g.strategy {
                Some(s) => vec![s],
                None => strategies.clone(),
            };
            let rows = mra_cli::bench(&doc, base_dir(pipeline), &strategies)?;
            print!("{}", render_bench(&rows));
        }
    }
    Ok(())
}
