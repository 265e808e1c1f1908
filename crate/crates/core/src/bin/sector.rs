use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sector_engine::SearchMode;
use sector_engine::cli;
use sector_engine::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "sector", version, about = "Sector classification and emission estimation")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Beam width.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Length of the returned ranking.
    #[arg(long, global = true)]
    topn: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse and cross-check every configured input.
    Validate,
    /// Train adapters on the training split.
    Train,
    /// Classify every enterprise.
    Classify,
    /// Accuracy, beam sweep and ablation on the test split.
    Eval,
    /// Emission estimates, MAPE and the case-study audit.
    Estimate,
    /// Entropy and cost report over the standard grid.
    TheoremCheck,
}

#[derive(ValueEnum, Clone, Copy)]
enum Mode {
    Flat,
    Group,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const RUNTIME: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE)
        }
        Err(Failure::Engine(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { DATA } else { RUNTIME })
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(RUNTIME)
        }
    }
}

enum Failure {
    Usage(String),
    Engine(sector_engine::Error),
    Check(String),
}

impl From<sector_engine::Error> for Failure {
    fn from(e: sector_engine::Error) -> Self {
        Failure::Engine(e)
    }
}

fn load_config(args: &Args) -> Result<RunConfig, Failure> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        out: args.out.clone(),
        mode: args.mode.map(|m| match m {
            Mode::Flat => SearchMode::Flat,
            Mode::Group => SearchMode::Group,
        }),
        k: args.k,
        topn: args.topn,
    });
    Ok(cfg)
}

fn run(args: &Args) -> Result<(), Failure> {
    match args.command {
        Command::Validate => {
            let r = cli::cmd_validate(&load_config(args)?)?;
            println!("taxonomy: {} nodes, {} leaves, levels {:?}", r.nodes, r.leaves, r.levels);
            println!("enterprises: {}", r.enterprises);
            for (ns, n, dim) in &r.stores {
                println!("store {ns}: {n} vectors, dim {dim}");
            }
            if let Some(n) = r.intensities {
                println!("intensities: {n}");
            }
            if let Some(n) = r.case_study_rows {
                println!("case study rows: {n}");
            }
            println!("adapters: {}", r.adapters);
            println!("ok");
        }
        Command::Train => {
            let s = cli::cmd_train(&load_config(args)?)?;
            println!("trained on {} records", s.train_records);
            for (ns, pairs, first, last) in &s.namespaces {
                println!("{ns}: {pairs} pairs, loss {first:.6} -> {last:.6}");
            }
            println!("adapters in {}", s.adapter_dir.display());
        }
        Command::Classify => {
            let s = cli::cmd_classify(&load_config(args)?)?;
            println!(
                "{} queries ({:?}), {} similarities, results in {}",
                s.queries,
                s.mode,
                s.total_similarity_count,
                s.output.display()
            );
        }
        Command::Eval => {
            let s = cli::cmd_eval(&load_config(args)?)?;
            println!("test queries: {}", s.test_queries);
            let sections = [("accuracy", Some(&s.accuracy)), ("sweep", Some(&s.sweep)), ("ablation", s.ablation.as_ref())];
            for (name, rows) in sections {
                for r in rows.into_iter().flatten() {
                    let k = r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
                    println!(
                        "{name} {} k={k}: acc@1 {:.2} acc@3 {:.2} acc@5 {:.2} acc@10 {:.2} sims {:.1}",
                        r.config,
                        r.outcome.acc(1),
                        r.outcome.acc(3),
                        r.outcome.acc(5),
                        r.outcome.acc(10),
                        r.outcome.mean_similarity_count
                    );
                }
            }
        }
        Command::Estimate => {
            let s = cli::cmd_estimate(&load_config(args)?)?;
            println!(
                "estimated {} enterprises ({} skipped, {} intensity fallbacks)",
                s.report.records.len(),
                s.report.skipped.len(),
                s.report.fallback_events
            );
            if let Some(m) = s.report.mape {
                println!("MAPE of predicted sectors: {m:.2}");
            }
            if let Some(a) = &s.audit {
                println!("case study: mean of printed APE column {:.2}", a.mean_printed_ape);
                println!("case study: MAPE from printed estimates {:.2}", a.mape_from_printed_estimates);
                println!("case study: MAPE from revenue x intensity {:.2}", a.mape_from_recomputed);
                if let Some(avg) = a.printed_average {
                    let verdict = if a.average_diverges { "DIVERGES from" } else { "matches" };
                    println!("case study: column mean {verdict} printed average {avg:.2}");
                }
                for c in a.rows.iter().filter(|c| !c.printed_ape_consistent) {
                    println!(
                        "case study: {} printed APE {:.2} but its columns give {:.2}",
                        c.company, c.printed_ape, c.ape_from_printed_estimate
                    );
                }
            }
        }
        Command::TheoremCheck => {
            let out = match (&args.out, &args.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => load_config(args)?.out,
                (None, None) => PathBuf::from("."),
            };
            let r = cli::cmd_theorem_check(&out)?;
            println!("{} cells, {} violations", r.cells.len(), r.violations.len());
            if !r.violations.is_empty() {
                return Err(Failure::Check(format!("{} cells violate H_G <= H_D", r.violations.len())));
            }
        }
    }
    Ok(())
}
