//! Command-line front end for the data production pipeline.
//!
//! Stages communicate only through files, so each subcommand maps to one
//! stage: analyze → plan → produce → judge → report. `index`, `deductions`,
//! `rubric`, and `stub-pool` export the supporting artifacts.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use qaforge::confgen::build_corpus_index;
use qaforge::gateway::{offline_pool_config, Gateway};
use qaforge::judge::deduction_table_json;
use qaforge::metrics::HUMAN_RATER_RUBRIC;
use qaforge::pipeline::{
    stage_analyze, stage_judge, stage_plan, stage_produce, stage_report, write_json_atomic,
    AnalyzeOptions, JudgeOptions, PlanOptions, ProduceOptions, RunManifest,
};
use qaforge::taxonomy::LanguageRegistry;

#[derive(Parser)]
#[command(
    name = "qaforge",
    about = "Synthetic code-QA training data pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label interaction logs and estimate the behavior profile.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long, default_value = "profile.json")]
        out: PathBuf,
        /// Pool config providing the classifier endpoint.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
        /// Process interactions one at a time instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Sample a production plan from a behavior profile.
    Plan {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        total: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "plan.json")]
        out: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Realize plan items as simulated sessions over a repository corpus.
    Produce {
        #[arg(long)]
        plan: PathBuf,
        /// Corpus directory, or a corpus index JSON written by `index`.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "traces.jsonl")]
        traces_out: PathBuf,
        #[arg(long, default_value = "requeue.jsonl")]
        requeue_out: PathBuf,
        /// Retry-queue file from a previous judge round to reproduce.
        #[arg(long)]
        requeue_in: Option<PathBuf>,
        #[arg(long)]
        work_root: Option<PathBuf>,
        /// Keep scratch workspaces instead of deleting them on success.
        #[arg(long)]
        keep_workspaces: bool,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        sequential: bool,
    },
    /// Judge produced sessions and admit perfect responses to the dataset.
    Judge {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "dataset.jsonl")]
        dataset_out: PathBuf,
        #[arg(long, default_value = "scorecards.jsonl")]
        scorecards_out: PathBuf,
        #[arg(long, default_value = "requeue.jsonl")]
        requeue_out: PathBuf,
        /// Production rounds before a query is dropped.
        #[arg(long, default_value_t = qaforge::pipeline::DEFAULT_MAX_ROUNDS)]
        max_rounds: u32,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        sequential: bool,
    },
    /// Compute metrics over a judged run.
    Report {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scorecards: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Optional human scores JSONL ({query_id, endpoint_id, human_score}).
        #[arg(long)]
        human: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Index a corpus directory and write the index JSON.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "corpus-index.json")]
        out: PathBuf,
    },
    /// Export the deduction rule table for audit.
    Deductions {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the human-rater penalty rubric.
    Rubric {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a fully offline stub pool config (for demos, CI, benchmarks).
    StubPool {
        #[arg(long, default_value = "pool.json")]
        out: PathBuf,
        /// Judge base-score weights as score:weight pairs.
        #[arg(long, default_value = "5:6,4:3,3:1")]
        weights: String,
    },
}

/// Writes a line to stdout, ignoring a closed pipe (e.g. `qaforge ... | head`).
fn emit(content: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{content}");
}

macro_rules! out {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn print_manifest(manifest: &RunManifest) {
    let c = &manifest.counts;
    out!("stage {} run {} complete", manifest.stage, manifest.run_id);
    let pairs = [
        ("planned", c.planned),
        ("classified", c.classified),
        ("unclassified", c.unclassified),
        ("generated", c.generated),
        ("filtered_out", c.filtered_out),
        ("sessions_ok", c.sessions_ok),
        ("judged", c.judged),
        ("admitted", c.admitted),
        ("requeued", c.requeued),
        ("dropped", c.dropped),
    ];
    for (name, value) in pairs {
        if value > 0 {
            out!("  {name}: {value}");
        }
    }
    for output in manifest.outputs.keys() {
        out!("  wrote {output}");
    }
}

fn parse_weights(raw: &str) -> Result<Vec<(u8, u32)>> {
    let mut weights = Vec::new();
    for part in raw.split(',') {
        let (score, weight) = part
            .split_once(':')
            .with_context(|| format!("weight {part:?} is not score:weight"))?;
        weights.push((score.trim().parse()?, weight.trim().parse()?));
    }
    if weights.is_empty() {
        bail!("no weights given");
    }
    Ok(weights)
}

fn write_or_print(out: Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(&path, content)?;
            out!("wrote {}", path.display());
        }
        None => out!("{content}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze {
            logs,
            out,
            pool,
            run_id,
            sequential,
        } => {
            let gateway = Gateway::from_config_file(&pool)?;
            let options = AnalyzeOptions { run_id, sequential };
            let manifest = stage_analyze(&logs, &out, &gateway, &options)?;
            print_manifest(&manifest);
        }
        Command::Plan {
            profile,
            total,
            seed,
            out,
            run_id,
        } => {
            let options = PlanOptions {
                run_id,
                plan_config: None,
            };
            let manifest = stage_plan(&profile, total, seed, &out, &options)?;
            print_manifest(&manifest);
        }
        Command::Produce {
            plan,
            corpus,
            pool,
            seed,
            traces_out,
            requeue_out,
            requeue_in,
            work_root,
            keep_workspaces,
            run_id,
            sequential,
        } => {
            let gateway = Gateway::from_config_file(&pool)?;
            let mut options = ProduceOptions {
                keep_workspaces,
                sequential,
                run_id,
                requeue_in,
                ..Default::default()
            };
            if let Some(root) = work_root {
                options.work_root = root;
            }
            let manifest = stage_produce(
                &plan,
                &corpus,
                &gateway,
                seed,
                &traces_out,
                &requeue_out,
                &options,
            )?;
            print_manifest(&manifest);
        }
        Command::Judge {
            traces,
            pool,
            dataset_out,
            scorecards_out,
            requeue_out,
            max_rounds,
            run_id,
            sequential,
        } => {
            let gateway = Gateway::from_config_file(&pool)?;
            let options = JudgeOptions {
                run_id,
                sequential,
                max_rounds,
                ..Default::default()
            };
            let manifest = stage_judge(
                &traces,
                &gateway,
                &dataset_out,
                &scorecards_out,
                &requeue_out,
                &options,
            )?;
            print_manifest(&manifest);
        }
        Command::Report {
            dataset,
            scorecards,
            plan,
            human,
            out,
        } => {
            let report = stage_report(
                &dataset,
                &scorecards,
                &plan,
                human.as_deref(),
                out.as_deref(),
            )?;
            out!("{}", report.to_table().trim_end());
        }
        Command::Index { corpus, out } => {
            let index = build_corpus_index(&corpus, &LanguageRegistry::default())?;
            write_json_atomic(&out, &index)?;
            out!(
                "indexed {} repos / {} files into {}",
                index.repos.len(),
                index.file_count(),
                out.display()
            );
        }
        Command::Deductions { out } => {
            write_or_print(out, &deduction_table_json())?;
        }
        Command::Rubric { out } => {
            write_or_print(out, HUMAN_RATER_RUBRIC)?;
        }
        Command::StubPool { out, weights } => {
            let config = offline_pool_config(&parse_weights(&weights)?);
            write_json_atomic(&out, &config)?;
            out!("wrote {}", out.display());
        }
    }
    Ok(())
}
