use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mixsum::corpus::{generate_synthetic, write_bundle};
use mixsum::decoding::{write_generations, GenerationRecord};
use mixsum::experiments::{
    build_vocab, decode_test, finetune_pairs, finetune_stage, pretrain_stage, run_ablation, run_low_resource, run_pipeline,
    score_generations, verify_manifest, ExperimentPlan, Prepared,
};
use mixsum::model::checkpoint::Checkpoint;
use mixsum::model::init_params;
use mixsum::rouge::format_report;
use mixsum::training::write_metrics;

#[derive(Parser)]
#[command(
    name = "mixsum",
    version,
    about = "Multi-task pretraining and cross-lingual summarization at desk scale"
)]
struct Cli {
    /// Experiment plan (TOML); the built-in desk plan when absent.
    #[arg(long, global = true)]
    plan: Option<PathBuf>,
    /// Override a plan key, e.g. `--set finetune.steps=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved plan.
    Plan,
    /// Write the synthetic corpus bundle.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and save the shared vocabulary.
    BuildVocab {
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain one seed and save a checkpoint.
    Pretrain {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finetune on cross-lingual pairs, from a checkpoint or from scratch.
    Finetune {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        init: Option<PathBuf>,
        /// Finetuning subset size.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beam-decode the test split with a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score decoded output against the test references.
    Score {
        #[arg(long)]
        decoded: PathBuf,
    },
    /// Full pipeline for every seed of the plan.
    Run,
    /// Objective ablation.
    Ablate {
        /// Row names to run (default: all).
        #[arg(long, value_delimiter = ',')]
        rows: Vec<String>,
    },
    /// Low-resource curve.
    Curve,
    /// Check a run directory against its manifest.
    Verify { dir: PathBuf },
}

fn load_plan(cli: &Cli) -> Result<ExperimentPlan> {
    let plan = match &cli.plan {
        Some(path) => {
            ExperimentPlan::load_with_overrides(path, &cli.overrides).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentPlan::default().with_overrides(&cli.overrides)?,
    };
    plan.validate()?;
    Ok(plan)
}

fn read_generations(path: &PathBuf) -> Result<Vec<GenerationRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::Verify { dir } = &cli.command {
        let entries = verify_manifest(dir)?;
        println!("{}: {} files verified", dir.display(), entries.len());
        return Ok(());
    }
    let plan = load_plan(&cli)?;
    match &cli.command {
        Command::Plan => print!("{}", plan.to_toml()?),
        Command::Synth { out } => {
            write_bundle(out, &generate_synthetic(&plan.synthetic)?)?;
            println!("wrote {}", out.display());
        }
        Command::BuildVocab { out } => {
            let bundle = generate_synthetic(&plan.synthetic)?;
            let vocab = build_vocab(&bundle, &plan.languages, plan.vocab_merges, plan.vocab_seed)?;
            vocab.save(out)?;
            println!("wrote {} ({} ids)", out.display(), vocab.size());
        }
        Command::Pretrain { seed, out } => {
            if plan.pretrain_tasks.is_empty() {
                bail!("the plan enables no pretraining tasks");
            }
            let prep = Prepared::new(&plan)?;
            let mut params = init_params(&prep.model_config(&plan), *seed)?;
            let log = pretrain_stage(&plan, &prep, *seed, &mut params)?;
            write_metrics(out.with_extension("metrics.jsonl"), &log)?;
            Checkpoint {
                params,
                optimizer: None,
                progress: None,
            }
            .save(out)?;
            println!("wrote {}", out.display());
        }
        Command::Finetune { seed, init, size, out } => {
            let prep = Prepared::new(&plan)?;
            let mut params = match init {
                Some(path) => Checkpoint::load(path)?.params,
                None => init_params(&prep.model_config(&plan), *seed)?,
            };
            let pairs = finetune_pairs(&plan, &prep, size.or(plan.finetune_size), *seed)?;
            let (log, state) = finetune_stage(&plan, &prep, *seed, &mut params, &pairs)?;
            write_metrics(out.with_extension("metrics.jsonl"), &log)?;
            Checkpoint {
                params,
                optimizer: Some(state),
                progress: None,
            }
            .save(out)?;
            println!("wrote {}", out.display());
        }
        Command::Generate { checkpoint, out } => {
            let prep = Prepared::new(&plan)?;
            let params = Checkpoint::load(checkpoint)?.params;
            write_generations(out, &decode_test(&plan, &prep, &params)?)?;
            println!("wrote {}", out.display());
        }
        Command::Score { decoded } => {
            let prep = Prepared::new(&plan)?;
            let generations = read_generations(decoded)?;
            if generations.len() != prep.test.len() {
                bail!("{} generations for {} test documents", generations.len(), prep.test.len());
            }
            print!("{}", format_report(&score_generations(&prep, &generations)?));
        }
        Command::Run => {
            let result = run_pipeline(&plan)?;
            for r in &result.runs {
                println!("seed {}\trouge-1 f1 {:.4}", r.seed, r.rouge.rouge1.f1);
            }
            print!("{}", format_report(&result.mean()));
        }
        Command::Ablate { rows } => {
            let only: Vec<&str> = rows.iter().map(String::as_str).collect();
            for row in run_ablation(&plan, &only)? {
                match (row.mean(), &row.error) {
                    (Some(m), _) => println!("{}\t{:.4}", row.name, m.rouge1.f1),
                    (None, err) => println!("{}\tfailed: {}", row.name, err.as_deref().unwrap_or("no runs")),
                }
            }
        }
        Command::Curve => {
            for p in run_low_resource(&plan)? {
                match p.gap() {
                    Some(g) => println!("{}\tgap {:.4}", p.size, g),
                    None => println!("{}\tfailed: {}", p.size, p.error.as_deref().unwrap_or("no runs")),
                }
            }
        }
        Command::Verify { .. } => unreachable!(),
    }
    Ok(())
}
