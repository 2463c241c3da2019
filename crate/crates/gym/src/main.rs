use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use recall_gym::config::{preset, ExperimentConfig, PRESET_NAMES};
use recall_gym::document::{read_json, Checkpoint, UniverseDocument};
use recall_gym::pipeline::SeedWorld;
use recall_gym::runner::{run_experiment, validate_run};
use recall_gym::suites::{reproduce, SuiteOptions, SUITES};
use recall_gym::{Error, Result};
use recall_gym_core::world::split_dataset;

#[derive(Parser, Debug)]
#[command(name = "recall-gym", version, about = "Categorical factual-recall RL testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a universe and its splits as a versioned JSON document.
    Generate {
        #[arg(long, default_value = "nq_like")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one seed of a config and write its run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reload the checkpoints of a run directory and re-score them.
    Eval {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every seed of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named suite and print its Markdown table.
    Reproduce {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only this seed instead of seeds 0..5.
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict multi-preset suites to one preset.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Check that a run directory is complete and self-consistent.
    Validate {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn with_seeds(mut cfg: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg
}

fn default_out(cfg: &ExperimentConfig) -> Result<PathBuf> {
    Ok(match &cfg.output {
        Some(o) => o.clone(),
        None => PathBuf::from("runs").join(cfg.resolve()?.name),
    })
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { preset: name, seed, out } => {
            let p = preset(&name)?;
            let world = recall_gym_core::world::generate_universe(&p.world, seed)?;
            let sizes = recall_gym::suites::config(&name, recall_gym::TrainerKind::None, &[seed]).splits;
            let splits = split_dataset(&world, sizes, seed)?;
            let doc = UniverseDocument::new(world, Some(splits));
            doc.save(&out)?;
            println!("{} (hash {:016x})", out.display(), doc.universe_hash);
        }
        Command::Train { config, seed, out } => {
            let cfg = with_seeds(ExperimentConfig::load(&config)?, Some(seed));
            let r = run_experiment(&cfg, &out)?;
            print_summary(&out, &r.summary);
        }
        Command::Run { config, seed, out } => {
            let cfg = with_seeds(ExperimentConfig::load(&config)?, seed);
            let out = match out {
                Some(o) => o,
                None => default_out(&cfg)?,
            };
            let r = run_experiment(&cfg, &out)?;
            print_summary(&out, &r.summary);
        }
        Command::Eval { out, seed } => eval_run(&out, seed)?,
        Command::Reproduce { suite, out, seed, preset } => {
            if !SUITES.contains(&suite.as_str()) {
                return Err(Error::Config(format!("unknown suite {suite:?} (known: {})", SUITES.join(", "))));
            }
            if let Some(p) = &preset {
                if !PRESET_NAMES.contains(&p.as_str()) {
                    return Err(Error::Config(format!("unknown preset {p:?}")));
                }
            }
            let mut opts = SuiteOptions { out, presets: preset.map(|p| vec![p]), ..SuiteOptions::default() };
            if let Some(s) = seed {
                opts.seeds = vec![s];
            }
            let report = reproduce(&suite, &opts)?;
            println!("{}", report.markdown);
        }
        Command::Validate { out } => {
            let s = validate_run(&out)?;
            println!("{}: ok ({} seeds)", out.display(), s.seeds.len());
        }
    }
    Ok(())
}

fn print_summary(out: &Path, s: &recall_gym::RunSummary) {
    println!("{} seeds {:?}", out.display(), s.seeds);
    for key in ["pre_acc", "post_acc", "gain", "relative_gain", "train_test_gap"] {
        if let Some(v) = s.get(key) {
            println!("  {key:<16} {v:.4}");
        }
    }
}

fn eval_run(dir: &Path, only: Option<u64>) -> Result<()> {
    let summary = validate_run(dir)?;
    println!("seed\tpre_acc\tpost_acc\treported_post");
    for &seed in &summary.seeds {
        if only.is_some_and(|s| s != seed) {
            continue;
        }
        let sd = dir.join(format!("seed_{seed}"));
        let cfg: ExperimentConfig = read_json(&sd.join("config.json"))?;
        let resolved = cfg.resolve()?;
        let world = SeedWorld::new(&resolved.world, cfg.splits, seed)?;
        let universe = Arc::clone(&world.universe);
        let pre = Checkpoint::load(&sd.join("checkpoint_pre.json"))?.into_policy(universe.clone())?;
        let post = Checkpoint::load(&sd.join("checkpoint_post.json"))?.into_policy(universe)?;
        let report: recall_gym::SeedReport = read_json(&sd.join("report.json"))?;
        println!(
            "{seed}\t{:.4}\t{:.4}\t{:.4}",
            world.accuracy(&pre, &world.test)?,
            world.accuracy(&post, &world.test)?,
            report.metrics.get("source_post_acc").copied().unwrap_or(report.post.greedy_accuracy),
        );
    }
    Ok(())
}
