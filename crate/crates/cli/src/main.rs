use std::path::PathBuf;
use std::process::ExitCode;

use bevloc::config::RunConfig;
use bevloc::pipeline::Stage;
use bevloc_cli::Source;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bevloc", version, about = "Locate LiDAR scans on overhead map tiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set matcher.n_rot=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (overrides `workers` in the config; 0 = all cores;
    /// capped at the available cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> bevloc::Result<RunConfig> {
        let mut set = self.set.clone();
        if let Some(w) = self.workers {
            set.push(format!("workers={w}"));
        }
        RunConfig::load(self.config.as_deref(), &set)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Full,
    FeatureOnly,
    SkeletonOnly,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Full => Stage::Full,
            StageArg::FeatureOnly => Stage::FeatureOnly,
            StageArg::SkeletonOnly => Stage::SkeletonOnly,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    SynthGen {
        #[arg(long)]
        count: usize,
        /// Base seed (overrides `seed` in the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Replace scenes in a non-empty output directory.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Localize every scene of a dataset, or one scene directory.
    Localize {
        #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        stage: StageArg,
        /// Also write a probability heatmap PNG per scene.
        #[arg(long)]
        heatmap: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a results.csv into recall tables.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every configuration of an ablation matrix over a dataset.
    Ablate {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Time localization and score volume construction.
    Bench {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> bevloc::Result<bool> {
    match cli.command {
        Command::SynthGen {
            count,
            seed,
            out,
            force,
            common,
        } => {
            let mut cfg = common.load()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let m = bevloc_cli::synth_gen(&cfg, count, &out, force)?;
            println!("wrote {} scenes to {}", m.scenes.len(), out.display());
            Ok(true)
        }
        Command::Localize {
            dataset,
            scene,
            out,
            stage,
            heatmap,
            common,
        } => {
            let cfg = common.load()?;
            let source = match (dataset, scene) {
                (Some(d), _) => Source::Dataset(d),
                (None, Some(s)) => Source::Scene(s),
                (None, None) => unreachable!("clap requires one of --dataset/--scene"),
            };
            let o = bevloc_cli::localize(&cfg, &source, &out, stage.into(), heatmap)?;
            println!("localized {} scenes, {} failed", o.records.len(), o.failures.len());
            for f in &o.failures {
                eprintln!("{}: {}", f.scene_id, f.error);
            }
            Ok(o.failures.is_empty())
        }
        Command::Eval { results, out, common } => {
            let cfg = common.load()?;
            let report = bevloc_cli::eval(&cfg, &results, &out)?;
            print!("{}", report.to_table());
            Ok(true)
        }
        Command::Ablate {
            matrix,
            dataset,
            out,
            common,
        } => {
            let cfg = common.load()?;
            for (name, rep) in bevloc_cli::ablate(&cfg, &matrix, &dataset, &out)? {
                println!("== {name}\n{}", rep.to_table());
            }
            Ok(true)
        }
        Command::Bench { out, common } => {
            let cfg = common.load()?;
            let rep = bevloc_cli::bench(&cfg, &out)?;
            for r in &rep.rows {
                println!(
                    "workers {:2} ({} threads): localize median {:8.1} ms p95 {:8.1} ms | score volume median {:7.2} ms p95 {:7.2} ms",
                    r.workers, r.threads, r.localize.median_ms, r.localize.p95_ms, r.score_volume.median_ms, r.score_volume.p95_ms
                );
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
