use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use corads_cli::{
    cmd_ablate, cmd_evaluate, cmd_preprocess, cmd_report, cmd_synth, cmd_train, runs_from_ablation, AblationAxis,
    AblationGrid, CliError, EvaluateOptions, ExitStatus, ExperimentConfig,
};
use corads_core::evaluation::{BootstrapConfig, Sidedness};
use corads_core::synth::SyntheticSpec;
use corads_core::Split;

#[derive(Parser)]
#[command(name = "corads", version, about = "CO-RADS grading of chest CT: training, ablations and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set train.max_batches=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Evaluate every scan of this manifest instead of a split of the run.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Split of the run's own manifest to evaluate.
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Use a one-sided significance test (first run better).
    #[arg(long)]
    one_sided: bool,
    #[arg(long)]
    bootstrap_iters: Option<usize>,
    #[arg(long)]
    bootstrap_seed: Option<u64>,
}

impl EvalArgs {
    fn options(&self, run_bootstrap: BootstrapConfig) -> EvaluateOptions {
        let bootstrap = (self.bootstrap_iters.is_some() || self.bootstrap_seed.is_some()).then(|| BootstrapConfig {
            n_iter: self.bootstrap_iters.unwrap_or(run_bootstrap.n_iter),
            seed: self.bootstrap_seed.unwrap_or(run_bootstrap.seed),
        });
        EvaluateOptions {
            manifest: self.manifest.clone(),
            split: self.split,
            sidedness: if self.one_sided {
                Sidedness::OneSided
            } else {
                Sidedness::TwoSided
            },
            bootstrap,
            ..EvaluateOptions::default()
        }
    }
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset with masks and manifest.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        /// Phantom parameters (TOML); defaults otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n_scans: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Preprocess every manifest scan into the cache.
    Preprocess(ConfigArgs),
    /// Train the ensemble members of a run, resuming unfinished ones.
    Train(ConfigArgs),
    /// Train one run per ablation grid point.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Axes to combine: pretrained, lesion, head, dimensionality.
        #[arg(long, value_delimiter = ',', conflicts_with = "standard")]
        axes: Vec<AblationAxis>,
        /// Base model, base without each component, and the 2D model.
        #[arg(long)]
        standard: bool,
    },
    /// Evaluate a trained run and write report, predictions and figures.
    Evaluate {
        run: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        /// Compare against another run with a paired bootstrap test.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Evaluate several runs on the same scans and compare them.
    Report {
        /// Run directories; the first is the reference for p-values.
        runs: Vec<PathBuf>,
        /// Ablation summary written by `ablate`.
        #[arg(long)]
        ablation: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { out, spec, n_scans, seed } => {
            let mut s = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
                }
                None => SyntheticSpec::default(),
            };
            if let Some(n) = n_scans {
                s.n_scans = n;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let manifest = cmd_synth(&s, &out)?;
            println!("{}", manifest.display());
        }
        Command::Preprocess(args) => {
            let stats = cmd_preprocess(&args.load()?)?;
            println!(
                "cache hits {} misses {} (hit rate {:.1}%)",
                stats.hits,
                stats.misses,
                100.0 * stats.hit_rate()
            );
        }
        Command::Train(args) => {
            let summary = cmd_train(&args.load()?)?;
            println!("{}", summary.run_dir.display());
        }
        Command::Ablate { config, axes, standard } => {
            let grid = if standard {
                AblationGrid::Standard
            } else if axes.is_empty() {
                return Err(CliError::Usage("pass --axes or --standard".into()).into());
            } else {
                AblationGrid::Axes(axes)
            };
            let summary = cmd_ablate(&config.load()?, &grid)?;
            for p in &summary.points {
                println!("{}\t{}", p.label, p.run_dir.display());
            }
            println!(
                "cache hit rate {:.1}% ({} hits, {} misses)",
                100.0 * summary.cache.hit_rate(),
                summary.cache.hits,
                summary.cache.misses
            );
        }
        Command::Evaluate { run, eval, against, out } => {
            let run_cfg = corads_cli::RunDir::open(&run)?.config.evaluation.bootstrap;
            let options = EvaluateOptions {
                against,
                out_dir: out,
                ..eval.options(run_cfg)
            };
            let e = cmd_evaluate(&run, &options)?;
            println!("{}", e.report.to_json());
            if let Some(c) = e.comparison {
                println!("AUC {:.4} vs {:.4}: p = {}", c.auc.0, c.auc.1, c.auc_p);
                if let (Some((a, b)), Some(p)) = (c.qwk, c.qwk_p) {
                    println!("QWK {a:.4} vs {b:.4}: p = {p}");
                }
            }
        }
        Command::Report { runs, ablation, eval, out } => {
            let mut list: Vec<(String, PathBuf)> = match ablation {
                Some(path) => runs_from_ablation(&path)?,
                None => Vec::new(),
            };
            list.extend(runs.into_iter().map(|p| {
                let label = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                (label, p)
            }));
            let first = list
                .first()
                .ok_or_else(|| CliError::Usage("pass run directories or --ablation".into()))?;
            let bootstrap = corads_cli::RunDir::open(&first.1)?.config.evaluation.bootstrap;
            let rows = cmd_report(&list, &eval.options(bootstrap), &out)?;
            for r in rows {
                println!("{}\tAUC {:.4} [{:.4}, {:.4}]", r.label, r.auc, r.auc_ci.0, r.auc_ci.1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ExitStatus::Usage as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let status = e.downcast_ref::<CliError>().map_or(ExitStatus::Runtime, CliError::status);
            ExitCode::from(status as u8)
        }
    }
}
