use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmnas_core::data::{save_dataset, generate_synthetic, PlantedRule};
use mmnas_core::experiment::{render, report, run_experiment, run_matrix, Experiment, ExperimentConfig};
use mmnas_core::prune::Discretizer;
use mmnas_core::CoreError;

#[derive(Debug, Parser)]
#[command(name = "mmnas", version, about = "Architecture search for multimodal fusion networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset into `<out>/dataset.ndjson`.
    GenData(Common),
    /// Train the supernet for each seed.
    Train(Common),
    /// Discretize trained supernets.
    Prune(Common),
    /// Evaluate supernets and their discretizations, then update the summary.
    Eval(Common),
    /// Train, discretize and evaluate every seed.
    Run(Common),
    /// Run every discretizer with and without the diversity penalty.
    Matrix(Common),
    /// Aggregate finished runs into tables.
    Report {
        /// Run directory or directory of runs [default: --out or `runs`].
        dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Planted rule of the synthetic data.
    #[arg(long)]
    task: Option<PlantedRule>,
    #[arg(long)]
    discretizer: Option<Discretizer>,
    /// Search without the diversity penalty.
    #[arg(long)]
    no_penalty: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing results.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CoreError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seeds = vec![seed];
        }
        if let Some(rule) = self.task {
            cfg.data.rule = rule;
        }
        if let Some(d) = self.discretizer {
            cfg.run.discretizer = d;
        }
        if self.no_penalty {
            cfg.train.penalty_weight = 0.0;
        }
        if let Some(out) = &self.out {
            cfg.run.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), CoreError> {
    match command {
        Command::GenData(c) => {
            let cfg = c.resolve()?;
            std::fs::create_dir_all(&cfg.run.out).map_err(|source| CoreError::Io {
                path: cfg.run.out.clone(),
                source,
            })?;
            for &seed in &cfg.run.seeds {
                let name = if cfg.run.seeds.len() == 1 {
                    "dataset.ndjson".to_string()
                } else {
                    format!("dataset-{seed}.ndjson")
                };
                let path = cfg.run.out.join(name);
                if path.exists() && !c.force {
                    return Err(CoreError::AlreadyExists(path));
                }
                let data = generate_synthetic(&cfg.data.synth(seed))?;
                save_dataset(&data, &path)?;
                println!("wrote {} ({} records)", path.display(), data.len());
            }
        }
        Command::Train(c) => {
            let exp = Experiment::new(c.resolve()?)?;
            for &seed in &exp.config.run.seeds {
                let history = exp.train_seed(seed, c.force)?;
                if let Some(last) = history.last() {
                    println!(
                        "seed {seed}: {} epochs, val loss {:.4}, val metric {:.4}",
                        history.epochs.len(),
                        last.val_loss,
                        last.val_metrics.selection()
                    );
                }
            }
            println!("{}", exp.dir.display());
        }
        Command::Prune(c) => {
            let exp = Experiment::new(c.resolve()?)?;
            let method = exp.config.run.discretizer;
            for &seed in &exp.config.run.seeds {
                let export = exp.discretize_seed(seed, method, c.force)?;
                println!("seed {seed}:\n{}", export.to_json()?);
            }
        }
        Command::Eval(c) => {
            let exp = Experiment::new(c.resolve()?)?;
            let method = exp.config.run.discretizer;
            for &seed in &exp.config.run.seeds {
                exp.evaluate_seed(seed, method, c.force)?;
            }
            print!("{}", render(&exp.summarize_existing(method)?));
        }
        Command::Run(c) => {
            let cfg = c.resolve()?;
            let summary = run_experiment(&cfg, c.force)?;
            print!("{}", render(&summary));
            if summary.runs == 0 {
                return Err(CoreError::Precondition("every seed failed".into()));
            }
        }
        Command::Matrix(c) => {
            let cfg = c.resolve()?;
            for cell in run_matrix(&cfg, c.force)? {
                print!("{}\n", render(&cell.report));
            }
        }
        Command::Report { dir, common } => {
            let dir = dir
                .or(common.out)
                .unwrap_or_else(|| ExperimentConfig::default().run.out);
            let out = report(&dir)?;
            print!("{}", out.text);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
