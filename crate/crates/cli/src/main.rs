use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use labelscope_core::masking::{MaskSpec, MaskStrategy};
use labelscope_core::pipeline::tasks::execute;
use labelscope_core::pipeline::{
    Dataset, EmbeddingProvider, ExchangeProvider, FeatureMode, ProviderConfig, RunConfig, Task,
};
use labelscope_core::{ClassId, Error, Result};

/// Label-dispersion harness for zero-shot frame classification.
#[derive(Parser, Debug)]
#[command(name = "labelscope", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Dataset manifest (TOML).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Run configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Restrict candidates to these class indices, e.g. `1,3,24`.
    #[arg(long, global = true, value_delimiter = ',')]
    labels: Option<Vec<u32>>,

    #[arg(long, global = true)]
    logit_scale: Option<f64>,

    /// Directory shared with an external embedding provider.
    #[arg(long, global = true)]
    provider_dir: Option<PathBuf>,

    /// Seconds to wait for each provider response.
    #[arg(long, global = true)]
    provider_timeout: Option<f64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify unperturbed frames.
    Task1,
    /// Random pixel or shape masking.
    Task2 {
        /// Masking percentages.
        #[arg(long, value_delimiter = ',')]
        percents: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        /// Largest single shape, as a fraction of the frame.
        #[arg(long)]
        max_shape_fraction: Option<f64>,
        #[arg(long)]
        mask_seed: Option<u64>,
    },
    /// Feature masking with named segmentation masks.
    Task3 {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Isolation masking with each frame's `keep` mask.
    Task4,
    /// Class-noise learning and evaluation.
    Task5 {
        #[command(subcommand)]
        step: Task5Step,
    },
}

#[derive(Subcommand, Debug)]
enum Task5Step {
    Train {
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        triplets_per_class: Option<usize>,
        #[arg(long)]
        noise_init_scale: Option<f64>,
        /// Sample negatives uniformly instead of from baseline confusions.
        #[arg(long)]
        uniform_negatives: bool,
        #[arg(long)]
        eval_fraction: Option<f64>,
    },
    Eval {
        /// Noise dictionary written by `task5 train`.
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        eval_fraction: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Strategy {
    Pixel,
    Shape,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    One,
    All,
}

fn build_config(cli: &Cli) -> Result<(Task, RunConfig)> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if let Some(v) = &g.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &g.labels {
        cfg.labels = Some(v.iter().copied().map(ClassId).collect());
    }
    if let Some(v) = g.logit_scale {
        cfg.classifier.logit_scale = v;
    }
    if let Some(dir) = &g.provider_dir {
        let mut p = cfg.provider.take().unwrap_or(ProviderConfig {
            request_dir: dir.clone(),
            timeout_secs: 600.0,
            poll_millis: 50,
        });
        p.request_dir = dir.clone();
        cfg.provider = Some(p);
    }
    if let (Some(t), Some(p)) = (g.provider_timeout, cfg.provider.as_mut()) {
        p.timeout_secs = t;
    }

    let task = match &cli.command {
        Command::Task1 => Task::Task1,
        Command::Task2 {
            percents,
            strategy,
            max_shape_fraction,
            mask_seed,
        } => {
            if let Some(ps) = percents {
                cfg.fractions = ps.iter().map(|p| p / 100.0).collect();
            }
            let mut spec = cfg.mask.take().unwrap_or(MaskSpec {
                strategy: MaskStrategy::RandomPixel,
                fraction: None,
                mask_refs: Vec::new(),
                seed: None,
                max_shape_fraction: None,
            });
            if let Some(s) = strategy {
                spec.strategy = match s {
                    Strategy::Pixel => MaskStrategy::RandomPixel,
                    Strategy::Shape => MaskStrategy::RandomShape,
                };
            }
            if max_shape_fraction.is_some() {
                spec.max_shape_fraction = *max_shape_fraction;
            }
            if mask_seed.is_some() {
                spec.seed = *mask_seed;
            }
            cfg.mask = Some(spec);
            Task::Task2
        }
        Command::Task3 { mode } => {
            if let Some(m) = mode {
                cfg.feature_mode = Some(match m {
                    Mode::One => FeatureMode::OneAtATime,
                    Mode::All => FeatureMode::AllTogether,
                });
            }
            cfg.feature_mode.get_or_insert(FeatureMode::OneAtATime);
            Task::Task3
        }
        Command::Task4 => Task::Task4,
        Command::Task5 { step } => match step {
            Task5Step::Train {
                margin,
                learning_rate,
                epochs,
                triplets_per_class,
                noise_init_scale,
                uniform_negatives,
                eval_fraction,
            } => {
                let t = cfg.triplet.get_or_insert_with(Default::default);
                if let Some(v) = margin {
                    t.margin = *v;
                }
                if let Some(v) = learning_rate {
                    t.learning_rate = *v;
                }
                if let Some(v) = epochs {
                    t.epochs = *v;
                }
                if let Some(v) = triplets_per_class {
                    t.triplets_per_class_per_epoch = *v;
                }
                if let Some(v) = noise_init_scale {
                    t.noise_init_scale = *v;
                }
                if *uniform_negatives {
                    cfg.hard_negatives = false;
                }
                if let Some(v) = eval_fraction {
                    cfg.eval_fraction = *v;
                }
                Task::Task5Train
            }
            Task5Step::Eval {
                dict,
                eval_fraction,
            } => {
                if let Some(d) = dict {
                    cfg.dictionary = Some(d.clone());
                }
                if let Some(v) = eval_fraction {
                    cfg.eval_fraction = *v;
                }
                Task::Task5Eval
            }
        },
    };
    if let Some(t) = cfg.task {
        if t != task {
            log::warn!(
                "config names task {} but task {} was requested",
                t.as_str(),
                task.as_str()
            );
        }
    }
    cfg.task = Some(task);
    Ok((task, cfg))
}

fn run(cli: &Cli) -> Result<()> {
    let (task, cfg) = build_config(cli)?;
    cfg.validate_for(task)?;
    let manifest = cli
        .global
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("--manifest is required".into()))?;
    let ds = Dataset::load(manifest)?;
    let mut exchange = cfg
        .provider
        .as_ref()
        .map(ExchangeProvider::from_config)
        .transpose()?;
    let provider = exchange.as_mut().map(|p| p as &mut dyn EmbeddingProvider);
    for line in execute(task, &ds, &cfg, provider)? {
        println!("{line}");
    }
    println!("outputs in {}", cfg.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
