//! `gsae`: train gene superset autoencoders and run their analyses.
//!
//! Every subcommand writes into `--out`, which receives the artifacts, the
//! fully resolved `config.txt` and a `manifest.json` with the seed and input
//! checksums. `gsae <cmd> --config <out>/config.txt --out <new>` repeats a
//! run exactly.
//!
//! Exit codes: 0 success, 1 run failure, 2 invalid input or configuration.

mod commands;
mod run;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Ctx;
use run::{RunDir, RunInfo};
use settings::{parse_kv, Settings};

#[derive(Parser)]
#[command(
    name = "gsae",
    version,
    about = "Gene superset autoencoder",
    args_override_self = true
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// `key = value` settings file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; drawn from system entropy and recorded when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Build and train networks in single precision.
    #[arg(long, global = true)]
    float32: bool,
    /// Any setting, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_parser = parse_kv)]
    set: Vec<(String, String)>,
}

#[derive(Args, Default)]
struct Inputs {
    /// Expression TSV (genes x samples).
    #[arg(long)]
    expr: Option<String>,
    /// Gene sets in GMT format.
    #[arg(long)]
    gmt: Option<String>,
    /// Clinical TSV with sample_id, time_days, event.
    #[arg(long)]
    clinical: Option<String>,
}

#[derive(Args, Default)]
struct ModelInputs {
    /// Trained model JSON.
    #[arg(long)]
    model: Option<String>,
    /// Expression TSV (genes x samples).
    #[arg(long)]
    expr: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter genes, align inputs and size-filter gene sets.
    Prep(Inputs),
    /// Merge redundant gene sets by kappa significance.
    Dedup {
        #[arg(long)]
        gmt: Option<String>,
        /// Gene universe, one id per line (default: union of set members).
        #[arg(long)]
        universe: Option<String>,
        #[arg(long)]
        p_threshold: Option<String>,
    },
    /// Train an autoencoder.
    Train {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        superset_size: Option<String>,
    },
    /// Gene-set and superset outputs of every sample.
    Encode(ModelInputs),
    /// Up/down-regulated supersets of a subtype and their gene sets.
    Subtype {
        #[command(flatten)]
        inputs: ModelInputs,
        /// `sample_id<TAB>cluster` file; t-SNE + DBSCAN when absent.
        #[arg(long)]
        clusters: Option<String>,
        #[arg(long)]
        shift: Option<String>,
    },
    /// Median-split log-rank screen of supersets and gene sets.
    Survive {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long)]
        clinical: Option<String>,
    },
    /// Significant-node agreement between a training and a test split.
    Reproduce(Inputs),
    /// Cross-validated subtype classification.
    Classify {
        #[command(flatten)]
        inputs: Inputs,
        /// superset, geneset, dense or pca_dense.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        label_column: Option<String>,
    },
    /// Two-dimensional t-SNE of samples.
    Embed {
        #[command(flatten)]
        inputs: ModelInputs,
        /// superset, geneset or expression.
        #[arg(long)]
        source: Option<String>,
    },
    /// Generate a synthetic cohort with known planted signal.
    Synth {
        /// none, single or distributed.
        #[arg(long)]
        hazard: Option<String>,
    },
}

fn push(flags: &mut Vec<(String, String)>, key: &str, v: &Option<String>) {
    if let Some(v) = v {
        flags.push((key.to_string(), v.clone()));
    }
}

impl Inputs {
    fn flags(&self, f: &mut Vec<(String, String)>) {
        push(f, "expr", &self.expr);
        push(f, "gmt", &self.gmt);
        push(f, "clinical", &self.clinical);
    }
}

impl ModelInputs {
    fn flags(&self, f: &mut Vec<(String, String)>) {
        push(f, "model", &self.model);
        push(f, "expr", &self.expr);
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prep(_) => "prep",
            Command::Dedup { .. } => "dedup",
            Command::Train { .. } => "train",
            Command::Encode(_) => "encode",
            Command::Subtype { .. } => "subtype",
            Command::Survive { .. } => "survive",
            Command::Reproduce(_) => "reproduce",
            Command::Classify { .. } => "classify",
            Command::Embed { .. } => "embed",
            Command::Synth { .. } => "synth",
        }
    }

    fn flags(&self) -> Vec<(String, String)> {
        let mut f = Vec::new();
        match self {
            Command::Prep(i) | Command::Reproduce(i) => i.flags(&mut f),
            Command::Dedup {
                gmt,
                universe,
                p_threshold,
            } => {
                push(&mut f, "gmt", gmt);
                push(&mut f, "universe", universe);
                push(&mut f, "p_threshold", p_threshold);
            }
            Command::Train {
                inputs,
                superset_size,
            } => {
                inputs.flags(&mut f);
                push(&mut f, "superset_size", superset_size);
            }
            Command::Encode(i) => i.flags(&mut f),
            Command::Subtype {
                inputs,
                clusters,
                shift,
            } => {
                inputs.flags(&mut f);
                push(&mut f, "clusters", clusters);
                push(&mut f, "shift", shift);
            }
            Command::Survive { inputs, clinical } => {
                inputs.flags(&mut f);
                push(&mut f, "clinical", clinical);
            }
            Command::Classify {
                inputs,
                variant,
                label_column,
            } => {
                inputs.flags(&mut f);
                push(&mut f, "variant", variant);
                push(&mut f, "label_column", label_column);
            }
            Command::Embed { inputs, source } => {
                inputs.flags(&mut f);
                push(&mut f, "source", source);
            }
            Command::Synth { hazard } => push(&mut f, "hazard", hazard),
        }
        f
    }

    /// Whether the command builds or embeds with its own networks, where
    /// `float32` applies.
    fn uses_precision(&self) -> bool {
        matches!(
            self,
            Command::Train { .. }
                | Command::Reproduce(_)
                | Command::Classify { .. }
                | Command::Embed { .. }
        )
    }
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let mut flags = cli.command.flags();
    flags.extend(g.set.iter().cloned());
    if let Some(seed) = g.seed {
        flags.push(("seed".into(), seed.to_string()));
    }
    if g.float32 {
        flags.push(("float32".into(), "true".into()));
    }
    let mut settings = Settings::new(g.config.as_deref(), flags)?;
    let seed = settings.get("seed", rand::random::<u64>())?;
    let float32 = cli.command.uses_precision() && settings.get("float32", false)?;
    let out = g
        .out
        .clone()
        .ok_or_else(|| gsae::Error::Config("--out is required".into()))?;

    let mut run = RunDir::open(&out)?;
    let ctx = Ctx {
        settings: &mut settings,
        run: &mut run,
        seed,
    };
    let summary = match &cli.command {
        Command::Prep(_) => commands::prep(ctx),
        Command::Dedup { .. } => commands::dedup(ctx),
        Command::Train { .. } => commands::train(ctx, float32),
        Command::Encode(_) => commands::encode(ctx),
        Command::Subtype { .. } => commands::subtype(ctx),
        Command::Survive { .. } => commands::survive(ctx),
        Command::Reproduce(_) => commands::reproduce(ctx, float32),
        Command::Classify { .. } => commands::classify(ctx, float32),
        Command::Embed { .. } => commands::embed(ctx, float32),
        Command::Synth { .. } => commands::synth(ctx),
    }?;
    settings.check_unused()?;
    let info = RunInfo {
        command: cli.command.name(),
        seed,
        float32,
        threads: rayon::current_num_threads(),
    };
    run.commit(&settings, &info, summary)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

/// Bad input data or configuration exits with 2, anything else with 1.
fn exit_code(e: &anyhow::Error) -> u8 {
    use gsae::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Parse { .. }
                | E::Domain(_)
                | E::Duplicate { .. }
                | E::EmptyResult(_)
                | E::Alignment(_)
                | E::Degenerate(_)
                | E::Consistency(_)
                | E::Shape(_)
                | E::Config(_)
                | E::Format(_)
                | E::Json(_) => 2,
                E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
