use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evspace_core::fixture::{self, FIXTURE_SEED};
use evspace_core::pipeline::{Manifest, Pipeline, PipelineConfig, RunOptions, Stage};
use evspace_core::{Error, ErrorKind};

#[derive(Debug, Parser)]
#[command(
    name = "evspace",
    version,
    about = "Product-space relatedness and EV transition analytics"
)]
struct Cli {
    /// Pipeline config file.
    #[arg(long, global = true, default_value = "evspace.toml")]
    config: PathBuf,

    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Random seed, overriding the config (for `fixture`, the generator seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage, reusing valid caches.
    Run,
    /// Recompute one stage.
    Stage {
        /// One of ingest, specialization, productspace, centrality,
        /// potential, regress, forecast, concentration.
        name: String,
        /// Fail if upstream caches are missing or stale instead of building them.
        #[arg(long)]
        no_build_deps: bool,
    },
    /// Check a config file and print it with defaults filled in.
    ValidateConfig,
    /// Write the bundled synthetic dataset and a config for it.
    Fixture,
}

fn exit_code(kind: ErrorKind) -> ExitCode {
    ExitCode::from(match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    })
}

fn fail(e: &dyn std::fmt::Display, kind: ErrorKind) -> ExitCode {
    eprintln!("error: {e}");
    exit_code(kind)
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.analysis.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(manifest: &Manifest, out: &Path) {
    println!(
        "{} stages in {} (config {})",
        manifest.stages.len(),
        out.display(),
        &manifest.config_hash[..12]
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.jobs {
        if n == 0 {
            return fail(&"--jobs must be positive", ErrorKind::Config);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&e, ErrorKind::Config);
        }
    }

    match &cli.command {
        Command::Fixture => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("fixture"));
            match fixture::write(&dir, cli.seed.unwrap_or(FIXTURE_SEED)) {
                Ok(path) => {
                    println!("{}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, e.kind()),
            }
        }
        Command::ValidateConfig => match load_config(&cli).and_then(|c| c.to_toml()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, ErrorKind::Config),
        },
        Command::Run => {
            let cfg = match load_config(&cli) {
                Ok(c) => c,
                Err(e) => return fail(&e, ErrorKind::Config),
            };
            match Pipeline::new(cfg).and_then(|mut p| p.run().map(|m| (m, p.out_dir().to_path_buf()))) {
                Ok((m, out)) => {
                    report(&m, &out);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, e.kind()),
            }
        }
        Command::Stage { name, no_build_deps } => {
            let stage = match Stage::from_name(name) {
                Ok(s) => s,
                Err(e) => return fail(&e, ErrorKind::Config),
            };
            let cfg = match load_config(&cli) {
                Ok(c) => c,
                Err(e) => return fail(&e, ErrorKind::Config),
            };
            let opts = RunOptions {
                no_build_deps: *no_build_deps,
            };
            match Pipeline::new(cfg).and_then(|mut p| p.run_stage(stage, opts).map(|m| (m, p.out_dir().to_path_buf())))
            {
                Ok((m, out)) => {
                    report(&m, &out);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, e.kind()),
            }
        }
    }
}
