mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "palmcode",
    version,
    about = "Competitive-code palmprint matching and analysis"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct Source {
    /// CSV manifest of images.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory of template files.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Exclusion list of `subject_id,sample_id` lines.
    #[arg(long)]
    exclusions: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode every active manifest entry into a template file.
    Extract {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        exclusions: Option<PathBuf>,
    },
    /// Score one gallery template against one probe template.
    Match {
        gallery: PathBuf,
        probe: PathBuf,
        /// compcode, m-cc, e-cc or cscc.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Verification benchmark with ROC, EER and FRR at fixed FAR.
    Eval {
        #[command(flatten)]
        source: Source,
        /// Comma-separated method ids, or `all`.
        #[arg(long)]
        methods: Option<String>,
        /// Comma-separated FAR levels.
        #[arg(long)]
        far_targets: Option<String>,
        /// Cap on sampled impostor pairs, or `all`.
        #[arg(long)]
        max_impostor: Option<String>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Difference statistics: pmf, mean fields, stationarity and Fisher weight.
    Stats {
        #[command(flatten)]
        source: Source,
        /// Patch side in pixels.
        #[arg(long)]
        patch: Option<usize>,
        /// Fisher ridge, or `auto`.
        #[arg(long)]
        ridge: Option<String>,
        /// Number of impostor difference maps.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Write a synthetic dataset: images, ground truth and manifest.
    Synth {
        #[arg(long)]
        identities: Option<usize>,
        /// Samples per identity.
        #[arg(long)]
        per_identity: Option<usize>,
        /// Image side in pixels.
        #[arg(long)]
        size: Option<usize>,
    },
}

fn flag<T: ToString>(flags: &mut Vec<(&'static str, String)>, key: &'static str, value: &Option<T>) {
    if let Some(v) = value {
        flags.push((key, v.to_string()));
    }
}

fn path_flag(flags: &mut Vec<(&'static str, String)>, key: &'static str, value: &Option<PathBuf>) {
    flag(flags, key, &value.as_ref().map(|p| p.display().to_string()));
}

fn source_flags(flags: &mut Vec<(&'static str, String)>, source: &Source) {
    path_flag(flags, "manifest", &source.manifest);
    path_flag(flags, "templates", &source.templates);
    path_flag(flags, "exclusions", &source.exclusions);
}

/// Defaults, then the config file, then flags.
fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.common.config {
        cfg.apply_file(path).map_err(CliError::Usage)?;
    }
    let mut flags = Vec::new();
    flag(&mut flags, "seed", &cli.common.seed);
    flag(&mut flags, "threads", &cli.common.threads);
    path_flag(&mut flags, "out", &cli.common.out);
    match &cli.command {
        Command::Extract { manifest, exclusions } => {
            path_flag(&mut flags, "manifest", manifest);
            path_flag(&mut flags, "exclusions", exclusions);
        }
        Command::Match { method, window, .. } => {
            flag(&mut flags, "match.method", method);
            flag(&mut flags, "match.window", window);
        }
        Command::Eval {
            source,
            methods,
            far_targets,
            max_impostor,
            window,
        } => {
            source_flags(&mut flags, source);
            flag(&mut flags, "eval.methods", methods);
            flag(&mut flags, "eval.far_targets", far_targets);
            flag(&mut flags, "eval.max_impostor", max_impostor);
            flag(&mut flags, "match.window", window);
        }
        Command::Stats {
            source,
            patch,
            ridge,
            samples,
        } => {
            source_flags(&mut flags, source);
            flag(&mut flags, "stats.patch", patch);
            flag(&mut flags, "stats.ridge", ridge);
            flag(&mut flags, "stats.samples", samples);
        }
        Command::Synth {
            identities,
            per_identity,
            size,
        } => {
            flag(&mut flags, "synth.identities", identities);
            flag(&mut flags, "synth.samples", per_identity);
            flag(&mut flags, "synth.size", size);
        }
    }
    for (key, value) in flags {
        cfg.set(key, &value)
            .map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Extract { .. } => commands::extract(&cfg),
        Command::Match { gallery, probe, .. } => commands::match_pair(&cfg, gallery, probe),
        Command::Eval { .. } => commands::eval(&cfg),
        Command::Stats { .. } => commands::stats(&cfg),
        Command::Synth { .. } => commands::synth(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("palmcode: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
