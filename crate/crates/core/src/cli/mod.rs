//! Batch front end: `degenctrl <command> --config <file> --out <dir> [--seed N]`.
//!
//! Exit codes: 0 success, 1 failed check or invariant, 2 invalid config or
//! usage, 3 non-convergence, 4 missing or unreadable file.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

use artifacts::{ArtifactWriter, RunManifest};
use commands::{CommandError, Context, Outcome};
use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandName {
    Spectrum,
    Hardy,
    Solve,
    Carleman,
    SpectralIneq,
    Observability,
    Hum,
    Lr,
    Measurable,
    DensitySeq,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Spectrum => "spectrum",
            CommandName::Hardy => "hardy",
            CommandName::Solve => "solve",
            CommandName::Carleman => "carleman",
            CommandName::SpectralIneq => "spectral-ineq",
            CommandName::Observability => "observability",
            CommandName::Hum => "hum",
            CommandName::Lr => "lr",
            CommandName::Measurable => "measurable",
            CommandName::DensitySeq => "density-seq",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "degenctrl", version, about = "Numerics for null control of a degenerate parabolic equation")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: CommandName,
    /// JSON scenario file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for random families; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn dispatch(cmd: CommandName, ctx: &mut Context) -> Result<Outcome, CommandError> {
    match cmd {
        CommandName::Spectrum => commands::spectrum(ctx),
        CommandName::Hardy => commands::hardy(ctx),
        CommandName::Solve => commands::solve(ctx),
        CommandName::Carleman => commands::carleman(ctx),
        CommandName::SpectralIneq => commands::spectral_ineq(ctx),
        CommandName::Observability => commands::observability(ctx),
        CommandName::Hum => commands::hum(ctx),
        CommandName::Lr => commands::lr(ctx),
        CommandName::Measurable => commands::measurable(ctx),
        CommandName::DensitySeq => commands::density_seq(ctx),
    }
}

/// Runs one command and always leaves a manifest in the output directory.
pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let mut manifest = RunManifest {
        command: cli.command.as_str().to_string(),
        status: "error".into(),
        exit_code: 2,
        message: None,
        config: Value::Null,
        seed: cli.seed.unwrap_or(0),
        artifacts: Vec::new(),
        duration_seconds: 0.0,
    };
    let (code, message) = match RunConfig::load(&cli.config) {
        Err(e) => (e.exit_code(), Some(e.to_string())),
        Ok(cfg) => {
            let seed = cli.seed.or(cfg.seed).unwrap_or(0);
            manifest.seed = seed;
            match ArtifactWriter::new(&cli.out) {
                Err(e) => (4, Some(format!("cannot create output directory: {e}"))),
                Ok(mut out) => {
                    let mut ctx = Context {
                        config: &cfg,
                        seed,
                        out: &mut out,
                        resolved: Value::Null,
                    };
                    let result = dispatch(cli.command, &mut ctx);
                    manifest.config = json!({ "model": cfg.model, "seed": seed, "options": ctx.resolved });
                    manifest.artifacts = out.entries().to_vec();
                    match result {
                        Ok(Outcome::Passed) => (0, None),
                        Ok(Outcome::Failed(m)) => (1, Some(m)),
                        Ok(Outcome::NotConverged(m)) => (3, Some(m)),
                        Err(e) => (e.exit_code(), Some(e.to_string())),
                    }
                }
            }
        }
    };
    manifest.exit_code = code;
    manifest.status = match code {
        0 => "ok",
        1 => "check_failed",
        3 => "not_converged",
        _ => "error",
    }
    .into();
    manifest.message = message.clone();
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = manifest.write(&cli.out) {
        eprintln!("degenctrl: cannot write manifest: {e}");
    }
    if let Some(m) = message {
        eprintln!("degenctrl {}: {m}", cli.command.as_str());
    }
    code
}

/// Best-effort manifest for a rejected command line that still names `--out`.
fn write_usage_manifest(args: &[OsString], message: &str) {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let out = strs.iter().enumerate().find_map(|(i, a)| match a.strip_prefix("--out") {
        Some("") => strs.get(i + 1).cloned(),
        Some(rest) => rest.strip_prefix('=').map(str::to_string),
        None => None,
    });
    let Some(out) = out else { return };
    let manifest = RunManifest {
        command: strs.get(1).cloned().unwrap_or_default(),
        status: "error".into(),
        exit_code: 2,
        message: Some(message.trim().to_string()),
        config: Value::Null,
        seed: 0,
        artifacts: Vec::new(),
        duration_seconds: 0.0,
    };
    if std::fs::create_dir_all(&out).is_ok() {
        let _ = manifest.write(std::path::Path::new(&out));
    }
}

/// Parses arguments, applies DEGENCTRL_THREADS and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            write_usage_manifest(&args, &e.to_string());
            return 2;
        }
    };
    if let Some(n) = std::env::var("DEGENCTRL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    run(&cli)
}
