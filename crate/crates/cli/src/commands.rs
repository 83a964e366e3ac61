//! Argument definitions and subcommand implementations.
//!
//! Exit codes: 0 on success, 1 when inputs cannot be processed (a missing
//! transcript or a port already in use, for example), 2 for invalid
//! configuration or usage.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use visaug_core::saliency::{binarize, load_gray, mbd_transform, otsu_threshold};
use visaug_core::{build_project, Backends, BuildOptions, Config, ConfigError, PipelineError, ProjectInput};

use crate::server::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(
    name = "visaug",
    version,
    about = "Augment lecture videos with generated images and keyphrases"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a project: manifest plus generated assets.
    Process(ProcessArgs),
    /// Serve built projects over HTTP.
    Serve(ServeArgs),
    /// Write the saliency map (or its binarized mask) of one frame.
    Saliency(SaliencyArgs),
}

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// Directory of frames named frame_NNNNNN.png (or .jpg), one per second.
    #[arg(long)]
    pub frames: PathBuf,
    /// SRT or WebVTT transcript.
    #[arg(long)]
    pub transcript: PathBuf,
    /// Output project directory; replaced atomically.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Never contact remote backends.
    #[arg(long)]
    pub offline: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Imageability threshold; images are generated for scores above it.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=10))]
    pub threshold: Option<u8>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Defaults to the name of the output directory.
    #[arg(long)]
    pub project_id: Option<String>,
    #[arg(long)]
    pub dump_masks: bool,
    #[arg(long)]
    pub dump_packing: bool,
    /// Copy frames into the project so it can be served on its own.
    #[arg(long)]
    pub copy_frames: bool,
    /// Omit the generation timestamp so output is byte-for-byte reproducible.
    #[arg(long)]
    pub canonical: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory containing one subdirectory per project.
    #[arg(long, env = "VISAUG_ROOT")]
    pub root: PathBuf,
    #[arg(long, env = "VISAUG_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// Static UI bundle served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Origin allowed to call the API cross-site; repeatable.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub frame: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = visaug_core::saliency::DEFAULT_PASSES, value_parser = parse_passes)]
    pub passes: usize,
    /// Write the Otsu-thresholded mask instead of the grey-level map.
    #[arg(long)]
    pub binarize: bool,
}

fn parse_passes(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Input(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) | CliError::Pipeline(PipelineError::Config(_) | PipelineError::ProjectId(_)) => {
                ExitCode::from(2)
            }
            _ => ExitCode::from(1),
        }
    }
}

/// Loads the config file (or defaults) and applies command-line overrides.
pub fn resolve_config(args: &ProcessArgs) -> Result<Config, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if args.offline {
        cfg.run.offline = true;
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(t) = args.threshold {
        cfg.language.threshold = t;
    }
    if let Some(c) = args.concurrency {
        cfg.run.concurrency = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_project_id(out: &Path) -> String {
    out.file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default()
}

pub fn process(args: &ProcessArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    if !args.transcript.is_file() {
        return Err(CliError::Input(format!(
            "transcript not found: {}",
            args.transcript.display()
        )));
    }
    if !args.frames.is_dir() {
        return Err(CliError::Input(format!(
            "frames directory not found: {}",
            args.frames.display()
        )));
    }
    let input = ProjectInput {
        project_id: args.project_id.clone().unwrap_or_else(|| default_project_id(&args.out)),
        transcript_path: args.transcript.clone(),
        frames_dir: args.frames.clone(),
    };
    let backends = if cfg.run.offline {
        Backends::offline(&cfg)
    } else {
        Backends::from_config(&cfg)?
    };
    let opts = BuildOptions {
        out_dir: args.out.clone(),
        dump_masks: args.dump_masks,
        dump_packing: args.dump_packing,
        copy_frames: args.copy_frames,
        include_timestamp: !args.canonical,
    };
    tracing::info!(project = %input.project_id, out = %args.out.display(), "building");
    let report = build_project(&input, &cfg, &backends, &opts)?;
    tracing::info!(
        segments = report.segments,
        images = report.images,
        placements = report.placements,
        "done"
    );
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

pub fn saliency(args: &SaliencyArgs) -> Result<(), CliError> {
    let gray = load_gray(&args.frame).map_err(|e| CliError::Input(e.to_string()))?;
    let map = mbd_transform(&gray, args.passes);
    let out = if args.binarize {
        binarize(&map, otsu_threshold(&map)).to_luma8()
    } else {
        map.to_luma8()
    };
    out.save(&args.out)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", args.out.display())))
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    if !args.root.is_dir() {
        return Err(CliError::Input(format!(
            "project root not found: {}",
            args.root.display()
        )));
    }
    let cfg = ServiceConfig {
        ui_dir: args.ui_dir.clone(),
        cors_origins: args.cors_origins.clone(),
        ..ServiceConfig::new(&args.root)
    };
    let addr = SocketAddr::new(args.bind, args.port);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::Serve)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| CliError::Bind { addr, source })?;
        tracing::info!(addr = %listener.local_addr().map_err(CliError::Serve)?, root = %args.root.display(), "listening");
        server::serve(listener, &cfg).await.map_err(CliError::Serve)
    })
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Process(a) => process(a),
        Command::Serve(a) => serve(a),
        Command::Saliency(a) => saliency(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
