//! `geolayout` command-line tool.
//!
//! Exit codes: 0 on success, 2 for bad input (arguments, files, formats),
//! 3 when the numerics fail (degenerate fits, no clusters, diverging loss).
//! Errors are printed to stderr as one JSON object.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geolayout::{Config, DepthFormat};

#[derive(Parser)]
#[command(name = "geolayout", version, about = "Room layout estimation from plane depth maps")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML configuration; missing keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Working raster size as WIDTHxHEIGHT; inputs are resampled to it.
    #[arg(long, global = true, value_parser = parse_resolution)]
    pub resolution: Option<(usize, usize)>,
    /// Depth raster format of written records.
    #[arg(long, global = true, value_enum, default_value_t = Format::Float)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Float,
    Png16,
}

impl From<Format> for DepthFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Float => DepthFormat::Float,
            Format::Png16 => DepthFormat::Png16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    #[value(name = "2d")]
    TwoD,
    #[value(name = "3d")]
    ThreeD,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic rooms as dataset records.
    Synth {
        /// Number of scenes; scene `i` uses seed `seed + i`.
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Wall count of a prism room; box rooms when omitted.
        #[arg(long)]
        walls: Option<usize>,
    },
    /// Fit surface parameters to the annotated regions of a record.
    Fit {
        #[arg(long)]
        record: PathBuf,
    },
    /// Cluster a parameter map into surface instances.
    Cluster {
        #[arg(long)]
        params: PathBuf,
    },
    /// Stitch instance depth maps by taking the nearest surface per pixel.
    Stitch {
        /// JSON list of surface parameters or of cluster instances.
        #[arg(long)]
        instances: PathBuf,
    },
    /// Extract layout corners from instances and a segmentation.
    Corners {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        seg: PathBuf,
    },
    /// Score layout predictions against ground-truth records.
    Eval {
        /// Layout directories written by `pipeline`; pair them with `--gt`.
        #[arg(long, required = true, num_args = 1..)]
        pred: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        gt: Vec<PathBuf>,
    },
    /// Fit a parameter map to a synthetic scene by gradient descent.
    TrainToy {
        #[arg(long, value_enum, default_value_t = TrainMode::ThreeD)]
        mode: TrainMode,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Standard deviation of the noise added to the initial map.
        #[arg(long, default_value_t = 0.05)]
        init_noise: f64,
    },
    /// Parameter map to layout: clustering, stitching, layers and corners.
    Pipeline {
        /// Parameter map (`.glr`).
        #[arg(long, conflicts_with = "record", required_unless_present = "record")]
        params: Option<PathBuf>,
        /// Record whose depth provides the parameter map and the ground truth.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Derive parameters from the observed depth instead of the layout depth.
        #[arg(long, requires = "record")]
        observed: bool,
    },
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<usize>().ok().filter(|n| *n > 0);
    match (parse(w), parse(h)) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(format!("expected positive WIDTHxHEIGHT, got {s:?}")),
    }
}

fn load_config(common: &Common) -> geolayout::Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.ransac.seed = seed;
        config.layout.cluster.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> geolayout::Result<()> {
    let config = load_config(&cli.common)?;
    let c = &cli.common;
    match cli.command {
        Command::Synth { count, walls } => commands::synth(c, &config, count, walls),
        Command::Fit { record } => commands::fit(c, &config, &record),
        Command::Cluster { params } => commands::cluster(c, &config, &params),
        Command::Stitch { instances } => commands::stitch(c, &instances),
        Command::Corners { instances, seg } => commands::corners(c, &config, &instances, &seg),
        Command::Eval { pred, gt } => commands::eval(c, &pred, &gt),
        Command::TrainToy { mode, steps, lr, init_noise } => {
            commands::train_toy(c, &config, mode, steps, lr, init_noise)
        }
        Command::Pipeline { params, record, observed } => {
            commands::pipeline(c, &config, params.as_deref(), record.as_deref(), observed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
