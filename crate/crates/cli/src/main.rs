//! `nhsplat synth|train|render|eval`.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nhsplat::Error;

#[derive(Debug, Parser)]
#[command(name = "nhsplat", version, about = "Gaussian splatting for native HDR and Bayer RAW images")]
struct Cli {
    /// Worker threads; results are reproducible per thread count.
    #[arg(long, global = true, env = "NHSPLAT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a procedural scene into a posed dataset.
    Synth(SynthArgs),
    /// Fit a Gaussian cloud to a dataset.
    Train(TrainArgs),
    /// Render a cloud at every pose of a pose file.
    Render(RenderArgs),
    /// Score a cloud against one split of a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Hdr,
    Bayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Entangled,
    Decomposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Log,
    Linear,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec JSON, or `toy` for the bundled scene.
    pub spec: String,
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "hdr")]
    pub mode: Mode,
    /// Mosaic layout for `--mode bayer`.
    #[arg(long, default_value = "BGGR")]
    pub pattern: String,
    #[arg(long, default_value_t = 512)]
    pub black_level: u16,
    #[arg(long, default_value_t = 16383)]
    pub white_level: u16,
    /// Replace an existing dataset in `out`.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    /// Training config JSON or a previous run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub color_model: Option<ModelArg>,
    #[arg(long)]
    pub sh_degree: Option<usize>,
    #[arg(long, value_enum)]
    pub luminance_space: Option<SpaceArg>,
    /// Weight of the L1 term.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lr_luminance: Option<f64>,
    #[arg(long)]
    pub lr_sh: Option<f64>,
    #[arg(long)]
    pub lr_position: Option<f64>,
    #[arg(long)]
    pub init_count: Option<usize>,
    /// Turn on adaptive densification and pruning.
    #[arg(long)]
    pub densify: bool,
    /// Grow the SH degree during training instead of starting at full degree.
    #[arg(long)]
    pub sh_warmup: bool,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// `r,g,b` in linear radiance.
    #[arg(long, value_parser = parse_rgb)]
    pub background: Option<[f64; 3]>,
    /// Replace an existing run in `out`.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub cloud: PathBuf,
    pub poses: PathBuf,
    pub out: PathBuf,
    /// Also write 8-bit tone-mapped PPM previews.
    #[arg(long)]
    pub preview: bool,
    #[arg(long, value_parser = parse_rgb)]
    pub background: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub cloud: PathBuf,
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Where to write the JSON report; defaults to `eval_<split>.json` next to the cloud.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = 5000.0)]
    pub mu: f64,
    #[arg(long, value_parser = parse_rgb)]
    pub background: Option<[f64; 3]>,
}

fn parse_rgb(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [r, g, b] if parts.iter().all(|v| v.is_finite() && *v >= 0.0) => Ok([r, g, b]),
        _ => Err("expected three non-negative numbers `r,g,b`".into()),
    }
}

/// 0 success, 2 configuration, 3 I/O or file format, 4 numerical abort.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::NonFiniteLoss { .. }
        | Error::NonFiniteGradient { .. }
        | Error::NonFiniteGaussian { .. }
        | Error::NegativeRadiance { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match commands::init_threads(cli.threads) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a, threads),
        Command::Render(a) => commands::render(&a),
        Command::Eval(a) => commands::eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
