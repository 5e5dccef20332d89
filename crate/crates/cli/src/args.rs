use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrdc::cascade::Variant;
use mrdc::data::Protocol;
use mrdc::sampling::DEFAULT_CALIB_LINES;
use mrdc::training::{LossKind, Precision};

#[derive(Debug, Parser)]
#[command(name = "mrdc", version, about = "Data-consistency cascade networks for parallel MRI")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-coil dataset.
    Simulate(SimulateArgs),
    /// Train a cascade network and write a checkpoint.
    Train(TrainArgs),
    /// Reconstruct every record with a checkpoint or a baseline.
    Recon(ReconArgs),
    /// Score reconstructions against the fully sampled references.
    Eval(EvalArgs),
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let (h, w) = match s.split_once(['x', 'X']) {
        Some((h, w)) => (parse(h)?, parse(w)?),
        None => {
            let n = parse(s)?;
            (n, n)
        }
    };
    if h == 0 || w == 0 {
        return Err("size must be positive".into());
    }
    Ok((h, w))
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: mrdc::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: mrdc::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: mrdc::Error| e.to_string())
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: mrdc::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// `N` for N×N or `HxW` (phase-encode lines × readout).
    #[arg(long, default_value = "64", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 8)]
    pub coils: usize,
    #[arg(long, default_value_t = 10)]
    pub records: usize,
    /// Complex noise standard deviation per k-space sample.
    #[arg(long, default_value_t = 0.005)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated protocol tags, cycled over records.
    #[arg(long, value_delimiter = ',', value_parser = parse_protocol, default_value = "axial_t2fs,coronal_pd,coronal_pdfs,sagittal_pd,sagittal_t2fs")]
    pub protocols: Vec<Protocol>,
    /// Acceleration of the stored mask.
    #[arg(long, default_value_t = 4.0)]
    pub af: f64,
    #[arg(long, default_value_t = DEFAULT_CALIB_LINES)]
    pub calib: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Variant,
    /// Regenerate masks at this acceleration instead of using stored ones.
    #[arg(long)]
    pub af: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CALIB_LINES)]
    pub calib: usize,
    #[arg(long, default_value_t = 3)]
    pub nc: usize,
    #[arg(long, default_value_t = 3)]
    pub nd: usize,
    #[arg(long, default_value_t = 32)]
    pub filters: usize,
    #[arg(long, default_value_t = 2)]
    pub dilation: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Draw a fresh mask per record each epoch (requires --af).
    #[arg(long)]
    pub resample_masks: bool,
    #[arg(long, default_value = "f64", value_parser = parse_precision)]
    pub precision: Precision,
    /// recombined | coilwise; defaults to the variant's own output space.
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// Also checkpoint every N epochs.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// One λ shared by every consistency layer.
    #[arg(long)]
    pub shared_lambda: bool,
    /// Write epoch and step losses as JSON.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Zero-filled adjoint.
    Zf,
    /// Projected Landweber POCSENSE.
    Pocsense,
    /// Fully sampled reference itself.
    Reference,
}

#[derive(Debug, Args)]
pub struct ReconArgs {
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Regenerate masks at this acceleration instead of using stored ones.
    #[arg(long)]
    pub af: Option<f64>,
    /// Calibration lines; defaults to the record's own.
    #[arg(long)]
    pub calib: Option<usize>,
    #[arg(long, default_value_t = mrdc::pipeline::DEFAULT_POCSENSE_ITERS)]
    pub iters: usize,
    #[arg(long, default_value_t = mrdc::pipeline::DEFAULT_POCSENSE_STEP)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory of a `recon` run; repeat to compare methods.
    #[arg(long, required = true)]
    pub recon: Vec<PathBuf>,
    /// Also write the table as JSON here (otherwise printed after the text).
    #[arg(long)]
    pub json: Option<PathBuf>,
}
