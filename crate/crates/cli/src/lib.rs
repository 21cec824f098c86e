//! Batch experiment driver: pretrain, adapt, split, eval, explore,
//! interpolate and fid-bias. Each command writes its artifacts plus a JSON
//! manifest that records every resolved setting needed to re-run it.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use svadapt::metrics::FeatureExtractor;
use svadapt::AdaptMode;

pub use commands::{parse_seeds, read_seeds, run};
pub use config::RunConfig;
pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "svadapt", version, about = "Few-shot GAN adaptation by singular-value reparameterization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the toy GAN from scratch on a source domain.
    Pretrain(PretrainArgs),
    /// Adapt a pretrained checkpoint to an n-shot target set.
    Adapt(AdaptArgs),
    /// Write an n-shot split manifest for a domain preset.
    Split(SplitArgs),
    /// Score a checkpoint against the held-out half of a split.
    Eval(EvalArgs),
    /// Render samples before and after magnifying one singular value.
    Explore(ExploreArgs),
    /// Render a latent interpolation strip between two seeds.
    Interpolate(InterpolateArgs),
    /// Monte-Carlo study of how held-out FID rewards memorization.
    FidBias(FidBiasArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Tgan,
    Freezed,
    Ssgan,
    Fsgan,
}

impl From<Method> for AdaptMode {
    fn from(m: Method) -> Self {
        match m {
            Method::Tgan => AdaptMode::Tgan,
            Method::Freezed => AdaptMode::FreezeD,
            Method::Ssgan => AdaptMode::Ssgan,
            Method::Fsgan => AdaptMode::Fsgan,
        }
    }
}

fn parse_extractor(s: &str) -> Result<FeatureExtractor, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Flat JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output checkpoint; history, manifest, grid and snapshots go beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub budget_images: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub nshot: usize,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Real images shown to the discriminator; defaults to 20000, or 16000 at n = 5.
    #[arg(long)]
    pub budget_images: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Target domain preset (source, near, far).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Discriminator layers frozen under freezed.
    #[arg(long)]
    pub freeze_depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Domain preset (source, near, far).
    #[arg(long)]
    pub domain: String,
    #[arg(long)]
    pub nshot: usize,
    #[arg(long, default_value_t = config::DEFAULT_POOL_SIZE)]
    pub pool_size: usize,
    #[arg(long, default_value_t = config::DEFAULT_DATA_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split manifest; the split is regenerated and every hash checked.
    #[arg(long)]
    pub test_manifest: PathBuf,
    /// Latent seeds, one image each; share the file across methods.
    #[arg(long)]
    pub seeds: PathBuf,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub psi: f32,
    /// `raw_pixels` or `random_conv:SEED`.
    #[arg(long, default_value = "random_conv:0", value_parser = parse_extractor)]
    pub extractor: FeatureExtractor,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Layer name, e.g. g.conv0; decomposed on the fly if needed.
    #[arg(long)]
    pub layer: String,
    /// Singular value index, 0 = largest.
    #[arg(long)]
    pub sv: usize,
    #[arg(long)]
    pub alpha: f32,
    /// Grid PNG: originals on the top row, magnified below.
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds file; defaults to seeds 0..samples.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.8)]
    pub psi: f32,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub seed_a: u64,
    #[arg(long)]
    pub seed_b: u64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub psi: f32,
}

#[derive(Debug, Args)]
pub struct FidBiasArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [10, 30, 100])]
    pub nshots: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub repeats: usize,
    /// CSV table; a manifest with the summary goes beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "source")]
    pub domain: String,
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 2000)]
    pub pool_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1000)]
    pub reference_size: usize,
    /// Reference offset per feature, in units of that feature's std.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "random_conv:0", value_parser = parse_extractor)]
    pub extractor: FeatureExtractor,
}
