//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use volfuse::phantom::Preset;
use volfuse::{Axis, BlockSpec, DeMode, MetricWeights};

#[derive(Debug, Parser)]
#[command(name = "volfuse", version, about = "Multi-focus volume fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize multi-focus volumes and the unblurred truth.
    Generate(GenerateArgs),
    /// Fuse volumes with a fixed block configuration.
    Fuse(FuseArgs),
    /// Search block dimensions with differential evolution, then fuse.
    Optimize(OptimizeArgs),
    /// Resolution curves, depth of field, projections and B-scans.
    Analyze(AnalyzeArgs),
    /// Run a reference experiment end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Fiber,
    Vessel,
}

impl From<Experiment> for Preset {
    fn from(e: Experiment) -> Self {
        match e {
            Experiment::Fiber => Preset::Fiber,
            Experiment::Vessel => Preset::Vessel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Shared,
    PerSubband,
}

impl From<ModeArg> for DeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Shared => DeMode::Shared,
            ModeArg::PerSubband => DeMode::PerSubband,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyzeMode {
    Fwhm,
    Dof,
    Map,
    Depthmap,
    Bscan,
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got `{s}`"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("cannot parse `{p}`"))?);
    }
    Ok([out.remove(0), out.remove(0), out.remove(0)])
}

pub fn parse_block(s: &str) -> Result<BlockSpec, String> {
    let [h, w, l] = parse_triple::<usize>(s)?;
    if h == 0 || w == 0 || l == 0 {
        return Err("block edges must be positive".into());
    }
    Ok(BlockSpec::new(h, w, l))
}

pub fn parse_weights(s: &str) -> Result<MetricWeights, String> {
    let [a, e, w] = parse_triple::<f64>(s)?;
    MetricWeights::new(a, e, w).map_err(|e| e.to_string())
}

pub fn parse_bounds(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: usize = lo.trim().parse().map_err(|_| format!("cannot parse `{lo}`"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("cannot parse `{hi}`"))?;
    if lo > hi {
        return Err(format!("lower bound {lo} exceeds upper bound {hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON parameters or a manifest from an earlier run; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DeArgs {
    #[arg(long, value_parser = parse_weights, value_name = "AVG,EN,SSIM")]
    pub weights: Option<MetricWeights>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inclusive block edge range applied to every axis.
    #[arg(long, value_parser = parse_bounds, value_name = "LO:HI")]
    pub bounds: Option<(usize, usize)>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Wavelet filter: haar or db2.
    #[arg(long)]
    pub wavelet: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, conflicts_with = "scene")]
    pub preset: Option<Experiment>,
    /// Scene description (JSON).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Focal depths in micrometers.
    #[arg(long, value_delimiter = ',', conflicts_with = "foci_index")]
    pub foci: Option<Vec<f64>>,
    /// Focal depths as z grid indices.
    #[arg(long, value_delimiter = ',')]
    pub foci_index: Option<Vec<usize>>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// Source volumes (VOLF).
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_parser = parse_block, value_name = "H,W,L")]
    pub block: Option<BlockSpec>,
    #[arg(long)]
    pub wavelet: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    /// Source volumes (VOLF).
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub de: DeArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Volumes to analyze (VOLF). In dof mode the last one is also compared
    /// against the best of the others.
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<AnalyzeMode>,
    /// Profile axis for fwhm/dof, slicing axis for bscan.
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
    /// Slice index for bscan.
    #[arg(long)]
    pub index: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub experiment: Option<Experiment>,
    #[command(flatten)]
    pub de: DeArgs,
    #[command(flatten)]
    pub common: Common,
}
