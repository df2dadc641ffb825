//! Resolved parameters for each command.
//!
//! Values come from the defaults below, then the `--config` file, then flags.
//! The resolved struct is what lands in the run manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use volfuse::phantom::{BeamModel, FocalDepth, Preset};
use volfuse::{BlockPlan, DeConfig, DeMode, Dims, FusionConfig, MetricWeights};

use crate::args::{AnalyzeMode, DeArgs};
use crate::manifest::load_parameters;

pub fn resolve<P: DeserializeOwned + Default>(config: Option<&Path>, command: &str) -> Result<P> {
    match config {
        None => Ok(P::default()),
        Some(path) => {
            let value = load_parameters(path, command)?;
            serde_json::from_value(value).with_context(|| format!("invalid parameters in {}", path.display()))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateParams {
    pub preset: Option<Preset>,
    pub scene: Option<PathBuf>,
    pub foci_um: Option<Vec<f64>>,
    pub foci_index: Option<Vec<usize>>,
    pub beam: BeamModel,
}

impl GenerateParams {
    pub fn focal_depths(&self, preset: Option<Preset>) -> Result<Vec<FocalDepth>> {
        match (&self.foci_um, &self.foci_index) {
            (Some(_), Some(_)) => bail!("give focal depths in µm or as indices, not both"),
            (Some(um), None) => Ok(um.iter().map(|&v| FocalDepth::Um(v)).collect()),
            (None, Some(idx)) => Ok(idx.iter().map(|&k| FocalDepth::Index(k)).collect()),
            (None, None) => match preset {
                Some(p) => Ok(p.default_foci()),
                None => bail!("a scene file needs --foci or --foci-index"),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuseParams {
    pub inputs: Vec<PathBuf>,
    pub blocks: Option<BlockPlan>,
    pub wavelet: Option<String>,
    pub tie_policy: Option<volfuse::fusion::TiePolicy>,
}

impl FuseParams {
    pub fn fusion_config(&self) -> Result<FusionConfig> {
        let Some(blocks) = self.blocks.clone() else {
            bail!("no block configuration: pass --block h,w,l or --config");
        };
        let mut config = FusionConfig { blocks, ..FusionConfig::shared(volfuse::BlockSpec::new(1, 1, 1)) };
        if let Some(w) = &self.wavelet {
            config.wavelet = w.clone();
        }
        if let Some(t) = self.tie_policy {
            config.tie_policy = t;
        }
        config.filter()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    pub weights: MetricWeights,
    pub seed: u64,
    /// Same range on every axis; `None` means `[2, n / 2]` per axis.
    pub bounds: Option<(usize, usize)>,
    pub mode: DeMode,
    pub generations: usize,
    pub population: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub stall_generations: usize,
    pub wavelet: String,
}

impl Default for SearchParams {
    fn default() -> Self {
        let de = DeConfig::for_dims(Dims::new(2, 2, 2));
        Self {
            weights: MetricWeights::default(),
            seed: 0,
            bounds: None,
            mode: de.mode,
            generations: de.generations,
            population: de.population,
            mutation: de.mutation,
            crossover: de.crossover,
            stall_generations: de.stall_generations,
            wavelet: de.wavelet,
        }
    }
}

impl SearchParams {
    pub fn apply(&mut self, flags: &DeArgs) {
        if let Some(w) = flags.weights {
            self.weights = w;
        }
        if let Some(s) = flags.seed {
            self.seed = s;
        }
        if let Some(b) = flags.bounds {
            self.bounds = Some(b);
        }
        if let Some(m) = flags.mode {
            self.mode = m.into();
        }
        if let Some(g) = flags.generations {
            self.generations = g;
        }
        if let Some(p) = flags.population {
            self.population = p;
        }
        if let Some(w) = &flags.wavelet {
            self.wavelet = w.clone();
        }
    }

    pub fn de_config(&self, dims: Dims) -> Result<DeConfig> {
        self.weights.validate()?;
        let mut de = DeConfig::for_dims(dims);
        if let Some((lo, hi)) = self.bounds {
            de = de.with_uniform_bounds(lo, hi);
        }
        de.seed = self.seed;
        de.mode = self.mode;
        de.generations = self.generations;
        de.population = self.population;
        de.mutation = self.mutation;
        de.crossover = self.crossover;
        de.stall_generations = self.stall_generations;
        de.wavelet = self.wavelet.clone();
        de.validate(dims)?;
        Ok(de)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeParams {
    pub inputs: Vec<PathBuf>,
    #[serde(flatten)]
    pub search: SearchParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeParams {
    pub inputs: Vec<PathBuf>,
    pub mode: Option<AnalyzeMode>,
    /// Profile axis for resolution curves.
    pub profile_axis: volfuse::Axis,
    /// Slicing axis and index for B-scans; the index defaults to the middle.
    pub bscan_axis: volfuse::Axis,
    pub index: Option<usize>,
}

impl Default for AnalyzeParams {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            mode: None,
            profile_axis: volfuse::Axis::Y,
            bscan_axis: volfuse::Axis::Y,
            index: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReproduceParams {
    pub experiment: Option<Preset>,
    #[serde(flatten)]
    pub search: SearchParams,
}

impl Default for ReproduceParams {
    fn default() -> Self {
        Self { experiment: None, search: SearchParams { seed: 7, ..SearchParams::default() } }
    }
}
