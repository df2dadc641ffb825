//! Block-wise focus selection in the stationary wavelet domain.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swt::{swt_forward, swt_inverse, Subband, SubbandSet, WaveletFilter};
use crate::volume::{block_std_unchecked, partition, BlockGrid, BlockSpec, Dims, Volume};

/// Block dimensions used for each subband.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockPlan {
    Shared(BlockSpec),
    PerSubband(IndexMap<Subband, BlockSpec>),
}

impl BlockPlan {
    /// Per-subband plan in canonical subband order.
    pub fn per_subband(specs: [BlockSpec; 8]) -> Self {
        Self::PerSubband(Subband::ALL.into_iter().zip(specs).collect())
    }

    pub fn spec_for(&self, band: Subband) -> Result<BlockSpec> {
        match self {
            Self::Shared(spec) => Ok(*spec),
            Self::PerSubband(map) => map.get(&band).copied().ok_or(Error::MissingSubband(band.label())),
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        for band in Subband::ALL {
            self.spec_for(band)?.validate(dims)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Equal standard deviations resolve to the lowest source index.
    #[default]
    LowestIndex,
}

fn default_wavelet() -> String {
    "haar".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub blocks: BlockPlan,
    #[serde(default = "default_wavelet")]
    pub wavelet: String,
    #[serde(default)]
    pub tie_policy: TiePolicy,
}

impl FusionConfig {
    pub fn shared(spec: BlockSpec) -> Self {
        Self { blocks: BlockPlan::Shared(spec), wavelet: default_wavelet(), tie_policy: TiePolicy::default() }
    }

    pub fn filter(&self) -> Result<WaveletFilter> {
        WaveletFilter::by_name(&self.wavelet)
    }
}

/// Winning source per block, per subband, in block order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelectionMask {
    pub winners: IndexMap<Subband, Vec<usize>>,
}

impl SelectionMask {
    pub fn for_band(&self, band: Subband) -> Option<&[usize]> {
        self.winners.get(&band).map(Vec::as_slice)
    }

    /// Rebuilds the fused subbands by copying each block from its recorded winner.
    pub fn apply(&self, decomposed: &[SubbandSet], plan: &BlockPlan) -> Result<SubbandSet> {
        let first = decomposed.first().ok_or(Error::TooFewSources { needed: 1, got: 0 })?;
        let dims = first.dims();
        let mut bands = Vec::with_capacity(8);
        for band in Subband::ALL {
            let grid = partition(dims, plan.spec_for(band)?)?;
            let winners = self.for_band(band).ok_or(Error::MissingSubband(band.label()))?;
            if winners.len() != grid.len() || winners.iter().any(|&w| w >= decomposed.len()) {
                return Err(Error::InvalidConfig(format!("selection for {band} does not fit the block grid")));
            }
            let sources: Vec<&Volume> = decomposed.iter().map(|s| s.get(band)).collect();
            bands.push((band, assemble(&sources, &grid, winners)));
        }
        SubbandSet::from_bands(bands)
    }
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub fused: Volume,
    pub mask: SelectionMask,
}

fn check_same_geometry(vols: &[&Volume]) -> Result<()> {
    if vols.len() < 2 {
        return Err(Error::TooFewSources { needed: 2, got: vols.len() });
    }
    let dims = vols[0].dims();
    for v in &vols[1..] {
        if v.dims() != dims {
            return Err(Error::DimensionMismatch { expected: dims.as_array(), found: v.dims().as_array() });
        }
    }
    Ok(())
}

/// Copies every block from its winning source, walking the output in memory
/// order so runs of same-winner blocks along x become one copy.
fn assemble(sources: &[&Volume], grid: &BlockGrid, winners: &[usize]) -> Volume {
    let dims = sources[0].dims();
    let [cx, cy, cz] = grid.counts;
    let (h, w, l) = (grid.blocks[0].x.len(), grid.blocks[0].y.len(), grid.blocks[0].z.len());
    let mut out = vec![0.0; dims.len()];
    for z in 0..dims.nz {
        let bz = z / l;
        for y in 0..dims.ny {
            let by = y / w;
            let row = dims.index(0, y, z);
            let mut bx = 0;
            while bx < cx {
                let win = winners[(bx * cy + by) * cz + bz];
                let mut end = bx + 1;
                while end < cx && winners[(end * cy + by) * cz + bz] == win {
                    end += 1;
                }
                let span = row + bx * h..row + (end * h).min(dims.nx);
                out[span.clone()].copy_from_slice(&sources[win].as_slice()[span]);
                bx = end;
            }
        }
    }
    Volume::from_parts_unchecked(dims, sources[0].spacing(), out)
}

/// Fuses same-label subbands from N sources: each block is copied from the
/// source with the largest block standard deviation.
pub fn fuse_subband(bands: &[&Volume], spec: BlockSpec) -> Result<(Volume, Vec<usize>)> {
    check_same_geometry(bands)?;
    let grid = partition(bands[0].dims(), spec)?;
    let winners: Vec<usize> = grid
        .blocks
        .iter()
        .map(|block| {
            let mut best = 0;
            let mut best_std = block_std_unchecked(bands[0], block);
            for (i, band) in bands.iter().enumerate().skip(1) {
                let s = block_std_unchecked(band, block);
                if s > best_std {
                    best = i;
                    best_std = s;
                }
            }
            best
        })
        .collect();
    Ok((assemble(bands, &grid, &winners), winners))
}

/// Forward-transforms every source after checking they share dims and spacing.
pub fn decompose_sources(sources: &[Volume], filter: &WaveletFilter) -> Result<Vec<SubbandSet>> {
    let refs: Vec<&Volume> = sources.iter().collect();
    check_same_geometry(&refs)?;
    if sources.iter().any(|s| s.spacing() != sources[0].spacing()) {
        return Err(Error::SpacingMismatch);
    }
    sources.iter().map(|s| swt_forward(s, filter)).collect()
}

/// Fuses already-decomposed sources subband by subband.
pub fn fuse_decomposed(decomposed: &[SubbandSet], plan: &BlockPlan) -> Result<(SubbandSet, SelectionMask)> {
    if decomposed.len() < 2 {
        return Err(Error::TooFewSources { needed: 2, got: decomposed.len() });
    }
    plan.validate(decomposed[0].dims())?;
    let fused: Vec<(Subband, Volume, Vec<usize>)> = Subband::ALL
        .par_iter()
        .map(|&band| {
            let sources: Vec<&Volume> = decomposed.iter().map(|s| s.get(band)).collect();
            let (vol, winners) = fuse_subband(&sources, plan.spec_for(band)?)?;
            Ok((band, vol, winners))
        })
        .collect::<Result<_>>()?;
    let mut winners = IndexMap::with_capacity(8);
    let mut bands = Vec::with_capacity(8);
    for (band, vol, w) in fused {
        winners.insert(band, w);
        bands.push((band, vol));
    }
    Ok((SubbandSet::from_bands(bands)?, SelectionMask { winners }))
}

/// Full pipeline: forward SWT of every source, per-subband block selection,
/// inverse SWT of the fused subbands.
pub fn fuse_volumes(sources: &[Volume], config: &FusionConfig) -> Result<FusionOutput> {
    let filter = config.filter()?;
    let decomposed = decompose_sources(sources, &filter)?;
    let (bands, mask) = fuse_decomposed(&decomposed, &config.blocks)?;
    let fused = swt_inverse(&bands, &filter)?;
    Ok(FusionOutput { fused, mask })
}
