//! One-level 3D stationary (undecimated) wavelet transform.
//!
//! Analysis along an axis computes `out[i] = Σ_k taps[k] · x[(i + k) mod n]`
//! for the low- and high-pass taps, without downsampling, so every subband
//! keeps the source dimensions. Axes are processed x, then y, then z; the
//! subband label records the filter used on each axis in that order.
//!
//! Synthesis computes `x[i] = Σ_k lo'[k] · a[(i − k) mod n] + hi'[k] · d[(i − k) mod n]`
//! with `lo' = lo / 2`, `hi' = hi / 2`. For an orthonormal quadrature mirror pair
//! this averages the two redundant estimates and reconstructs exactly, for any
//! axis length.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volf;
use crate::volume::{Axis, Dims, Spacing, Volume};

/// Subband label: low (L) or high (H) pass along x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subband {
    #[serde(rename = "LLL")]
    Lll,
    #[serde(rename = "LLH")]
    Llh,
    #[serde(rename = "LHL")]
    Lhl,
    #[serde(rename = "LHH")]
    Lhh,
    #[serde(rename = "HLL")]
    Hll,
    #[serde(rename = "HLH")]
    Hlh,
    #[serde(rename = "HHL")]
    Hhl,
    #[serde(rename = "HHH")]
    Hhh,
}

impl Subband {
    pub const ALL: [Subband; 8] = [
        Subband::Lll,
        Subband::Llh,
        Subband::Lhl,
        Subband::Lhh,
        Subband::Hll,
        Subband::Hlh,
        Subband::Hhl,
        Subband::Hhh,
    ];

    /// Position in [`Subband::ALL`]; bit 2 is x, bit 1 is y, bit 0 is z (1 = high).
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            Subband::Lll => "LLL",
            Subband::Llh => "LLH",
            Subband::Lhl => "LHL",
            Subband::Lhh => "LHH",
            Subband::Hll => "HLL",
            Subband::Hlh => "HLH",
            Subband::Hhl => "HHL",
            Subband::Hhh => "HHH",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == label)
    }

    pub const fn is_high(self, axis: Axis) -> bool {
        let bit = match axis {
            Axis::X => 2,
            Axis::Y => 1,
            Axis::Z => 0,
        };
        (self as usize >> bit) & 1 == 1
    }
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletFilter {
    pub name: String,
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
    pub rec_lo: Vec<f64>,
    pub rec_hi: Vec<f64>,
}

impl WaveletFilter {
    pub const NAMES: [&'static str; 2] = ["haar", "db2"];

    /// Builds the undecimated pair from an orthonormal low-pass filter.
    fn orthonormal(name: &str, lo: Vec<f64>) -> Self {
        let n = lo.len();
        let hi: Vec<f64> = (0..n)
            .map(|k| if k % 2 == 0 { lo[n - 1 - k] } else { -lo[n - 1 - k] })
            .collect();
        Self {
            name: name.to_string(),
            rec_lo: lo.iter().map(|t| t / 2.0).collect(),
            rec_hi: hi.iter().map(|t| t / 2.0).collect(),
            dec_lo: lo,
            dec_hi: hi,
        }
    }

    pub fn haar() -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Self::orthonormal("haar", vec![c, c])
    }

    /// Daubechies with two vanishing moments (4 taps).
    pub fn db2() -> Self {
        let s3 = 3f64.sqrt();
        let norm = 4.0 * 2f64.sqrt();
        Self::orthonormal(
            "db2",
            vec![(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm],
        )
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "haar" => Ok(Self::haar()),
            "db2" => Ok(Self::db2()),
            other => Err(Error::UnknownWavelet(other.to_string())),
        }
    }
}

impl Default for WaveletFilter {
    fn default() -> Self {
        Self::haar()
    }
}

/// The eight one-level subbands of a volume, indexed by [`Subband`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    bands: Vec<Volume>,
}

impl SubbandSet {
    /// Assembles a set from labelled volumes; every label must appear exactly
    /// once and all volumes must share dimensions.
    pub fn from_bands(bands: impl IntoIterator<Item = (Subband, Volume)>) -> Result<Self> {
        let mut slots: [Option<Volume>; 8] = Default::default();
        for (label, vol) in bands {
            if slots[label.index()].replace(vol).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate subband {label}")));
            }
        }
        let mut out = Vec::with_capacity(8);
        for (label, slot) in Subband::ALL.into_iter().zip(slots) {
            out.push(slot.ok_or(Error::MissingSubband(label.label()))?);
        }
        let dims = out[0].dims();
        if let Some(bad) = out.iter().find(|b| b.dims() != dims) {
            return Err(Error::DimensionMismatch { expected: dims.as_array(), found: bad.dims().as_array() });
        }
        Ok(Self { bands: out })
    }

    pub fn get(&self, band: Subband) -> &Volume {
        &self.bands[band.index()]
    }

    pub fn dims(&self) -> Dims {
        self.bands[0].dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.bands[0].spacing()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Subband, &Volume)> {
        Subband::ALL.into_iter().zip(self.bands.iter())
    }

    pub fn into_bands(self) -> Vec<Volume> {
        self.bands
    }
}

/// Circular filtering along one axis. Each output voxel is
/// `Σ_terms Σ_k taps[k] · src[pos + sign·k]` with periodic wrap, accumulated
/// in that order.
fn filter_axis(dims: Dims, axis: Axis, terms: &[(&[f64], &[f64])], sign: isize) -> Vec<f64> {
    let Dims { nx, ny, .. } = dims;
    let n = dims.axis_len(axis);
    let max_taps = terms.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
    // wrap[k][p] = (p + sign·k) mod n
    let wrap: Vec<Vec<usize>> = (0..max_taps)
        .map(|k| {
            let shift = (sign * k as isize).rem_euclid(n as isize) as usize;
            (0..n).map(|p| (p + shift) % n).collect()
        })
        .collect();
    let mut out = vec![0.0; dims.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, plane)| {
        for y in 0..ny {
            let row = &mut plane[y * nx..(y + 1) * nx];
            for &(src, taps) in terms {
                for (k, &t) in taps.iter().enumerate() {
                    match axis {
                        Axis::X => {
                            let base = dims.index(0, y, z);
                            for (o, &p) in row.iter_mut().zip(&wrap[k]) {
                                *o += t * src[base + p];
                            }
                        }
                        Axis::Y | Axis::Z => {
                            let start = match axis {
                                Axis::Y => dims.index(0, wrap[k][y], z),
                                _ => dims.index(0, y, wrap[k][z]),
                            };
                            for (o, &v) in row.iter_mut().zip(&src[start..start + nx]) {
                                *o += t * v;
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

fn check_axes(dims: Dims) -> Result<()> {
    if dims.as_array().iter().any(|&n| n < 2) {
        return Err(Error::InvalidVolume(format!(
            "stationary wavelet transform needs at least 2 voxels per axis, got {dims:?}"
        )));
    }
    Ok(())
}

/// Forward one-level 3D SWT with periodic extension.
pub fn swt_forward(vol: &Volume, filter: &WaveletFilter) -> Result<SubbandSet> {
    let dims = vol.dims();
    check_axes(dims)?;
    let mut stage: Vec<Vec<f64>> = vec![vol.as_slice().to_vec()];
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        stage = stage
            .iter()
            .flat_map(|src| {
                [&filter.dec_lo, &filter.dec_hi]
                    .map(|taps| filter_axis(dims, axis, &[(src.as_slice(), taps.as_slice())], 1))
            })
            .collect();
    }
    let spacing = vol.spacing();
    Ok(SubbandSet {
        bands: stage
            .into_iter()
            .map(|data| Volume::from_parts_unchecked(dims, spacing, data))
            .collect(),
    })
}

/// Inverse one-level 3D SWT.
pub fn swt_inverse(bands: &SubbandSet, filter: &WaveletFilter) -> Result<Volume> {
    let dims = bands.dims();
    check_axes(dims)?;
    let mut stage: Vec<Vec<f64>> = bands.bands.iter().map(|b| b.as_slice().to_vec()).collect();
    for axis in [Axis::Z, Axis::Y, Axis::X] {
        stage = stage
            .chunks_exact(2)
            .map(|pair| {
                filter_axis(
                    dims,
                    axis,
                    &[
                        (pair[0].as_slice(), filter.rec_lo.as_slice()),
                        (pair[1].as_slice(), filter.rec_hi.as_slice()),
                    ],
                    -1,
                )
            })
            .collect();
    }
    let data = stage.pop().expect("one volume left after three synthesis passes");
    Volume::new(dims, bands.spacing(), data)
}

#[derive(Debug, Serialize, Deserialize)]
struct SubbandSidecar {
    filter: String,
    bands: Vec<(Subband, String)>,
}

fn band_path(dir: &Path, stem: &str, band: Subband) -> PathBuf {
    dir.join(format!("{stem}_{}.volf", band.label()))
}

/// Writes `<stem>_LLL.volf` … `<stem>_HHH.volf` plus `<stem>_subbands.json`.
pub fn write_subbands(dir: &Path, stem: &str, set: &SubbandSet, filter: &WaveletFilter) -> Result<()> {
    let mut names = Vec::with_capacity(8);
    for (band, vol) in set.iter() {
        let path = band_path(dir, stem, band);
        volf::write(vol, &path)?;
        names.push((band, path.file_name().unwrap().to_string_lossy().into_owned()));
    }
    let sidecar = SubbandSidecar { filter: filter.name.clone(), bands: names };
    fs::write(dir.join(format!("{stem}_subbands.json")), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_subbands(dir: &Path, stem: &str) -> Result<(SubbandSet, WaveletFilter)> {
    let sidecar: SubbandSidecar =
        serde_json::from_slice(&fs::read(dir.join(format!("{stem}_subbands.json")))?)?;
    let filter = WaveletFilter::by_name(&sidecar.filter)?;
    let mut bands = Vec::with_capacity(8);
    for band in Subband::ALL {
        let path = band_path(dir, stem, band);
        if !path.exists() {
            return Err(Error::MissingSubband(band.label()));
        }
        bands.push((band, volf::read(path)?));
    }
    Ok((SubbandSet::from_bands(bands)?, filter))
}
