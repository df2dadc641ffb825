//! Dense 3D scalar volumes, block partitioning and projections.
//!
//! Voxels are stored x-fastest, then y, then z. Axes x and y are lateral,
//! z is depth.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Voxel counts per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub const fn axis_len(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
            Axis::Z => self.nz,
        }
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }
}

impl From<[usize; 3]> for Dims {
    fn from(d: [usize; 3]) -> Self {
        Self::new(d[0], d[1], d[2])
    }
}

/// Voxel pitch in micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Spacing {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn isotropic(d: f64) -> Self {
        Self::new(d, d, d)
    }

    pub const fn along(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Self::isotropic(1.0)
    }
}

/// A dense scalar field with voxel spacing. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f64>,
}

impl Volume {
    /// Builds a volume, checking length, spacing and finiteness.
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        if dims.nx == 0 || dims.ny == 0 || dims.nz == 0 {
            return Err(Error::InvalidVolume(format!("zero-sized axis in {dims:?}")));
        }
        if data.len() != dims.len() {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                dims.nx,
                dims.ny,
                dims.nz
            )));
        }
        for s in [spacing.x, spacing.y, spacing.z] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidVolume(format!("spacing {s} is not strictly positive")));
            }
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!("non-finite amplitude at linear index {i}")));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Result<Self> {
        Self::new(dims, spacing, vec![0.0; dims.len()])
    }

    pub fn constant(dims: Dims, spacing: Spacing, value: f64) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.len()])
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(
        dims: Dims,
        spacing: Spacing,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    /// Crate-internal constructor for buffers that are finite by construction.
    pub(crate) fn from_parts_unchecked(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        Self { dims, spacing, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Returns `k * self`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.data.iter().map(|v| v * k).collect())
    }

    /// Same geometry, new data.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.spacing, data)
    }
}

/// Block edge lengths in voxels along x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockSpec {
    pub h: usize,
    pub w: usize,
    pub l: usize,
}

impl BlockSpec {
    pub const fn new(h: usize, w: usize, l: usize) -> Self {
        Self { h, w, l }
    }

    pub const fn as_array(&self) -> [usize; 3] {
        [self.h, self.w, self.l]
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        let spec = self.as_array();
        let d = dims.as_array();
        let err = |reason| Error::InvalidBlockSpec { spec, dims: d, reason };
        if spec.contains(&0) {
            return Err(err("block edge of 0"));
        }
        if spec.iter().zip(d.iter()).any(|(s, n)| s > n) {
            return Err(err("block edge exceeds volume dimension"));
        }
        Ok(())
    }
}

impl From<[usize; 3]> for BlockSpec {
    fn from(s: [usize; 3]) -> Self {
        Self::new(s[0], s[1], s[2])
    }
}

/// Axis-aligned half-open voxel range.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockRange {
    pub x: Range<usize>,
    pub y: Range<usize>,
    pub z: Range<usize>,
}

impl BlockRange {
    pub fn len(&self) -> usize {
        self.x.len() * self.y.len() * self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn full(dims: Dims) -> Self {
        Self { x: 0..dims.nx, y: 0..dims.ny, z: 0..dims.nz }
    }

    fn fits(&self, dims: Dims) -> bool {
        self.x.end <= dims.nx && self.y.end <= dims.ny && self.z.end <= dims.nz
    }
}

/// A partition of a volume into blocks, ordered x outermost then y then z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockGrid {
    pub blocks: Vec<BlockRange>,
    pub counts: [usize; 3],
}

impl BlockGrid {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

fn axis_ranges(n: usize, edge: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(edge))
        .map(|i| i * edge..((i + 1) * edge).min(n))
        .collect()
}

/// Tiles `dims` with `spec`-sized blocks; trailing blocks along each axis
/// shrink to fit.
pub fn partition(dims: Dims, spec: BlockSpec) -> Result<BlockGrid> {
    spec.validate(dims)?;
    let xs = axis_ranges(dims.nx, spec.h);
    let ys = axis_ranges(dims.ny, spec.w);
    let zs = axis_ranges(dims.nz, spec.l);
    let mut blocks = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for x in &xs {
        for y in &ys {
            for z in &zs {
                blocks.push(BlockRange { x: x.clone(), y: y.clone(), z: z.clone() });
            }
        }
    }
    Ok(BlockGrid { blocks, counts: [xs.len(), ys.len(), zs.len()] })
}

/// Population standard deviation of the voxels in `block`.
pub fn block_std(vol: &Volume, block: &BlockRange) -> Result<f64> {
    if block.is_empty() || !block.fits(vol.dims) {
        return Err(Error::InvalidVolume(format!(
            "block {block:?} is empty or outside {:?}",
            vol.dims
        )));
    }
    Ok(block_std_unchecked(vol, block))
}

/// Sums of deviations from the block's first voxel, row by row.
pub(crate) fn block_std_unchecked(vol: &Volume, block: &BlockRange) -> f64 {
    let dims = vol.dims;
    let data = vol.as_slice();
    let shift = data[dims.index(block.x.start, block.y.start, block.z.start)];
    let mut s1 = 0.0f64;
    let mut s2 = 0.0f64;
    for z in block.z.clone() {
        for y in block.y.clone() {
            let row = dims.index(block.x.start, y, z);
            for &v in &data[row..row + block.x.len()] {
                let d = v - shift;
                s1 += d;
                s2 += d * d;
            }
        }
    }
    let n = block.len() as f64;
    ((s2 - s1 * s1 / n) / n).max(0.0).sqrt()
}

/// A 2D scalar image, row-major. Projections carry the argmax index along
/// the projected axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MapImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub depth_index: Option<Vec<usize>>,
}

impl MapImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidImage("non-finite pixel".into()));
        }
        Ok(Self { width, height, pixels, depth_index: None })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn depth_at(&self, x: usize, y: usize) -> Option<usize> {
        self.depth_index.as_ref().map(|d| d[y * self.width + x])
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }
}

/// In-plane axes (image x, image y) left after removing `axis`.
fn plane_axes(axis: Axis) -> (Axis, Axis) {
    match axis {
        Axis::X => (Axis::Y, Axis::Z),
        Axis::Y => (Axis::X, Axis::Z),
        Axis::Z => (Axis::X, Axis::Y),
    }
}

fn coords(a: Axis, b: Axis, c: Axis, i: usize, j: usize, k: usize) -> (usize, usize, usize) {
    let mut xyz = [0usize; 3];
    for (axis, v) in [(a, i), (b, j), (c, k)] {
        xyz[axis as usize] = v;
    }
    (xyz[0], xyz[1], xyz[2])
}

/// Maximum amplitude projection along `axis`. Ties go to the smallest index.
pub fn map_project(vol: &Volume, axis: Axis) -> MapImage {
    let dims = vol.dims;
    if axis == Axis::Z {
        let plane = dims.nx * dims.ny;
        let mut pixels = vol.data[..plane].to_vec();
        let mut depth_index = vec![0; plane];
        for (z, slice) in vol.data.chunks_exact(plane).enumerate().skip(1) {
            for ((p, d), &v) in pixels.iter_mut().zip(depth_index.iter_mut()).zip(slice) {
                if v > *p {
                    *p = v;
                    *d = z;
                }
            }
        }
        return MapImage { width: dims.nx, height: dims.ny, pixels, depth_index: Some(depth_index) };
    }
    let (u, v) = plane_axes(axis);
    let (width, height, depth) = (dims.axis_len(u), dims.axis_len(v), dims.axis_len(axis));
    let mut pixels = Vec::with_capacity(width * height);
    let mut depth_index = Vec::with_capacity(width * height);
    for j in 0..height {
        for i in 0..width {
            let mut best = f64::NEG_INFINITY;
            let mut at = 0;
            for k in 0..depth {
                let (x, y, z) = coords(u, v, axis, i, j, k);
                let val = vol.get(x, y, z);
                if val > best {
                    best = val;
                    at = k;
                }
            }
            pixels.push(best);
            depth_index.push(at);
        }
    }
    MapImage { width, height, pixels, depth_index: Some(depth_index) }
}

/// Depth-versus-lateral cross-section at `index` along a lateral axis.
///
/// For `Axis::X` the image spans (y, z); for `Axis::Y` it spans (x, z).
pub fn bscan_extract(vol: &Volume, axis: Axis, index: usize) -> Result<MapImage> {
    if axis == Axis::Z {
        return Err(Error::InvalidConfig("B-scan axis must be lateral (x or y)".into()));
    }
    let dims = vol.dims;
    let len = dims.axis_len(axis);
    if index >= len {
        return Err(Error::OutOfRange { index, len });
    }
    let (u, v) = plane_axes(axis);
    let (width, height) = (dims.axis_len(u), dims.axis_len(v));
    let pixels = (0..height)
        .flat_map(|j| {
            (0..width).map(move |i| {
                let (x, y, z) = coords(u, v, axis, i, j, index);
                vol.get(x, y, z)
            })
        })
        .collect();
    Ok(MapImage { width, height, pixels, depth_index: None })
}
