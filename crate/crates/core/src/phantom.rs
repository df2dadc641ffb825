//! Synthetic multi-focus data standing in for a virtual OR-PAM scanner.
//!
//! A scene (tilted fiber or vessel tree) is rasterized into a binary
//! ground-truth volume. Each focal position then gets a copy blurred
//! laterally, slice by slice, with a Gaussian whose width follows the
//! Gaussian-beam envelope `σ(z) = σ₀·sqrt(1 + ((z − z_f)/z_R)²)`, `σ₀ = w₀/2`.
//! There is no axial blur and no acoustic model.
//!
//! Geometry is in micrometers with voxel `(i, j, k)` centered at
//! `(i·dx, j·dy, k·dz)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, Spacing, Volume};

pub const DEFAULT_DIMS: Dims = Dims::new(80, 80, 80);
pub const DEFAULT_SPACING: Spacing = Spacing::new(2.0, 2.0, 3.0);

/// Gaussian kernels are cut at this many standard deviations.
pub const KERNEL_TRUNCATION: f64 = 4.0;

/// Acoustic detection parameters of the reference scanner. Recorded with
/// generated data; never simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticMetadata {
    pub center_frequency_mhz: f64,
    pub fractional_bandwidth: f64,
    pub sound_speed_m_per_s: f64,
}

impl Default for AcousticMetadata {
    fn default() -> Self {
        Self { center_frequency_mhz: 75.0, fractional_bandwidth: 0.67, sound_speed_m_per_s: 1500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselNode {
    /// Micrometers.
    pub position: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub nodes: Vec<VesselNode>,
}

fn default_fiber_diameter() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    TiltedFiber {
        start: [f64; 3],
        end: [f64; 3],
        #[serde(default = "default_fiber_diameter")]
        diameter: f64,
    },
    VesselTree { branches: Vec<Branch> },
}

fn default_dims() -> Dims {
    DEFAULT_DIMS
}

fn default_spacing() -> Spacing {
    DEFAULT_SPACING
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomScene {
    #[serde(default = "default_dims")]
    pub dims: Dims,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
    pub geometry: Geometry,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn scene_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidScene { field: field.into(), reason: reason.into() }
}

impl PhantomScene {
    pub fn new(geometry: Geometry) -> Self {
        Self { dims: DEFAULT_DIMS, spacing: DEFAULT_SPACING, geometry, amplitude: 1.0 }
    }

    pub fn empty() -> Self {
        Self::new(Geometry::VesselTree { branches: Vec::new() })
    }

    /// Parses and validates a JSON scene description.
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Self = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    fn extent(&self) -> [f64; 3] {
        [
            (self.dims.nx - 1) as f64 * self.spacing.x,
            (self.dims.ny - 1) as f64 * self.spacing.y,
            (self.dims.nz - 1) as f64 * self.spacing.z,
        ]
    }

    fn check_point(&self, field: &str, p: &[f64; 3]) -> Result<()> {
        let ext = self.extent();
        for (axis, (v, max)) in p.iter().zip(ext).enumerate() {
            if !v.is_finite() || *v < 0.0 || *v > max {
                return Err(scene_err(
                    field,
                    format!("coordinate {axis} = {v} outside grid [0, {max}] µm"),
                ));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.as_array().contains(&0) {
            return Err(scene_err("dims", "all axes must be positive"));
        }
        for (name, s) in [("spacing.x", self.spacing.x), ("spacing.y", self.spacing.y), ("spacing.z", self.spacing.z)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(scene_err(name, "must be strictly positive"));
            }
        }
        if !self.amplitude.is_finite() {
            return Err(scene_err("amplitude", "must be finite"));
        }
        match &self.geometry {
            Geometry::TiltedFiber { start, end, diameter } => {
                if !(diameter.is_finite() && *diameter > 0.0) {
                    return Err(scene_err("geometry.diameter", "must be strictly positive"));
                }
                self.check_point("geometry.start", start)?;
                self.check_point("geometry.end", end)?;
            }
            Geometry::VesselTree { branches } => {
                for (b, branch) in branches.iter().enumerate() {
                    if branch.nodes.len() < 2 {
                        return Err(scene_err(format!("geometry.branches[{b}].nodes"), "needs at least 2 nodes"));
                    }
                    for (n, node) in branch.nodes.iter().enumerate() {
                        let field = format!("geometry.branches[{b}].nodes[{n}]");
                        if !(node.radius.is_finite() && node.radius > 0.0) {
                            return Err(scene_err(format!("{field}.radius"), "must be strictly positive"));
                        }
                        self.check_point(&format!("{field}.position"), &node.position)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Tapered segments `(p0, p1, r0, r1)` making up the structure.
    fn segments(&self) -> Vec<([f64; 3], [f64; 3], f64, f64)> {
        match &self.geometry {
            Geometry::TiltedFiber { start, end, diameter } => vec![(*start, *end, diameter / 2.0, diameter / 2.0)],
            Geometry::VesselTree { branches } => branches
                .iter()
                .flat_map(|b| b.nodes.windows(2).map(|w| (w[0].position, w[1].position, w[0].radius, w[1].radius)))
                .collect(),
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Binary ground-truth volume: `amplitude` where the voxel center lies inside
/// a structure, zero elsewhere.
pub fn rasterize(scene: &PhantomScene) -> Result<Volume> {
    scene.validate()?;
    let dims = scene.dims;
    let sp = [scene.spacing.x, scene.spacing.y, scene.spacing.z];
    let n = dims.as_array();
    let mut data = vec![0.0; dims.len()];
    for (p0, p1, r0, r1) in scene.segments() {
        let rmax = r0.max(r1);
        let axis = sub(p1, p0);
        let len2 = dot(axis, axis);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let min = p0[a].min(p1[a]) - rmax;
            let max = p0[a].max(p1[a]) + rmax;
            lo[a] = (min / sp[a]).floor().max(0.0) as usize;
            hi[a] = ((max / sp[a]).ceil() as usize).min(n[a] - 1);
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let c = [i as f64 * sp[0], j as f64 * sp[1], k as f64 * sp[2]];
                    let rel = sub(c, p0);
                    let t = if len2 > 0.0 { (dot(rel, axis) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    let off = [rel[0] - t * axis[0], rel[1] - t * axis[1], rel[2] - t * axis[2]];
                    let r = r0 + t * (r1 - r0);
                    if dot(off, off) <= r * r {
                        data[dims.index(i, j, k)] = scene.amplitude;
                    }
                }
            }
        }
    }
    Volume::new(dims, scene.spacing, data)
}

/// Gaussian-beam focus model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamModel {
    pub wavelength_um: f64,
    pub numerical_aperture: f64,
    pub focal_depth_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waist_override_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rayleigh_override_um: Option<f64>,
}

impl Default for BeamModel {
    /// 532 nm through a 0.2 NA objective, focused at depth 0.
    fn default() -> Self {
        Self {
            wavelength_um: 0.532,
            numerical_aperture: 0.2,
            focal_depth_um: 0.0,
            waist_override_um: None,
            rayleigh_override_um: None,
        }
    }
}

impl BeamModel {
    pub fn focused_at(self, focal_depth_um: f64) -> Self {
        Self { focal_depth_um, ..self }
    }

    /// 1/e² intensity radius at focus, `λ / (π·NA)`.
    pub fn waist_um(&self) -> f64 {
        self.waist_override_um
            .unwrap_or(self.wavelength_um / (std::f64::consts::PI * self.numerical_aperture))
    }

    /// `π·w₀² / λ`.
    pub fn rayleigh_range_um(&self) -> f64 {
        self.rayleigh_override_um.unwrap_or_else(|| {
            let w0 = self.waist_um();
            std::f64::consts::PI * w0 * w0 / self.wavelength_um
        })
    }

    pub fn sigma_focus_um(&self) -> f64 {
        self.waist_um() / 2.0
    }

    /// Lateral blur standard deviation at depth `z_um`.
    pub fn sigma_at(&self, z_um: f64) -> f64 {
        let u = (z_um - self.focal_depth_um) / self.rayleigh_range_um();
        self.sigma_focus_um() * (1.0 + u * u).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("beam.wavelength_um", self.wavelength_um),
            ("beam.numerical_aperture", self.numerical_aperture),
            ("beam.waist", self.waist_um()),
            ("beam.rayleigh_range", self.rayleigh_range_um()),
        ];
        for (field, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(scene_err(field, format!("must be strictly positive, got {v}")));
            }
        }
        if !self.focal_depth_um.is_finite() {
            return Err(scene_err("beam.focal_depth_um", "must be finite"));
        }
        Ok(())
    }
}

/// Normalized 1D Gaussian taps on a grid of the given pitch, cut at 4σ.
pub fn gaussian_taps(sigma_um: f64, pitch_um: f64) -> Vec<f64> {
    let radius = (KERNEL_TRUNCATION * sigma_um / pitch_um).floor() as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = (i as f64 - radius as f64) * pitch_um;
            (-d * d / (2.0 * sigma_um * sigma_um)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

fn convolve_zero_padded(src: &[f64], dst: &mut [f64], n: usize, stride: usize, lines: impl Iterator<Item = usize>, taps: &[f64]) {
    let r = taps.len() / 2;
    for start in lines {
        for i in 0..n {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += taps[j + r - i] * src[start + j * stride];
            }
            dst[start + i * stride] = acc;
        }
    }
}

/// Blurs each z-slice laterally with the beam's depth-dependent Gaussian.
pub fn apply_defocus(truth: &Volume, beam: &BeamModel) -> Result<Volume> {
    beam.validate()?;
    let dims = truth.dims();
    let sp = truth.spacing();
    let (nx, ny) = (dims.nx, dims.ny);
    let plane = nx * ny;
    let mut out = vec![0.0; dims.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, dst)| {
        let sigma = beam.sigma_at(z as f64 * sp.z);
        let src = &truth.as_slice()[z * plane..(z + 1) * plane];
        let mut tmp = vec![0.0; plane];
        convolve_zero_padded(src, &mut tmp, nx, 1, (0..ny).map(|y| y * nx), &gaussian_taps(sigma, sp.x));
        convolve_zero_padded(&tmp, dst, ny, nx, 0..nx, &gaussian_taps(sigma, sp.y));
    });
    truth.with_data(out)
}

/// Focal position in micrometers or as a z grid index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalDepth {
    Um(f64),
    Index(usize),
}

impl FocalDepth {
    pub fn to_um(self, spacing: Spacing) -> f64 {
        match self {
            FocalDepth::Um(v) => v,
            FocalDepth::Index(k) => k as f64 * spacing.z,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Multifocus {
    pub sources: Vec<Volume>,
    pub truth: Volume,
    pub focal_depths_um: Vec<f64>,
}

/// One defocused copy of the scene per focal depth, plus the unblurred truth.
pub fn generate_multifocus(scene: &PhantomScene, focal_depths: &[FocalDepth], beam: &BeamModel) -> Result<Multifocus> {
    if focal_depths.is_empty() {
        return Err(scene_err("foci", "at least one focal depth is required"));
    }
    let truth = rasterize(scene)?;
    let focal_depths_um: Vec<f64> = focal_depths.iter().map(|f| f.to_um(scene.spacing)).collect();
    let sources = focal_depths_um
        .iter()
        .map(|&zf| apply_defocus(&truth, &beam.focused_at(zf)))
        .collect::<Result<_>>()?;
    Ok(Multifocus { sources, truth, focal_depths_um })
}

/// The two reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fiber,
    Vessel,
}

impl Preset {
    pub fn scene(self) -> PhantomScene {
        match self {
            Preset::Fiber => fiber_scene(),
            Preset::Vessel => vessel_scene(),
        }
    }

    /// Focal z indices: 30/40 for the fiber, 40/60 for the vessels.
    pub fn default_foci(self) -> Vec<FocalDepth> {
        match self {
            Preset::Fiber => vec![FocalDepth::Index(30), FocalDepth::Index(40)],
            Preset::Vessel => vec![FocalDepth::Index(40), FocalDepth::Index(60)],
        }
    }
}

/// 2 µm fiber advancing one voxel along x, y and z per slice, through z
/// indices 18..=52.
pub fn fiber_scene() -> PhantomScene {
    PhantomScene::new(Geometry::TiltedFiber {
        start: [44.0, 44.0, 54.0],
        end: [112.0, 112.0, 156.0],
        diameter: 2.0,
    })
}

fn node(x: f64, y: f64, z: f64, radius: f64) -> VesselNode {
    VesselNode { position: [x, y, z], radius }
}

/// Vessel tree with an upper network at depth 120 µm (z index 40), a lower
/// network at 180 µm (z index 60), joined by a steep connecting segment.
pub fn vessel_scene() -> PhantomScene {
    let upper = 120.0;
    let lower = 180.0;
    let b = |nodes: Vec<VesselNode>| Branch { nodes };
    PhantomScene::new(Geometry::VesselTree {
        branches: vec![
            b(vec![node(60.0, 76.0, upper, 4.0), node(80.0, 50.0, upper, 3.5), node(110.0, 34.0, upper, 3.0)]),
            b(vec![node(80.0, 50.0, upper, 3.5), node(50.0, 32.0, upper, 2.5)]),
            b(vec![node(80.0, 50.0, upper, 3.5), node(124.0, 62.0, upper, 2.5)]),
            b(vec![node(60.0, 76.0, upper, 4.0), node(66.0, 92.0, lower, 4.0)]),
            b(vec![node(66.0, 92.0, lower, 4.0), node(90.0, 110.0, lower, 3.5), node(120.0, 128.0, lower, 3.0)]),
            b(vec![node(90.0, 110.0, lower, 3.5), node(58.0, 126.0, lower, 2.5)]),
            b(vec![node(90.0, 110.0, lower, 3.5), node(126.0, 96.0, lower, 2.5)]),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beam_defaults() {
        let beam = BeamModel::default();
        assert!((beam.waist_um() - 0.8467).abs() < 1e-4);
        assert!((beam.rayleigh_range_um() - 4.234).abs() < 1e-3);
    }

    #[test]
    fn sigma_profile() {
        let beam = BeamModel::default().focused_at(90.0);
        let s0 = beam.sigma_focus_um();
        assert_eq!(beam.sigma_at(90.0), s0);
        let zr = beam.rayleigh_range_um();
        assert!((beam.sigma_at(90.0 + zr) - s0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((beam.sigma_at(90.0 - zr) - s0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(beam.sigma_at(80.0), beam.sigma_at(100.0));
    }

    #[test]
    fn taps_are_normalized_and_truncated() {
        let t = gaussian_taps(3.0, 2.0);
        assert_eq!(t.len(), 2 * 6 + 1);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_taps(0.3, 2.0), vec![1.0]);
    }

    #[test]
    fn empty_scene_is_zero() {
        let v = rasterize(&PhantomScene::empty()).unwrap();
        assert_eq!(v.dims(), DEFAULT_DIMS);
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scene_validation_names_fields() {
        let mut s = fiber_scene();
        if let Geometry::TiltedFiber { end, .. } = &mut s.geometry {
            end[2] = 500.0;
        }
        match s.validate() {
            Err(Error::InvalidScene { field, .. }) => assert_eq!(field, "geometry.end"),
            other => panic!("{other:?}"),
        }
        let err = PhantomScene::from_json(r#"{"geometry":{"kind":"tilted_fiber","start":[0,0,0]}}"#).unwrap_err();
        assert!(err.to_string().contains("end"), "{err}");
        let err = PhantomScene::from_json(
            r#"{"geometry":{"kind":"vessel_tree","branches":[{"nodes":[{"position":[10,10,10],"radius":-1},{"position":[20,20,20],"radius":1}]}]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("geometry.branches[0].nodes[0].radius"), "{err}");
    }

    #[test]
    fn scene_json_roundtrip() {
        for preset in [Preset::Fiber, Preset::Vessel] {
            let s = preset.scene();
            let text = serde_json::to_string(&s).unwrap();
            assert_eq!(PhantomScene::from_json(&text).unwrap(), s);
        }
    }

    #[test]
    fn presets_are_valid_and_binary() {
        for preset in [Preset::Fiber, Preset::Vessel] {
            let v = rasterize(&preset.scene()).unwrap();
            assert!(v.as_slice().iter().all(|&x| x == 0.0 || x == 1.0));
            assert!(v.as_slice().contains(&1.0));
        }
    }

    #[test]
    fn fiber_preset_is_one_voxel_per_slice() {
        let v = rasterize(&fiber_scene()).unwrap();
        let d = v.dims();
        for z in 0..d.nz {
            let lit: Vec<(usize, usize)> = (0..d.ny)
                .flat_map(|y| (0..d.nx).map(move |x| (x, y)))
                .filter(|&(x, y)| v.get(x, y, z) > 0.0)
                .collect();
            if (18..=52).contains(&z) {
                assert_eq!(lit, vec![(z + 4, z + 4)], "slice {z}");
            } else {
                assert!(lit.is_empty(), "slice {z}");
            }
        }
    }

    #[test]
    fn multifocus_shapes() {
        let scene = PhantomScene { dims: Dims::new(12, 12, 12), ..fiber_scene_small() };
        let one = generate_multifocus(&scene, &[FocalDepth::Index(5)], &BeamModel::default()).unwrap();
        assert_eq!(one.sources.len(), 1);
        assert_eq!(one.focal_depths_um, vec![15.0]);
        let two = generate_multifocus(&scene, &[FocalDepth::Um(15.0), FocalDepth::Index(5)], &BeamModel::default()).unwrap();
        assert_eq!(two.sources[0], two.sources[1]);
        assert!(generate_multifocus(&scene, &[], &BeamModel::default()).is_err());
    }

    fn fiber_scene_small() -> PhantomScene {
        PhantomScene {
            dims: Dims::new(12, 12, 12),
            spacing: DEFAULT_SPACING,
            geometry: Geometry::TiltedFiber { start: [2.0, 2.0, 3.0], end: [20.0, 20.0, 30.0], diameter: 2.0 },
            amplitude: 1.0,
        }
    }
}
