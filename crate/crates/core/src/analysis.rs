//! Lateral resolution and depth of field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{map_project, Axis, MapImage, Volume};

/// Slices whose peak is below this fraction of the volume maximum are skipped.
pub const SIGNAL_FRACTION: f64 = 0.1;

/// Full width at half maximum of a sampled profile, in units of `pitch`.
///
/// Half-maximum crossings on each side of the first global peak are located
/// by linear interpolation between the bracketing samples.
pub fn profile_fwhm(profile: &[f64], pitch: f64) -> Result<f64> {
    if profile.len() < 3 {
        return Err(Error::Fwhm(format!("need at least 3 samples, got {}", profile.len())));
    }
    let mut peak = 0;
    for (i, &v) in profile.iter().enumerate() {
        if v > profile[peak] {
            peak = i;
        }
    }
    let max = profile[peak];
    if !(max > 0.0) {
        return Err(Error::Fwhm("profile peak is not positive".into()));
    }
    let half = max / 2.0;

    let left = (0..peak)
        .rev()
        .find(|&i| profile[i] < half)
        .map(|i| i as f64 + (half - profile[i]) / (profile[i + 1] - profile[i]))
        .ok_or_else(|| Error::Fwhm("no half-maximum crossing left of the peak".into()))?;
    let right = (peak + 1..profile.len())
        .find(|&i| profile[i] < half)
        .map(|i| i as f64 - (half - profile[i]) / (profile[i - 1] - profile[i]))
        .ok_or_else(|| Error::Fwhm("no half-maximum crossing right of the peak".into()))?;
    Ok((right - left) * pitch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwhmSample {
    pub depth_um: f64,
    pub fwhm_um: f64,
}

/// FWHM against depth, strictly increasing in depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwhmCurve {
    pub samples: Vec<FwhmSample>,
    pub nadir_fwhm_um: f64,
    pub nadir_depth_um: f64,
}

impl FwhmCurve {
    pub fn new(samples: Vec<FwhmSample>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::Fwhm(format!("curve needs at least 3 points, got {}", samples.len())));
        }
        if samples.windows(2).any(|w| !(w[1].depth_um > w[0].depth_um)) {
            return Err(Error::Fwhm("depths must be strictly increasing".into()));
        }
        if samples.iter().any(|s| !(s.fwhm_um > 0.0 && s.fwhm_um.is_finite())) {
            return Err(Error::Fwhm("FWHM values must be positive".into()));
        }
        let nadir = samples
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if s.fwhm_um < samples[best].fwhm_um { i } else { best });
        Ok(Self {
            nadir_fwhm_um: samples[nadir].fwhm_um,
            nadir_depth_um: samples[nadir].depth_um,
            samples,
        })
    }

    pub fn from_fn(depths: impl IntoIterator<Item = f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(depths.into_iter().map(|d| FwhmSample { depth_um: d, fwhm_um: f(d) }).collect())
    }

    fn nadir_index(&self) -> usize {
        self.samples
            .iter()
            .position(|s| s.depth_um == self.nadir_depth_um)
            .expect("nadir is one of the samples")
    }
}

/// FWHM of a structure in every z-slice that carries signal.
///
/// The profile runs along `profile_axis` (x or y) through the amplitude
/// centroid of the slice, taken over voxels at or above half the slice peak.
pub fn fwhm_vs_depth(vol: &Volume, profile_axis: Axis) -> Result<FwhmCurve> {
    if profile_axis == Axis::Z {
        return Err(Error::InvalidConfig("profile axis must be lateral".into()));
    }
    let dims = vol.dims();
    let sp = vol.spacing();
    let vmax = vol.max_value();
    if !(vmax > 0.0) {
        return Err(Error::Fwhm("volume has no positive signal".into()));
    }
    let mut samples = Vec::new();
    for z in 0..dims.nz {
        let mut smax = f64::NEG_INFINITY;
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                smax = smax.max(vol.get(x, y, z));
            }
        }
        if smax < SIGNAL_FRACTION * vmax {
            continue;
        }
        let (mut wsum, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let v = vol.get(x, y, z);
                if v >= smax / 2.0 {
                    wsum += v;
                    cx += v * x as f64;
                    cy += v * y as f64;
                }
            }
        }
        let (cx, cy) = ((cx / wsum).round() as usize, (cy / wsum).round() as usize);
        let (profile, pitch): (Vec<f64>, f64) = match profile_axis {
            Axis::Y => ((0..dims.ny).map(|y| vol.get(cx, y, z)).collect(), sp.y),
            _ => ((0..dims.nx).map(|x| vol.get(x, cy, z)).collect(), sp.x),
        };
        if let Ok(fwhm) = profile_fwhm(&profile, pitch) {
            samples.push(FwhmSample { depth_um: z as f64 * sp.z, fwhm_um: fwhm });
        }
    }
    if samples.len() < 3 {
        return Err(Error::Fwhm(format!("only {} usable slices", samples.len())));
    }
    FwhmCurve::new(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofResult {
    pub dof_um: f64,
    pub lower_um: f64,
    pub upper_um: f64,
    pub nadir_fwhm_um: f64,
    pub nadir_depth_um: f64,
    pub threshold_um: f64,
    pub censored_lower: bool,
    pub censored_upper: bool,
}

impl DofResult {
    pub fn censored(&self) -> bool {
        self.censored_lower || self.censored_upper
    }
}

/// Depth range around the nadir over which FWHM stays below twice the nadir.
///
/// Walks outward from the nadir to the first samples reaching the threshold
/// and interpolates the crossing depth. If the curve ends first, that side is
/// clipped to the last sample and flagged as censored.
pub fn dof_measure(curve: &FwhmCurve) -> DofResult {
    let s = &curve.samples;
    let thr = 2.0 * curve.nadir_fwhm_um;
    let i0 = curve.nadir_index();
    let crossing = |inside: &FwhmSample, outside: &FwhmSample| {
        inside.depth_um
            + (thr - inside.fwhm_um) * (outside.depth_um - inside.depth_um) / (outside.fwhm_um - inside.fwhm_um)
    };

    let (lower, censored_lower) = match (0..i0).rev().find(|&j| s[j].fwhm_um >= thr) {
        Some(j) => (crossing(&s[j + 1], &s[j]), false),
        None => (s[0].depth_um, true),
    };
    let (upper, censored_upper) = match (i0 + 1..s.len()).find(|&j| s[j].fwhm_um >= thr) {
        Some(j) => (crossing(&s[j - 1], &s[j]), false),
        None => (s[s.len() - 1].depth_um, true),
    };
    DofResult {
        dof_um: upper - lower,
        lower_um: lower,
        upper_um: upper,
        nadir_fwhm_um: curve.nadir_fwhm_um,
        nadir_depth_um: curve.nadir_depth_um,
        threshold_um: thr,
        censored_lower,
        censored_upper,
    }
}

/// Pearson correlation of two same-sized projections.
pub fn map_correlation(a: &MapImage, b: &MapImage) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::InvalidImage(format!(
            "correlation size mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let n = a.pixels.len() as f64;
    let ma = a.pixels.iter().sum::<f64>() / n;
    let mb = b.pixels.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.pixels.iter().zip(&b.pixels) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::DegenerateInput("correlation of a constant projection".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.rgb[y * self.width + x]
    }
}

/// Hue of the shallowest depth, degrees.
pub const NEAR_HUE: f64 = 0.0;
/// Hue of the deepest depth, degrees.
pub const FAR_HUE: f64 = 240.0;

fn hsv_to_rgb(hue: f64, value: f64) -> [u8; 3] {
    let h = (hue / 60.0).rem_euclid(6.0);
    let x = value * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (value, x, 0.0),
        1 => (x, value, 0.0),
        2 => (0.0, value, x),
        3 => (0.0, x, value),
        4 => (x, 0.0, value),
        _ => (value, 0.0, x),
    };
    [r, g, b].map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Projection along z colored by depth: hue runs linearly from red (z = 0)
/// to blue (z = nz − 1); brightness is the min-max normalized amplitude.
pub fn depth_coded_map(vol: &Volume) -> ColorImage {
    let map = map_project(vol, Axis::Z);
    let nz = vol.dims().nz;
    let depth = map.depth_index.as_ref().expect("projection records depth");
    let (lo, hi) = map.min_max();
    let rgb = map
        .pixels
        .iter()
        .zip(depth)
        .map(|(&p, &d)| {
            let value = if hi > lo { (p - lo) / (hi - lo) } else { 0.0 };
            let frac = if nz > 1 { d as f64 / (nz - 1) as f64 } else { 0.0 };
            hsv_to_rgb(NEAR_HUE + frac * (FAR_HUE - NEAR_HUE), value)
        })
        .collect();
    ColorImage { width: map.width, height: map.height, rgb }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, Spacing};

    #[test]
    fn correlation_cases() {
        let a = MapImage::from_fn(4, 3, |x, y| (x * 3 + y) as f64).unwrap();
        let b = MapImage::from_fn(4, 3, |x, y| 2.0 * (x * 3 + y) as f64 - 5.0).unwrap();
        let c = MapImage::from_fn(4, 3, |x, y| -((x * 3 + y) as f64)).unwrap();
        assert!((map_correlation(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((map_correlation(&a, &c).unwrap() + 1.0).abs() < 1e-12);
        let flat = MapImage::from_fn(4, 3, |_, _| 1.0).unwrap();
        assert!(map_correlation(&a, &flat).is_err());
    }

    #[test]
    fn fwhm_of_gaussian() {
        let profile: Vec<f64> = (0..41).map(|i| (-((i as f64 - 20.0).powi(2)) / 18.0).exp()).collect();
        let f = profile_fwhm(&profile, 1.0).unwrap();
        assert!((f - 7.064).abs() < 0.1, "{f}");
    }

    #[test]
    fn fwhm_of_rect_and_triangle() {
        let mut rect = vec![0.0; 15];
        rect[5..10].iter_mut().for_each(|v| *v = 1.0);
        let f = profile_fwhm(&rect, 2.0).unwrap();
        assert!((f - 10.0).abs() <= 2.0, "{f}");

        let tri = [0.0, 0.0, 1.0, 2.0, 1.0, 0.0, 0.0];
        assert_eq!(profile_fwhm(&tri, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn fwhm_errors() {
        assert!(profile_fwhm(&[1.0, 2.0], 1.0).is_err());
        assert!(profile_fwhm(&[2.0, 1.5, 0.0], 1.0).is_err());
        assert!(profile_fwhm(&[0.0, 0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn dof_of_v_curve_is_exact() {
        let curve = FwhmCurve::from_fn((0..=40).map(|i| i as f64), |z| 1.0 + (z - 20.0).abs() / 10.0).unwrap();
        let dof = dof_measure(&curve);
        assert_eq!(dof.dof_um, 20.0);
        assert_eq!((dof.lower_um, dof.upper_um), (10.0, 30.0));
        assert!(!dof.censored());
    }

    #[test]
    fn constant_curve_is_censored() {
        let curve = FwhmCurve::from_fn((0..10).map(|i| 3.0 * i as f64), |_| 2.0).unwrap();
        let dof = dof_measure(&curve);
        assert!(dof.censored_lower && dof.censored_upper);
        assert_eq!(dof.dof_um, 27.0);
    }

    #[test]
    fn curve_validation() {
        let s = |d, f| FwhmSample { depth_um: d, fwhm_um: f };
        assert!(FwhmCurve::new(vec![s(0.0, 1.0), s(1.0, 1.0)]).is_err());
        assert!(FwhmCurve::new(vec![s(0.0, 1.0), s(0.0, 1.0), s(1.0, 1.0)]).is_err());
        assert!(FwhmCurve::new(vec![s(0.0, 1.0), s(1.0, 0.0), s(2.0, 1.0)]).is_err());
    }

    fn impulse(dims: Dims, at: (usize, usize, usize)) -> Volume {
        Volume::from_fn(dims, Spacing::default(), |x, y, z| if (x, y, z) == at { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn depth_map_palette_ends() {
        let dims = Dims::new(4, 4, 6);
        let near = depth_coded_map(&impulse(dims, (1, 2, 0)));
        assert_eq!(near.get(1, 2), [255, 0, 0]);
        assert_eq!(near.get(0, 0), [0, 0, 0]);
        let far = depth_coded_map(&impulse(dims, (1, 2, 5)));
        assert_eq!(far.get(1, 2), [0, 0, 255]);
    }

    #[test]
    fn depth_map_hue_encodes_depth_only() {
        let dims = Dims::new(4, 4, 6);
        let v = Volume::from_fn(dims, Spacing::default(), |x, y, z| {
            if (x, y, z) == (0, 0, 1) || (x, y, z) == (3, 3, 4) { 1.0 } else { 0.0 }
        })
        .unwrap();
        let img = depth_coded_map(&v);
        let (a, b) = (img.get(0, 0), img.get(3, 3));
        assert_ne!(a, b);
        assert_eq!(a.iter().max(), b.iter().max());
    }
}
