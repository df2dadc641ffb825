//! Image quality metrics on projection images and the weighted joint score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::MapImage;

pub const ENTROPY_BINS: usize = 256;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Weights of the average-gradient, entropy and SSIM terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub lambda_avg: f64,
    pub lambda_en: f64,
    pub lambda_ssim: f64,
}

impl MetricWeights {
    pub fn new(lambda_avg: f64, lambda_en: f64, lambda_ssim: f64) -> Result<Self> {
        let w = Self { lambda_avg, lambda_en, lambda_ssim };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_avg, self.lambda_en, self.lambda_ssim];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!("weights must be finite and nonnegative: {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidConfig("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

impl Default for MetricWeights {
    /// Texture and information weighted over similarity: 0.6 / 0.3 / 0.1.
    fn default() -> Self {
        Self { lambda_avg: 0.6, lambda_en: 0.3, lambda_ssim: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub l_avg: f64,
    pub l_en: f64,
    pub l_ssim: f64,
    /// Largest average gradient among the source projections.
    pub avg_reference: f64,
    pub norm_avg: f64,
    pub norm_en: f64,
    pub norm_ssim: f64,
    pub weights: MetricWeights,
    pub total: f64,
}

/// Shannon entropy in bits of a 256-bin histogram of the min-max normalized image.
pub fn entropy(img: &MapImage) -> Result<f64> {
    if img.pixels.is_empty() {
        return Err(Error::InvalidImage("empty image".into()));
    }
    let (lo, hi) = img.min_max();
    let mut hist = [0usize; ENTROPY_BINS];
    if hi > lo {
        let range = hi - lo;
        for &p in &img.pixels {
            let bin = (((p - lo) / range) * ENTROPY_BINS as f64).floor() as usize;
            hist[bin.min(ENTROPY_BINS - 1)] += 1;
        }
    } else {
        hist[0] = img.pixels.len();
    }
    let n = img.pixels.len() as f64;
    Ok(hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

/// Mean of `sqrt((Δx² + Δy²) / 2)` over forward differences, excluding the
/// last row and column.
pub fn average_gradient(img: &MapImage) -> Result<f64> {
    let (w, h) = (img.width, img.height);
    if w < 2 || h < 2 {
        return Err(Error::InvalidImage(format!("average gradient needs at least 2x2, got {w}x{h}")));
    }
    let mut sum = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let p = img.get(x, y);
            let dx = img.get(x + 1, y) - p;
            let dy = img.get(x, y + 1) - p;
            sum += ((dx * dx + dy * dy) / 2.0).sqrt();
        }
    }
    Ok(sum / ((w - 1) * (h - 1)) as f64)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable "valid" filtering: output is (w - 10) x (h - 10).
fn filter_valid(src: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                acc += gk * src[y * w + x + k];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                acc += gk * rows[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (σ = 1.5) after
/// normalizing both images by their joint min and max.
pub fn ssim(a: &MapImage, b: &MapImage) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::InvalidImage(format!(
            "SSIM size mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidImage(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}")));
    }
    let (alo, ahi) = a.min_max();
    let (blo, bhi) = b.min_max();
    let lo = alo.min(blo);
    let range = ahi.max(bhi) - lo;
    let norm = |img: &MapImage| -> Vec<f64> {
        if range > 0.0 {
            img.pixels.iter().map(|p| (p - lo) / range).collect()
        } else {
            vec![0.0; img.pixels.len()]
        }
    };
    let (x, y) = (norm(a), norm(b));
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let g = gaussian_window();

    let mu_x = filter_valid(&x, w, h, &g);
    let mu_y = filter_valid(&y, w, h, &g);
    let sq = |v: &[f64]| v.iter().map(|p| p * p).collect::<Vec<_>>();
    let xx = filter_valid(&sq(&x), w, h, &g);
    let yy = filter_valid(&sq(&y), w, h, &g);
    let xy_prod: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let xy = filter_valid(&xy_prod, w, h, &g);

    let mut sum = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let mxy = mx * my;
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mxy;
        let num = (2.0 * mxy + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (vx + vy + c2);
        sum += num / den;
    }
    Ok(sum / mu_x.len() as f64)
}

/// Weighted evaluation of a fused projection against its source projections.
///
/// Entropy is divided by 8 bits and the average gradient by the best source
/// average gradient (the ratio may exceed 1). SSIM is the mean over sources.
pub fn joint_score(fused: &MapImage, sources: &[MapImage], weights: &MetricWeights) -> Result<EvaluationReport> {
    weights.validate()?;
    if sources.is_empty() {
        return Err(Error::DegenerateInput("no source projections".into()));
    }
    let l_avg = average_gradient(fused)?;
    let l_en = entropy(fused)?;
    let mut ssim_sum = 0.0;
    let mut avg_reference = 0.0f64;
    for src in sources {
        ssim_sum += ssim(fused, src)?;
        avg_reference = avg_reference.max(average_gradient(src)?);
    }
    if avg_reference <= 0.0 {
        return Err(Error::DegenerateInput("all source projections are constant".into()));
    }
    let l_ssim = ssim_sum / sources.len() as f64;
    let norm_avg = l_avg / avg_reference;
    let norm_en = l_en / 8.0;
    let norm_ssim = l_ssim;
    let total = weights.lambda_avg * norm_avg + weights.lambda_en * norm_en + weights.lambda_ssim * norm_ssim;
    Ok(EvaluationReport {
        l_avg,
        l_en,
        l_ssim,
        avg_reference,
        norm_avg,
        norm_en,
        norm_ssim,
        weights: *weights,
        total,
    })
}
