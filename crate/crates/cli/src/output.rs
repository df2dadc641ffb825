//! File writers for volumes, tables and images.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::Serialize;
use volfuse::analysis::{ColorImage, FwhmCurve};
use volfuse::optimizer::DeTrace;
use volfuse::{volf, MapImage, Volume};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_volume(path: &Path, vol: &Volume) -> Result<()> {
    volf::write(vol, path).with_context(|| format!("writing {}", path.display()))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    volf::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Rounds through f32, the precision volumes are stored at.
pub fn as_stored(vol: &Volume) -> Result<Volume> {
    Ok(vol.with_data(vol.as_slice().iter().map(|&v| v as f32 as f64).collect())?)
}

#[derive(Serialize)]
struct CurveRow {
    depth_um: f64,
    fwhm_um: f64,
}

pub fn write_curve(path: &Path, curve: &FwhmCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for s in &curve.samples {
        w.serialize(CurveRow { depth_um: s.depth_um, fwhm_um: s.fwhm_um })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    generation: usize,
    best_score: f64,
    mean_score: f64,
    /// `h x w x l` per spec, `;`-separated.
    best_dims: String,
}

pub fn write_trace_csv(path: &Path, trace: &DeTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for g in &trace.generations {
        let dims = g
            .best_dims
            .iter()
            .map(|[h, w, l]| format!("{h}x{w}x{l}"))
            .collect::<Vec<_>>()
            .join(";");
        w.serialize(TraceRow { generation: g.generation, best_score: g.best_score, mean_score: g.mean_score, best_dims: dims })?;
    }
    w.flush()?;
    Ok(())
}

/// 8-bit binary PGM, min-max normalized.
pub fn write_pgm(path: &Path, img: &MapImage) -> Result<()> {
    let (lo, hi) = img.min_max();
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|&p| if hi > lo { ((p - lo) / (hi - lo) * 255.0).round() as u8 } else { 0 })
        .collect();
    encode_pnm(path, &bytes, img.width, img.height, PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
}

/// 8-bit binary PPM.
pub fn write_ppm(path: &Path, img: &ColorImage) -> Result<()> {
    let bytes: Vec<u8> = img.rgb.iter().flatten().copied().collect();
    encode_pnm(path, &bytes, img.width, img.height, PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
}

fn encode_pnm(
    path: &Path,
    bytes: &[u8],
    width: usize,
    height: usize,
    subtype: PnmSubtype,
    color: ExtendedColorType,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(subtype)
        .write_image(bytes, width as u32, height as u32, color)
        .with_context(|| format!("encoding {}", path.display()))
}
