//! PNG corpus ingestion and export.
//!
//! A corpus on disk is a directory of PNG files plus a UTF-8 manifest with
//! one `relative/path.png<TAB>Label Name` line per sample. Images may be
//! 8-bit RGB or grayscale; anything not already 64x64 is center-cropped
//! square and resized. Already-64x64 images pass through untouched so a
//! write/load cycle is exact. Decodes run in parallel; manifest order is
//! preserved.

use std::path::{Path, PathBuf};

use image::imageops::{crop_imm, resize, FilterType};
use image::{GrayImage, RgbImage};
use rayon::prelude::*;

use crate::data::{render_text, stratified_split, Corpus, Sample, VISION_SHAPE};
use crate::error::{DscError, DscResult};
use crate::tensor::Tensor;

const SIDE: usize = VISION_SHAPE[1];

/// Writes a [1, H, W] or [3, H, W] tensor as an 8-bit gray or RGB PNG.
/// Values are clamped to [0, 1] and scaled to 0..=255.
pub fn write_png(path: &Path, t: &Tensor) -> DscResult<()> {
    let shape = t.shape();
    if shape.len() != 3 || (shape[0] != 1 && shape[0] != 3) {
        return Err(DscError::Geometry(format!(
            "PNG export needs [1, H, W] or [3, H, W], got {:?}",
            shape
        )));
    }
    let (channels, h, w) = (shape[0], shape[1], shape[2]);
    let plane = h * w;
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let io_err = |e: image::ImageError| DscError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if channels == 1 {
        let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
            image::Luma([quant(t.data()[y as usize * w + x as usize])])
        });
        img.save(path).map_err(io_err)
    } else {
        let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let i = y as usize * w + x as usize;
            image::Rgb([
                quant(t.data()[i]),
                quant(t.data()[plane + i]),
                quant(t.data()[2 * plane + i]),
            ])
        });
        img.save(path).map_err(io_err)
    }
}

fn ingest(path: &Path, label: &str) -> DscResult<Sample> {
    let decoded = image::open(path).map_err(|e| DscError::Ingestion {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width(), rgb.height());
    let rgb = if (w, h) == (SIDE as u32, SIDE as u32) {
        rgb
    } else {
        let side = w.min(h);
        let cropped = crop_imm(&rgb, (w - side) / 2, (h - side) / 2, side, side).to_image();
        resize(&cropped, SIDE as u32, SIDE as u32, FilterType::Triangle)
    };
    let mut img = Tensor::zeros(&VISION_SHAPE);
    let plane = SIDE * SIDE;
    for (x, y, px) in rgb.enumerate_pixels() {
        let i = y as usize * SIDE + x as usize;
        for ch in 0..3 {
            img.data_mut()[ch * plane + i] = px.0[ch] as f64 / 255.0;
        }
    }
    Sample::new(img, render_text(label)?, label)
}

/// Loads every manifest entry from `directory`, pairing each image with a
/// raster of its label. Manifest order defines sample order and the split.
pub fn load_image_corpus(directory: &Path, manifest: &Path) -> DscResult<Corpus> {
    let listing = std::fs::read_to_string(manifest).map_err(|e| DscError::Io {
        path: manifest.display().to_string(),
        message: e.to_string(),
    })?;
    let mut entries: Vec<(PathBuf, String)> = Vec::new();
    for (i, raw) in listing.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (rel, label) = line.split_once('\t').ok_or_else(|| DscError::Ingestion {
            path: manifest.display().to_string(),
            message: format!("line {}: expected <path>\t<label>", i + 1),
        })?;
        entries.push((directory.join(rel), label.to_string()));
    }
    let samples: DscResult<Vec<Sample>> = entries
        .par_iter()
        .map(|(path, label)| ingest(path, label))
        .collect();
    let samples = samples?;
    let labels: Vec<&str> = samples.iter().map(|s| s.label()).collect();
    let split = stratified_split(&labels);
    Corpus::new(samples, split)
}
