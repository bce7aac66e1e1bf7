//! On-disk light fields: a directory with `manifest.json` and one grayscale
//! image per view named `r{s:02}_c{t:02}.png` (or `.pgm`).

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::{Dims, LightField, View};

pub const MANIFEST: &str = "manifest.json";
pub const LAYOUT: &str = "r{s}_c{t}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub dims: Dims,
    pub bitdepth: u32,
    pub layout: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImageFormat {
    #[default]
    Png,
    Pgm,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Pgm => "pgm",
        }
    }
}

pub fn view_file_stem(s: usize, t: usize) -> String {
    format!("r{s:02}_c{t:02}")
}

/// `round(v·(2^bitdepth − 1))` after clamping to `[0, 1]`.
pub fn quantize(v: f64, bitdepth: u32) -> u16 {
    let max = ((1u32 << bitdepth) - 1) as f64;
    (v.clamp(0.0, 1.0) * max).round() as u16
}

pub fn dequantize(q: u16, bitdepth: u32) -> f64 {
    q as f64 / ((1u32 << bitdepth) - 1) as f64
}

/// Round-trips every sample through the given bit depth.
pub fn quantize_lightfield(lf: &LightField, bitdepth: u32) -> LightField {
    lf.map_views(|v| Ok(v.map(|a| dequantize(quantize(a, bitdepth), bitdepth))))
        .expect("quantization preserves shape")
}

fn check_bitdepth(bitdepth: u32) -> Result<()> {
    if bitdepth == 8 || bitdepth == 16 {
        Ok(())
    } else {
        Err(Error::Format(format!("bit depth must be 8 or 16, got {bitdepth}")))
    }
}

pub fn write_view(v: &View, path: &Path, bitdepth: u32) -> Result<()> {
    check_bitdepth(bitdepth)?;
    let (w, h) = (v.width() as u32, v.height() as u32);
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => ImageFormat::Pgm,
        _ => ImageFormat::Png,
    };
    let samples: Vec<u16> = v.as_slice().iter().map(|&a| quantize(a, bitdepth)).collect();
    match (format, bitdepth) {
        (ImageFormat::Png, 8) => {
            let buf: Vec<u8> = samples.iter().map(|&q| q as u8).collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, buf)
                .expect("buffer sized from view")
                .save(path)?;
        }
        (ImageFormat::Png, _) => {
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, samples)
                .expect("buffer sized from view")
                .save(path)?;
        }
        (ImageFormat::Pgm, _) => {
            // Binary graymap; 16-bit samples are big-endian.
            let mut out = format!("P5\n{w} {h}\n{}\n", (1u32 << bitdepth) - 1).into_bytes();
            if bitdepth == 8 {
                out.extend(samples.iter().map(|&q| q as u8));
            } else {
                out.extend(samples.iter().flat_map(|q| q.to_be_bytes()));
            }
            fs::write(path, out)?;
        }
    }
    Ok(())
}

pub fn read_view(path: &Path, bitdepth: u32) -> Result<View> {
    check_bitdepth(bitdepth)?;
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match (bitdepth, img) {
        (8, DynamicImage::ImageLuma8(buf)) => {
            buf.into_raw().into_iter().map(|q| dequantize(q as u16, 8)).collect()
        }
        (8, other) => other
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|q| dequantize(q as u16, 8))
            .collect(),
        (_, other) => other
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|q| dequantize(q, 16))
            .collect(),
    };
    View::new(w, h, data)
}

pub fn write_lightfield(
    lf: &LightField,
    dir: &Path,
    bitdepth: u32,
    format: ImageFormat,
) -> Result<()> {
    check_bitdepth(bitdepth)?;
    fs::create_dir_all(dir)?;
    let d = lf.dims();
    let manifest = Manifest {
        dims: d,
        bitdepth,
        layout: LAYOUT.to_string(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    for s in 1..=d.p {
        for t in 1..=d.q {
            let path = dir.join(format!("{}.{}", view_file_stem(s, t), format.extension()));
            write_view(lf.view(s, t), &path, bitdepth)?;
        }
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.layout != LAYOUT {
        return Err(Error::Format(format!(
            "unsupported layout {:?}, expected {LAYOUT:?}",
            manifest.layout
        )));
    }
    check_bitdepth(manifest.bitdepth)?;
    Ok(manifest)
}

fn locate_view(dir: &Path, s: usize, t: usize) -> Result<PathBuf> {
    let stem = view_file_stem(s, t);
    [ImageFormat::Png, ImageFormat::Pgm]
        .iter()
        .map(|f| dir.join(format!("{stem}.{}", f.extension())))
        .find(|p| p.exists())
        .ok_or_else(|| Error::Format(format!("missing view {stem} in {}", dir.display())))
}

pub fn read_lightfield(dir: &Path) -> Result<LightField> {
    let manifest = read_manifest(dir)?;
    let d = manifest.dims;
    let mut views = Vec::with_capacity(d.views());
    for s in 1..=d.p {
        for t in 1..=d.q {
            let v = read_view(&locate_view(dir, s, t)?, manifest.bitdepth)?;
            if v.width() != d.x || v.height() != d.y {
                return Err(Error::Dimension(format!(
                    "view r{s:02}_c{t:02} is {}x{}, manifest says {}x{}",
                    v.width(),
                    v.height(),
                    d.x,
                    d.y
                )));
            }
            views.push(v);
        }
    }
    LightField::new(d.p, d.q, views)
}
