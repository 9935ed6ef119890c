//! Dataset directory layout and PNG I/O.
//!
//! ```text
//! <root>/<DEVICE>/<id>/image.png
//!                      consensus.png          labels stored as 0 / 255
//!                      rater_<x>.png
//!                      rater_<x>_second.png
//!                      annotation.json        optional polygons
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{ImageBuffer, Luma, RgbImage};

use crate::data_model::{AnnotatedSample, BinaryMask, Device, GrayImage};
use crate::error::{Error, Result};
use crate::preprocess::{parse_annotation, rasterize_polygons, trunk_polygons};

pub fn read_gray_png(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(w as usize, h as usize, img.into_raw())
}

pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Any nonzero pixel is foreground.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    let g = read_gray_png(path)?;
    let (w, h) = g.dims();
    BinaryMask::from_nonzero(w, h, g.into_data())
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let (w, h) = mask.dims();
    write_gray_png(path, &GrayImage::new(w, h, mask.to_png_bytes())?)
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn sample_dir(root: &Path, sample: &AnnotatedSample) -> PathBuf {
    root.join(sample.device.as_str()).join(&sample.id)
}

/// Writes every sample in the dataset layout, creating directories.
pub fn write_dataset(root: &Path, samples: &[AnnotatedSample]) -> Result<()> {
    for s in samples {
        let dir = sample_dir(root, s);
        fs::create_dir_all(&dir)?;
        write_gray_png(&dir.join("image.png"), &s.image)?;
        write_mask_png(&dir.join("consensus.png"), &s.consensus)?;
        for (r, m) in &s.rater_masks {
            write_mask_png(&dir.join(format!("rater_{r}.png")), m)?;
        }
        for (r, m) in &s.second_pass_masks {
            write_mask_png(&dir.join(format!("rater_{r}_second.png")), m)?;
        }
    }
    Ok(())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Loads one sample directory. The consensus comes from `consensus.png`
/// or, failing that, from the trunk polygons of `annotation.json`.
pub fn load_sample(dir: &Path, device: Device) -> Result<AnnotatedSample> {
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Dataset(format!("bad sample directory {}", dir.display())))?
        .to_string();
    let image = read_gray_png(&dir.join("image.png"))?;
    let consensus_path = dir.join("consensus.png");
    let annotation_path = dir.join("annotation.json");
    let consensus = if consensus_path.exists() {
        read_mask_png(&consensus_path)?
    } else if annotation_path.exists() {
        let shapes = parse_annotation(&fs::read_to_string(&annotation_path)?)?;
        rasterize_polygons(&trunk_polygons(&shapes)?, image.width(), image.height())?
    } else {
        return Err(Error::Dataset(format!("{} has neither consensus.png nor annotation.json", dir.display())));
    };
    let mut sample = AnnotatedSample::new(id, device, image, consensus);
    for path in sorted_entries(dir)? {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(stem) = name.strip_prefix("rater_").and_then(|n| n.strip_suffix(".png")) else { continue };
        match stem.strip_suffix("_second") {
            Some(r) => sample.second_pass_masks.insert(r.to_string(), read_mask_png(&path)?),
            None => sample.rater_masks.insert(stem.to_string(), read_mask_png(&path)?),
        };
    }
    Ok(sample)
}

/// Loads every sample under `root`, device directories and ids in sorted
/// order. Directories whose name is not a known device are skipped.
pub fn load_dataset(root: &Path) -> Result<Vec<AnnotatedSample>> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("dataset root {} is not a directory", root.display())));
    }
    let mut out = Vec::new();
    for dev_dir in sorted_entries(root)? {
        let Some(device) = dev_dir.file_name().and_then(|n| n.to_str()).and_then(|n| Device::from_str(n).ok()) else {
            continue;
        };
        if !dev_dir.is_dir() {
            continue;
        }
        for sample_dir in sorted_entries(&dev_dir)? {
            if sample_dir.is_dir() {
                out.push(load_sample(&sample_dir, device)?);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Dataset(format!("no samples found under {}", root.display())));
    }
    Ok(out)
}

/// Samples of one device, or all when `device` is `None`.
pub fn filter_device(samples: Vec<AnnotatedSample>, device: Option<Device>) -> Vec<AnnotatedSample> {
    match device {
        Some(d) => samples.into_iter().filter(|s| s.device == d).collect(),
        None => samples,
    }
}
