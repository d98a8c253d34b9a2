//! Directory layout: `images/`, `masks/` and optional `regions/`, paired by
//! file name. Masks are 8-bit with foreground at values >= 128.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use super::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::metrics::Mask;
use crate::tensor::Tensor;

const MASK_THRESHOLD: u8 = 128;

fn png_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            out.insert(stem, path);
        }
    }
    Ok(out)
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let err = |e: &dyn std::fmt::Display| Error::Image { path: path.to_path_buf(), message: e.to_string() };
    image::ImageReader::open(path).map_err(|e| err(&e))?.with_guessed_format().map_err(|e| err(&e))?.decode().map_err(|e| err(&e))
}

/// Reads one PNG as a `[C, H, W]` tensor in `[0, 1]` (C is 1 or 3).
pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale = |v: u8| v as f32 / 255.0;
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let mut data = vec![0.0; 3 * h * w];
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = scale(px.0[c]);
            }
        }
        Tensor::from_vec(&[3, h, w], data)
    } else {
        let data = img.to_luma8().into_raw().into_iter().map(scale).collect();
        Tensor::from_vec(&[1, h, w], data)
    }
}

fn read_mask(path: &Path) -> Result<Mask> {
    let img = decode(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Mask::new(h, w, img.into_raw().into_iter().map(|v| v >= MASK_THRESHOLD).collect())
}

/// Loads a dataset directory; samples are ordered by file name.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("dataset directory {} not found", root.display()),
        )));
    }
    let images = png_files(&root.join("images"))?;
    let masks = png_files(&root.join("masks"))?;
    let regions = png_files(&root.join("regions"))?;
    for (id, path) in &images {
        if !masks.contains_key(id) {
            return Err(Error::Pairing(format!("image {} has no mask in masks/", path.display())));
        }
    }
    for (id, path) in masks.iter().chain(&regions) {
        if !images.contains_key(id) {
            return Err(Error::Pairing(format!("{} has no image in images/", path.display())));
        }
    }
    let mut samples = Vec::with_capacity(images.len());
    for (id, path) in &images {
        let image = load_image(path)?;
        let mask = read_mask(&masks[id])?;
        let region = regions.get(id).map(|p| read_mask(p)).transpose()?;
        let sample = Sample::new(id.clone(), image, mask, region)
            .map_err(|e| Error::Image { path: path.clone(), message: format!("size mismatch within pair: {e}") })?;
        samples.push(sample);
    }
    Dataset::new(samples, Split::Test, root.display().to_string())
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_mask(m: &Mask, path: &Path) -> Result<()> {
    let data = m.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(m.width() as u32, m.height() as u32, data).expect("buffer matches mask");
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_image(t: &Tensor<f32>, path: &Path) -> Result<()> {
    let [c, h, w] = match *t.shape() {
        [c, h, w] => [c, h, w],
        _ => return Err(Error::shape(format!("expected [C, H, W], got {:?}", t.shape()))),
    };
    let d = t.data();
    let res = match c {
        1 => GrayImage::from_raw(w as u32, h as u32, d.iter().map(|&v| to_u8(v)).collect()).expect("buffer matches image").save(path),
        3 => {
            let data = (0..h * w).flat_map(|i| (0..3).map(move |ch| to_u8(d[ch * h * w + i]))).collect();
            RgbImage::from_raw(w as u32, h as u32, data).expect("buffer matches image").save(path)
        }
        _ => return Err(Error::shape(format!("cannot write a {c}-channel image as PNG"))),
    };
    res.map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

/// Writes `ds` in the layout read by [`load_dataset`]. Images are
/// quantised to 8 bits.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root.join("images"))?;
    fs::create_dir_all(root.join("masks"))?;
    if ds.samples.iter().any(|s| s.region.is_some()) {
        fs::create_dir_all(root.join("regions"))?;
    }
    for s in &ds.samples {
        let file = format!("{}.png", s.id);
        write_image(&s.image, &root.join("images").join(&file))?;
        write_mask(&s.mask, &root.join("masks").join(&file))?;
        if let Some(r) = &s.region {
            write_mask(r, &root.join("regions").join(&file))?;
        }
    }
    Ok(())
}
