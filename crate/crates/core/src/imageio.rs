//! PNG conversion between tensors, masks and gray maps.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::tensor::Tensor;

/// `(3, H, W)` tensor in [0, 1] to an 8-bit RGB image (round to nearest).
pub fn tensor_to_rgb(t: &Tensor) -> RgbImage {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let d = t.data();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb([
            to_u8(d[i]),
            to_u8(d[h * w + i]),
            to_u8(d[2 * h * w + i]),
        ])
    })
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * h * w + i] = p[c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data).unwrap()
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_rgb(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    Ok(rgb_to_tensor(&img.to_rgb8()))
}

pub fn write_rgb(path: &Path, t: &Tensor) -> Result<()> {
    tensor_to_rgb(t).save(path).map_err(|e| Error::image(path, e))
}

pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    })
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    mask_to_gray(mask).save(path).map_err(|e| Error::image(path, e))
}

/// Any nonzero gray value counts as foreground.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = read_gray(path)?;
    Ok(BinaryMask::from_fn(
        img.width() as usize,
        img.height() as usize,
        |x, y| img.get_pixel(x as u32, y as u32)[0] > 0,
    ))
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    Ok(img.to_luma8())
}

pub fn write_gray(path: &Path, width: usize, height: usize, values: &[u8]) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, values.to_vec())
        .ok_or_else(|| Error::DimensionMismatch((height, width), (values.len(), 1)))?;
    img.save(path).map_err(|e| Error::image(path, e))
}
