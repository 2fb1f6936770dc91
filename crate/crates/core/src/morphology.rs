//! Grayscale morphology with a square structuring element on row-major
//! `f64` grids. Out-of-image neighbors are ignored, which keeps dilation and
//! erosion an adjoint pair on the bounded domain, so opening and closing stay
//! idempotent at the border.

use crate::mask::BinaryMask;

fn filter(values: &[f64], width: usize, height: usize, size: usize, pick: fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(values.len(), width * height);
    let r = size / 2;
    // separable: rows then columns
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(width - 1);
            tmp[y * width + x] = row[lo + 1..=hi].iter().fold(row[lo], |a, &b| pick(a, b));
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(height - 1);
        for x in 0..width {
            let mut acc = tmp[lo * width + x];
            for yy in lo + 1..=hi {
                acc = pick(acc, tmp[yy * width + x]);
            }
            out[y * width + x] = acc;
        }
    }
    out
}

pub fn dilate(values: &[f64], width: usize, height: usize, size: usize) -> Vec<f64> {
    filter(values, width, height, size, f64::max)
}

pub fn erode(values: &[f64], width: usize, height: usize, size: usize) -> Vec<f64> {
    filter(values, width, height, size, f64::min)
}

/// Dilation followed by erosion.
pub fn close(values: &[f64], width: usize, height: usize, size: usize) -> Vec<f64> {
    erode(&dilate(values, width, height, size), width, height, size)
}

/// Erosion followed by dilation.
pub fn open(values: &[f64], width: usize, height: usize, size: usize) -> Vec<f64> {
    dilate(&erode(values, width, height, size), width, height, size)
}

fn on_mask(mask: &BinaryMask, size: usize, op: fn(&[f64], usize, usize, usize) -> Vec<f64>) -> BinaryMask {
    let v: Vec<f64> = mask.values().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let out = op(&v, mask.width(), mask.height(), size);
    BinaryMask::new(mask.width(), mask.height(), out.iter().map(|&x| x > 0.5).collect()).unwrap()
}

pub fn close_mask(mask: &BinaryMask, size: usize) -> BinaryMask {
    on_mask(mask, size, close)
}

pub fn open_mask(mask: &BinaryMask, size: usize) -> BinaryMask {
    on_mask(mask, size, open)
}
