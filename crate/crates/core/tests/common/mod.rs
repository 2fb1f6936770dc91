//! Test-only oracles: central finite differences and brute-force metric
//! enumeration. Nothing here calls into the code paths it checks.
#![allow(dead_code)]

use objsal::Tensor;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps round-off on
/// (near-)zero derivatives from dominating.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &mut dyn FnMut(&Tensor) -> f64, x: &Tensor, i: usize) -> f64 {
    let mut xp = x.clone();
    xp.data_mut()[i] += FD_STEP;
    let mut xm = x.clone();
    xm.data_mut()[i] -= FD_STEP;
    (f(&xp) - f(&xm)) / (2.0 * FD_STEP)
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Confusion counts at cutoff `c` by direct pixel enumeration.
pub fn brute_counts(q: &[u8], truth: &[bool], c: usize) -> (usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for i in 0..q.len() {
        let pred = q[i] as usize > c;
        match (pred, truth[i]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

pub fn brute_f_beta(p: f64, r: f64, b2: f64) -> f64 {
    if p == 0.0 && r == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / (b2 * p + r)
    }
}

pub fn brute_jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
