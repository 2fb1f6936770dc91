//! Saliency refinement by repeated seeded region growing, proposal
//! generation from the refined map, and Jaccard-based proposal selection.

use std::collections::{HashSet, VecDeque};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::morphology;
use crate::rng;
use crate::saliency::{MapState, SaliencyMap};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Selection threshold as a fraction of the refined map's maximum.
    pub delta: f64,
    /// Seed pool: pixels above this fraction of the saliency maximum.
    pub salient_fraction: f64,
    pub seeds_per_run: usize,
    pub runs: usize,
    pub proposal_budget: usize,
    /// Region growing admits a pixel when its RGB distance to the running
    /// region mean is at most this.
    pub tolerance: f64,
    pub proposal_levels: Vec<f64>,
    /// Also propose the closed-then-opened version of every component.
    pub proposal_morphology: bool,
    pub seed: u64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            delta: 0.5,
            salient_fraction: 0.5,
            seeds_per_run: 50,
            runs: 100,
            proposal_budget: 50,
            tolerance: 0.1,
            proposal_levels: (1..=9).map(|i| i as f64 / 10.0).collect(),
            proposal_morphology: true,
            seed: 7,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v < 1.0;
        if !frac(self.delta) || !frac(self.salient_fraction) {
            return Err(Error::Config(format!(
                "delta {} and salient fraction {} must lie in (0, 1)",
                self.delta, self.salient_fraction
            )));
        }
        if self.seeds_per_run == 0 || self.runs == 0 || self.proposal_budget == 0 {
            return Err(Error::Config("seed, run and proposal counts must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!("tolerance {} must be nonnegative", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Refinement {
    /// Per-pixel fraction of runs that labeled the pixel foreground.
    pub map: SaliencyMap,
    pub salient_points: usize,
}

fn pixel(image: &Tensor, i: usize) -> [f64; 3] {
    let plane = image.shape()[1] * image.shape()[2];
    let d = image.data();
    [d[i], d[plane + i], d[2 * plane + i]]
}

/// Grows one region per seed (seeds already absorbed are skipped) with
/// 4-connectivity; the union of regions is the foreground.
pub fn grow_regions(image: &Tensor, seeds: &[usize], tolerance: f64) -> BinaryMask {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let mut fg = BinaryMask::empty(w, h);
    let tol2 = tolerance * tolerance;
    let mut queue = VecDeque::new();
    for &seed in seeds {
        if fg.values()[seed] {
            continue;
        }
        fg.set(seed % w, seed / w, true);
        let mut sum = pixel(image, seed);
        let mut count = 1.0;
        queue.clear();
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let neighbors = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbors.into_iter().flatten() {
                if fg.values()[j] {
                    continue;
                }
                let p = pixel(image, j);
                let d2: f64 = (0..3).map(|c| (p[c] - sum[c] / count).powi(2)).sum();
                if d2 <= tol2 {
                    fg.set(j % w, j / w, true);
                    for c in 0..3 {
                        sum[c] += p[c];
                    }
                    count += 1.0;
                    queue.push_back(j);
                }
            }
        }
    }
    fg
}

/// Averages `cfg.runs` seeded segmentations of `image`, each seeded with
/// `cfg.seeds_per_run` points drawn from the salient pixels of `map`.
pub fn refine(image: &Tensor, map: &SaliencyMap, cfg: &SegmentationConfig) -> Result<Refinement> {
    cfg.validate()?;
    let (h, w) = (image.shape()[1], image.shape()[2]);
    if map.dims() != (h, w) {
        return Err(Error::DimensionMismatch((h, w), map.dims()));
    }
    let cut = cfg.salient_fraction * map.max();
    let salient: Vec<usize> = map
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > cut && v > 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut counts = vec![0u32; h * w];
    if !salient.is_empty() {
        for run in 0..cfg.runs {
            let mut r = rng::substream(cfg.seed, "refine", run as u64);
            let k = cfg.seeds_per_run.min(salient.len());
            let seeds: Vec<usize> = index::sample(&mut r, salient.len(), k)
                .into_iter()
                .map(|j| salient[j])
                .collect();
            let fg = grow_regions(image, &seeds, cfg.tolerance);
            for (c, &f) in counts.iter_mut().zip(fg.values()) {
                *c += f as u32;
            }
        }
    }
    let runs = cfg.runs as f64;
    let values = counts.iter().map(|&c| c as f64 / runs).collect();
    let mut out = SaliencyMap::new(w, h, values, MapState::Refined)?;
    out.provenance = map.provenance.clone();
    out.degenerate = salient.is_empty();
    Ok(Refinement {
        map: out,
        salient_points: salient.len(),
    })
}

/// `|a ∩ b| / |a ∪ b|`, or 0 when both are empty.
pub fn jaccard(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// 4-connected components of a mask, in order of their first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.values()[start] || seen[start] {
            continue;
        }
        let mut comp = BinaryMask::empty(w, h);
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            comp.set(i % w, i / w, true);
            let (x, y) = (i % w, i / w);
            let neighbors = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbors.into_iter().flatten() {
                if mask.values()[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Candidate object masks: connected components of the refined map at each
/// threshold level (plus their morphologically cleaned versions),
/// deduplicated, largest first, truncated to the budget.
pub fn propose(refined: &SaliencyMap, cfg: &SegmentationConfig) -> Vec<BinaryMask> {
    let (w, h) = (refined.width(), refined.height());
    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    let mut push = |m: BinaryMask| {
        if !m.is_empty() && seen.insert(m.clone()) {
            candidates.push(m);
        }
    };
    for &level in &cfg.proposal_levels {
        let bin = BinaryMask::new(w, h, refined.values().iter().map(|&v| v > level).collect()).unwrap();
        for comp in connected_components(&bin) {
            if cfg.proposal_morphology {
                let cleaned = morphology::open_mask(&morphology::close_mask(&comp, 3), 3);
                push(comp);
                push(cleaned);
            } else {
                push(comp);
            }
        }
    }
    // stable: equal areas keep generation order
    candidates.sort_by_key(|m| std::cmp::Reverse(m.count()));
    candidates.truncate(cfg.proposal_budget);
    candidates
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub jaccard: f64,
    /// Absolute threshold used for the saliency mask.
    pub delta: f64,
    #[serde(skip)]
    pub mask: BinaryMask,
}

/// The saliency mask `refined > delta * max(refined)`.
pub fn saliency_mask(refined: &SaliencyMap, delta_fraction: f64) -> (BinaryMask, f64) {
    let delta = delta_fraction * refined.max();
    let m = BinaryMask::new(
        refined.width(),
        refined.height(),
        refined.values().iter().map(|&v| v > delta).collect(),
    )
    .unwrap();
    (m, delta)
}

/// Picks the proposal with the highest Jaccard index against the thresholded
/// refined map; ties go to the lower index.
pub fn select(refined: &SaliencyMap, proposals: &[BinaryMask], cfg: &SegmentationConfig) -> Result<Selection> {
    if proposals.is_empty() {
        return Err(Error::NoProposals);
    }
    let (m1, delta) = saliency_mask(refined, cfg.delta);
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in proposals.iter().enumerate() {
        let j = jaccard(&m1, p)?;
        if j > best.1 {
            best = (i, j);
        }
    }
    Ok(Selection {
        index: best.0,
        jaccard: best.1,
        delta,
        mask: proposals[best.0].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(w: usize, h: usize, x0: usize, y0: usize, bw: usize, bh: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x0..x0 + bw).contains(&x) && (y0..y0 + bh).contains(&y))
    }

    #[test]
    fn jaccard_examples() {
        let a = block(6, 6, 1, 1, 2, 2);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard(&a, &block(6, 6, 4, 4, 2, 2)).unwrap(), 0.0);
        let shifted = block(6, 6, 2, 1, 2, 2);
        assert!((jaccard(&a, &shifted).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let e = BinaryMask::empty(6, 6);
        assert_eq!(jaccard(&e, &e).unwrap(), 0.0);
        assert!(jaccard(&a, &BinaryMask::empty(5, 6)).is_err());
    }

    #[test]
    fn components_are_separated() {
        let mut m = block(8, 8, 0, 0, 2, 2);
        for (x, y) in [(5, 5), (5, 6), (6, 5)] {
            m.set(x, y, true);
        }
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].count(), 4);
        assert_eq!(comps[1].count(), 3);
    }

    #[test]
    fn select_exact_copy_over_complement() {
        let values: Vec<f64> = block(6, 6, 1, 1, 3, 3).values().iter().map(|&b| b as u8 as f64).collect();
        let refined = SaliencyMap::new(6, 6, values, MapState::Refined).unwrap();
        let (m1, _) = saliency_mask(&refined, 0.5);
        let cfg = SegmentationConfig::default();
        let sel = select(&refined, &[m1.complement(), m1.clone()], &cfg).unwrap();
        assert_eq!(sel.index, 1);
        assert_eq!(sel.jaccard, 1.0);
        let single = select(&refined, &[m1.complement()], &cfg).unwrap();
        assert_eq!(single.index, 0);
        assert!(matches!(select(&refined, &[], &cfg), Err(Error::NoProposals)));
    }

    #[test]
    fn empty_map_gives_no_proposals() {
        let z = SaliencyMap::new(5, 5, vec![0.0; 25], MapState::Refined).unwrap();
        assert!(propose(&z, &SegmentationConfig::default()).is_empty());
    }

    #[test]
    fn region_growing_stays_in_flat_region() {
        let (h, w) = (8, 8);
        let inside = block(w, h, 2, 2, 4, 4);
        let mut data = vec![0.0; 3 * h * w];
        for i in 0..h * w {
            let v = if inside.values()[i] { 0.9 } else if i % 2 == 0 { 0.1 } else { 0.4 };
            for c in 0..3 {
                data[c * h * w + i] = v;
            }
        }
        let img = Tensor::from_vec(&[3, h, w], data).unwrap();
        let fg = grow_regions(&img, &[3 * w + 3], 0.1);
        assert_eq!(fg, inside);
    }
}
