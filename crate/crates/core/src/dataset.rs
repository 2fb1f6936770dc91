//! Synthetic pixel-labeled corpus: one solid-colored shape per image on a
//! textured background, plus the masked-image construction used to train the
//! masked and dual classifiers.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio;
use crate::mask::BinaryMask;
use crate::rng;
use crate::tensor::Tensor;

pub const MANIFEST_VERSION: &str = "objsal-dataset/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Disk,
    Triangle,
    Bar,
    Square,
    Ring,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] = [
        ShapeKind::Disk,
        ShapeKind::Triangle,
        ShapeKind::Bar,
        ShapeKind::Square,
        ShapeKind::Ring,
        ShapeKind::Cross,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Disk => "disk",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Bar => "bar",
            ShapeKind::Square => "square",
            ShapeKind::Ring => "ring",
            ShapeKind::Cross => "cross",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub classes: usize,
    pub image_size: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    /// Half-width of the per-channel uniform background noise.
    pub noise: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            classes: 3,
            image_size: 64,
            train: 1500,
            test: 500,
            seed: 7,
            noise: 0.3,
        }
    }
}

pub const MIN_IMAGE_SIZE: usize = 16;

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > ShapeKind::ALL.len() {
            return Err(Error::Config(format!(
                "classes must be in 2..={}, got {}",
                ShapeKind::ALL.len(),
                self.classes
            )));
        }
        if self.image_size < MIN_IMAGE_SIZE {
            return Err(Error::Config(format!(
                "image size {} too small to place a shape (minimum {MIN_IMAGE_SIZE})",
                self.image_size
            )));
        }
        if self.train == 0 || self.test == 0 {
            return Err(Error::Config("train and test counts must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} outside [0, 0.5]", self.noise)));
        }
        Ok(())
    }
}

/// Geometry and color of the painted object, enough to re-rasterize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub kind: ShapeKind,
    pub center: (f64, f64),
    pub radius: f64,
    pub angle: f64,
    pub color: [u8; 3],
}

impl ObjectSpec {
    /// Whether the pixel center `(x + 0.5, y + 0.5)` lies inside the shape.
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 + 0.5 - self.center.0;
        let dy = y as f64 + 0.5 - self.center.1;
        let (s, c) = self.angle.sin_cos();
        // rotate into the shape frame
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let r = self.radius;
        match self.kind {
            ShapeKind::Disk => dx * dx + dy * dy <= r * r,
            ShapeKind::Ring => {
                let d2 = dx * dx + dy * dy;
                d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r)
            }
            ShapeKind::Square => u.abs() <= 0.75 * r && v.abs() <= 0.75 * r,
            ShapeKind::Bar => u.abs() <= r && v.abs() <= 0.3 * r,
            ShapeKind::Cross => {
                (u.abs() <= r && v.abs() <= 0.25 * r) || (v.abs() <= r && u.abs() <= 0.25 * r)
            }
            ShapeKind::Triangle => {
                // equilateral, circumradius r
                let verts = [0.0f64, 2.0944, 4.18879].map(|a| {
                    let a = a - std::f64::consts::FRAC_PI_2;
                    (r * a.cos(), r * a.sin())
                });
                let edge = |(ax, ay): (f64, f64), (bx, by): (f64, f64)| {
                    (bx - ax) * (v - ay) - (by - ay) * (u - ax)
                };
                let e0 = edge(verts[0], verts[1]);
                let e1 = edge(verts[1], verts[2]);
                let e2 = edge(verts[2], verts[0]);
                (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
            }
        }
    }

    pub fn raster(&self, size: usize) -> BinaryMask {
        BinaryMask::from_fn(size, size, |x, y| self.contains(x, y))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    /// `(3, H, W)`, values in [0, 1] on the 8-bit grid.
    pub image: Tensor,
    pub label: usize,
    pub mask: BinaryMask,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub classes: Vec<String>,
    pub image_size: usize,
    pub rng_seed: u64,
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {:?}",
                self.version
            )));
        }
        for s in &self.samples {
            if s.label >= self.classes.len() {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    classes: self.classes.len(),
                });
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// An in-memory corpus together with its manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<LabeledSample>,
    pub objects: Vec<ObjectSpec>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Writes images, masks and `manifest.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for sub in ["images", "masks"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for (sample, entry) in self.samples.iter().zip(&self.manifest.samples) {
            imageio::write_rgb(&dir.join(&entry.image), &sample.image)?;
            imageio::write_mask(&dir.join(&entry.mask), &sample.mask)?;
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads a corpus written by [`Dataset::write`]. Object specs are not
    /// stored on disk and come back empty.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let samples = manifest
            .samples
            .iter()
            .map(|e| load_sample(root, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            manifest,
            samples,
            objects: Vec::new(),
        })
    }
}

pub fn load_sample(root: &Path, entry: &ManifestEntry) -> Result<LabeledSample> {
    let image = imageio::read_rgb(&root.join(&entry.image))?;
    let mask = imageio::read_mask(&root.join(&entry.mask))?;
    if (mask.height(), mask.width()) != (image.shape()[1], image.shape()[2]) {
        return Err(Error::DimensionMismatch(
            (image.shape()[1], image.shape()[2]),
            mask.dims(),
        ));
    }
    Ok(LabeledSample {
        id: entry.id.clone(),
        image,
        label: entry.label,
        mask,
        split: entry.split,
    })
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as u32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Clone, Copy)]
enum Texture {
    Noise,
    Stripes { freq: f64, angle: f64, amp: f64 },
    Blotches { fx: f64, fy: f64, phase: f64, amp: f64 },
}

fn render_sample<R: Rng>(
    rng: &mut R,
    cfg: &GenerationConfig,
    kind: ShapeKind,
) -> (Vec<u8>, BinaryMask, ObjectSpec) {
    let size = cfg.image_size;
    let n = size as f64;
    let base: [f64; 3] = [
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.25..0.75),
    ];
    let texture = match rng.gen_range(0..3) {
        0 => Texture::Noise,
        1 => Texture::Stripes {
            freq: rng.gen_range(0.15..0.45),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            amp: rng.gen_range(0.05..0.15),
        },
        _ => Texture::Blotches {
            fx: rng.gen_range(0.05..0.15),
            fy: rng.gen_range(0.05..0.15),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            amp: rng.gen_range(0.05..0.15),
        },
    };

    let color = loop {
        let rgb = hsv_to_rgb(
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.6..1.0),
            rng.gen_range(0.75..1.0),
        );
        let dist: f64 = rgb
            .iter()
            .zip(&base)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist >= 0.4 {
            break rgb.map(quantize);
        }
    };

    let (spec, mask) = loop {
        let radius = rng.gen_range(0.18..0.30) * n;
        let margin = radius + 1.0;
        let spec = ObjectSpec {
            kind,
            center: (rng.gen_range(margin..n - margin), rng.gen_range(margin..n - margin)),
            radius,
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            color,
        };
        let mask = spec.raster(size);
        let count = mask.count();
        if count >= 1 && count < size * size {
            break (spec, mask);
        }
    };

    let mut pixels = vec![0u8; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let (xf, yf) = (x as f64, y as f64);
            let shade = match texture {
                Texture::Noise => 0.0,
                Texture::Stripes { freq, angle, amp } => {
                    amp * (freq * (xf * angle.cos() + yf * angle.sin())).sin()
                }
                Texture::Blotches { fx, fy, phase, amp } => {
                    amp * ((fx * xf + phase).sin() * (fy * yf - phase).cos())
                }
            };
            let mut px = [0u8; 3];
            for c in 0..3 {
                let noise = rng.gen_range(-cfg.noise..=cfg.noise);
                px[c] = quantize(base[c] + shade + noise);
            }
            if mask.get(x, y) {
                px = color;
            } else if px == color {
                // keep the object color unique to object pixels
                px[0] = if px[0] == 0 { 1 } else { px[0] - 1 };
            }
            for c in 0..3 {
                pixels[c * size * size + i] = px[c];
            }
        }
    }
    (pixels, mask, spec)
}

/// Generates a corpus deterministically from `cfg.seed`. Labels are
/// stratified: sample `i` of each split has label `i mod N`.
pub fn generate(cfg: &GenerationConfig) -> Result<Dataset> {
    cfg.validate()?;
    let kinds = &ShapeKind::ALL[..cfg.classes];
    let size = cfg.image_size;
    let mut samples = Vec::with_capacity(cfg.train + cfg.test);
    let mut objects = Vec::with_capacity(cfg.train + cfg.test);
    let mut entries = Vec::with_capacity(cfg.train + cfg.test);
    for (split, count) in [(Split::Train, cfg.train), (Split::Test, cfg.test)] {
        let stream = format!("dataset/{}", split.name());
        for i in 0..count {
            let label = i % cfg.classes;
            let mut r = rng::substream(cfg.seed, &stream, i as u64);
            let (pixels, mask, spec) = render_sample(&mut r, cfg, kinds[label]);
            let image = Tensor::from_vec(
                &[3, size, size],
                pixels.iter().map(|&p| p as f64 / 255.0).collect(),
            )?;
            let id = format!("{}_{:05}", split.name(), i);
            entries.push(ManifestEntry {
                image: PathBuf::from("images").join(format!("{id}.png")),
                mask: PathBuf::from("masks").join(format!("{id}.png")),
                id: id.clone(),
                label,
                split,
            });
            samples.push(LabeledSample {
                id,
                image,
                label,
                mask,
                split,
            });
            objects.push(spec);
        }
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            version: MANIFEST_VERSION.to_string(),
            classes: kinds.iter().map(|k| k.name().to_string()).collect(),
            image_size: size,
            rng_seed: cfg.seed,
            samples: entries,
        },
        samples,
        objects,
    })
}

/// Replaces every object pixel with the mean color of the image's background
/// pixels. Background pixels are left untouched.
pub fn make_masked(image: &Tensor, mask: &BinaryMask) -> Result<Tensor> {
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    if mask.dims() != (h, w) {
        return Err(Error::DimensionMismatch((h, w), mask.dims()));
    }
    let background = mask.values().iter().filter(|&&m| !m).count();
    if background == 0 || background == h * w {
        return Err(Error::Config(format!(
            "degenerate mask with {} object pixels",
            h * w - background
        )));
    }
    let mut out = image.clone();
    let data = out.data_mut();
    for ch in 0..c {
        let plane = &mut data[ch * h * w..(ch + 1) * h * w];
        let mean = plane
            .iter()
            .zip(mask.values())
            .filter(|(_, &m)| !m)
            .map(|(v, _)| *v)
            .sum::<f64>()
            / background as f64;
        for (v, &m) in plane.iter_mut().zip(mask.values()) {
            if m {
                *v = mean;
            }
        }
    }
    Ok(out)
}

impl LabeledSample {
    pub fn masked(&self) -> Result<Tensor> {
        make_masked(&self.image, &self.mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenerationConfig {
        GenerationConfig {
            classes: 3,
            image_size: 32,
            train: 30,
            test: 9,
            seed: 7,
            noise: 0.3,
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small();
        cfg.image_size = 8;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.classes = 1;
        assert!(generate(&cfg).is_err());
        let mut cfg = small();
        cfg.train = 0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn masks_are_nondegenerate() {
        let ds = generate(&small()).unwrap();
        for s in &ds.samples {
            let n = s.mask.count();
            assert!(n >= 1 && n < 32 * 32, "{}: {n}", s.id);
        }
    }

    #[test]
    fn one_pixel_mask_changes_one_pixel() {
        let img = Tensor::from_vec(&[3, 2, 2], (0..12).map(|v| v as f64 / 12.0).collect()).unwrap();
        let mut mask = BinaryMask::empty(2, 2);
        mask.set(1, 0, true);
        let out = make_masked(&img, &mask).unwrap();
        let changed: Vec<usize> = (0..4)
            .filter(|&i| (0..3).any(|c| out.data()[c * 4 + i] != img.data()[c * 4 + i]))
            .collect();
        assert_eq!(changed, vec![1]);
    }

    #[test]
    fn square_on_gray_becomes_gray() {
        let (h, w) = (6, 6);
        let mask = BinaryMask::from_fn(w, h, |x, y| (2..4).contains(&x) && (2..4).contains(&y));
        let mut data = vec![0.5; 3 * h * w];
        for i in 0..h * w {
            if mask.values()[i] {
                data[i] = 1.0;
                data[h * w + i] = 0.0;
                data[2 * h * w + i] = 0.0;
            }
        }
        let img = Tensor::from_vec(&[3, h, w], data).unwrap();
        let out = make_masked(&img, &mask).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn degenerate_mask_rejected() {
        let img = Tensor::zeros(&[3, 2, 2]);
        let full = BinaryMask::from_fn(2, 2, |_, _| true);
        assert!(make_masked(&img, &full).is_err());
    }
}
