use objsal::dataset::{generate, make_masked, Dataset, GenerationConfig, Split};
use objsal::{BinaryMask, Tensor};

fn cfg() -> GenerationConfig {
    GenerationConfig {
        classes: 3,
        image_size: 32,
        train: 24,
        test: 9,
        seed: 7,
        ..GenerationConfig::default()
    }
}

fn pixel(img: &Tensor, i: usize) -> [u8; 3] {
    let plane = img.shape()[1] * img.shape()[2];
    [0, 1, 2].map(|c| (img.data()[c * plane + i] * 255.0).round() as u8)
}

#[test]
fn generation_is_deterministic_and_seed_dependent() {
    let a = generate(&cfg()).unwrap();
    let b = generate(&cfg()).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.manifest, b.manifest);
    let c = generate(&GenerationConfig { seed: 8, ..cfg() }).unwrap();
    assert_ne!(a.samples[0].image, c.samples[0].image);
}

#[test]
fn splits_are_stratified() {
    let d = generate(&cfg()).unwrap();
    assert_eq!(d.split(Split::Train).count(), 24);
    assert_eq!(d.split(Split::Test).count(), 9);
    for split in [Split::Train, Split::Test] {
        let mut counts = [0usize; 3];
        d.split(split).for_each(|s| counts[s.label] += 1);
        assert_eq!(counts[0], counts[1]);
        assert_eq!(counts[1], counts[2]);
    }
    assert_eq!(d.manifest.classes, ["disk", "triangle", "bar"]);
}

#[test]
fn mask_is_exactly_the_object_colored_pixels() {
    let d = generate(&cfg()).unwrap();
    for (s, obj) in d.samples.iter().zip(&d.objects) {
        assert_eq!(s.mask, obj.raster(32), "{}", s.id);
        let painted = BinaryMask::from_fn(32, 32, |x, y| pixel(&s.image, y * 32 + x) == obj.color);
        assert_eq!(painted, s.mask, "{}", s.id);
        assert!(!s.mask.is_empty() && !s.mask.complement().is_empty());
        assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn masking_only_touches_object_pixels() {
    let d = generate(&cfg()).unwrap();
    for s in &d.samples {
        let m = s.masked().unwrap();
        let plane = 32 * 32;
        let mut inside_changed = false;
        for c in 0..3 {
            for i in 0..plane {
                let (a, b) = (s.image.data()[c * plane + i], m.data()[c * plane + i]);
                if s.mask.values()[i] {
                    inside_changed |= a != b;
                } else {
                    assert_eq!(a, b);
                }
            }
        }
        assert!(inside_changed);
    }
}

#[test]
fn masked_fill_is_the_background_mean() {
    // 2x2 image, one object pixel
    let img = Tensor::from_vec(&[3, 2, 2], vec![0.1, 0.2, 0.3, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5, 0.5]).unwrap();
    let mask = BinaryMask::new(2, 2, vec![false, false, false, true]).unwrap();
    let m = make_masked(&img, &mask).unwrap();
    assert!((m.data()[3] - 0.2).abs() < 1e-15);
    assert_eq!(m.data()[7], 0.0);
    assert_eq!(m.data()[11], 0.5);
    assert!(make_masked(&img, &BinaryMask::empty(2, 2)).is_err());
    assert!(make_masked(&img, &BinaryMask::empty(2, 2).complement()).is_err());
    assert!(make_masked(&img, &BinaryMask::empty(3, 2)).is_err());
}

#[test]
fn written_corpus_round_trips() {
    let d = generate(&cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = d.write(dir.path()).unwrap();
    let back = Dataset::load(&manifest).unwrap();
    assert_eq!(back.manifest, d.manifest);
    assert_eq!(back.samples, d.samples);
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        GenerationConfig { classes: 0, ..cfg() },
        GenerationConfig { classes: 7, ..cfg() },
        GenerationConfig { image_size: 8, ..cfg() },
        GenerationConfig { train: 0, ..cfg() },
    ] {
        assert!(generate(&bad).is_err(), "{bad:?}");
    }
}
