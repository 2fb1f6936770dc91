mod common;

use common::*;
use objsal::network::{Architecture, LabelSpace, Network};
use objsal::saliency::{
    combine, extract, postprocess, run_gd, smooth, CostKind, MapState, ModelChoice, Models, Objective,
    SaliencyConfig, SaliencyMap, StepPolicy,
};
use objsal::segment::{connected_components, grow_regions, jaccard, propose, refine, saliency_mask, select, SegmentationConfig};
use objsal::{BinaryMask, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net(rng: &mut ChaCha8Rng, space: LabelSpace) -> Network {
    let arch = Architecture {
        conv_channels: vec![4, 6],
        hidden: vec![16],
        output_init_scale: 1.0,
        global_pool: false,
    };
    Network::build(rng, [3, 16, 16], &arch, space, vec!["a".into(), "b".into(), "c".into()]).unwrap()
}

#[test]
fn gd_only_darkens_and_respects_the_step_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = net(&mut rng, LabelSpace::Plain(3));
    let x = random_tensor(&mut rng, &[3, 16, 16], 0.0, 1.0);
    let obj = Objective::new(CostKind::F1, 0, LabelSpace::Plain(3)).unwrap();
    let cfg = SaliencyConfig::default();
    let gd = run_gd(&n, &obj, &x, &cfg).unwrap();
    assert_eq!(gd.costs.len(), 15);
    assert_eq!(gd.steps.len(), 15);
    for (a, b) in x.data().iter().zip(gd.final_image.data()) {
        assert!(*b <= *a && (0.0..=1.0).contains(b));
        assert!(a - b <= 15.0 * 0.02 + 1e-12);
    }
    assert!(gd.raw.values().iter().all(|&v| v >= 0.0));
    assert_eq!(gd.raw.state, MapState::Raw);
    // deterministic
    let again = run_gd(&n, &obj, &x, &cfg).unwrap();
    assert_eq!(again.raw, gd.raw);

    let zero = SaliencyConfig { step: StepPolicy::Fixed(0.0), ..cfg.clone() };
    let still = run_gd(&n, &obj, &x, &zero).unwrap();
    assert!(still.raw.is_zero());
    let (pp, _) = postprocess(&still.raw, &zero);
    assert!(pp.degenerate && pp.is_zero());

    let bad = Tensor::filled(&[3, 16, 16], 1.5);
    assert!(run_gd(&n, &obj, &bad, &cfg).is_err());
    let wrong = Objective::new(CostKind::F3, 0, LabelSpace::Dual(3)).unwrap();
    assert!(run_gd(&n, &wrong, &x, &cfg).is_err());
}

#[test]
fn combined_extraction_equals_manual_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let models = Models {
        cnn1: Some(net(&mut rng, LabelSpace::Plain(3))),
        cnn2: Some(net(&mut rng, LabelSpace::Masked(3))),
        cnn3: Some(net(&mut rng, LabelSpace::Dual(3))),
    };
    let x = random_tensor(&mut rng, &[3, 16, 16], 0.0, 1.0);
    let cfg = SaliencyConfig::default();
    let ex = extract(&models, &x, ModelChoice::Cnn23, &cfg).unwrap();
    let label = ex.label;
    let m2 = postprocess(&run_gd(models.cnn2.as_ref().unwrap(), &Objective::new(CostKind::F2, label, LabelSpace::Masked(3)).unwrap(), &x, &cfg).unwrap().raw, &cfg).0;
    let m3 = postprocess(&run_gd(models.cnn3.as_ref().unwrap(), &Objective::new(CostKind::F3, label, LabelSpace::Dual(3)).unwrap(), &x, &cfg).unwrap().raw, &cfg).0;
    let manual = smooth(&combine(&m2, &m3).unwrap(), 3);
    assert_eq!(ex.map.values(), manual.values());
    assert_eq!(ex.map.provenance, ["cnn2", "cnn3"]);
    assert_eq!(ex.map.state, MapState::Smoothed);
    assert_eq!(ex.runs.len(), 2);

    let partial = Models { cnn1: models.cnn1.clone(), cnn2: None, cnn3: None };
    assert!(extract(&partial, &x, ModelChoice::Cnn2, &cfg).is_err());
    assert!(extract(&partial, &x, ModelChoice::Cnn1, &cfg).is_ok());
}

/// Noisy background with a flat square at (8..16, 8..16) on a 24x24 grid.
fn square_scene(rng: &mut ChaCha8Rng) -> (Tensor, BinaryMask) {
    let mask = BinaryMask::from_fn(24, 24, |x, y| (8..16).contains(&x) && (8..16).contains(&y));
    let mut data = vec![0.0; 3 * 576];
    for c in 0..3 {
        for i in 0..576 {
            data[c * 576 + i] = if mask.values()[i] { [0.9, 0.1, 0.2][c] } else { rng.gen_range(0.3..0.7) };
        }
    }
    (Tensor::from_vec(&[3, 24, 24], data).unwrap(), mask)
}

#[test]
fn refinement_recovers_a_flat_object() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (img, truth) = square_scene(&mut rng);
    // a blurry blob that overlaps the square
    let map = SaliencyMap::new(
        24,
        24,
        (0..576)
            .map(|i| {
                let (x, y) = ((i % 24) as f64 - 11.0, (i / 24) as f64 - 12.0);
                (-(x * x + y * y) / 18.0).exp()
            })
            .collect(),
        MapState::Smoothed,
    )
    .unwrap();
    let cfg = SegmentationConfig { runs: 10, ..SegmentationConfig::default() };
    let r = refine(&img, &map, &cfg).unwrap();
    assert!(!r.map.degenerate && r.salient_points > 0);
    for i in 0..576 {
        let expect = if truth.values()[i] { 1.0 } else { 0.0 };
        assert!((r.map.values()[i] - expect).abs() < 0.5, "pixel {i}");
    }
    let props = propose(&r.map, &cfg);
    assert!(!props.is_empty() && props.len() <= 50);
    let sel = select(&r.map, &props, &cfg).unwrap();
    assert_eq!(sel.mask, truth);
    assert_eq!(sel.jaccard, 1.0);
    assert_eq!(refine(&img, &map, &cfg).unwrap().map, r.map);
}

#[test]
fn single_run_refinement_is_binary_and_empty_maps_are_degenerate() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let (img, _) = square_scene(&mut rng);
    let map = SaliencyMap::new(24, 24, (0..576).map(|_| rng.gen::<f64>()).collect(), MapState::Smoothed).unwrap();
    let cfg = SegmentationConfig { runs: 1, ..SegmentationConfig::default() };
    let r = refine(&img, &map, &cfg).unwrap();
    assert!(r.map.values().iter().all(|&v| v == 0.0 || v == 1.0));

    let zero = SaliencyMap::new(24, 24, vec![0.0; 576], MapState::Smoothed).unwrap();
    let r0 = refine(&img, &zero, &cfg).unwrap();
    assert!(r0.map.degenerate && r0.map.is_zero() && r0.salient_points == 0);
    assert!(propose(&r0.map, &cfg).is_empty());
    assert!(select(&r0.map, &[], &cfg).is_err());
}

#[test]
fn region_growing_respects_tolerance_and_connectivity() {
    // two flat squares of the same color separated by a dark gap
    let mut data = vec![0.0; 3 * 100];
    for c in 0..3 {
        for y in 0..10 {
            for x in 0..10 {
                if (x < 4 || x > 5) && (2..8).contains(&y) {
                    data[c * 100 + y * 10 + x] = 0.8;
                }
            }
        }
    }
    let img = Tensor::from_vec(&[3, 10, 10], data).unwrap();
    let fg = grow_regions(&img, &[2 * 10 + 1], 0.1);
    assert_eq!(fg, BinaryMask::from_fn(10, 10, |x, y| x < 4 && (2..8).contains(&y)));
    let all = grow_regions(&img, &[0], 2.0);
    assert_eq!(all.count(), 100);
}

#[test]
fn selection_matches_a_brute_force_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let cfg = SegmentationConfig::default();
    for _ in 0..300 {
        let values: Vec<f64> = (0..36).map(|_| (rng.gen_range(0..5) as f64) / 4.0).collect();
        let refined = SaliencyMap::new(6, 6, values.clone(), MapState::Refined).unwrap();
        let props: Vec<BinaryMask> = (0..rng.gen_range(1..6))
            .map(|_| BinaryMask::new(6, 6, (0..36).map(|_| rng.gen_bool(0.4)).collect()).unwrap())
            .collect();
        let max = values.iter().cloned().fold(0.0, f64::max);
        let m1: Vec<bool> = values.iter().map(|&v| v > 0.5 * max).collect();
        let mut best = (0, -1.0);
        for (i, p) in props.iter().enumerate() {
            let j = brute_jaccard(&m1, p.values());
            if j > best.1 {
                best = (i, j);
            }
        }
        let sel = select(&refined, &props, &cfg).unwrap();
        assert_eq!(sel.index, best.0);
        assert!((sel.jaccard - best.1).abs() <= 1e-12);
        assert_eq!(saliency_mask(&refined, 0.5).0.values(), m1.as_slice());
        assert_eq!(jaccard(&sel.mask, &props[best.0]).unwrap(), if props[best.0].is_empty() { 0.0 } else { 1.0 });
    }
}

#[test]
fn proposals_are_unique_components_sorted_by_area() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..50 {
        let values: Vec<f64> = (0..144).map(|_| rng.gen::<f64>()).collect();
        let refined = SaliencyMap::new(12, 12, values, MapState::Refined).unwrap();
        let cfg = SegmentationConfig::default();
        let props = propose(&refined, &cfg);
        assert!(props.len() <= cfg.proposal_budget);
        for w in props.windows(2) {
            assert!(w[0].count() >= w[1].count());
        }
        for (i, p) in props.iter().enumerate() {
            assert!(!p.is_empty());
            assert!(props[i + 1..].iter().all(|q| q != p));
        }
    }
    let two = BinaryMask::from_fn(7, 3, |x, _| x < 2 || x > 4);
    let comps = connected_components(&two);
    assert_eq!(comps.len(), 2);
    assert_eq!(comps[0].count() + comps[1].count(), two.count());
    let diag = BinaryMask::new(2, 2, vec![true, false, false, true]).unwrap();
    assert_eq!(connected_components(&diag).len(), 2);
}
