mod common;

use common::*;
use objsal::layers::{Affine, Conv2d, Layer, MaxPool2d};
use objsal::network::{Architecture, InferenceContext, LabelSpace, Network};
use objsal::saliency::{compute_input_gradient, CostKind, Objective};
use objsal::{softmax, Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 20;

/// Scalar probe `sum(r * layer(x))` with fixed random weights `r`.
fn probe(layer: &Layer, x: &Tensor, r: &[f64]) -> f64 {
    let (out, _) = layer.forward(x).unwrap();
    out.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn check_layer(mut layer: Layer, input_shape: &[usize], rng: &mut ChaCha8Rng) {
    let x = random_tensor(rng, input_shape, -1.0, 1.0);
    let (out, cache) = layer.forward(&x).unwrap();
    let r: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let upstream = Tensor::from_vec(out.shape(), r.clone()).unwrap();
    let dx = layer.backward(&cache, &upstream).unwrap();
    assert_eq!(dx.shape(), x.shape());

    let frozen = layer.clone();
    let mut f = |t: &Tensor| probe(&frozen, t, &r);
    for i in 0..x.len() {
        let num = central_diff(&mut f, &x, i);
        let e = rel_err(dx.data()[i], num);
        assert!(e <= FD_REL_TOL, "{} input grad [{i}]: analytic {} numeric {num} rel {e}", layer.name(), dx.data()[i]);
    }

    // parameter gradients
    let grads: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad().unwrap().to_vec()).collect();
    for (pi, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let eval = |delta: f64| {
                let mut l = frozen.clone();
                l.params_mut()[pi].data_mut()[k] += delta;
                probe(&l, &x, &r)
            };
            let num = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            let e = rel_err(g[k], num);
            assert!(e <= FD_REL_TOL, "{} param {pi}[{k}]: analytic {} numeric {num}", layer.name(), g[k]);
        }
    }
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..INSTANCES {
        let (stride, padding) = [(1, 1), (1, 0), (2, 1), (2, 0)][i % 4];
        let conv = Conv2d::new(&mut rng, 2, 3, 3, stride, padding);
        check_layer(Layer::Conv2d(conv), &[2, 8, 8], &mut rng);
    }
}

#[test]
fn maxpool_relu_flatten_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..INSTANCES {
        check_layer(Layer::MaxPool2d(MaxPool2d { size: 2, stride: 2 }), &[2, 8, 8], &mut rng);
        check_layer(Layer::Relu, &[2, 8, 8], &mut rng);
        check_layer(Layer::Flatten, &[2, 8, 8], &mut rng);
    }
}

#[test]
fn affine_and_softmax_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..INSTANCES {
        let aff = Affine::new(&mut rng, 64, 10);
        check_layer(Layer::Affine(aff), &[64], &mut rng);
        check_layer(Layer::Softmax, &[7], &mut rng);
    }
}

#[test]
fn layer_examples() {
    let (out, cache) = Layer::Relu.forward(&Tensor::vector(&[-1.0, 0.0, 2.0])).unwrap();
    assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
    let (_, cache2) = Layer::Relu.forward(&Tensor::vector(&[-1.0, 2.0])).unwrap();
    let g = Layer::Relu.backward_input(&cache2, &Tensor::vector(&[5.0, 5.0])).unwrap();
    assert_eq!(g.data(), &[0.0, 5.0]);
    let _ = cache;

    let pool = Layer::MaxPool2d(MaxPool2d { size: 2, stride: 2 });
    let block = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(pool.forward(&block).unwrap().0.data(), &[4.0]);

    // ties route to the first row-major index
    let tie = Tensor::from_vec(&[1, 2, 2], vec![1.0, 3.0, 3.0, 0.0]).unwrap();
    let (_, c) = pool.forward(&tie).unwrap();
    let g = pool.backward_input(&c, &Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap()).unwrap();
    assert_eq!(g.data(), &[0.0, 1.0, 0.0, 0.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut conv = Conv2d::new(&mut rng, 1, 1, 1, 1, 0);
    conv.weight.data_mut()[0] = 1.0;
    let img = random_tensor(&mut rng, &[1, 5, 6], 0.0, 1.0);
    assert_eq!(Layer::Conv2d(conv).forward(&img).unwrap().0, img);
}

#[test]
fn affine_input_gradient_is_transpose_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let aff = Affine::new(&mut rng, 4, 3);
    let w = aff.weight.data().to_vec();
    let layer = Layer::Affine(aff);
    let (_, cache) = layer.forward(&random_tensor(&mut rng, &[4], -1.0, 1.0)).unwrap();
    let up = [0.5, -1.0, 2.0];
    let g = layer.backward_input(&cache, &Tensor::vector(&up)).unwrap();
    for j in 0..4 {
        let expect: f64 = (0..3).map(|o| w[o * 4 + j] * up[o]).sum();
        assert!((g.data()[j] - expect).abs() < 1e-15);
    }
}

#[test]
fn layer_errors() {
    let pool = Layer::MaxPool2d(MaxPool2d { size: 2, stride: 2 });
    let err = pool.forward(&Tensor::zeros(&[1, 1, 1])).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch { .. }));
    assert!(err.to_string().contains("maxpool2d"));

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let aff = Layer::Affine(Affine::new(&mut rng, 4, 2));
    assert!(aff.forward(&Tensor::zeros(&[5])).is_err());
    // a cache from a different layer kind means this layer never ran forward
    let (_, relu_cache) = Layer::Relu.forward(&Tensor::zeros(&[4])).unwrap();
    assert!(matches!(
        aff.backward_input(&relu_cache, &Tensor::zeros(&[2])),
        Err(Error::BackwardBeforeForward(_))
    ));
    let (_, cache) = aff.forward(&Tensor::zeros(&[4])).unwrap();
    assert!(aff.backward_input(&cache, &Tensor::zeros(&[3])).is_err());
}

#[test]
fn softmax_examples_and_properties() {
    let y = softmax(&[0.0, 0.0, 0.0]).unwrap();
    assert!(y.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    let y = softmax(&[1000.0, 0.0]).unwrap();
    assert!(y.iter().all(|v| v.is_finite()));
    assert!((y[0] - 1.0).abs() < 1e-15 && y[1] < 1e-300);
    assert!(softmax(&[]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.gen_range(1..12);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let y = softmax(&z).unwrap();
        assert!(y.iter().all(|&v| v >= 0.0));
        assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

fn toy_net(rng: &mut ChaCha8Rng, space: LabelSpace) -> Network {
    let arch = Architecture {
        conv_channels: vec![4, 6],
        hidden: vec![16],
        output_init_scale: 1.0,
        global_pool: false,
    };
    let names = (0..space.classes()).map(|i| format!("c{i}")).collect();
    Network::build(rng, [3, 16, 16], &arch, space, names).unwrap()
}

#[test]
fn stacked_input_gradient_equals_chained_layer_backward_and_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = toy_net(&mut rng, LabelSpace::Plain(3));
    let x = random_tensor(&mut rng, &[3, 16, 16], 0.0, 1.0);
    let r = [0.3, -1.2, 0.7];
    let pass = net.forward(&x).unwrap();
    let g = net.input_gradient(&pass, &Tensor::vector(&r)).unwrap();

    // chain by hand
    let mut acts = vec![x.clone()];
    let mut caches = Vec::new();
    let n = net.layers().len() - 1;
    for layer in &net.layers()[..n] {
        let (out, cache) = layer.forward(acts.last().unwrap()).unwrap();
        acts.push(out);
        caches.push(cache);
    }
    let mut chained = Tensor::vector(&r);
    for (layer, cache) in net.layers()[..n].iter().zip(&caches).rev() {
        chained = layer.backward_input(cache, &chained).unwrap();
    }
    assert_eq!(chained, g);

    let mut f = |t: &Tensor| {
        let p = net.forward(t).unwrap();
        p.logits.data().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
    };
    for _ in 0..50 {
        let i = rng.gen_range(0..x.len());
        let num = central_diff(&mut f, &x, i);
        assert!(rel_err(g.data()[i], num) <= FD_REL_TOL, "pixel {i}: {} vs {num}", g.data()[i]);
    }
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = toy_net(&mut rng, LabelSpace::Dual(3));
    let x = random_tensor(&mut rng, &[3, 16, 16], 0.0, 1.0);
    let a = net.forward(&x).unwrap();
    let b = net.forward(&x).unwrap();
    assert_eq!(a.probs, b.probs);
    assert_eq!(a.logits, b.logits);
}

#[test]
fn inject_output_error_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let net = toy_net(&mut rng, LabelSpace::Plain(3));
    let x = random_tensor(&mut rng, &[3, 16, 16], 0.0, 1.0);
    let mut ctx = InferenceContext::new(&net);
    assert!(matches!(ctx.inject_output_error(&Tensor::zeros(&[3])), Err(Error::NoForwardPass)));
    ctx.forward(&x).unwrap();
    let zero = ctx.inject_output_error(&Tensor::zeros(&[3])).unwrap();
    assert!(zero.data().iter().all(|&v| v == 0.0));
    let e = Tensor::vector(&[0.25, -0.5, 1.0]);
    let g1 = ctx.inject_output_error(&e).unwrap();
    let g4 = ctx.inject_output_error(&e.scale(4.0)).unwrap();
    for (a, b) in g1.data().iter().zip(g4.data()) {
        assert_eq!(4.0 * a, *b);
    }
    assert!(ctx.inject_output_error(&Tensor::zeros(&[4])).is_err());
}

#[test]
fn cost_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (kind, space) in [
        (CostKind::F1, LabelSpace::Plain(3)),
        (CostKind::F2, LabelSpace::Masked(3)),
        (CostKind::F3, LabelSpace::Dual(3)),
    ] {
        let net = toy_net(&mut rng, space);
        let x = random_tensor(&mut rng, &[3, 16, 16], 0.0, 1.0);
        let obj = Objective::new(kind, 1, space).unwrap();
        let (g, _) = compute_input_gradient(&net, &obj, &x).unwrap();
        let mut f = |t: &Tensor| obj.cost(&net.predict(t).unwrap()).unwrap();
        for _ in 0..50 {
            let i = rng.gen_range(0..x.len());
            let num = central_diff(&mut f, &x, i);
            let e = rel_err(g.data()[i], num);
            assert!(e <= FD_REL_TOL, "{kind:?} pixel {i}: {} vs {num} ({e})", g.data()[i]);
        }
    }
}
