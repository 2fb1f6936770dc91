//! The fixed layer zoo: convolution, max-pooling, ReLU, flatten, affine and
//! softmax, each with a forward pass that returns a cache and a backward pass
//! that consumes it.
//!
//! All layers operate on a single sample. Image tensors are `(C, H, W)`;
//! affine and softmax layers take 1-D vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `(out_channels, in_channels, kernel, kernel)`
    pub weight: Tensor,
    /// `(out_channels)`
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPool2d {
    pub size: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub fan_in: usize,
    pub fan_out: usize,
    /// `(fan_out, fan_in)`
    pub weight: Tensor,
    /// `(fan_out)`
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    Relu,
    Flatten,
    Affine(Affine),
    Softmax,
}

/// What a forward pass leaves behind for the matching backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache {
    Conv2d { input: Tensor },
    MaxPool2d { input_shape: Vec<usize>, argmax: Vec<usize> },
    Relu { input: Tensor },
    Flatten { input_shape: Vec<usize> },
    Affine { input: Tensor },
    Softmax { output: Tensor },
}

fn he_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("shape and data agree")
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: he_uniform(rng, &[out_channels, in_channels, kernel, kernel], fan_in),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    fn out_dim(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding;
        if padded < self.kernel || self.stride == 0 {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// Output positions `o` (half-open range) for which `o*stride + k - padding` lands in `[0, n)`.
    fn valid_range(&self, k: usize, n: usize, out: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = k as isize - self.padding as isize;
        // o*s + off >= 0  and  o*s + off <= n-1
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi_incl = (n as isize - 1 - off).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, out as isize);
        (lo.min(out as isize) as usize, hi.max(lo.min(out as isize)) as usize)
    }

    fn forward(&self, input: &Tensor) -> Tensor {
        let (c, h, w) = dims3(input.shape());
        let oh = self.out_dim(h).unwrap();
        let ow = self.out_dim(w).unwrap();
        let k = self.kernel;
        let s = self.stride;
        let p = self.padding;
        let x = input.data();
        let wt = self.weight.data();
        let mut out = vec![0.0; self.out_channels * oh * ow];
        for oc in 0..self.out_channels {
            let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = self.bias.data()[oc]);
            for ic in 0..c {
                let xin = &x[ic * h * w..(ic + 1) * h * w];
                for ky in 0..k {
                    let (oy0, oy1) = self.valid_range(ky, h, oh);
                    for kx in 0..k {
                        let wv = wt[((oc * c + ic) * k + ky) * k + kx];
                        let (ox0, ox1) = self.valid_range(kx, w, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let orow = &mut plane[oy * ow + ox0..oy * ow + ox1];
                            let irow = &xin[iy * w..(iy + 1) * w];
                            if s == 1 {
                                let src = &irow[ox0 + kx - p..ox1 + kx - p];
                                for (o, i) in orow.iter_mut().zip(src) {
                                    *o += wv * i;
                                }
                            } else {
                                for (j, o) in orow.iter_mut().enumerate() {
                                    *o += wv * irow[(ox0 + j) * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[self.out_channels, oh, ow], out).unwrap()
    }

    fn backward(
        &self,
        input: &Tensor,
        upstream: &Tensor,
        mut param_grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Tensor {
        let (c, h, w) = dims3(input.shape());
        let (_, oh, ow) = dims3(upstream.shape());
        let k = self.kernel;
        let s = self.stride;
        let p = self.padding;
        let x = input.data();
        let g = upstream.data();
        let wt = self.weight.data();
        let mut dx = vec![0.0; c * h * w];
        for oc in 0..self.out_channels {
            let gplane = &g[oc * oh * ow..(oc + 1) * oh * ow];
            if let Some((_, db)) = param_grads.as_mut() {
                db[oc] += gplane.iter().sum::<f64>();
            }
            for ic in 0..c {
                let xin = &x[ic * h * w..(ic + 1) * h * w];
                let dxin = &mut dx[ic * h * w..(ic + 1) * h * w];
                for ky in 0..k {
                    let (oy0, oy1) = self.valid_range(ky, h, oh);
                    for kx in 0..k {
                        let widx = ((oc * c + ic) * k + ky) * k + kx;
                        let wv = wt[widx];
                        let (ox0, ox1) = self.valid_range(kx, w, ow);
                        let mut acc = 0.0;
                        let want_dw = param_grads.is_some();
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let grow = &gplane[oy * ow + ox0..oy * ow + ox1];
                            let irow = &xin[iy * w..(iy + 1) * w];
                            let drow = &mut dxin[iy * w..(iy + 1) * w];
                            if s == 1 {
                                let (a, b) = (ox0 + kx - p, ox1 + kx - p);
                                for (d, g) in drow[a..b].iter_mut().zip(grow) {
                                    *d += wv * g;
                                }
                                if want_dw {
                                    acc += irow[a..b].iter().zip(grow).map(|(i, g)| i * g).sum::<f64>();
                                }
                            } else {
                                for (j, g) in grow.iter().enumerate() {
                                    let ix = (ox0 + j) * s + kx - p;
                                    drow[ix] += wv * g;
                                    acc += irow[ix] * g;
                                }
                            }
                        }
                        if let Some((dw, _)) = param_grads.as_mut() {
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[c, h, w], dx).unwrap()
    }
}

impl MaxPool2d {
    fn out_dim(&self, n: usize) -> Option<usize> {
        if n < self.size || self.stride == 0 || self.size == 0 {
            return None;
        }
        Some((n - self.size) / self.stride + 1)
    }

    fn forward(&self, input: &Tensor) -> (Tensor, Vec<usize>) {
        let (c, h, w) = dims3(input.shape());
        let oh = self.out_dim(h).unwrap();
        let ow = self.out_dim(w).unwrap();
        let x = input.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut arg = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = usize::MAX;
                    let mut best = f64::NEG_INFINITY;
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let idx = (ch * h + oy * self.stride + dy) * w + ox * self.stride + dx;
                            // strict comparison: ties keep the first row-major index
                            if best_idx == usize::MAX || x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx);
                }
            }
        }
        (Tensor::from_vec(&[c, oh, ow], out).unwrap(), arg)
    }
}

impl Affine {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        Affine {
            fan_in,
            fan_out,
            weight: he_uniform(rng, &[fan_out, fan_in], fan_in),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    fn forward(&self, input: &Tensor) -> Tensor {
        let x = input.data();
        let w = self.weight.data();
        let b = self.bias.data();
        let out = (0..self.fan_out)
            .map(|o| {
                let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
                b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Tensor::from_vec(&[self.fan_out], out).unwrap()
    }

    fn backward(
        &self,
        input: &Tensor,
        upstream: &Tensor,
        param_grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Tensor {
        let x = input.data();
        let g = upstream.data();
        let w = self.weight.data();
        let mut dx = vec![0.0; self.fan_in];
        for (o, &go) in g.iter().enumerate() {
            let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
            for (d, &wv) in dx.iter_mut().zip(row) {
                *d += wv * go;
            }
        }
        if let Some((dw, db)) = param_grads {
            for (o, &go) in g.iter().enumerate() {
                db[o] += go;
                let drow = &mut dw[o * self.fan_in..(o + 1) * self.fan_in];
                for (d, &xv) in drow.iter_mut().zip(x) {
                    *d += go * xv;
                }
            }
        }
        Tensor::from_vec(input.shape(), dx).unwrap()
    }
}

/// Max-subtracted softmax. Fails only on an empty vector.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = logits
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or(Error::Empty("softmax"))?;
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

fn dims3(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2])
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Affine(_) => "affine",
            Layer::Softmax => "softmax",
        }
    }

    fn mismatch(&self, expected: Vec<usize>, actual: &[usize]) -> Error {
        Error::ShapeMismatch {
            layer: self.name().to_string(),
            expected,
            actual: actual.to_vec(),
        }
    }

    /// Output shape for a given input shape, or a shape-mismatch error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(conv) => {
                if input.len() != 3 || input[0] != conv.in_channels {
                    return Err(self.mismatch(vec![conv.in_channels, 0, 0], input));
                }
                match (conv.out_dim(input[1]), conv.out_dim(input[2])) {
                    (Some(oh), Some(ow)) => Ok(vec![conv.out_channels, oh, ow]),
                    _ => Err(self.mismatch(vec![conv.in_channels, conv.kernel, conv.kernel], input)),
                }
            }
            Layer::MaxPool2d(pool) => {
                if input.len() != 3 {
                    return Err(self.mismatch(vec![0, pool.size, pool.size], input));
                }
                match (pool.out_dim(input[1]), pool.out_dim(input[2])) {
                    (Some(oh), Some(ow)) => Ok(vec![input[0], oh, ow]),
                    _ => Err(self.mismatch(vec![input[0], pool.size, pool.size], input)),
                }
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Affine(aff) => {
                if input.len() != 1 || input[0] != aff.fan_in {
                    return Err(self.mismatch(vec![aff.fan_in], input));
                }
                Ok(vec![aff.fan_out])
            }
            Layer::Softmax => {
                if input.len() != 1 || input[0] == 0 {
                    return Err(self.mismatch(vec![0], input));
                }
                Ok(input.to_vec())
            }
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, LayerCache)> {
        self.output_shape(input.shape())?;
        Ok(match self {
            Layer::Conv2d(conv) => (
                conv.forward(input),
                LayerCache::Conv2d {
                    input: input.clone(),
                },
            ),
            Layer::MaxPool2d(pool) => {
                let (out, argmax) = pool.forward(input);
                (
                    out,
                    LayerCache::MaxPool2d {
                        input_shape: input.shape().to_vec(),
                        argmax,
                    },
                )
            }
            Layer::Relu => {
                let out = input.data().iter().map(|&v| v.max(0.0)).collect();
                (
                    Tensor::from_vec(input.shape(), out)?,
                    LayerCache::Relu {
                        input: input.clone(),
                    },
                )
            }
            Layer::Flatten => (
                input.clone().reshape(&[input.len()])?,
                LayerCache::Flatten {
                    input_shape: input.shape().to_vec(),
                },
            ),
            Layer::Affine(aff) => (
                aff.forward(input),
                LayerCache::Affine {
                    input: input.clone(),
                },
            ),
            Layer::Softmax => {
                let out = Tensor::vector(&softmax(input.data())?);
                (
                    out.clone(),
                    LayerCache::Softmax { output: out },
                )
            }
        })
    }

    /// Gradient with respect to the layer input, leaving parameters untouched.
    pub fn backward_input(&self, cache: &LayerCache, upstream: &Tensor) -> Result<Tensor> {
        self.backward_impl(cache, upstream, None)
    }

    /// Gradient with respect to the layer input; parameter gradients are
    /// accumulated into the parameters' grad slots.
    pub fn backward(&mut self, cache: &LayerCache, upstream: &Tensor) -> Result<Tensor> {
        let (weight, bias) = match self {
            Layer::Conv2d(c) => (c.weight.take_grad(), c.bias.take_grad()),
            Layer::Affine(a) => (a.weight.take_grad(), a.bias.take_grad()),
            _ => return self.backward_impl(cache, upstream, None),
        };
        let (mut dw, mut db) = (weight, bias);
        let out = self.backward_impl(cache, upstream, Some((&mut dw, &mut db)));
        match self {
            Layer::Conv2d(c) => {
                c.weight.set_grad(dw);
                c.bias.set_grad(db);
            }
            Layer::Affine(a) => {
                a.weight.set_grad(dw);
                a.bias.set_grad(db);
            }
            _ => unreachable!(),
        }
        out
    }

    fn check_conv_cache<'c>(&self, cache: &'c LayerCache, upstream: &Tensor) -> Result<&'c Tensor> {
        match cache {
            LayerCache::Conv2d { input } => {
                let expected = self.output_shape(input.shape())?;
                if upstream.shape() != expected.as_slice() {
                    return Err(self.mismatch(expected, upstream.shape()));
                }
                Ok(input)
            }
            _ => Err(Error::BackwardBeforeForward(self.name().into())),
        }
    }

    fn backward_impl(
        &self,
        cache: &LayerCache,
        upstream: &Tensor,
        param_grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Result<Tensor> {
        let not_run = || Error::BackwardBeforeForward(self.name().into());
        let expect = |shape: Vec<usize>| -> Result<()> {
            if upstream.shape() != shape.as_slice() {
                Err(self.mismatch(shape, upstream.shape()))
            } else {
                Ok(())
            }
        };
        match (self, cache) {
            (Layer::Conv2d(conv), LayerCache::Conv2d { .. }) => {
                let input = self.check_conv_cache(cache, upstream)?;
                Ok(conv.backward(input, upstream, param_grads))
            }
            (Layer::MaxPool2d(pool), LayerCache::MaxPool2d { input_shape, argmax }) => {
                expect(self.output_shape(input_shape)?)?;
                let _ = pool;
                let mut dx = Tensor::zeros(input_shape);
                let d = dx.data_mut();
                for (&idx, &g) in argmax.iter().zip(upstream.data()) {
                    d[idx] += g;
                }
                Ok(dx)
            }
            (Layer::Relu, LayerCache::Relu { input }) => {
                expect(input.shape().to_vec())?;
                let dx = input
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                Tensor::from_vec(input.shape(), dx)
            }
            (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
                expect(vec![input_shape.iter().product()])?;
                upstream.clone().reshape(input_shape)
            }
            (Layer::Affine(aff), LayerCache::Affine { input }) => {
                expect(vec![aff.fan_out])?;
                Ok(aff.backward(input, upstream, param_grads))
            }
            (Layer::Softmax, LayerCache::Softmax { output }) => {
                expect(output.shape().to_vec())?;
                let y = output.data();
                let g = upstream.data();
                let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                let dz = y.iter().zip(g).map(|(&yi, &gi)| yi * (gi - dot)).collect();
                Tensor::from_vec(output.shape(), dz)
            }
            _ => Err(not_run()),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Affine(a) => vec![&a.weight, &a.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Affine(a) => vec![&mut a.weight, &mut a.bias],
            _ => Vec::new(),
        }
    }
}

