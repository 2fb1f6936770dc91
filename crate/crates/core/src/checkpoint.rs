//! Versioned little-endian binary checkpoints.
//!
//! Layout: magic, version, label-space tag, class names, input shape, layer
//! descriptors, then raw `f64` parameter blobs, followed by a CRC-32 of all
//! preceding bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{Affine, Conv2d, Layer, MaxPool2d};
use crate::network::{LabelSpace, Network};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"OBJSALCK";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensor(&mut self, t: &Tensor) {
        self.0.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t.data() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid utf-8 in class name".into()))
    }
    fn tensor_into(&mut self, t: &mut Tensor) -> Result<()> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize;
        if n != t.len() {
            return Err(Error::Format(format!("parameter blob of {n} values, expected {}", t.len())));
        }
        let bytes = self.take(8 * n)?;
        for (v, chunk) in t.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(())
    }
}

pub fn encode(net: &Network) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    let ls = net.label_space();
    w.u8(ls.tag());
    w.u32(ls.classes());
    for name in net.class_names() {
        w.str(name);
    }
    w.u32(net.input_shape().len());
    for &d in net.input_shape() {
        w.u32(d);
    }
    w.u32(net.layers().len());
    for layer in net.layers() {
        match layer {
            Layer::Conv2d(c) => {
                w.u8(1);
                for v in [c.in_channels, c.out_channels, c.kernel, c.stride, c.padding] {
                    w.u32(v);
                }
            }
            Layer::MaxPool2d(p) => {
                w.u8(2);
                w.u32(p.size);
                w.u32(p.stride);
            }
            Layer::Relu => w.u8(3),
            Layer::Flatten => w.u8(4),
            Layer::Affine(a) => {
                w.u8(5);
                w.u32(a.fan_in);
                w.u32(a.fan_out);
            }
            Layer::Softmax => w.u8(6),
        }
    }
    for layer in net.layers() {
        for p in layer.params() {
            w.tensor(p);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    let mut r = Reader { buf: bytes, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    r.buf = body;

    let tag = r.u8()?;
    let classes = r.u32()?;
    let label_space = LabelSpace::from_tag(tag, classes)
        .ok_or_else(|| Error::Format(format!("unknown label space tag {tag}")))?;
    let class_names = (0..classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let rank = r.u32()?;
    let input_shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let n_layers = r.u32()?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layers.push(match r.u8()? {
            1 => {
                let (ic, oc, k, s, p) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
                Layer::Conv2d(Conv2d {
                    in_channels: ic,
                    out_channels: oc,
                    kernel: k,
                    stride: s,
                    padding: p,
                    weight: Tensor::zeros(&[oc, ic, k, k]),
                    bias: Tensor::zeros(&[oc]),
                })
            }
            2 => Layer::MaxPool2d(MaxPool2d { size: r.u32()?, stride: r.u32()? }),
            3 => Layer::Relu,
            4 => Layer::Flatten,
            5 => {
                let (fan_in, fan_out) = (r.u32()?, r.u32()?);
                Layer::Affine(Affine {
                    fan_in,
                    fan_out,
                    weight: Tensor::zeros(&[fan_out, fan_in]),
                    bias: Tensor::zeros(&[fan_out]),
                })
            }
            6 => Layer::Softmax,
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        });
    }
    for layer in &mut layers {
        for p in layer.params_mut() {
            r.tensor_into(p)?;
        }
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes before checksum".into()));
    }
    if crc32fast::hash(body) != stored {
        return Err(Error::Format("checksum mismatch".into()));
    }
    Network::new(&input_shape, layers, label_space, class_names)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads a checkpoint and checks it declares the expected kind of label space.
pub fn load_as(path: &Path, expected: fn(usize) -> LabelSpace) -> Result<Network> {
    let net = load(path)?;
    let want = expected(net.label_space().classes());
    if want != net.label_space() {
        return Err(Error::LabelSpaceMismatch {
            expected: want.to_string(),
            found: net.label_space().to_string(),
        });
    }
    Ok(net)
}
