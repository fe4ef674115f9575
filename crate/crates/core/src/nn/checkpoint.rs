//! Flat binary model checkpoints.
//!
//! Layout (all integers little-endian `u32`):
//! `"ALNN"`, version, layer count, input `c h w`, then per layer its kind
//! tag and dimensions, the number of parameter tensors, and for each tensor
//! its rank, dims and `f32` payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::model::{Layer, Model};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"ALNN";
pub const VERSION: u32 = 1;

const DENSE: u32 = 0;
const CONV2D: u32 = 1;
const RELU: u32 = 2;
const MAXPOOL2: u32 = 3;
const FLATTEN: u32 = 4;

pub fn save<T: Scalar, W: Write>(model: &Model<T>, out: &mut W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let put = |buf: &mut Vec<u8>, v: usize| buf.extend_from_slice(&(v as u32).to_le_bytes());
    put(&mut buf, VERSION as usize);
    put(&mut buf, model.layers().len());
    for d in model.input_shape() {
        put(&mut buf, d);
    }
    let mut params = model.params().iter();
    for layer in model.layers() {
        let n_params = match *layer {
            Layer::Dense { inputs, outputs } => {
                put(&mut buf, DENSE as usize);
                put(&mut buf, inputs);
                put(&mut buf, outputs);
                2
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => {
                put(&mut buf, CONV2D as usize);
                put(&mut buf, in_channels);
                put(&mut buf, out_channels);
                put(&mut buf, kernel);
                2
            }
            Layer::Relu => {
                put(&mut buf, RELU as usize);
                0
            }
            Layer::MaxPool2 => {
                put(&mut buf, MAXPOOL2 as usize);
                0
            }
            Layer::Flatten => {
                put(&mut buf, FLATTEN as usize);
                0
            }
        };
        put(&mut buf, n_params);
        for _ in 0..n_params {
            let p = params.next().expect("parameter per layer slot");
            put(&mut buf, p.shape().len());
            for &d in p.shape() {
                put(&mut buf, d);
            }
            for v in p.data() {
                buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
}

pub fn load<T: Scalar, R: Read>(input: &mut R) -> Result<Model<T>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected ALNN"));
    }
    let version = c.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let n_layers = c.u32("layer count")?;
    let input_shape = [
        c.u32("input shape")?,
        c.u32("input shape")?,
        c.u32("input shape")?,
    ];
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    let mut tensors = Vec::new();
    for _ in 0..n_layers {
        let at = c.pos as u64;
        let layer = match c.u32("layer kind")? as u32 {
            DENSE => Layer::Dense {
                inputs: c.u32("dense inputs")?,
                outputs: c.u32("dense outputs")?,
            },
            CONV2D => Layer::Conv2d {
                in_channels: c.u32("conv in")?,
                out_channels: c.u32("conv out")?,
                kernel: c.u32("conv kernel")?,
            },
            RELU => Layer::Relu,
            MAXPOOL2 => Layer::MaxPool2,
            FLATTEN => Layer::Flatten,
            other => return Err(Error::format(at, format!("unknown layer kind {other}"))),
        };
        layers.push(layer);
        let n = c.u32("parameter count")?;
        for _ in 0..n {
            let rank = c.u32("rank")?;
            if rank > 8 {
                return Err(Error::format(c.pos as u64 - 4, format!("rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(c.u32("dim")?);
            }
            let count: usize = shape.iter().product();
            let payload = c.take(count * 4, "payload")?;
            let data = payload
                .chunks_exact(4)
                .map(|b| T::of(f32::from_le_bytes(b.try_into().unwrap()) as f64))
                .collect();
            tensors.push(Tensor::new(shape, data)?);
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::format(c.pos as u64, "trailing bytes"));
    }
    let mut model = Model::zeroed(input_shape, layers)?;
    model
        .replace_params(tensors)
        .map_err(|_| Error::format(0, "parameter shapes disagree with layers"))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn round_trip_preserves_f32_model() {
        let mut rng = stream(&[11]);
        let m = Model::<f32>::conv_net([1, 8, 8], &[3, 4], 6, 5, &mut rng).unwrap();
        let mut buf = Vec::new();
        save(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"ALNN");
        let back: Model<f32> = load(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let mut rng = stream(&[12]);
        let m = Model::<f32>::mlp([1, 2, 2], &[3], 2, &mut rng).unwrap();
        let mut buf = Vec::new();
        save(&m, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        match load::<f32, _>(&mut buf.as_slice()) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            load::<f32, _>(&mut bad.as_slice()),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}
