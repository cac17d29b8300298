//! GFZC: model weight container.
//!
//! ```text
//! "GFZC" | version u16 | architecture tag u8 | layer count u16
//! manifest, per layer:
//!     name length u16 | name (UTF-8) | kind u8 (0 dense, 1 conv) | stride u8 | pad u8
//!     param count u8 | per param: rank u8 | dims u32 × rank
//! data: every parameter as little-endian f32, manifest order
//! ```
//!
//! Freeze flags and learning rates are run state and are not stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::{Architecture, Layer, LayerKind, Model};

pub const MAGIC: &[u8; 4] = b"GFZC";
pub const VERSION: u16 = 1;

fn fits<T: TryFrom<usize>>(v: usize, what: &str) -> Result<T> {
    T::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit the checkpoint header")))
}

pub fn write_checkpoint(model: &Model, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[model.architecture().tag()])?;
    w.write_all(&fits::<u16>(model.layer_count(), "layer count")?.to_le_bytes())?;
    for layer in model.layers() {
        let name = layer.name().as_bytes();
        w.write_all(&fits::<u16>(name.len(), "name length")?.to_le_bytes())?;
        w.write_all(name)?;
        let (kind, stride, pad) = match layer.kind() {
            LayerKind::Dense => (0u8, 0, 0),
            LayerKind::Conv2d { stride, pad } => (1u8, stride, pad),
        };
        w.write_all(&[kind, fits(stride, "stride")?, fits(pad, "padding")?])?;
        w.write_all(&[fits::<u8>(layer.params().len(), "parameter count")?])?;
        for p in layer.params() {
            w.write_all(&[fits::<u8>(p.shape().len(), "rank")?])?;
            for &d in p.shape() {
                w.write_all(&fits::<u32>(d, "dimension")?.to_le_bytes())?;
            }
        }
    }
    for layer in model.layers() {
        for p in layer.params() {
            for v in p.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

struct Entry {
    name: String,
    kind: LayerKind,
    shapes: Vec<Vec<usize>>,
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Model> {
    if &take::<4>(&mut r)? != MAGIC {
        return Err(Error::Format("not a GFZC checkpoint".into()));
    }
    let version = u16::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported GFZC version {version}")));
    }
    let [tag] = take::<1>(&mut r)?;
    let arch = Architecture::from_tag(tag)?;
    let count = u16::from_le_bytes(take(&mut r)?) as usize;

    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(take(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("layer name is not UTF-8".into()))?;
        let [kind, stride, pad, nparams] = take::<4>(&mut r)?;
        let kind = match kind {
            0 => LayerKind::Dense,
            1 => LayerKind::Conv2d {
                stride: stride as usize,
                pad: pad as usize,
            },
            k => return Err(Error::Format(format!("unknown layer kind {k} for {name}"))),
        };
        if nparams != 2 {
            return Err(Error::Format(format!("layer {name} lists {nparams} parameters, expected 2")));
        }
        let mut shapes = Vec::with_capacity(2);
        for _ in 0..nparams {
            let [rank] = take::<1>(&mut r)?;
            let dims = (0..rank)
                .map(|_| take::<4>(&mut r).map(|b| u32::from_le_bytes(b) as usize))
                .collect::<Result<Vec<_>>>()?;
            shapes.push(dims);
        }
        manifest.push(Entry { name, kind, shapes });
    }

    let mut layers = Vec::with_capacity(count);
    for entry in manifest {
        let mut tensors = Vec::with_capacity(2);
        for shape in entry.shapes {
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))?;
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        let bias = tensors.pop().expect("two tensors");
        let weight = tensors.pop().expect("two tensors");
        layers.push(Layer::new(entry.name, entry.kind, weight, bias)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint data".into()));
    }
    Model::from_layers(arch, layers)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

/// Residual block widths of a MiniResNet, read back from its layers.
pub fn mini_resnet_widths(model: &Model) -> Option<Vec<usize>> {
    if model.architecture() != Architecture::MiniResNet {
        return None;
    }
    let n = model.layer_count();
    Some((1..n - 1).step_by(2).map(|i| model.layers()[i].outputs()).collect())
}
