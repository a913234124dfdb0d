//! Model checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "BWNN" | version u16 | kind (u16 len + UTF-8) | config JSON (u32 len + UTF-8)
//! section count u16, per section: name (u16 len + UTF-8), layer count u16,
//!     per layer: kind tag u8 followed by its hyperparameters as u32
//! parameter value count u64
//! parameter values as f32, in declaration order
//! ```

use std::path::Path;

use super::layer::LayerSpec;
use super::ops::Padding;
use super::sequential::Sequential;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BWNN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// A named layer stack inside a checkpoint's spec table.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl Section {
    pub fn new(name: &str, layers: Vec<LayerSpec>) -> Self {
        Section { name: name.to_string(), layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.param_shapes())
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: String,
    pub sections: Vec<Section>,
    pub params: Vec<f32>,
}

impl Checkpoint {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.params.len() * 4);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str16(&mut out, &self.kind);
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.sections.len() as u16).to_le_bytes());
        for section in &self.sections {
            put_str16(&mut out, &section.name);
            out.extend_from_slice(&(section.layers.len() as u16).to_le_bytes());
            for layer in &section.layers {
                encode_layer(&mut out, layer);
            }
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a model checkpoint (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let kind = r.str16()?;
        let config_len = r.u32()? as usize;
        let config = String::from_utf8(r.take(config_len)?.to_vec())
            .map_err(|_| Error::Corruption("config is not UTF-8".into()))?;
        let n_sections = r.u16()?;
        let mut sections = Vec::with_capacity(n_sections as usize);
        for _ in 0..n_sections {
            let name = r.str16()?;
            let n_layers = r.u16()?;
            let layers = (0..n_layers).map(|_| decode_layer(&mut r)).collect::<Result<Vec<_>>>()?;
            sections.push(Section { name, layers });
        }
        let declared = r.u64()? as usize;
        let expected: usize = sections.iter().map(Section::param_count).sum();
        if declared != expected {
            return Err(Error::Corruption(format!(
                "layer table implies {expected} parameters, header declares {declared}"
            )));
        }
        let raw = r.take(declared.checked_mul(4).ok_or_else(|| Error::Corruption("parameter count overflow".into()))?)?;
        let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if r.pos != bytes.len() {
            return Err(Error::Corruption(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { kind, config, sections, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::from(e).at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| e.at(path))
    }
}

/// Flatten the parameters of several stacks in declaration order.
pub fn gather_params<T: Scalar>(stacks: &[&Sequential<T>]) -> Vec<f32> {
    stacks
        .iter()
        .flat_map(|s| s.params())
        .flat_map(|p| p.value.data().iter().map(|v| v.as_f32()))
        .collect()
}

/// Inverse of [`gather_params`]; the stacks must already have the right shapes.
pub fn scatter_params<T: Scalar>(stacks: &mut [&mut Sequential<T>], values: &[f32]) -> Result<()> {
    let needed: usize = stacks.iter().map(|s| s.param_count()).sum();
    if needed != values.len() {
        return Err(Error::Corruption(format!("model needs {needed} parameters, checkpoint has {}", values.len())));
    }
    let mut offset = 0;
    for stack in stacks.iter_mut() {
        for p in stack.params_mut() {
            let n = p.value.len();
            for (dst, &src) in p.value.data_mut().iter_mut().zip(&values[offset..offset + n]) {
                *dst = T::cast(src as f64);
            }
            p.zero_grad();
            p.momentum.fill(T::zero());
            offset += n;
        }
    }
    Ok(())
}

fn put_str16(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn encode_layer(out: &mut Vec<u8>, layer: &LayerSpec) {
    let (tag, fields): (u8, Vec<usize>) = match *layer {
        LayerSpec::Conv2d { kernel, stride, padding, in_channels, out_channels } => {
            let pad = match padding {
                Padding::Same => 0,
                Padding::Valid => 1,
            };
            (1, vec![kernel, stride, pad, in_channels, out_channels])
        }
        LayerSpec::Dense { inputs, outputs } => (2, vec![inputs, outputs]),
        LayerSpec::Relu => (3, vec![]),
        LayerSpec::MaxPool { size, stride } => (4, vec![size, stride]),
        LayerSpec::GlobalAvgPool => (5, vec![]),
        LayerSpec::Concat { left, right } => (6, vec![left, right]),
        LayerSpec::Softmax => (7, vec![]),
    };
    out.push(tag);
    for f in fields {
        out.extend_from_slice(&(f as u32).to_le_bytes());
    }
}

fn decode_layer(r: &mut Reader<'_>) -> Result<LayerSpec> {
    let tag = r.take(1)?[0];
    let mut f = |n: usize| -> Result<Vec<usize>> { (0..n).map(|_| r.u32().map(|v| v as usize)).collect() };
    let spec = match tag {
        1 => {
            let v = f(5)?;
            let padding = match v[2] {
                0 => Padding::Same,
                1 => Padding::Valid,
                p => return Err(Error::Corruption(format!("unknown padding code {p}"))),
            };
            LayerSpec::Conv2d { kernel: v[0], stride: v[1], padding, in_channels: v[3], out_channels: v[4] }
        }
        2 => {
            let v = f(2)?;
            LayerSpec::Dense { inputs: v[0], outputs: v[1] }
        }
        3 => LayerSpec::Relu,
        4 => {
            let v = f(2)?;
            LayerSpec::MaxPool { size: v[0], stride: v[1] }
        }
        5 => LayerSpec::GlobalAvgPool,
        6 => {
            let v = f(2)?;
            LayerSpec::Concat { left: v[0], right: v[1] }
        }
        7 => LayerSpec::Softmax,
        t => return Err(Error::Corruption(format!("unknown layer tag {t}"))),
    };
    spec.validate().map_err(|e| Error::Corruption(e.to_string()))?;
    Ok(spec)
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Corruption(format!("truncated: wanted {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn str16(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Corruption("string is not UTF-8".into()))
    }
}
