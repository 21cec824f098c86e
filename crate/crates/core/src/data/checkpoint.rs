//! Binary checkpoint format.
//!
//! ```text
//! magic     8 bytes   "SVADAPT\0"
//! version   u32 LE    1
//! meta_len  u64 LE    length of the JSON metadata block
//! metadata  JSON      architecture, per-layer mode/frozen/variant/SVD flags,
//!                     training metadata, tensor table (name, shape, byte offset)
//! payload   f32 LE    tensors back to back, offsets relative to payload start
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gan::{ArchConfig, GanModel, Layer, LayerParams, Net};
use crate::linalg::{SvdFactors, Tensor};
use crate::reparam::{AdaptMode, DecomposedLayer, LayerKind};

use super::DataError;

pub const MAGIC: &[u8; 8] = b"SVADAPT\0";
pub const FORMAT_VERSION: u32 = 1;
const FIXED_HEADER: usize = 8 + 4 + 8;

/// Training provenance stored alongside the parameters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub images_seen: usize,
    pub config_hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Variant {
    Plain,
    ScaleShift,
    Decomposed,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    name: String,
    net: Net,
    kind: LayerKind,
    mode: AdaptMode,
    frozen: bool,
    params: Variant,
    svd: bool,
    original_shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    images_seen: usize,
    config_hash: String,
    layers: Vec<LayerRecord>,
    tensors: Vec<TensorRecord>,
}

/// SHA-256 (hex) of a value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

struct Writer {
    tensors: Vec<TensorRecord>,
    payload: Vec<u8>,
}

impl Writer {
    fn put(&mut self, name: String, shape: &[usize], data: &[f32]) {
        self.tensors.push(TensorRecord {
            name,
            shape: shape.to_vec(),
            offset: self.payload.len() as u64,
        });
        for v in data {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn put_vec(&mut self, name: String, data: &[f32]) {
        self.put(name, &[data.len()], data);
    }
}

pub fn checkpoint_bytes(model: &GanModel, meta: &CheckpointMeta) -> Vec<u8> {
    let mut w = Writer {
        tensors: Vec::new(),
        payload: Vec::new(),
    };
    let mut layers = Vec::new();
    for (net, layer) in model.layers() {
        let n = &layer.name;
        let (variant, original_shape) = match &layer.params {
            LayerParams::Plain { weight, bias } => {
                w.put(format!("{n}.weight"), weight.shape(), weight.data());
                w.put_vec(format!("{n}.bias"), bias);
                (Variant::Plain, weight.shape().to_vec())
            }
            LayerParams::ScaleShift {
                weight,
                bias,
                gamma,
                beta,
            } => {
                w.put(format!("{n}.weight"), weight.shape(), weight.data());
                w.put_vec(format!("{n}.bias"), bias);
                w.put_vec(format!("{n}.gamma"), gamma);
                w.put_vec(format!("{n}.beta"), beta);
                (Variant::ScaleShift, weight.shape().to_vec())
            }
            LayerParams::Decomposed(d) => {
                w.put(format!("{n}.u"), d.factors.u.shape(), d.factors.u.data());
                w.put_vec(format!("{n}.sigma0"), &d.factors.sigma0);
                w.put(format!("{n}.v"), d.factors.v.shape(), d.factors.v.data());
                w.put_vec(format!("{n}.lambda"), &d.lambda);
                w.put_vec(format!("{n}.bias"), &d.bias);
                (Variant::Decomposed, d.original_shape.clone())
            }
        };
        layers.push(LayerRecord {
            name: n.clone(),
            net,
            kind: layer.kind,
            mode: layer.mode,
            frozen: layer.frozen,
            params: variant,
            svd: variant == Variant::Decomposed,
            original_shape,
        });
    }
    w.put_vec("latent_mean".into(), &model.latent_mean);

    let header = Header {
        arch: model.arch,
        images_seen: meta.images_seen,
        config_hash: meta.config_hash.clone(),
        layers,
        tensors: w.tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(FIXED_HEADER + json.len() + w.payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&w.payload);
    out
}

pub fn save_checkpoint(model: &GanModel, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<(), DataError> {
    std::fs::write(path, checkpoint_bytes(model, meta))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(GanModel, CheckpointMeta), DataError> {
    parse_checkpoint(&std::fs::read(path)?)
}

struct Table<'a> {
    records: &'a [TensorRecord],
    payload: &'a [u8],
}

impl Table<'_> {
    fn get(&self, name: &str) -> Result<Tensor, DataError> {
        let rec = self
            .records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| DataError::CorruptHeader(format!("tensor {name} missing from table")))?;
        let numel: usize = rec.shape.iter().product();
        let start = rec.offset as usize;
        let bytes = self.payload.get(start..start + 4 * numel).ok_or_else(|| {
            DataError::TruncatedTensorTable(format!(
                "tensor {name} needs bytes {start}..{} of a {}-byte payload",
                start + 4 * numel,
                self.payload.len()
            ))
        })?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Tensor::new(rec.shape.clone(), data)
            .map_err(|e| DataError::CorruptHeader(format!("tensor {name}: {e}")))
    }

    fn vec(&self, name: &str, len: usize) -> Result<Vec<f32>, DataError> {
        let t = self.get(name)?;
        expect_shape(name, t.shape(), &[len])?;
        Ok(t.into_data())
    }
}

fn expect_shape(name: &str, got: &[usize], want: &[usize]) -> Result<(), DataError> {
    if got == want {
        Ok(())
    } else {
        Err(DataError::ShapeMismatch(format!(
            "{name}: stored shape {got:?}, architecture expects {want:?}"
        )))
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(GanModel, CheckpointMeta), DataError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(DataError::CorruptHeader("bad magic bytes".into()));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(DataError::CorruptHeader("header shorter than 20 bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(DataError::UnknownVersion(version));
    }
    let meta_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let meta_end = usize::try_from(meta_len)
        .ok()
        .and_then(|l| l.checked_add(FIXED_HEADER))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| {
            DataError::TruncatedTensorTable(format!(
                "metadata block of {meta_len} bytes exceeds the {}-byte file",
                bytes.len()
            ))
        })?;
    let header: Header = serde_json::from_slice(&bytes[FIXED_HEADER..meta_end])
        .map_err(|e| DataError::CorruptHeader(format!("metadata: {e}")))?;
    let payload = &bytes[meta_end..];
    let expected: u64 = header
        .tensors
        .iter()
        .map(|t| t.offset + 4 * t.shape.iter().product::<usize>() as u64)
        .max()
        .unwrap_or(0);
    if (payload.len() as u64) < expected {
        return Err(DataError::TruncatedTensorTable(format!(
            "payload has {} bytes, tensor table needs {expected}",
            payload.len()
        )));
    }
    if payload.len() as u64 > expected {
        return Err(DataError::CorruptHeader(format!(
            "{} trailing bytes after the tensor payload",
            payload.len() as u64 - expected
        )));
    }
    let table = Table {
        records: &header.tensors,
        payload,
    };

    let mut model = GanModel::skeleton(header.arch)
        .map_err(|e| DataError::ShapeMismatch(format!("stored architecture: {e}")))?;
    let expected_layers: Vec<(Net, String)> = model.layers().map(|(n, l)| (n, l.name.clone())).collect();
    let stored_layers: Vec<(Net, String)> = header.layers.iter().map(|l| (l.net, l.name.clone())).collect();
    if expected_layers != stored_layers {
        return Err(DataError::ShapeMismatch(format!(
            "layer list {stored_layers:?} does not match the architecture"
        )));
    }
    let stages = model.generator.iter_mut().chain(model.discriminator.iter_mut());
    for (stage, rec) in stages.zip(&header.layers) {
        stage.layer = restore_layer(&stage.layer, rec, &table)?;
    }
    model.latent_mean = table.vec("latent_mean", header.arch.z_dim)?;
    Ok((
        model,
        CheckpointMeta {
            images_seen: header.images_seen,
            config_hash: header.config_hash,
        },
    ))
}

fn restore_layer(template: &Layer, rec: &LayerRecord, t: &Table) -> Result<Layer, DataError> {
    let n = &rec.name;
    if rec.kind != template.kind {
        return Err(DataError::ShapeMismatch(format!(
            "{n}: stored kind {:?}, architecture has {:?}",
            rec.kind, template.kind
        )));
    }
    if rec.svd != (rec.params == Variant::Decomposed) {
        return Err(DataError::CorruptHeader(format!("{n}: SVD flag contradicts parameter variant")));
    }
    let want_shape = template.effective_weight().shape().to_vec();
    expect_shape(n, &rec.original_shape, &want_shape)?;
    let (rows, cols) = template.shape().matrix_dims();
    let params = match rec.params {
        Variant::Plain | Variant::ScaleShift => {
            let weight = t.get(&format!("{n}.weight"))?;
            expect_shape(&format!("{n}.weight"), weight.shape(), &want_shape)?;
            let bias = t.vec(&format!("{n}.bias"), cols)?;
            if rec.params == Variant::Plain {
                LayerParams::Plain { weight, bias }
            } else {
                LayerParams::ScaleShift {
                    weight,
                    bias,
                    gamma: t.vec(&format!("{n}.gamma"), cols)?,
                    beta: t.vec(&format!("{n}.beta"), cols)?,
                }
            }
        }
        Variant::Decomposed => {
            let s = rows.min(cols);
            let u = t.get(&format!("{n}.u"))?;
            expect_shape(&format!("{n}.u"), u.shape(), &[rows, s])?;
            let v = t.get(&format!("{n}.v"))?;
            expect_shape(&format!("{n}.v"), v.shape(), &[cols, s])?;
            LayerParams::Decomposed(DecomposedLayer {
                factors: SvdFactors {
                    u,
                    sigma0: t.vec(&format!("{n}.sigma0"), s)?,
                    v,
                },
                lambda: t.vec(&format!("{n}.lambda"), s)?,
                bias: t.vec(&format!("{n}.bias"), cols)?,
                kind: rec.kind,
                original_shape: rec.original_shape.clone(),
            })
        }
    };
    Ok(Layer {
        name: rec.name.clone(),
        kind: rec.kind,
        mode: rec.mode,
        frozen: rec.frozen,
        params,
    })
}
