//! Convolution parameters and the `.vgfm` weight container.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"VGFM" | u32 version (=1) | u32 header_len | header_len bytes of UTF-8 JSON
//! then, for each entry of header.blobs in order:
//!     weight: prod(weight_shape) x f32, dimension order (out, in, h, w)
//!     bias:   bias_len x f32
//! ```
//!
//! The JSON header carries the layer schedule, the input shape, the
//! per-channel normalization means and the dimension-order declaration.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{LayerKind, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::{write_f32s, CountingReader, Shape, Tensor};

pub const VGFM_MAGIC: &[u8; 4] = b"VGFM";
pub const VGFM_VERSION: u32 = 1;
pub const DIM_ORDER: &str = "out,in,h,w";

/// Upper bound on the JSON header; anything larger is a corrupt length field.
const MAX_HEADER_LEN: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    /// `(out_channels, in_channels, f, f)`.
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

/// Parameters for every conv layer of a network, keyed by layer index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: BTreeMap<usize, ConvWeights>,
}

fn expected_conv_shape(layer: &LayerSpec) -> Option<([usize; 4], usize)> {
    match layer.kind {
        LayerKind::Conv {
            filter,
            in_channels,
            out_channels,
            ..
        } => Some(([out_channels, in_channels, filter, filter], out_channels)),
        _ => None,
    }
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer: usize, weights: ConvWeights) -> Option<ConvWeights> {
        self.entries.insert(layer, weights)
    }

    pub fn get(&self, layer: usize) -> Option<&ConvWeights> {
        self.entries.get(&layer)
    }

    pub fn get_mut(&mut self, layer: usize) -> Option<&mut ConvWeights> {
        self.entries.get_mut(&layer)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// He-normal weights and small biases from a fixed seed. Layers are
    /// filled in index order so the result depends only on `(spec, seed)`.
    pub fn seeded(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new();
        for layer in spec.conv_layers() {
            let (shape, nbias) = expected_conv_shape(layer).expect("conv layer");
            let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
            let bias_dist = Normal::new(0.0, 0.01).expect("positive std");
            let bias = (0..nbias).map(|_| bias_dist.sample(&mut rng) as f32).collect();
            store.insert(
                layer.index,
                ConvWeights {
                    weight: Tensor::from_vec(shape.to_vec(), data)?,
                    bias,
                },
            );
        }
        Ok(store)
    }

    /// Every conv layer of `spec` has an entry of matching shape and no
    /// entry refers to a non-conv layer.
    pub fn validate_against(&self, spec: &NetworkSpec) -> Result<()> {
        for layer in &spec.layers {
            let entry = self.entries.get(&layer.index);
            match (expected_conv_shape(layer), entry) {
                (Some((shape, nbias)), Some(w)) => check_entry(layer, shape, nbias, w)?,
                (Some(_), None) => {
                    return Err(Error::Weight(format!(
                        "no weights for conv layer `{}` (index {})",
                        layer.name, layer.index
                    )))
                }
                (None, Some(_)) => {
                    return Err(Error::Weight(format!(
                        "weights given for non-conv layer `{}` (index {})",
                        layer.name, layer.index
                    )))
                }
                (None, None) => {}
            }
        }
        if let Some((&idx, _)) = self.entries.iter().find(|(&i, _)| i >= spec.layers.len()) {
            return Err(Error::Weight(format!("weights given for unknown layer index {idx}")));
        }
        Ok(())
    }
}

fn check_entry(layer: &LayerSpec, shape: [usize; 4], nbias: usize, w: &ConvWeights) -> Result<()> {
    if w.weight.dims() != shape {
        return Err(Error::Validation {
            layer: layer.name.clone(),
            expected: format!("weight {shape:?}"),
            found: format!("weight {:?}", w.weight.dims()),
        });
    }
    if w.bias.len() != nbias {
        return Err(Error::Validation {
            layer: layer.name.clone(),
            expected: format!("bias of length {nbias}"),
            found: format!("bias of length {}", w.bias.len()),
        });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct BlobEntry {
    layer: usize,
    name: String,
    weight_shape: Vec<usize>,
    bias_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dim_order: String,
    input_shape: Shape,
    normalization_mean: Vec<f32>,
    layers: Vec<LayerSpec>,
    blobs: Vec<BlobEntry>,
}

pub fn write_weights<W: Write>(mut w: W, spec: &NetworkSpec, weights: &WeightStore) -> Result<()> {
    spec.validate()?;
    weights.validate_against(spec)?;
    let blobs = spec
        .conv_layers()
        .map(|layer| {
            let entry = weights.get(layer.index).expect("validated");
            BlobEntry {
                layer: layer.index,
                name: layer.name.clone(),
                weight_shape: entry.weight.dims().to_vec(),
                bias_len: entry.bias.len(),
            }
        })
        .collect();
    let header = Header {
        dim_order: DIM_ORDER.to_owned(),
        input_shape: spec.input_shape.clone(),
        normalization_mean: spec.normalization_mean.clone(),
        layers: spec.layers.clone(),
        blobs,
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::Internal(format!("writing weight container: {e}"));
    w.write_all(VGFM_MAGIC).map_err(io)?;
    w.write_all(&VGFM_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for layer in spec.conv_layers() {
        let entry = weights.get(layer.index).expect("validated");
        write_f32s(&mut w, entry.weight.data()).map_err(io)?;
        write_f32s(&mut w, &entry.bias).map_err(io)?;
    }
    Ok(())
}

/// Parses a container, validating the schedule and every blob shape. Nothing
/// is returned unless the whole file is consistent.
pub fn read_weights<R: Read>(r: R) -> Result<(NetworkSpec, WeightStore)> {
    let mut r = CountingReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact_or(&mut magic, "truncated magic")?;
    if &magic != VGFM_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"VGFM\"")));
    }
    let version = r.read_u32()?;
    if version != VGFM_VERSION {
        return Err(Error::format(4, format!("unsupported container version {version}")));
    }
    let header_len = r.read_u32()?;
    if header_len > MAX_HEADER_LEN {
        return Err(Error::format(8, format!("implausible header length {header_len}")));
    }
    let header_start = r.offset();
    let mut json = vec![0u8; header_len as usize];
    r.read_exact_or(&mut json, "truncated header")?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| Error::format(header_start, format!("header JSON: {e}")))?;
    if header.dim_order != DIM_ORDER {
        return Err(Error::format(
            header_start,
            format!("dimension order `{}` unsupported, expected `{DIM_ORDER}`", header.dim_order),
        ));
    }
    let spec = NetworkSpec {
        input_shape: header.input_shape,
        normalization_mean: header.normalization_mean,
        layers: header.layers,
    };
    spec.validate()?;

    let convs: Vec<&LayerSpec> = spec.conv_layers().collect();
    if header.blobs.len() != convs.len() {
        return Err(Error::Weight(format!(
            "header lists {} weight blobs for {} conv layers",
            header.blobs.len(),
            convs.len()
        )));
    }
    let mut store = WeightStore::new();
    for blob in &header.blobs {
        let layer = spec
            .layer(blob.layer)
            .filter(|l| l.name == blob.name)
            .ok_or_else(|| Error::Weight(format!("blob `{}` names no layer at index {}", blob.name, blob.layer)))?;
        let (shape, nbias) = expected_conv_shape(layer)
            .ok_or_else(|| Error::Weight(format!("blob for non-conv layer `{}`", layer.name)))?;
        if blob.weight_shape != shape {
            return Err(Error::Validation {
                layer: layer.name.clone(),
                expected: format!("weight {shape:?}"),
                found: format!("weight {:?}", blob.weight_shape),
            });
        }
        if blob.bias_len != nbias {
            return Err(Error::Validation {
                layer: layer.name.clone(),
                expected: format!("bias of length {nbias}"),
                found: format!("bias of length {}", blob.bias_len),
            });
        }
        if store.get(layer.index).is_some() {
            return Err(Error::Weight(format!("duplicate blob for `{}`", layer.name)));
        }
        let data = r.read_f32s(shape.iter().product())?;
        let bias = r.read_f32s(nbias)?;
        store.insert(
            layer.index,
            ConvWeights {
                weight: Tensor::from_vec(shape.to_vec(), data)?,
                bias,
            },
        );
    }
    r.expect_eof()?;
    store.validate_against(&spec)?;
    Ok((spec, store))
}

pub fn save_weights(path: impl AsRef<Path>, spec: &NetworkSpec, weights: &WeightStore) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_weights(&mut w, spec, weights)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<(NetworkSpec, WeightStore)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(BufReader::new(file))
}
