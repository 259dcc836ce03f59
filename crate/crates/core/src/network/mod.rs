//! Feed-forward inference over a declarative layer schedule.

mod ops;
mod spec;
mod weights;

use std::collections::BTreeMap;

pub use ops::{conv2d_forward, maxpool_forward};
pub use spec::{window_output_size, LayerKind, LayerSpec, NetworkSpec, VolumeSize};
pub use weights::{
    load_weights, read_weights, save_weights, write_weights, ConvWeights, WeightStore, DIM_ORDER, VGFM_MAGIC,
    VGFM_VERSION,
};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Activation replacements keyed by layer index.
pub type Overrides = BTreeMap<usize, ActivationKind>;

pub(crate) fn check_request(spec: &NetworkSpec, tap: usize, overrides: &Overrides) -> Result<()> {
    if tap >= spec.layers.len() {
        return Err(Error::Config(format!(
            "tap layer {tap} out of range, network has layers 0..={}",
            spec.layers.len() - 1
        )));
    }
    for &index in overrides.keys() {
        match spec.layer(index) {
            Some(layer) if layer.is_activation() => {
                if index > tap {
                    return Err(Error::Config(format!(
                        "override on layer {index} (`{}`) lies beyond tap layer {tap}",
                        layer.name
                    )));
                }
            }
            Some(layer) => {
                return Err(Error::Config(format!(
                    "override on layer {index} (`{}`), which is a {} layer, not an activation",
                    layer.name,
                    layer.kind.type_name()
                )))
            }
            None => return Err(Error::Config(format!("override on nonexistent layer {index}"))),
        }
    }
    Ok(())
}

/// Runs layers `1..=tap` on `input` and returns the tap layer's output.
/// Layers after `tap` are never evaluated.
pub fn forward(
    spec: &NetworkSpec,
    weights: &WeightStore,
    input: &Tensor,
    tap: usize,
    overrides: &Overrides,
) -> Result<Tensor> {
    forward_observed(spec, weights, input, tap, overrides, |_, _| {})
}

/// Like [`forward`], calling `observe` with every layer's output in order
/// (including the input at layer 0).
pub fn forward_observed(
    spec: &NetworkSpec,
    weights: &WeightStore,
    input: &Tensor,
    tap: usize,
    overrides: &Overrides,
    mut observe: impl FnMut(&LayerSpec, &Tensor),
) -> Result<Tensor> {
    check_request(spec, tap, overrides)?;
    if input.shape() != &spec.input_shape {
        return Err(Error::shape(
            Some(&spec.layers[0].name),
            format!("network expects {}, got {}", spec.input_shape, input.shape()),
        ));
    }
    observe(&spec.layers[0], input);
    run_layers(spec, weights, input.clone(), 1, tap, overrides, observe)
}

/// Resumes a pass from `volume`, the output of layer `after`, and runs
/// layers `after + 1..=tap`. Feeding the output of [`forward`] at `after`
/// gives bit-identical results to a single pass up to `tap`.
pub fn forward_from(
    spec: &NetworkSpec,
    weights: &WeightStore,
    volume: Tensor,
    after: usize,
    tap: usize,
    overrides: &Overrides,
) -> Result<Tensor> {
    check_request(spec, tap, overrides)?;
    if after > tap {
        return Err(Error::Config(format!("cannot resume after layer {after} to reach tap {tap}")));
    }
    if let Some((&index, _)) = overrides.iter().find(|(&i, _)| i <= after) {
        return Err(Error::Config(format!(
            "override on layer {index} precedes resume point {after}"
        )));
    }
    run_layers(spec, weights, volume, after + 1, tap, overrides, |_, _| {})
}

fn run_layers(
    spec: &NetworkSpec,
    weights: &WeightStore,
    mut current: Tensor,
    first: usize,
    tap: usize,
    overrides: &Overrides,
    mut observe: impl FnMut(&LayerSpec, &Tensor),
) -> Result<Tensor> {
    for layer in &spec.layers[first..=tap] {
        let named = |e: Error| match e {
            Error::Shape { layer: None, message } => Error::Shape {
                layer: Some(layer.name.clone()),
                message,
            },
            other => other,
        };
        current = match &layer.kind {
            LayerKind::Input => unreachable!("validated: input only at index 0"),
            LayerKind::Conv { stride, padding, .. } => {
                let w = weights.get(layer.index).ok_or_else(|| {
                    Error::Weight(format!("no weights for conv layer `{}` (index {})", layer.name, layer.index))
                })?;
                conv2d_forward(&current, &w.weight, &w.bias, *stride, *padding).map_err(named)?
            }
            LayerKind::Pool { window, stride, padding } => {
                maxpool_forward(&current, *window, *stride, *padding).map_err(named)?
            }
            LayerKind::Activation { activation } => {
                let kind = overrides.get(&layer.index).unwrap_or(activation);
                kind.apply(&current)?
            }
        };
        observe(layer, &current);
    }
    Ok(current)
}
