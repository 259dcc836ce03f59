use std::fmt;

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::tensor::Shape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerKind {
    Input,
    /// Square convolution. Fully-connected layers are convolutions whose
    /// filter covers the whole input plane.
    Conv {
        filter: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: usize,
    },
    Pool {
        window: usize,
        stride: usize,
        padding: usize,
    },
    Activation { activation: ActivationKind },
}

impl LayerKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            LayerKind::Input => "Image",
            LayerKind::Conv { .. } => "Conv",
            LayerKind::Pool { .. } => "Pool",
            LayerKind::Activation { activation: ActivationKind::Relu } => "Relu",
            LayerKind::Activation { .. } => "ABRelu",
        }
    }

    /// The filter column of a layer table, e.g. `f:3,3,64, s:1, p:1`.
    pub fn filter_description(&self) -> String {
        match self {
            LayerKind::Conv {
                filter,
                in_channels,
                out_channels,
                stride,
                padding,
            } => format!("f:{filter},{in_channels},{out_channels}, s:{stride}, p:{padding}"),
            LayerKind::Pool {
                window,
                stride,
                padding,
            } => format!("f:{window}, s:{stride}, p:{padding}"),
            LayerKind::Activation { activation: ActivationKind::AbRelu { alpha } } => {
                format!("alpha:{alpha}")
            }
            _ => "n/a".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn is_activation(&self) -> bool {
        matches!(self.kind, LayerKind::Activation { .. })
    }
}

/// Declarative feed-forward schedule. Layer 0 is the input; the volume
/// flowing between layers is `(height, width, channels)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Shape,
    /// Per-channel values subtracted from an image before the first layer.
    pub normalization_mean: Vec<f32>,
    pub layers: Vec<LayerSpec>,
}

/// Spatial output size of a sliding window, or `None` if the window does
/// not fit even once.
pub fn window_output_size(size: usize, window: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || window == 0 || padded < window {
        return None;
    }
    Some((padded - window) / stride + 1)
}

impl NetworkSpec {
    /// The sixteen-layer VGG schedule: five conv blocks (2, 2, 3, 3, 3 convs
    /// of 3x3/s1/p1, each block closed by a 2x2/s2 max-pool) followed by two
    /// fully-connected layers written as convolutions. The classifier layer
    /// is not part of the schedule; the network ends at the second fc ReLU.
    pub fn vgg16(input_size: usize, block_widths: [usize; 5], fc_width: usize, input_channels: usize) -> Result<Self> {
        const BLOCK_DEPTH: [usize; 5] = [2, 2, 3, 3, 3];
        let mut layers = vec![LayerSpec {
            index: 0,
            name: "input".into(),
            kind: LayerKind::Input,
        }];
        let mut push = |name: String, kind: LayerKind| {
            let index = layers.len();
            layers.push(LayerSpec { index, name, kind });
        };

        let mut channels = input_channels;
        let mut spatial = input_size;
        for (block, (&depth, &width)) in BLOCK_DEPTH.iter().zip(&block_widths).enumerate() {
            for conv in 0..depth {
                push(
                    format!("conv{}_{}", block + 1, conv + 1),
                    LayerKind::Conv {
                        filter: 3,
                        in_channels: channels,
                        out_channels: width,
                        stride: 1,
                        padding: 1,
                    },
                );
                push(
                    format!("relu{}_{}", block + 1, conv + 1),
                    LayerKind::Activation { activation: ActivationKind::Relu },
                );
                channels = width;
            }
            push(
                format!("pool{}", block + 1),
                LayerKind::Pool {
                    window: 2,
                    stride: 2,
                    padding: 0,
                },
            );
            spatial = window_output_size(spatial, 2, 2, 0).ok_or_else(|| {
                Error::InvalidArgument(format!("input size {input_size} too small for five pooling stages"))
            })?;
        }
        for (fc, in_ch, filter) in [(6, channels, spatial), (7, fc_width, 1)] {
            push(
                format!("fc{fc}"),
                LayerKind::Conv {
                    filter,
                    in_channels: in_ch,
                    out_channels: fc_width,
                    stride: 1,
                    padding: 0,
                },
            );
            push(
                format!("relu{fc}"),
                LayerKind::Activation { activation: ActivationKind::Relu },
            );
        }

        let spec = NetworkSpec {
            input_shape: Shape::new([input_size, input_size, input_channels])?,
            normalization_mean: vec![0.0; input_channels],
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 224x224 VGG-Face descriptor network: 36 layers ending at `relu7`
    /// with a 4096-wide output.
    pub fn vgg_face() -> Self {
        NetworkSpec::vgg16(224, [64, 128, 256, 512, 512], 4096, 3).expect("canonical schedule is valid")
    }

    pub fn with_normalization_mean(mut self, mean: Vec<f32>) -> Result<Self> {
        if mean.len() != self.input_channels() {
            return Err(Error::Config(format!(
                "normalization mean has {} entries for {} input channels",
                mean.len(),
                self.input_channels()
            )));
        }
        self.normalization_mean = mean;
        Ok(self)
    }

    pub fn input_channels(&self) -> usize {
        self.input_shape.hwc().map_or(0, |(_, _, c)| c)
    }

    pub fn layer(&self, index: usize) -> Option<&LayerSpec> {
        self.layers.get(index)
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| matches!(l.kind, LayerKind::Conv { .. }))
    }

    /// Checks indices, parameters and the shape chain.
    pub fn validate(&self) -> Result<()> {
        self.output_shapes().map(|_| ())
    }

    /// Output volume of every layer, index-aligned with `layers`.
    pub fn output_shapes(&self) -> Result<Vec<Shape>> {
        let (mut h, mut w, mut c) = self.input_shape.hwc().ok_or_else(|| {
            Error::Config(format!("input shape {} is not (height, width, channels)", self.input_shape))
        })?;
        if self.normalization_mean.len() != c {
            return Err(Error::Config(format!(
                "normalization mean has {} entries for {c} input channels",
                self.normalization_mean.len()
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }

        let mut shapes = Vec::with_capacity(self.layers.len());
        for (position, layer) in self.layers.iter().enumerate() {
            if layer.index != position {
                return Err(Error::Config(format!(
                    "layer `{}` has index {} but sits at position {position}",
                    layer.name, layer.index
                )));
            }
            let bad = |msg: String| Error::shape(Some(&layer.name), msg);
            match (&layer.kind, position) {
                (LayerKind::Input, 0) => {}
                (LayerKind::Input, _) => return Err(bad("input layer must be first".into())),
                (_, 0) => return Err(bad("first layer must be the input".into())),
                (
                    LayerKind::Conv {
                        filter,
                        in_channels,
                        out_channels,
                        stride,
                        padding,
                    },
                    _,
                ) => {
                    if *filter == 0 || *out_channels == 0 || *stride == 0 {
                        return Err(bad("conv filter, stride and output channels must be positive".into()));
                    }
                    if *in_channels != c {
                        return Err(bad(format!("expects {in_channels} input channels, receives {c}")));
                    }
                    let oh = window_output_size(h, *filter, *stride, *padding);
                    let ow = window_output_size(w, *filter, *stride, *padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => {
                            h = oh;
                            w = ow;
                            c = *out_channels;
                        }
                        _ => return Err(bad(format!("filter {filter} does not fit a {h}x{w} input"))),
                    }
                }
                (LayerKind::Pool { window, stride, padding }, _) => {
                    if *window == 0 || *stride == 0 {
                        return Err(bad("pool window and stride must be positive".into()));
                    }
                    if padding >= window {
                        return Err(bad("pool padding must be smaller than the window".into()));
                    }
                    match (
                        window_output_size(h, *window, *stride, *padding),
                        window_output_size(w, *window, *stride, *padding),
                    ) {
                        (Some(oh), Some(ow)) => {
                            h = oh;
                            w = ow;
                        }
                        _ => return Err(bad(format!("window {window} does not fit a {h}x{w} input"))),
                    }
                }
                (LayerKind::Activation { activation }, _) => {
                    if let ActivationKind::AbRelu { alpha } = activation {
                        if !alpha.is_finite() || *alpha < 0.0 {
                            return Err(bad(format!("invalid alpha {alpha}")));
                        }
                    }
                }
            }
            shapes.push(Shape::new([h, w, c]).expect("sizes are positive"));
        }
        Ok(shapes)
    }

    /// Formats a layer table: index, name, type, filter, volume.
    pub fn describe(&self) -> Result<String> {
        use std::fmt::Write;
        let shapes = self.output_shapes()?;
        let mut out = String::new();
        let _ = writeln!(out, "{:>3}  {:<10} {:<7} {:<26} Volume", "No.", "Name", "Type", "Filter");
        for (layer, shape) in self.layers.iter().zip(&shapes) {
            let _ = writeln!(
                out,
                "{:>3}  {:<10} {:<7} {:<26} {}",
                layer.index,
                layer.name,
                layer.kind.type_name(),
                layer.kind.filter_description(),
                VolumeSize(shape)
            );
        }
        Ok(out)
    }
}

/// `size,depth` notation for square volumes (`224,64`), `HxW,depth` otherwise.
pub struct VolumeSize<'a>(pub &'a Shape);

impl fmt::Display for VolumeSize<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.hwc() {
            Some((h, w, c)) if h == w => write!(f, "{h},{c}"),
            Some((h, w, c)) => write!(f, "{h}x{w},{c}"),
            None => write!(f, "{}", self.0),
        }
    }
}
