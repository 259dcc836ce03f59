//! Image ingestion and descriptor-variant extraction.
//!
//! A variant name describes which rectifiers are replaced by the
//! average-biased rectifier and which layer's output becomes the
//! descriptor:
//!
//! | name      | tap | overrides                 |
//! |-----------|-----|---------------------------|
//! | `35R`     | 35  | none                      |
//! | `35AR2`   | 35  | 35 -> abrelu:2            |
//! | `33AR_35` | 35  | 33 -> abrelu:1            |
//! | `33,35AR` | 35  | 33, 35 -> abrelu:1        |
//!
//! `AR` without a number means alpha = 1.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::{ActivationKind, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::network::{forward, forward_from, NetworkSpec, Overrides, WeightStore};
use crate::tensor::{Shape, Tensor};

/// The twelve standard variants.
pub const STANDARD_VARIANTS: [&str; 12] = [
    "35R", "35AR", "35AR2", "35AR5", "33R", "33AR", "33AR2", "33AR5", "33AR_35", "33,35AR", "30AR_35", "30AR",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVariant {
    pub name: String,
    pub tap_layer: usize,
    pub overrides: Overrides,
}

impl DescriptorVariant {
    pub fn parse(name: &str) -> Result<Self> {
        name.parse()
    }

    /// Checks that the tap and every override exist in `spec`, and that
    /// overrides land on activation layers.
    pub fn validate_for(&self, spec: &NetworkSpec) -> Result<()> {
        crate::network::check_request(spec, self.tap_layer, &self.overrides)
    }
}

impl fmt::Display for DescriptorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn take_digits(s: &str) -> (&str, &str) {
    let end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    s.split_at(end)
}

impl FromStr for DescriptorVariant {
    type Err = Error;

    fn from_str(raw: &str) -> Result<Self> {
        let name = raw.trim();
        let fail = || Error::VariantParse { name: raw.to_owned() };

        // Layer list: digits separated by commas.
        let mut layers = Vec::new();
        let mut rest = name;
        loop {
            let (digits, tail) = take_digits(rest);
            if digits.is_empty() {
                return Err(fail());
            }
            layers.push(digits.parse::<usize>().map_err(|_| fail())?);
            match tail.strip_prefix(',') {
                Some(t) => rest = t,
                None => {
                    rest = tail;
                    break;
                }
            }
        }

        if rest == "R" {
            return match layers[..] {
                [tap] => Ok(DescriptorVariant {
                    name: name.to_owned(),
                    tap_layer: tap,
                    overrides: Overrides::new(),
                }),
                _ => Err(fail()),
            };
        }

        let rest = rest.strip_prefix("AR").ok_or_else(fail)?;
        let (alpha_text, rest) = {
            let end = rest.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(rest.len());
            rest.split_at(end)
        };
        let alpha = if alpha_text.is_empty() {
            DEFAULT_ALPHA
        } else {
            alpha_text.parse::<f32>().map_err(|_| fail())?
        };
        let kind = ActivationKind::ab_relu(alpha).map_err(|_| fail())?;

        let max_override = *layers.iter().max().expect("at least one layer");
        let tap = match rest {
            "" => max_override,
            _ => {
                let t = rest.strip_prefix('_').ok_or_else(fail)?;
                let (digits, tail) = take_digits(t);
                if digits.is_empty() || !tail.is_empty() {
                    return Err(fail());
                }
                digits.parse::<usize>().map_err(|_| fail())?
            }
        };
        if tap < max_override {
            return Err(fail());
        }
        let mut overrides = Overrides::new();
        for layer in layers {
            if overrides.insert(layer, kind).is_some() {
                return Err(fail());
            }
        }
        Ok(DescriptorVariant {
            name: name.to_owned(),
            tap_layer: tap,
            overrides,
        })
    }
}

/// A flattened rectifier output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Tensor,
    pub variant: String,
    pub source: String,
}

impl Descriptor {
    pub fn as_slice(&self) -> &[f32] {
        self.values.data()
    }
}

/// Bilinear resize with half-pixel centres and clamped edges.
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = image
        .shape()
        .hwc()
        .ok_or_else(|| Error::format(0, format!("image must be (height, width, channels), got {}", image.shape())))?;
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }

    // For each output coordinate: (lower index, upper index, fraction).
    fn axis(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
        let scale = input as f64 / output as f64;
        (0..output)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(input - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    }
    let rows = axis(h, out_h);
    let cols = axis(w, out_w);
    let src = image.data();
    let at = |y: usize, x: usize, ch: usize| f64::from(src[(y * w + x) * c + ch]);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;

    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, ty) in &rows {
        for &(x0, x1, tx) in &cols {
            for ch in 0..c {
                let top = lerp(at(y0, x0, ch), at(y0, x1, ch), tx);
                let bottom = lerp(at(y1, x0, ch), at(y1, x1, ch), tx);
                out.push(lerp(top, bottom, ty) as f32);
            }
        }
    }
    Tensor::new(Shape::new([out_h, out_w, c])?, out)
}

/// Resize to `target` and subtract the per-channel mean.
pub fn preprocess(image: &Tensor, target: &Shape, mean: &[f32]) -> Result<Tensor> {
    let (_, _, c) = image
        .shape()
        .hwc()
        .ok_or_else(|| Error::format(0, format!("image must be (height, width, channels), got {}", image.shape())))?;
    let (th, tw, tc) = target
        .hwc()
        .ok_or_else(|| Error::InvalidArgument(format!("target {target} is not (height, width, channels)")))?;
    if c != tc {
        return Err(Error::format(0, format!("image has {c} channels, network expects {tc}")));
    }
    if mean.len() != c {
        return Err(Error::InvalidArgument(format!(
            "{} normalization means for {c} channels",
            mean.len()
        )));
    }
    let resized = resize_bilinear(image, th, tw)?;
    let data = resized
        .data()
        .chunks_exact(c)
        .flat_map(|px| px.iter().zip(mean).map(|(v, m)| v - m))
        .collect();
    Tensor::new(target.clone(), data)
}

/// Reads an image as `(height, width, 3)` floats in `0..=255`. `.vgt` files
/// are taken as-is; anything else is decoded as PNG/PPM.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let is_vgt = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("vgt"));
    if is_vgt {
        let t = Tensor::load(path)?;
        if t.shape().hwc().is_none() {
            return Err(Error::format(4, format!("{}: image tensor must be rank 3, got {}", path.display(), t.shape())));
        }
        return Ok(t);
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::io::Reader::new(BufReader::new(file))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(f32::from).collect();
    Tensor::from_vec([h as usize, w as usize, 3], data)
}

/// Flattened tap-layer output of `variant` for a preprocessed image.
pub fn extract(
    spec: &NetworkSpec,
    weights: &WeightStore,
    variant: &DescriptorVariant,
    image: &Tensor,
    source: &str,
) -> Result<Descriptor> {
    let out = forward(spec, weights, image, variant.tap_layer, &variant.overrides)?;
    Ok(Descriptor {
        values: out.flatten(),
        variant: variant.name.clone(),
        source: source.to_owned(),
    })
}

/// Extracts several variants from one preprocessed image, evaluating the
/// layers they all share only once. Results equal [`extract`] bit for bit.
pub fn extract_many(
    spec: &NetworkSpec,
    weights: &WeightStore,
    variants: &[DescriptorVariant],
    image: &Tensor,
    source: &str,
) -> Result<Vec<Descriptor>> {
    let Some(trunk_end) = variants
        .iter()
        .map(|v| {
            let first_override = v.overrides.keys().next().map_or(usize::MAX, |&i| i.saturating_sub(1));
            v.tap_layer.min(first_override)
        })
        .min()
    else {
        return Ok(Vec::new());
    };
    let trunk = forward(spec, weights, image, trunk_end, &Overrides::new())?;
    variants
        .iter()
        .map(|v| {
            let out = forward_from(spec, weights, trunk.clone(), trunk_end, v.tap_layer, &v.overrides)?;
            Ok(Descriptor {
                values: out.flatten(),
                variant: v.name.clone(),
                source: source.to_owned(),
            })
        })
        .collect()
}

/// Loads, preprocesses and describes each image in parallel. The outer
/// vector follows `paths`; each inner vector follows `variants`.
pub fn extract_paths(
    spec: &NetworkSpec,
    weights: &WeightStore,
    variants: &[DescriptorVariant],
    paths: &[PathBuf],
) -> Vec<Result<Vec<Descriptor>>> {
    paths
        .par_iter()
        .map(|path| {
            let image = load_image(path)?;
            let x = preprocess(&image, &spec.input_shape, &spec.normalization_mean)?;
            extract_many(spec, weights, variants, &x, &path.to_string_lossy())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub row: usize,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

/// JSON sidecar describing the rows of a descriptor matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub variant: String,
    pub rows: usize,
    pub dim: usize,
    pub records: Vec<MatrixRecord>,
}

/// Row-per-image descriptor matrix stored as `<stem>.vgt` plus `<stem>.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    pub sidecar: MatrixSidecar,
    data: Tensor,
}

impl DescriptorMatrix {
    pub fn from_rows(variant: &str, records: Vec<MatrixRecord>, rows: &[&[f32]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidArgument("descriptor matrix needs at least one row".into()));
        };
        let dim = first.len();
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::shape(None, format!("row {i} has length {}, expected {dim}", rows[i].len())));
        }
        if records.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} records for {} rows",
                records.len(),
                rows.len()
            )));
        }
        let data = Tensor::from_vec([rows.len(), dim], rows.concat())?;
        Ok(DescriptorMatrix {
            sidecar: MatrixSidecar {
                variant: variant.to_owned(),
                rows: rows.len(),
                dim,
                records,
            },
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.sidecar.rows
    }

    pub fn dim(&self) -> usize {
        self.sidecar.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data.data()[i * self.dim()..(i + 1) * self.dim()]
    }

    pub fn row_slices(&self) -> Vec<&[f32]> {
        self.data.data().chunks_exact(self.dim()).collect()
    }

    pub fn matrix_path(dir: &Path, variant: &str) -> PathBuf {
        dir.join(format!("{variant}.vgt"))
    }

    pub fn sidecar_path(dir: &Path, variant: &str) -> PathBuf {
        dir.join(format!("{variant}.json"))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.data.save(Self::matrix_path(dir, &self.sidecar.variant))?;
        let path = Self::sidecar_path(dir, &self.sidecar.variant);
        let json = serde_json::to_string_pretty(&self.sidecar)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, variant: &str) -> Result<Self> {
        let data = Tensor::load(Self::matrix_path(dir, variant))?;
        let path = Self::sidecar_path(dir, variant);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: MatrixSidecar = serde_json::from_str(&text)?;
        if data.dims() != [sidecar.rows, sidecar.dim] || sidecar.records.len() != sidecar.rows {
            return Err(Error::Validation {
                layer: variant.to_owned(),
                expected: format!("{}x{} matrix with {} records", sidecar.rows, sidecar.dim, sidecar.rows),
                found: format!("{} matrix with {} records", data.shape(), sidecar.records.len()),
            });
        }
        Ok(DescriptorMatrix { sidecar, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab(alpha: f32) -> ActivationKind {
        ActivationKind::AbRelu { alpha }
    }

    fn parsed(name: &str) -> (usize, Vec<(usize, ActivationKind)>) {
        let v = DescriptorVariant::parse(name).unwrap();
        (v.tap_layer, v.overrides.into_iter().collect())
    }

    #[test]
    fn standard_catalog() {
        assert_eq!(parsed("35R"), (35, vec![]));
        assert_eq!(parsed("35AR"), (35, vec![(35, ab(1.0))]));
        assert_eq!(parsed("35AR2"), (35, vec![(35, ab(2.0))]));
        assert_eq!(parsed("35AR5"), (35, vec![(35, ab(5.0))]));
        assert_eq!(parsed("33R"), (33, vec![]));
        assert_eq!(parsed("33AR"), (33, vec![(33, ab(1.0))]));
        assert_eq!(parsed("33AR2"), (33, vec![(33, ab(2.0))]));
        assert_eq!(parsed("33AR5"), (33, vec![(33, ab(5.0))]));
        assert_eq!(parsed("33AR_35"), (35, vec![(33, ab(1.0))]));
        assert_eq!(parsed("33,35AR"), (35, vec![(33, ab(1.0)), (35, ab(1.0))]));
        assert_eq!(parsed("30AR_35"), (35, vec![(30, ab(1.0))]));
        assert_eq!(parsed("30AR"), (30, vec![(30, ab(1.0))]));
    }

    #[test]
    fn extended_forms() {
        assert_eq!(parsed("35AR0"), (35, vec![(35, ab(0.0))]));
        assert_eq!(parsed("35AR0.5"), (35, vec![(35, ab(0.5))]));
        assert_eq!(parsed("33AR2_35"), (35, vec![(33, ab(2.0))]));
    }

    #[test]
    fn rejects_unknown_names() {
        for bad in ["", "R", "AR", "35", "35X", "35RR", "35R_36", "33,35R", "35AR_33", "35AR_", "35AR-1", "35,35AR", "x35R", "35AR2x"] {
            let err = DescriptorVariant::parse(bad).unwrap_err();
            assert!(matches!(err, Error::VariantParse { .. }), "{bad}");
            assert!(err.to_string().contains("<L>AR[alpha]"));
        }
    }

    #[test]
    fn identity_resize_is_exact() {
        let img = Tensor::from_vec([2, 3, 3], (0..18).map(|v| v as f32 * 1.7).collect()).unwrap();
        assert_eq!(resize_bilinear(&img, 2, 3).unwrap(), img);
        let target = Shape::new([2, 3, 3]).unwrap();
        let out = preprocess(&img, &target, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Tensor::filled(Shape::new([5, 7, 3]).unwrap(), 0.1);
        let out = preprocess(&img, &Shape::new([11, 4, 3]).unwrap(), &[0.3, 0.3, 0.3]).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.1f32 - 0.3f32));
    }

    #[test]
    fn half_pixel_upsampling() {
        let img = Tensor::from_vec([1, 2, 1], vec![0.0, 2.0]).unwrap();
        let out = resize_bilinear(&img, 1, 4).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 1.5, 2.0]);
    }

    #[test]
    fn mean_is_subtracted_per_channel() {
        let img = Tensor::from_vec([1, 1, 3], vec![10.0, 20.0, 30.0]).unwrap();
        let out = preprocess(&img, &Shape::new([1, 1, 3]).unwrap(), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out.data(), &[9.0, 18.0, 27.0]);
    }

    #[test]
    fn wrong_channel_count_is_a_format_error() {
        let gray = Tensor::zeros(Shape::new([4, 4, 1]).unwrap());
        let err = preprocess(&gray, &Shape::new([4, 4, 3]).unwrap(), &[0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn canonical_descriptor_lengths() {
        let spec = NetworkSpec::vgg_face();
        let shapes = spec.output_shapes().unwrap();
        for (name, len) in [("35R", 4096), ("33AR", 4096), ("30AR", 100_352)] {
            let v = DescriptorVariant::parse(name).unwrap();
            assert_eq!(shapes[v.tap_layer].numel(), len, "{name}");
        }
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<&[f32]> = vec![&[1.0, 2.0], &[3.0, 4.0]];
        let records = (0..2)
            .map(|row| MatrixRecord { row, source: format!("img{row}.png"), subject: Some("a".into()) })
            .collect();
        let m = DescriptorMatrix::from_rows("33,35AR", records, &rows).unwrap();
        m.save(dir.path()).unwrap();
        let back = DescriptorMatrix::load(dir.path(), "33,35AR").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.row(1), &[3.0, 4.0]);
    }
}
