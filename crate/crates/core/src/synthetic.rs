//! Seeded fixtures: clustered descriptor sets and small networks with the
//! full 36-layer schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{DatasetManifest, FaceRecord, RecordSource};
use crate::network::{save_weights, NetworkSpec, WeightStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ClusterSet {
    pub labels: Vec<String>,
    pub descriptors: Vec<Vec<f32>>,
}

impl ClusterSet {
    pub fn label_refs(&self) -> Vec<&str> {
        self.labels.iter().map(String::as_str).collect()
    }

    pub fn descriptor_refs(&self) -> Vec<&[f32]> {
        self.descriptors.iter().map(Vec::as_slice).collect()
    }
}

/// `subjects x per_subject` points in `dim` dimensions. Subject `s` is
/// centred at `1 + separation * e_(s mod dim)` with isotropic noise `sigma`;
/// values are clamped at zero so the set suits chi-square. Records are
/// subject-major.
pub fn gaussian_clusters(
    subjects: usize,
    per_subject: usize,
    dim: usize,
    separation: f32,
    sigma: f32,
    seed: u64,
) -> ClusterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, sigma).expect("sigma must be finite and non-negative");
    let mut labels = Vec::with_capacity(subjects * per_subject);
    let mut descriptors = Vec::with_capacity(subjects * per_subject);
    for s in 0..subjects {
        for _ in 0..per_subject {
            let d = (0..dim)
                .map(|k| {
                    let centre = 1.0 + if k == s % dim { separation } else { 0.0 };
                    (centre + noise.sample(&mut rng)).max(0.0)
                })
                .collect();
            labels.push(format!("s{s}"));
            descriptors.push(d);
        }
    }
    ClusterSet { labels, descriptors }
}

/// A 32x32 network with the same 36-layer schedule as the VGG-Face
/// descriptor network but narrow channels, so every descriptor variant name
/// applies. Taps 33/35 give 16 values, tap 30 gives 2x2x8.
pub fn toy_network(seed: u64) -> Result<(NetworkSpec, WeightStore)> {
    let spec = NetworkSpec::vgg16(32, [4, 4, 8, 8, 8], 16, 3)?.with_normalization_mean(vec![120.0, 110.0, 100.0])?;
    let weights = WeightStore::seeded(&spec, seed)?;
    Ok((spec, weights))
}

/// Uniform noise image `(h, w, 3)` in `0..255`.
pub fn random_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * 3).map(|_| rng.gen_range(0.0f32..255.0)).collect();
    Tensor::from_vec([h, w, 3], data).expect("positive dims")
}

/// Images of `subjects` people: each subject has a base pattern and every
/// image adds small noise to it.
pub fn subject_images(subjects: usize, per_subject: usize, size: usize, seed: u64) -> Vec<(String, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0f32, 6.0).expect("valid std");
    let mut out = Vec::with_capacity(subjects * per_subject);
    for s in 0..subjects {
        let base: Vec<f32> = (0..size * size * 3).map(|_| rng.gen_range(0.0f32..255.0)).collect();
        for _ in 0..per_subject {
            let data = base
                .iter()
                .map(|&v| (v + jitter.sample(&mut rng)).clamp(0.0, 255.0))
                .collect();
            out.push((format!("s{s}"), Tensor::from_vec([size, size, 3], data).expect("positive dims")));
        }
    }
    out
}

/// Writes a small experiment to `dir`: `toy.vgfm` (see [`toy_network`]),
/// one PNG per image under `images/`, and `manifest.json` listing them with
/// relative paths. Returns the manifest path.
pub fn write_fixture(dir: &Path, subjects: usize, per_subject: usize, seed: u64) -> Result<PathBuf> {
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let (spec, weights) = toy_network(seed)?;
    save_weights(dir.join("toy.vgfm"), &spec, &weights)?;
    let mut records = Vec::new();
    for (i, (subject, img)) in subject_images(subjects, per_subject, 40, seed).into_iter().enumerate() {
        let rel = format!("images/{subject}_{i:03}.png");
        let (h, w, _) = img.shape().hwc().expect("rank 3");
        let bytes: Vec<u8> = img.data().iter().map(|&v| v.round() as u8).collect();
        let buf = image::RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dims");
        buf.save(dir.join(&rel))?;
        records.push(FaceRecord {
            source: RecordSource::Path(rel),
            subject,
        });
    }
    let manifest = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&DatasetManifest::new(records)?)?;
    std::fs::write(&manifest, json).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
