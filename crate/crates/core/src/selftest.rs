//! Bundled invariant checks, runnable from the command line on any build.
//!
//! Each check compares the engine against a property or an independent
//! brute-force computation. A [`Fault`] can be injected to confirm that a
//! broken build is caught.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::{ab_relu, relu};
use crate::descriptor::DescriptorVariant;
use crate::error::Result;
use crate::evaluation::{anmrr, run_experiment, AnmrrParams, AnmrrQuery, ExperimentOptions};
use crate::network::{conv2d_forward, forward, maxpool_forward, NetworkSpec, VolumeSize};
use crate::similarity::{distance, DistanceKind};
use crate::synthetic::{gaussian_clusters, random_image, toy_network};
use crate::tensor::Tensor;

/// Deliberate defects for exercising the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Average-biased ReLU keeps a bias when alpha is zero.
    AlphaZero,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "alpha-zero" => Ok(Fault::AlphaZero),
            other => Err(format!("unknown fault `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {:<28} {}", self.name, self.detail)
    }
}

struct Engine {
    fault: Option<Fault>,
}

impl Engine {
    fn ab_relu(&self, x: &Tensor, alpha: f32) -> Result<Tensor> {
        match self.fault {
            Some(Fault::AlphaZero) if alpha == 0.0 => ab_relu(x, 0.05),
            _ => ab_relu(x, alpha),
        }
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, max_hw: usize, max_c: usize, spread: f32) -> Tensor {
    let h = rng.gen_range(1..=max_hw);
    let w = rng.gen_range(1..=max_hw);
    let c = rng.gen_range(1..=max_c);
    let offset = rng.gen_range(-spread..spread) * 0.25;
    let data = (0..h * w * c).map(|_| rng.gen_range(-spread..spread) + offset).collect();
    Tensor::from_vec([h, w, c], data).expect("positive dims")
}

fn outcome(name: &'static str, failures: Vec<String>, cases: usize) -> CheckOutcome {
    match failures.first() {
        None => CheckOutcome { name, passed: true, detail: format!("{cases} cases") },
        Some(first) => CheckOutcome {
            name,
            passed: false,
            detail: format!("{} of {cases} cases failed; first: {first}", failures.len()),
        },
    }
}

fn check_alpha_zero(engine: &Engine, rng: &mut ChaCha8Rng) -> CheckOutcome {
    const CASES: usize = 300;
    let mut failures = Vec::new();
    for case in 0..CASES {
        let x = random_tensor(rng, 8, 16, 5.0);
        match engine.ab_relu(&x, 0.0) {
            Ok(y) if y == relu(&x) => {}
            Ok(_) => failures.push(format!("case {case}: output differs from relu")),
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    outcome("alpha-zero collapse", failures, CASES)
}

fn check_shift(engine: &Engine, rng: &mut ChaCha8Rng) -> CheckOutcome {
    const CASES: usize = 100;
    let mut failures = Vec::new();
    for case in 0..CASES {
        let x = random_tensor(rng, 6, 8, 2.0);
        let base = engine.ab_relu(&x, 1.0);
        for c in [-10.0f32, -0.1, 0.1, 10.0] {
            let shifted = engine.ab_relu(&x.map(|v| v + c), 1.0);
            let ok = match (&base, &shifted) {
                (Ok(a), Ok(b)) => a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() <= 1e-5),
                _ => false,
            };
            if !ok {
                failures.push(format!("case {case}, shift {c}"));
            }
        }
    }
    outcome("abrelu shift invariance", failures, CASES)
}

fn check_support(engine: &Engine, rng: &mut ChaCha8Rng) -> CheckOutcome {
    const CASES: usize = 200;
    let mut failures = Vec::new();
    for case in 0..CASES {
        let x = random_tensor(rng, 6, 8, 3.0);
        let (Ok(ab), r) = (engine.ab_relu(&x, 1.0), relu(&x)) else {
            failures.push(format!("case {case}: error"));
            continue;
        };
        let mean = x.mean();
        let pairs = || ab.data().iter().zip(r.data());
        let ok = if mean <= 0.0 {
            pairs().all(|(a, r)| *r == 0.0 || *a != 0.0)
        } else {
            pairs().all(|(a, r)| *a == 0.0 || *r != 0.0)
        };
        if !ok {
            failures.push(format!("case {case}: mean {mean}"));
        }
    }
    outcome("abrelu support relations", failures, CASES)
}

fn conv_oracle(x: &Tensor, w: &Tensor, b: &[f32], s: usize, p: usize) -> Vec<f32> {
    let [h, wd, cin] = x.dims()[..] else { unreachable!() };
    let [cout, _, f, _] = w.dims()[..] else { unreachable!() };
    let oh = (h + 2 * p - f) / s + 1;
    let ow = (wd + 2 * p - f) / s + 1;
    let mut out = Vec::with_capacity(oh * ow * cout);
    for i in 0..oh {
        for j in 0..ow {
            for o in 0..cout {
                let mut acc = f64::from(b[o]);
                for ci in 0..cin {
                    for u in 0..f {
                        for v in 0..f {
                            let y = (i * s + u) as isize - p as isize;
                            let xx = (j * s + v) as isize - p as isize;
                            if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                let xv = x.data()[(y as usize * wd + xx as usize) * cin + ci];
                                let wv = w.data()[((o * cin + ci) * f + u) * f + v];
                                acc += f64::from(xv) * f64::from(wv);
                            }
                        }
                    }
                }
                out.push(acc as f32);
            }
        }
    }
    out
}

fn check_conv(rng: &mut ChaCha8Rng) -> CheckOutcome {
    const CASES: usize = 60;
    let mut failures = Vec::new();
    for case in 0..CASES {
        let x = random_tensor(rng, 8, 4, 1.0);
        let (h, w, cin) = x.shape().hwc().expect("rank 3");
        let f = rng.gen_range(1..=h.min(w).min(3) + 1).min(h.min(w) + 2);
        let p = rng.gen_range(0..=1usize);
        let s = rng.gen_range(1..=2usize);
        if h + 2 * p < f || w + 2 * p < f {
            continue;
        }
        let cout = rng.gen_range(1..=4usize);
        let k = Tensor::from_vec(
            [cout, cin, f, f],
            (0..cout * cin * f * f).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .expect("positive dims");
        let b: Vec<f32> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        match conv2d_forward(&x, &k, &b, s, p) {
            Ok(y) => {
                let want = conv_oracle(&x, &k, &b, s, p);
                if y.data().iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-5) || y.len() != want.len() {
                    failures.push(format!("case {case}: f={f} s={s} p={p}"));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    outcome("conv oracle", failures, CASES)
}

fn check_pool(rng: &mut ChaCha8Rng) -> CheckOutcome {
    const CASES: usize = 60;
    let mut failures = Vec::new();
    for case in 0..CASES {
        let x = random_tensor(rng, 8, 4, 1.0);
        let (h, w, c) = x.shape().hwc().expect("rank 3");
        let f = rng.gen_range(1..=h.min(w));
        let s = rng.gen_range(1..=2usize);
        let oh = (h - f) / s + 1;
        let ow = (w - f) / s + 1;
        let mut want = Vec::with_capacity(oh * ow * c);
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut m = f32::NEG_INFINITY;
                    for u in 0..f {
                        for v in 0..f {
                            m = m.max(x.data()[((i * s + u) * w + j * s + v) * c + ch]);
                        }
                    }
                    want.push(m);
                }
            }
        }
        match maxpool_forward(&x, f, s, 0) {
            Ok(y) if y.data() == want.as_slice() => {}
            Ok(_) => failures.push(format!("case {case}: f={f} s={s}")),
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    outcome("maxpool oracle", failures, CASES)
}

fn check_shape_chain() -> CheckOutcome {
    const VOLUMES: [&str; 36] = [
        "224,3", "224,64", "224,64", "224,64", "224,64", "112,64", "112,128", "112,128", "112,128", "112,128",
        "56,128", "56,256", "56,256", "56,256", "56,256", "56,256", "56,256", "28,256", "28,512", "28,512",
        "28,512", "28,512", "28,512", "28,512", "14,512", "14,512", "14,512", "14,512", "14,512", "14,512",
        "14,512", "7,512", "1,4096", "1,4096", "1,4096", "1,4096",
    ];
    let failures = match NetworkSpec::vgg_face().output_shapes() {
        Ok(shapes) if shapes.len() == VOLUMES.len() => shapes
            .iter()
            .zip(VOLUMES)
            .enumerate()
            .filter(|(_, (s, v))| VolumeSize(s).to_string() != *v)
            .map(|(i, (s, v))| format!("layer {i}: {} != {v}", VolumeSize(s)))
            .collect(),
        Ok(shapes) => vec![format!("{} layers", shapes.len())],
        Err(e) => vec![e.to_string()],
    };
    outcome("vgg-face shape chain", failures, VOLUMES.len())
}

fn check_distances(rng: &mut ChaCha8Rng) -> CheckOutcome {
    const CASES: usize = 300;
    let mut failures = Vec::new();
    for case in 0..CASES {
        let dim = rng.gen_range(1..32);
        let x: Vec<f32> = (0..dim).map(|_| rng.gen_range(0.0..5.0)).collect();
        let y: Vec<f32> = (0..dim).map(|_| rng.gen_range(0.0..5.0)).collect();
        for kind in DistanceKind::ALL {
            let (Ok(a), Ok(b), Ok(z)) = (distance(kind, &x, &y), distance(kind, &y, &x), distance(kind, &x, &x)) else {
                failures.push(format!("case {case}: {kind} errored"));
                continue;
            };
            let self_ok = if kind == DistanceKind::Cosine { z <= 1e-6 } else { z == 0.0 };
            if a < 0.0 || (a - b).abs() > 1e-6 * a.abs().max(b.abs()) || !self_ok {
                failures.push(format!("case {case}: {kind}"));
            }
        }
    }
    let hand = [
        (DistanceKind::ChiSquare, [1.0f32, 0.0], [0.0f32, 1.0], 2.0),
        (DistanceKind::D1, [1.0, 2.0], [3.0, 5.0], 0.775),
    ];
    for (kind, x, y, want) in hand {
        match distance(kind, &x, &y) {
            Ok(v) if (v - want).abs() <= 1e-9 => {}
            other => failures.push(format!("{kind}({x:?}, {y:?}) = {other:?}, want {want}")),
        }
    }
    outcome("distance axioms", failures, CASES)
}

fn check_anmrr() -> CheckOutcome {
    let mut failures = Vec::new();
    let perfect: Vec<AnmrrQuery> = (1..=6)
        .map(|ng| AnmrrQuery { ground_truth: ng, relevant_ranks: (1..=ng).collect() })
        .collect();
    let miss: Vec<AnmrrQuery> = (1..=6).map(|ng| AnmrrQuery { ground_truth: ng, relevant_ranks: vec![] }).collect();
    let fixture = [AnmrrQuery { ground_truth: 2, relevant_ranks: vec![1, 3] }];
    let p = AnmrrParams::default();
    match anmrr(&perfect, p) {
        Ok(0.0) => {}
        other => failures.push(format!("perfect: {other:?}")),
    }
    match anmrr(&miss, p) {
        Ok(1.0) => {}
        other => failures.push(format!("total miss: {other:?}")),
    }
    match anmrr(&fixture, p) {
        Ok(v) if (v - 0.142_857).abs() <= 1e-6 => {}
        other => failures.push(format!("NG=2 ranks 1,3: {other:?}")),
    }
    outcome("anmrr anchors", failures, 3)
}

fn check_end_to_end() -> CheckOutcome {
    let set = gaussian_clusters(4, 8, 16, 10.0, 0.1, 7);
    let options = ExperimentOptions {
        variant: "synthetic".into(),
        distance: DistanceKind::ChiSquare,
        cutoffs: vec![1, 7, 10],
        anmrr_windowed: true,
    };
    let failures = match run_experiment(&set.label_refs(), &set.descriptor_refs(), &options) {
        Ok(r) => {
            let mut f = Vec::new();
            if r.cutoffs[0].arp != 1.0 || r.cutoffs[1].arp != 1.0 {
                f.push(format!("ARP@1 {} ARP@7 {}", r.cutoffs[0].arp, r.cutoffs[1].arp));
            }
            if r.cutoffs[2].anmrr != 0.0 {
                f.push(format!("ANMRR@10 {}", r.cutoffs[2].anmrr));
            }
            f
        }
        Err(e) => vec![e.to_string()],
    };
    outcome("synthetic retrieval", failures, 32)
}

fn check_descriptor_pipeline(engine: &Engine) -> CheckOutcome {
    let mut failures = Vec::new();
    let mut run = || -> Result<()> {
        let (spec, weights) = toy_network(3)?;
        let image = crate::descriptor::preprocess(&random_image(40, 36, 5), &spec.input_shape, &spec.normalization_mean)?;
        let plain = DescriptorVariant::parse("35R")?;
        let relu_out = forward(&spec, &weights, &image, 35, &plain.overrides)?;
        // Zero-alpha rectifier applied to the relu7 input must reproduce relu7.
        let pre = forward(&spec, &weights, &image, 34, &plain.overrides)?;
        let collapsed = engine.ab_relu(&pre, 0.0)?;
        if collapsed != relu_out {
            failures.push("35AR0 differs from 35R".to_owned());
        }
        let again = forward(&spec, &weights, &image, 35, &plain.overrides)?;
        if again != relu_out {
            failures.push("repeated pass is not bit-identical".to_owned());
        }
        if relu_out.data().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            failures.push("descriptor has negative or non-finite values".to_owned());
        }
        Ok(())
    };
    if let Err(e) = run() {
        failures.push(e.to_string());
    }
    outcome("descriptor pipeline", failures, 3)
}

/// Runs every check. Deterministic: two runs give identical outcomes.
pub fn run(fault: Option<Fault>) -> Vec<CheckOutcome> {
    let engine = Engine { fault };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f_7e57);
    let outcomes = vec![
        check_alpha_zero(&engine, &mut rng),
        check_shift(&engine, &mut rng),
        check_support(&engine, &mut rng),
        check_conv(&mut rng),
        check_pool(&mut rng),
        check_shape_chain(),
        check_distances(&mut rng),
        check_anmrr(),
        check_end_to_end(),
        check_descriptor_pipeline(&engine),
    ];
    let names: HashSet<_> = outcomes.iter().map(|o| o.name).collect();
    debug_assert_eq!(names.len(), outcomes.len());
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes() {
        for o in run(None) {
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn injected_fault_is_named() {
        let failed: Vec<_> = run(Some(Fault::AlphaZero)).into_iter().filter(|o| !o.passed).collect();
        assert!(failed.iter().any(|o| o.name == "alpha-zero collapse"));
    }

    #[test]
    fn deterministic() {
        assert_eq!(run(None), run(None));
    }
}
