use facedesc::descriptor::{extract, extract_many, preprocess, DescriptorVariant, STANDARD_VARIANTS};
use facedesc::network::{
    conv2d_forward, forward, load_weights, maxpool_forward, read_weights, save_weights, write_weights, NetworkSpec,
    Overrides, WeightStore,
};
use facedesc::synthetic::{random_image, toy_network};
use facedesc::{Error, Tensor};
use proptest::prelude::*;

fn conv_reference(x: &Tensor, w: &Tensor, b: &[f32], s: usize, p: usize) -> (Vec<usize>, Vec<f64>) {
    let (h, wd, cin) = x.shape().hwc().unwrap();
    let (cout, f) = (w.dims()[0], w.dims()[2]);
    let oh = (h + 2 * p - f) / s + 1;
    let ow = (wd + 2 * p - f) / s + 1;
    let at = |y: isize, xx: isize, c: usize| -> f64 {
        if y < 0 || xx < 0 || y as usize >= h || xx as usize >= wd {
            0.0
        } else {
            f64::from(x.data()[(y as usize * wd + xx as usize) * cin + c])
        }
    };
    let mut out = vec![0.0; oh * ow * cout];
    for o in 0..cout {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = f64::from(b[o]);
                for c in 0..cin {
                    for u in 0..f {
                        for v in 0..f {
                            let wv = f64::from(w.data()[((o * cin + c) * f + u) * f + v]);
                            acc += wv * at((i * s + u) as isize - p as isize, (j * s + v) as isize - p as isize, c);
                        }
                    }
                }
                out[(i * ow + j) * cout + o] = acc;
            }
        }
    }
    (vec![oh, ow, cout], out)
}

fn pool_reference(x: &Tensor, f: usize, s: usize, p: usize) -> (Vec<usize>, Vec<f32>) {
    let (h, w, c) = x.shape().hwc().unwrap();
    let oh = (h + 2 * p - f) / s + 1;
    let ow = (w + 2 * p - f) / s + 1;
    let mut out = Vec::new();
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best = f32::NEG_INFINITY;
                for y in (i * s)..(i * s + f) {
                    for xx in (j * s)..(j * s + f) {
                        if y >= p && xx >= p && y - p < h && xx - p < w {
                            best = best.max(x.data()[((y - p) * w + xx - p) * c + ch]);
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    (vec![oh, ow, c], out)
}

fn conv_case() -> impl Strategy<Value = (Tensor, Tensor, Vec<f32>, usize, usize)> {
    (1usize..9, 1usize..9, 1usize..5, 1usize..5, 1usize..4, 0usize..2, 1usize..3)
        .prop_filter("window fits", |(h, w, _, _, f, p, _)| h + 2 * p >= *f && w + 2 * p >= *f)
        .prop_flat_map(|(h, w, cin, cout, f, p, s)| {
            (
                prop::collection::vec(-2.0f32..2.0, h * w * cin),
                prop::collection::vec(-1.0f32..1.0, cout * cin * f * f),
                prop::collection::vec(-1.0f32..1.0, cout),
            )
                .prop_map(move |(x, k, b)| {
                    (
                        Tensor::from_vec([h, w, cin], x).unwrap(),
                        Tensor::from_vec([cout, cin, f, f], k).unwrap(),
                        b,
                        s,
                        p,
                    )
                })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn conv_matches_nested_loops((x, k, b, s, p) in conv_case()) {
        let y = conv2d_forward(&x, &k, &b, s, p).unwrap();
        let (dims, want) = conv_reference(&x, &k, &b, s, p);
        prop_assert_eq!(y.dims(), &dims[..]);
        for (a, w) in y.data().iter().zip(&want) {
            prop_assert!((f64::from(*a) - w).abs() <= 1e-5 * w.abs().max(1.0));
        }
    }

    #[test]
    fn pool_matches_nested_loops(
        (x, f, s, p) in (1usize..9, 1usize..9, 1usize..4, 1usize..4, 1usize..3, 0usize..2)
            .prop_filter("window fits", |(h, w, _, f, _, p)| p < f && h + 2 * p >= *f && w + 2 * p >= *f)
            .prop_flat_map(|(h, w, c, f, s, p)| {
                prop::collection::vec(-5.0f32..5.0, h * w * c)
                    .prop_map(move |d| (Tensor::from_vec([h, w, c], d).unwrap(), f, s, p))
            }),
    ) {
        let y = maxpool_forward(&x, f, s, p).unwrap();
        let (dims, want) = pool_reference(&x, f, s, p);
        prop_assert_eq!(y.dims(), &dims[..]);
        prop_assert_eq!(y.data(), &want[..]);
    }
}

fn toy_input(seed: u64) -> (NetworkSpec, WeightStore, Tensor) {
    let (spec, weights) = toy_network(11).unwrap();
    let x = preprocess(&random_image(48, 40, seed), &spec.input_shape, &spec.normalization_mean).unwrap();
    (spec, weights, x)
}

#[test]
fn forward_is_identical_across_thread_counts() {
    let (spec, weights, x) = toy_input(1);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| forward(&spec, &weights, &x, 35, &Overrides::new()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn zero_alpha_variant_equals_plain_relu() {
    let (spec, weights, x) = toy_input(2);
    for (plain, zero) in [("35R", "35AR0"), ("33R", "33AR0")] {
        let a = extract(&spec, &weights, &DescriptorVariant::parse(plain).unwrap(), &x, "img").unwrap();
        let b = extract(&spec, &weights, &DescriptorVariant::parse(zero).unwrap(), &x, "img").unwrap();
        assert_eq!(a.values, b.values, "{zero}");
    }
}

#[test]
fn shared_trunk_extraction_matches_individual_passes() {
    let (spec, weights, x) = toy_input(3);
    let variants: Vec<_> = STANDARD_VARIANTS.iter().map(|n| DescriptorVariant::parse(n).unwrap()).collect();
    let many = extract_many(&spec, &weights, &variants, &x, "img").unwrap();
    for (v, d) in variants.iter().zip(&many) {
        let single = extract(&spec, &weights, v, &x, "img").unwrap();
        assert_eq!(&single, d, "{}", v.name);
        assert!(d.as_slice().iter().all(|&e| e >= 0.0 && e.is_finite()), "{}", v.name);
    }
    let lengths: Vec<usize> = many.iter().map(|d| d.as_slice().len()).collect();
    assert_eq!(lengths, vec![16, 16, 16, 16, 16, 16, 16, 16, 16, 16, 16, 32]);
}

#[test]
fn average_biased_variant_differs_from_relu() {
    let (spec, weights, x) = toy_input(4);
    let a = extract(&spec, &weights, &DescriptorVariant::parse("30AR").unwrap(), &x, "img").unwrap();
    let b = forward(&spec, &weights, &x, 30, &Overrides::new()).unwrap().flatten();
    assert_ne!(a.values, b);
    // The biased rectifier keeps a subset of the plain rectifier's support
    // when the incoming volume has a positive mean.
    let pre = forward(&spec, &weights, &x, 29, &Overrides::new()).unwrap();
    if pre.mean() > 0.0 {
        assert!(a.as_slice().iter().zip(b.data()).all(|(p, q)| *p == 0.0 || *q != 0.0));
    }
}

#[test]
fn weights_survive_a_file_round_trip() {
    let (spec, weights) = toy_network(5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.vgfm");
    save_weights(&path, &spec, &weights).unwrap();
    let (spec2, weights2) = load_weights(&path).unwrap();
    assert_eq!(spec, spec2);
    assert_eq!(weights, weights2);
}

#[test]
fn corrupt_containers_are_rejected() {
    let (spec, weights) = toy_network(6).unwrap();
    let mut bytes = Vec::new();
    write_weights(&mut bytes, &spec, &weights).unwrap();
    for cut in [0, 3, 8, 11, 40, bytes.len() / 2, bytes.len() - 1] {
        assert!(read_weights(&bytes[..cut]).is_err(), "truncated at {cut}");
    }
    let mut flipped = bytes.clone();
    flipped[0] = b'X';
    assert!(matches!(read_weights(&flipped[..]), Err(Error::Format { offset: 0, .. })));
}

#[test]
#[ignore = "full-size forward pass: about 15 GMAC and 0.5 GB of weights"]
fn canonical_network_fc7_descriptor() {
    let spec = NetworkSpec::vgg_face();
    let weights = WeightStore::seeded(&spec, 1).unwrap();
    let x = preprocess(&random_image(250, 250, 1), &spec.input_shape, &spec.normalization_mean).unwrap();
    let y = forward(&spec, &weights, &x, 32, &Overrides::new()).unwrap();
    assert_eq!(y.dims(), &[1, 1, 4096]);
}
