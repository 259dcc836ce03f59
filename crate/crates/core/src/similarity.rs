//! Descriptor distances and gallery ranking. Lower distance means more
//! similar.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum DistanceKind {
    Euclidean,
    Cosine,
    L1,
    D1,
    #[default]
    ChiSquare,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 5] = [
        DistanceKind::Euclidean,
        DistanceKind::Cosine,
        DistanceKind::L1,
        DistanceKind::D1,
        DistanceKind::ChiSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Cosine => "cosine",
            DistanceKind::L1 => "l1",
            DistanceKind::D1 => "d1",
            DistanceKind::ChiSquare => "chisq",
        }
    }

    fn requires_non_negative(self) -> bool {
        matches!(self, DistanceKind::D1 | DistanceKind::ChiSquare)
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistanceKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown distance `{s}`, expected one of euclidean, cosine, l1, d1, chisq"
                ))
            })
    }
}

impl Serialize for DistanceKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DistanceKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Distance between two descriptors, accumulated in `f64`.
///
/// * euclidean: `sqrt(sum (x-y)^2)`
/// * l1: `sum |x-y|`
/// * cosine: `1 - x.y / (|x| |y|)`, and 1 if either norm is zero
/// * chisq: `sum (x-y)^2 / (x+y)` over components with `x+y > 0`
/// * d1: `sum |x-y| / (1+x+y)`
///
/// Chi-square and d1 require non-negative components.
pub fn distance(kind: DistanceKind, x: &[f32], y: &[f32]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(None, format!("descriptor lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("distance between empty descriptors".into()));
    }
    if kind.requires_non_negative() {
        if let Some(v) = x.iter().chain(y).find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::Domain(format!("{kind} distance needs non-negative components, found {v}")));
        }
    }
    Ok(distance_unchecked(kind, x, y))
}

/// [`distance`] without validation; callers guarantee equal lengths and
/// the domain.
pub(crate) fn distance_unchecked(kind: DistanceKind, x: &[f32], y: &[f32]) -> f64 {
    let pairs = x.iter().zip(y).map(|(&a, &b)| (f64::from(a), f64::from(b)));
    match kind {
        DistanceKind::Euclidean => pairs.map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        DistanceKind::L1 => pairs.map(|(a, b)| (a - b).abs()).sum(),
        DistanceKind::D1 => pairs.map(|(a, b)| (a - b).abs() / (1.0 + a + b)).sum(),
        DistanceKind::ChiSquare => pairs
            .map(|(a, b)| {
                let s = a + b;
                if s > 0.0 {
                    (a - b) * (a - b) / s
                } else {
                    0.0
                }
            })
            .sum(),
        DistanceKind::Cosine => {
            let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
            for (a, b) in pairs {
                dot += a * b;
                nx += a * a;
                ny += b * b;
            }
            if nx == 0.0 || ny == 0.0 {
                return 1.0;
            }
            (1.0 - dot / (nx.sqrt() * ny.sqrt())).max(0.0)
        }
    }
}

/// Ascending by distance, ties by ascending index.
pub(crate) fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

pub(crate) fn check_gallery(kind: DistanceKind, probe: &[f32], gallery: &[&[f32]]) -> Result<()> {
    if gallery.is_empty() {
        return Err(Error::InvalidArgument("empty gallery".into()));
    }
    // Validates the probe once, then each item against it.
    distance(kind, probe, probe)?;
    for (i, item) in gallery.iter().enumerate() {
        distance(kind, probe, item).map_err(|e| match e {
            Error::Shape { message, .. } => Error::shape(None, format!("gallery item {i}: {message}")),
            other => other,
        })?;
    }
    Ok(())
}

/// Gallery indices ordered by ascending distance to `probe`; ties keep
/// ascending index order.
pub fn rank_gallery(kind: DistanceKind, probe: &[f32], gallery: &[&[f32]]) -> Result<Vec<usize>> {
    check_gallery(kind, probe, gallery)?;
    let mut scored: Vec<(f64, usize)> = gallery
        .iter()
        .enumerate()
        .map(|(i, g)| (distance_unchecked(kind, probe, g), i))
        .collect();
    scored.sort_unstable_by(by_distance_then_index);
    Ok(scored.into_iter().map(|(_, i)| i).collect())
}

/// The first `depth` entries of the ranking `rank_gallery` would return,
/// with their distances, found by partial selection.
pub fn rank_top(kind: DistanceKind, probe: &[f32], gallery: &[&[f32]], depth: usize) -> Result<Vec<(f64, usize)>> {
    check_gallery(kind, probe, gallery)?;
    let scored: Vec<(f64, usize)> = gallery
        .iter()
        .enumerate()
        .map(|(i, g)| (distance_unchecked(kind, probe, g), i))
        .collect();
    Ok(top_k(scored, depth))
}

pub(crate) fn top_k(mut scored: Vec<(f64, usize)>, depth: usize) -> Vec<(f64, usize)> {
    if depth < scored.len() {
        scored.select_nth_unstable_by(depth, by_distance_then_index);
        scored.truncate(depth);
    }
    scored.sort_unstable_by(by_distance_then_index);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        let d = |k, x: &[f32], y: &[f32]| distance(k, x, y).unwrap();
        assert_eq!(d(DistanceKind::ChiSquare, &[1.0, 0.0], &[0.0, 1.0]), 2.0);
        assert!((d(DistanceKind::D1, &[1.0, 2.0], &[3.0, 5.0]) - 0.775).abs() < 1e-12);
        assert_eq!(d(DistanceKind::Euclidean, &[3.0, 4.0], &[0.0, 0.0]), 5.0);
        assert_eq!(d(DistanceKind::Cosine, &[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(d(DistanceKind::L1, &[1.0, -2.0], &[0.5, 1.0]), 3.5);
    }

    #[test]
    fn identical_vectors_are_at_zero() {
        let x = [0.3f32, 1.7, 0.0, 9.0];
        for k in DistanceKind::ALL {
            let v = distance(k, &x, &x).unwrap();
            if k == DistanceKind::Cosine {
                assert!(v <= 1e-6);
            } else {
                assert_eq!(v, 0.0, "{k}");
            }
        }
    }

    #[test]
    fn zero_vector_cosine_is_one() {
        assert_eq!(distance(DistanceKind::Cosine, &[0.0, 0.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(distance(DistanceKind::Cosine, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn both_zero_components_skip_chisq() {
        assert_eq!(distance(DistanceKind::ChiSquare, &[0.0, 2.0], &[0.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(distance(DistanceKind::L1, &[1.0], &[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!(matches!(distance(DistanceKind::ChiSquare, &[-1.0], &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(distance(DistanceKind::D1, &[1.0], &[-0.5]), Err(Error::Domain(_))));
        assert!(distance(DistanceKind::Euclidean, &[-1.0], &[1.0]).is_ok());
        assert!(matches!(rank_gallery(DistanceKind::L1, &[1.0], &[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn names_round_trip() {
        for k in DistanceKind::ALL {
            assert_eq!(k.name().parse::<DistanceKind>().unwrap(), k);
        }
        assert!("emd".parse::<DistanceKind>().is_err());
        assert_eq!(DistanceKind::default(), DistanceKind::ChiSquare);
    }

    #[test]
    fn ranking_examples() {
        let probe = [1.0f32, 1.0];
        let far = [50.0f32, 50.0];
        let gallery: Vec<&[f32]> = vec![&far, &far, &probe, &far];
        assert_eq!(rank_gallery(DistanceKind::ChiSquare, &probe, &gallery).unwrap()[0], 2);

        assert_eq!(rank_gallery(DistanceKind::L1, &probe, &[&far]).unwrap(), vec![0]);

        let g: Vec<[f32; 1]> = vec![[0.3], [0.1], [0.2]];
        let refs: Vec<&[f32]> = g.iter().map(|v| &v[..]).collect();
        assert_eq!(rank_gallery(DistanceKind::L1, &[0.0], &refs).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn ties_break_by_index() {
        let x = [1.0f32];
        let gallery: Vec<&[f32]> = vec![&x; 5];
        assert_eq!(rank_gallery(DistanceKind::Euclidean, &x, &gallery).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    fn vectors(n: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
        (1usize..16).prop_flat_map(move |dim| prop::collection::vec(prop::collection::vec(0.0f32..10.0, dim), n))
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(v in vectors(2)) {
            for k in DistanceKind::ALL {
                let a = distance(k, &v[0], &v[1]).unwrap();
                let b = distance(k, &v[1], &v[0]).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()));
            }
        }

        #[test]
        fn ranking_matches_full_sort(v in vectors(40), depth in 1usize..45) {
            let refs: Vec<&[f32]> = v[1..].iter().map(Vec::as_slice).collect();
            let full = rank_gallery(DistanceKind::ChiSquare, &v[0], &refs).unwrap();
            let top = rank_top(DistanceKind::ChiSquare, &v[0], &refs, depth).unwrap();
            let top_ids: Vec<usize> = top.iter().map(|t| t.1).collect();
            prop_assert_eq!(&full[..depth.min(full.len())], &top_ids[..]);
        }
    }
}
