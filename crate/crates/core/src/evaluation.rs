//! Leave-one-out retrieval evaluation.
//!
//! Every record is used once as the probe; all other records form the
//! gallery. The relevant set of a probe is every *other* record of the same
//! subject, so `NG = subject size - 1`.
//!
//! Precision and recall at cutoff `m` are averaged per subject (MP, MR) and
//! then across subjects (ARP, ARR). Rank quality is measured by ANMRR with
//! `K(q) = min(4 NG(q), 2 GTM)` and a penalty rank of `1.25 K(q)` for
//! relevant items that are not retrieved within the horizon.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{distance, distance_unchecked, top_k, DistanceKind};

pub const DEFAULT_CUTOFFS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    /// Image file to extract from.
    Path(String),
    /// Row of a precomputed descriptor matrix.
    Descriptor(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRecord {
    #[serde(flatten)]
    pub source: RecordSource,
    pub subject: String,
}

/// JSON array of `{"path": .., "subject": ..}` or
/// `{"descriptor": row, "subject": ..}` objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub records: Vec<FaceRecord>,
}

impl DatasetManifest {
    pub fn new(records: Vec<FaceRecord>) -> Result<Self> {
        let m = DatasetManifest { records };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "manifest needs at least 2 records, has {}",
                self.records.len()
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn subjects(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.subject.as_str()).collect()
    }
}

/// Precision and recall of one query at cutoff `m`:
/// `hits / m` and `hits / |relevant|`, counting hits among the first `m`
/// retrieved ids.
pub fn precision_recall(retrieved: &[usize], relevant: &HashSet<usize>, m: usize) -> Result<(f64, f64)> {
    precision_recall_with(retrieved, |id| relevant.contains(&id), relevant.len(), m)
}

fn precision_recall_with(
    retrieved: &[usize],
    is_relevant: impl Fn(usize) -> bool,
    relevant_count: usize,
    m: usize,
) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }
    if relevant_count == 0 {
        return Err(Error::NoRelevant);
    }
    let hits = retrieved.iter().take(m).filter(|&&id| is_relevant(id)).count();
    Ok((hits as f64 / m as f64, hits as f64 / relevant_count as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryScore {
    pub subject: String,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeans {
    pub subject: String,
    pub queries: usize,
    pub mp: f64,
    pub mr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub arp: f64,
    pub arr: f64,
    /// Sorted by subject.
    pub subjects: Vec<SubjectMeans>,
}

/// Two-level average: mean per subject first, then the unweighted mean of
/// the subject means.
pub fn aggregate(scores: &[QueryScore]) -> Result<Aggregate> {
    let mut groups: BTreeMap<&str, (usize, f64, f64)> = BTreeMap::new();
    for s in scores {
        let g = groups.entry(&s.subject).or_default();
        g.0 += 1;
        g.1 += s.precision;
        g.2 += s.recall;
    }
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no queries to aggregate".into()));
    }
    let subjects: Vec<SubjectMeans> = groups
        .into_iter()
        .map(|(subject, (n, p, r))| SubjectMeans {
            subject: subject.to_owned(),
            queries: n,
            mp: p / n as f64,
            mr: r / n as f64,
        })
        .collect();
    let k = subjects.len() as f64;
    Ok(Aggregate {
        arp: subjects.iter().map(|s| s.mp).sum::<f64>() / k,
        arr: subjects.iter().map(|s| s.mr).sum::<f64>() / k,
        subjects,
    })
}

/// Harmonic mean of ARP and ARR; 0 when both are 0.
pub fn f_score(arp: f64, arr: f64) -> f64 {
    if arp + arr == 0.0 {
        0.0
    } else {
        2.0 * arp * arr / (arp + arr)
    }
}

/// One query's input to ANMRR.
#[derive(Debug, Clone, PartialEq)]
pub struct AnmrrQuery {
    /// Number of relevant items, `NG(q)`.
    pub ground_truth: usize,
    /// 1-based ranks of relevant items that were retrieved. Relevant items
    /// missing from the list are charged the penalty rank.
    pub relevant_ranks: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnmrrParams {
    /// Retrieved-list length; relevant items ranked beyond it take the
    /// penalty rank. `None` uses only the `K(q)` horizon.
    pub window: Option<usize>,
}

/// `K(q) = min(4 NG, 2 GTM)`, never below 1.
pub fn anmrr_horizon(ground_truth: usize, gtm: usize) -> usize {
    (4 * ground_truth).min(2 * gtm).max(1)
}

/// Normalized modified retrieval rank of one query.
pub fn nmrr(query: &AnmrrQuery, gtm: usize, window: Option<usize>) -> Result<f64> {
    let ng = query.ground_truth;
    if ng == 0 {
        return Err(Error::NoRelevant);
    }
    if query.relevant_ranks.len() > ng {
        return Err(Error::InvalidArgument(format!(
            "{} relevant ranks for NG = {ng}",
            query.relevant_ranks.len()
        )));
    }
    let k = anmrr_horizon(ng, gtm);
    let limit = window.map_or(k, |w| w.min(k));
    let penalty = 1.25 * k as f64;
    let found: f64 = query
        .relevant_ranks
        .iter()
        .map(|&r| if r >= 1 && r <= limit { r as f64 } else { penalty })
        .sum();
    let missing = (ng - query.relevant_ranks.len()) as f64;
    let ng_f = ng as f64;
    let avr = (found + missing * penalty) / ng_f;
    let mrr = avr - 0.5 - 0.5 * ng_f;
    let denom = penalty - 0.5 - 0.5 * ng_f;
    if denom <= 0.0 {
        return Err(Error::Internal(format!("NMRR denominator {denom} for NG = {ng}, K = {k}")));
    }
    Ok(mrr / denom)
}

/// Mean NMRR over queries; `GTM` is the largest `NG` among them.
pub fn anmrr(queries: &[AnmrrQuery], params: AnmrrParams) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries for ANMRR".into()));
    }
    let gtm = queries.iter().map(|q| q.ground_truth).max().unwrap_or(0);
    let mut total = 0.0;
    for q in queries {
        total += nmrr(q, gtm, params.window)?;
    }
    Ok(total / queries.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub cutoff: usize,
    pub arp: f64,
    pub arr: f64,
    pub f_score: f64,
    pub anmrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub subject: String,
    pub queries: usize,
    /// Mean precision, aligned with the report's cutoffs.
    pub mp: Vec<f64>,
    pub mr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub distance: DistanceKind,
    pub anmrr_windowed: bool,
    pub queries: usize,
    /// Probes whose subject has no other image.
    pub skipped_queries: usize,
    /// Queries where a distance tie straddles a cutoff, so tie-breaking by
    /// index decided membership of the top-m list.
    pub tie_affected_queries: usize,
    pub degenerate: bool,
    pub cutoffs: Vec<CutoffMetrics>,
    pub subjects: Vec<SubjectMetrics>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub variant: String,
    pub distance: DistanceKind,
    pub cutoffs: Vec<usize>,
    /// Window ANMRR at each cutoff instead of using the full `K(q)` horizon.
    pub anmrr_windowed: bool,
}

struct ProbeResult {
    ground_truth: usize,
    /// Top of the ranking as (distance, record index).
    ranked: Vec<(f64, usize)>,
}

/// Leave-one-out evaluation of `descriptors` (one per label). Probes run in
/// parallel on the current rayon pool; the report does not depend on the
/// number of workers.
pub fn run_experiment(labels: &[&str], descriptors: &[&[f32]], options: &ExperimentOptions) -> Result<MetricsReport> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 records, have {n}")));
    }
    if descriptors.len() != n {
        return Err(Error::Validation {
            layer: options.variant.clone(),
            expected: format!("{n} descriptors"),
            found: format!("{}", descriptors.len()),
        });
    }
    let dim = descriptors[0].len();
    for (i, d) in descriptors.iter().enumerate() {
        if d.len() != dim {
            return Err(Error::shape(None, format!("descriptor {i} has length {}, expected {dim}", d.len())));
        }
        distance(options.distance, d, d)?;
    }
    let mut cutoffs = options.cutoffs.clone();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let Some(&max_cutoff) = cutoffs.last() else {
        return Err(Error::InvalidArgument("no cutoffs".into()));
    };
    if cutoffs[0] == 0 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }

    let mut subject_size: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *subject_size.entry(l).or_default() += 1;
    }
    let ng_of = |i: usize| subject_size[labels[i]] - 1;
    let gtm = (0..n).map(ng_of).max().unwrap_or(0);
    if gtm == 0 {
        return Err(Error::InvalidArgument("no subject has two or more records".into()));
    }

    let probes: Vec<Option<ProbeResult>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ground_truth = ng_of(i);
            if ground_truth == 0 {
                return None;
            }
            let horizon = if options.anmrr_windowed { 0 } else { anmrr_horizon(ground_truth, gtm) };
            let depth = (max_cutoff + 1).max(horizon);
            let scored: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (distance_unchecked(options.distance, descriptors[i], descriptors[j]), j))
                .collect();
            Some(ProbeResult {
                ground_truth,
                ranked: top_k(scored, depth),
            })
        })
        .collect();

    let skipped = probes.iter().filter(|p| p.is_none()).count();
    let mut tie_affected = 0;
    let mut per_cutoff_scores: Vec<Vec<QueryScore>> = vec![Vec::new(); cutoffs.len()];
    let mut anmrr_queries = Vec::new();
    for (i, probe) in probes.iter().enumerate() {
        let Some(p) = probe else { continue };
        let subject = labels[i];
        let ids: Vec<usize> = p.ranked.iter().map(|r| r.1).collect();
        let is_relevant = |j: usize| labels[j] == subject;
        for (slot, &m) in cutoffs.iter().enumerate() {
            let (precision, recall) = precision_recall_with(&ids, is_relevant, p.ground_truth, m)?;
            per_cutoff_scores[slot].push(QueryScore {
                subject: subject.to_owned(),
                precision,
                recall,
            });
        }
        if cutoffs
            .iter()
            .any(|&m| m < p.ranked.len() && p.ranked[m - 1].0 == p.ranked[m].0)
        {
            tie_affected += 1;
        }
        anmrr_queries.push(AnmrrQuery {
            ground_truth: p.ground_truth,
            relevant_ranks: ids
                .iter()
                .enumerate()
                .filter(|(_, &j)| is_relevant(j))
                .map(|(r, _)| r + 1)
                .collect(),
        });
    }

    let mut metrics = Vec::with_capacity(cutoffs.len());
    let mut subjects: Vec<SubjectMetrics> = Vec::new();
    for (slot, &m) in cutoffs.iter().enumerate() {
        let agg = aggregate(&per_cutoff_scores[slot])?;
        let window = options.anmrr_windowed.then_some(m);
        metrics.push(CutoffMetrics {
            cutoff: m,
            arp: agg.arp,
            arr: agg.arr,
            f_score: f_score(agg.arp, agg.arr),
            anmrr: anmrr(&anmrr_queries, AnmrrParams { window })?,
        });
        if slot == 0 {
            subjects = agg
                .subjects
                .iter()
                .map(|s| SubjectMetrics {
                    subject: s.subject.clone(),
                    queries: s.queries,
                    mp: Vec::with_capacity(cutoffs.len()),
                    mr: Vec::with_capacity(cutoffs.len()),
                })
                .collect();
        }
        for (dst, src) in subjects.iter_mut().zip(&agg.subjects) {
            dst.mp.push(src.mp);
            dst.mr.push(src.mr);
        }
    }

    if skipped > 0 {
        log::warn!("{skipped} probe(s) skipped: subject has a single record");
    }
    Ok(MetricsReport {
        variant: options.variant.clone(),
        distance: options.distance,
        anmrr_windowed: options.anmrr_windowed,
        queries: anmrr_queries.len(),
        skipped_queries: skipped,
        tie_affected_queries: tie_affected,
        degenerate: tie_affected > 0,
        cutoffs: metrics,
        subjects,
    })
}

const CSV_HEADER: &str = "variant,distance,cutoff,ARP%,ARR%,F%,ANMRR%";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// One row per (variant, distance, cutoff), values in percent.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for c in &r.cutoffs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&r.variant),
                r.distance,
                c.cutoff,
                pct(c.arp),
                pct(c.arr),
                pct(c.f_score),
                pct(c.anmrr)
            );
        }
    }
    out
}

/// Variants as columns: one row per (distance, cutoff, metric).
pub fn reports_to_pivot_csv(reports: &[MetricsReport]) -> String {
    let mut variants: Vec<&str> = Vec::new();
    let mut keys: Vec<(DistanceKind, usize)> = Vec::new();
    for r in reports {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
        for c in &r.cutoffs {
            if !keys.contains(&(r.distance, c.cutoff)) {
                keys.push((r.distance, c.cutoff));
            }
        }
    }
    let lookup = |variant: &str, distance: DistanceKind, cutoff: usize| {
        reports
            .iter()
            .find(|r| r.variant == variant && r.distance == distance)
            .and_then(|r| r.cutoffs.iter().find(|c| c.cutoff == cutoff))
    };

    let mut out = String::from("distance,cutoff,metric");
    for v in &variants {
        out.push(',');
        out.push_str(&csv_field(v));
    }
    out.push('\n');
    let metrics: [(&str, fn(&CutoffMetrics) -> f64); 4] = [
        ("ARP%", |c| c.arp),
        ("ARR%", |c| c.arr),
        ("F%", |c| c.f_score),
        ("ANMRR%", |c| c.anmrr),
    ];
    for (distance, cutoff) in keys {
        for (name, get) in metrics {
            let _ = write!(out, "{distance},{cutoff},{name}");
            for v in &variants {
                out.push(',');
                if let Some(c) = lookup(v, distance, cutoff) {
                    out.push_str(&pct(get(c)));
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn precision_recall_examples() {
        let retrieved: Vec<usize> = (0..10).collect();
        let relevant: HashSet<usize> = (0..7).chain(100..113).collect();
        assert_eq!(relevant.len(), 20);
        let (p, r) = precision_recall(&retrieved, &relevant, 10).unwrap();
        assert!(close(p, 0.7) && close(r, 0.35));

        let relevant: HashSet<usize> = (0..10).collect();
        assert_eq!(precision_recall(&retrieved, &relevant, 5).unwrap().0, 1.0);

        let relevant: HashSet<usize> = (50..60).collect();
        assert_eq!(precision_recall(&retrieved, &relevant, 10).unwrap(), (0.0, 0.0));

        assert!(matches!(precision_recall(&retrieved, &HashSet::new(), 1), Err(Error::NoRelevant)));
        assert!(precision_recall(&retrieved, &relevant, 0).is_err());
    }

    #[test]
    fn recall_at_ground_truth_is_one() {
        let relevant: HashSet<usize> = [3, 4, 5].into();
        let (_, r) = precision_recall(&[3, 5, 4, 0, 1], &relevant, 3).unwrap();
        assert_eq!(r, 1.0);
    }

    fn score(subject: &str, p: f64) -> QueryScore {
        QueryScore { subject: subject.into(), precision: p, recall: p }
    }

    #[test]
    fn two_level_average_ignores_subject_sizes() {
        // Subject a: 1 query at 1.0; subject b: 3 queries at 0.5.
        let scores = vec![score("a", 1.0), score("b", 0.5), score("b", 0.5), score("b", 0.5)];
        let agg = aggregate(&scores).unwrap();
        assert!(close(agg.arp, 0.75));
        // A flat mean would give 0.625.
        let flat = scores.iter().map(|s| s.precision).sum::<f64>() / scores.len() as f64;
        assert!(close(flat, 0.625));

        assert_eq!(aggregate(&[score("a", 1.0), score("b", 1.0)]).unwrap().arp, 1.0);
        let single = aggregate(&[score("a", 0.2), score("a", 0.4)]).unwrap();
        assert!(close(single.arp, single.subjects[0].mp));
    }

    #[test]
    fn f_score_examples() {
        assert!(close(f_score(0.4, 0.4), 0.4));
        assert!(close(f_score(0.8, 0.2), 0.32));
        assert_eq!(f_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn anmrr_anchors() {
        let perfect: Vec<AnmrrQuery> = (1..=5)
            .map(|ng| AnmrrQuery { ground_truth: ng, relevant_ranks: (1..=ng).collect() })
            .collect();
        assert_eq!(anmrr(&perfect, AnmrrParams::default()).unwrap(), 0.0);

        let miss: Vec<AnmrrQuery> = (1..=5)
            .map(|ng| AnmrrQuery { ground_truth: ng, relevant_ranks: vec![] })
            .collect();
        assert_eq!(anmrr(&miss, AnmrrParams::default()).unwrap(), 1.0);

        let q = AnmrrQuery { ground_truth: 2, relevant_ranks: vec![1, 3] };
        assert!((anmrr(&[q], AnmrrParams::default()).unwrap() - 0.5 / 3.5).abs() < 1e-12);
    }

    #[test]
    fn window_penalizes_late_items() {
        let q = AnmrrQuery { ground_truth: 2, relevant_ranks: vec![1, 3] };
        let windowed = anmrr(&[q.clone()], AnmrrParams { window: Some(2) }).unwrap();
        // Rank 3 beyond the window becomes 1.25 * 4 = 5: AVR 3, MRR 1.5.
        assert!((windowed - 1.5 / 3.5).abs() < 1e-12);
        assert_eq!(anmrr_horizon(2, 2), 4);
        assert_eq!(anmrr_horizon(63, 63), 126);
        assert_eq!(anmrr_horizon(1, 63), 4);
    }

    fn opts(cutoffs: &[usize], windowed: bool) -> ExperimentOptions {
        ExperimentOptions {
            variant: "35AR".into(),
            distance: DistanceKind::ChiSquare,
            cutoffs: cutoffs.to_vec(),
            anmrr_windowed: windowed,
        }
    }

    #[test]
    fn two_clusters_are_retrieved_perfectly() {
        let labels = ["a", "a", "a", "b", "b", "b"];
        let data: Vec<[f32; 2]> = vec![[1.0, 0.0], [1.1, 0.0], [0.9, 0.1], [0.0, 9.0], [0.1, 9.2], [0.0, 8.8]];
        let refs: Vec<&[f32]> = data.iter().map(|d| &d[..]).collect();
        let report = run_experiment(&labels, &refs, &opts(&[1, 2], true)).unwrap();
        assert_eq!(report.cutoffs[0].arp, 1.0);
        assert_eq!(report.cutoffs[1].arp, 1.0);
        assert_eq!(report.cutoffs[1].arr, 1.0);
        assert_eq!(report.cutoffs[1].anmrr, 0.0);
        assert!(!report.degenerate);
    }

    #[test]
    fn single_pair() {
        let labels = ["a", "a"];
        let refs: Vec<&[f32]> = vec![&[1.0], &[2.0]];
        let report = run_experiment(&labels, &refs, &opts(&[1], false)).unwrap();
        assert_eq!(report.cutoffs[0].arp, 1.0);
    }

    #[test]
    fn identical_descriptors_are_flagged() {
        let labels = ["a", "b", "a", "b"];
        let refs: Vec<&[f32]> = vec![&[1.0]; 4];
        let report = run_experiment(&labels, &refs, &opts(&[1], false)).unwrap();
        assert!(report.degenerate);
        // Probe 0 ranks [1, 2, 3] by index: first hit is wrong subject.
        let again = run_experiment(&labels, &refs, &opts(&[1], false)).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn singleton_subjects_are_skipped() {
        let labels = ["a", "a", "loner"];
        let refs: Vec<&[f32]> = vec![&[1.0], &[1.1], &[5.0]];
        let report = run_experiment(&labels, &refs, &opts(&[1], false)).unwrap();
        assert_eq!(report.skipped_queries, 1);
        assert_eq!(report.queries, 2);
        assert_eq!(report.subjects.len(), 1);
    }

    #[test]
    fn validation_errors() {
        let labels = ["a", "a"];
        let refs: Vec<&[f32]> = vec![&[1.0]];
        assert!(matches!(run_experiment(&labels, &refs, &opts(&[1], false)), Err(Error::Validation { .. })));
        let refs: Vec<&[f32]> = vec![&[1.0], &[1.0, 2.0]];
        assert!(matches!(run_experiment(&labels, &refs, &opts(&[1], false)), Err(Error::Shape { .. })));
        let refs: Vec<&[f32]> = vec![&[1.0], &[-1.0]];
        assert!(matches!(run_experiment(&labels, &refs, &opts(&[1], false)), Err(Error::Domain(_))));
        let refs: Vec<&[f32]> = vec![&[1.0], &[2.0]];
        assert!(run_experiment(&labels, &refs, &opts(&[0], false)).is_err());
        assert!(run_experiment(&["a", "b"], &refs, &opts(&[1], false)).is_err());
    }

    #[test]
    fn manifest_json_forms() {
        let json = r#"[{"path": "a/1.png", "subject": "a"}, {"descriptor": 3, "subject": "b"}]"#;
        let m: DatasetManifest = serde_json::from_str(json).unwrap();
        assert_eq!(m.records[0].source, RecordSource::Path("a/1.png".into()));
        assert_eq!(m.records[1].source, RecordSource::Descriptor(3));
        assert_eq!(m.subjects(), vec!["a", "b"]);
        let back: DatasetManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(DatasetManifest::new(m.records[..1].to_vec()).is_err());
    }

    #[test]
    fn csv_layouts() {
        let report = MetricsReport {
            variant: "33,35AR".into(),
            distance: DistanceKind::ChiSquare,
            anmrr_windowed: false,
            queries: 4,
            skipped_queries: 0,
            tie_affected_queries: 0,
            degenerate: false,
            cutoffs: vec![CutoffMetrics { cutoff: 10, arp: 0.9769, arr: 0.3161, f_score: 0.4623, anmrr: 0.0038 }],
            subjects: vec![],
        };
        assert_eq!(
            reports_to_csv(&[report.clone()]),
            "variant,distance,cutoff,ARP%,ARR%,F%,ANMRR%\n\"33,35AR\",chisq,10,97.69,31.61,46.23,0.38\n"
        );
        let pivot = reports_to_pivot_csv(&[report]);
        assert!(pivot.starts_with("distance,cutoff,metric,\"33,35AR\"\nchisq,10,ARP%,97.69\n"));
        assert_eq!(pivot.lines().count(), 5);
    }
}
