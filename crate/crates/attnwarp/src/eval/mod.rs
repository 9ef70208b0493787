//! Evaluation harnesses: k-NN classification with confusion-pair reporting,
//! verification with reference averaging and EER, and distance-histogram
//! export.

pub mod eer;
pub mod report;

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::core::{LabeledSeries, TimeSeries, UNetParams};
use crate::data::synth::{is_forgery, subject_of};
use crate::data::{Dataset, TEST, TRAIN};
use crate::dtw::dtw_distance;
use crate::error::{Error, Result};
use crate::warpnet::model_distance;

pub use eer::{compute_eer, sweep_eer};
pub use report::{parse_report, ReportSummary};

/// A symmetric-enough distance between two series; implementations must be
/// safe to call from multiple threads.
pub trait PairMetric: Sync {
    fn distance(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64>;
    /// Short identifier recorded in distance-table metadata.
    fn id(&self) -> String;
}

/// The learned metric: U-Net forward, softmaxed paths, symmetric residual.
pub struct ModelMetric<'a> {
    pub params: &'a UNetParams,
}

impl PairMetric for ModelMetric<'_> {
    fn distance(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
        model_distance(self.params, a, b)
    }

    fn id(&self) -> String {
        format!("model({} params)", self.params.param_count())
    }
}

/// The non-parametric DTW baseline on raw series.
pub struct DtwMetric;

impl PairMetric for DtwMetric {
    fn distance(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
        dtw_distance(a, b)
    }

    fn id(&self) -> String {
        "dtw".into()
    }
}

/// Query x reference distance matrix with provenance metadata.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    pub values: Array2<f64>,
    pub metric_id: String,
    pub dataset_id: String,
}

/// Fills the full query x reference table; rows are queries. Cells are
/// computed independently, in parallel, into disjoint slots.
pub fn distance_table(
    queries: &[&TimeSeries],
    refs: &[&TimeSeries],
    metric: &dyn PairMetric,
    dataset_id: &str,
) -> Result<DistanceTable> {
    let (nq, nr) = (queries.len(), refs.len());
    let mut cells = vec![0.0f64; nq * nr];
    let results: Vec<Result<()>> = cells
        .par_chunks_mut(nr.max(1))
        .enumerate()
        .map(|(qi, row)| {
            for (ri, slot) in row.iter_mut().enumerate() {
                *slot = metric.distance(queries[qi], refs[ri])?;
            }
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    if !cells.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::NonFiniteInput);
    }
    Ok(DistanceTable {
        values: Array2::from_shape_vec((nq, nr), cells)
            .map_err(|e| Error::InconsistentShapes(e.to_string()))?,
        metric_id: metric.id(),
        dataset_id: dataset_id.to_string(),
    })
}

/// Majority vote over the k nearest distances. Vote ties break toward the
/// label with the smallest mean distance among its votes, then toward the
/// lexicographically smallest label.
pub fn knn_label_from_distances(dists: &[f64], labels: &[&str], k: usize) -> Result<String> {
    if dists.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if k == 0 || k > dists.len() {
        return Err(Error::InvalidConfig(format!(
            "k must be in 1..={}, got {k}",
            dists.len()
        )));
    }
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for &i in &order[..k] {
        let e = votes.entry(labels[i]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += dists[i];
    }
    let mut best: Option<(&str, usize, f64)> = None;
    for (label, (count, sum)) in votes {
        let mean = sum / count as f64;
        let wins = match best {
            None => true,
            Some((_, bc, bm)) => count > bc || (count == bc && mean < bm),
        };
        if wins {
            best = Some((label, count, mean));
        }
    }
    Ok(best.expect("k >= 1").0.to_string())
}

/// Classifies one query against a labeled training set.
pub fn knn_classify(
    query: &TimeSeries,
    train: &[&LabeledSeries],
    metric: &dyn PairMetric,
    k: usize,
) -> Result<String> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let dists = train
        .iter()
        .map(|t| metric.distance(query, &t.series))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<&str> = train.iter().map(|t| t.label.as_str()).collect();
    knn_label_from_distances(&dists, &labels, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classify,
    Verify,
}

/// Normalized distance histograms of matching and non-matching pairs plus
/// their overlap coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// bins + 1 edges; bin i spans [edges[i], edges[i+1]).
    pub edges: Vec<f64>,
    pub matching_counts: Vec<usize>,
    pub non_matching_counts: Vec<usize>,
    pub matching_density: Vec<f64>,
    pub non_matching_density: Vec<f64>,
    /// Sum of per-bin minima of the two densities.
    pub overlap: f64,
}

/// Histograms both score groups over a shared range with sum-to-1
/// normalization per group.
pub fn export_histograms(
    matching: &[f64],
    non_matching: &[f64],
    bins: usize,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be >= 1".into()));
    }
    if matching.is_empty() {
        return Err(Error::EmptyScoreList("matching"));
    }
    if non_matching.is_empty() {
        return Err(Error::EmptyScoreList("non-matching"));
    }
    let (lo, mut hi) = matching
        .iter()
        .chain(non_matching)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if hi == lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let bin_of = |v: f64| -> usize { (((v - lo) / width) as usize).min(bins - 1) };
    let mut matching_counts = vec![0usize; bins];
    for &v in matching {
        matching_counts[bin_of(v)] += 1;
    }
    let mut non_matching_counts = vec![0usize; bins];
    for &v in non_matching {
        non_matching_counts[bin_of(v)] += 1;
    }
    let matching_density: Vec<f64> = matching_counts
        .iter()
        .map(|&c| c as f64 / matching.len() as f64)
        .collect();
    let non_matching_density: Vec<f64> = non_matching_counts
        .iter()
        .map(|&c| c as f64 / non_matching.len() as f64)
        .collect();
    let overlap = matching_density
        .iter()
        .zip(&non_matching_density)
        .map(|(a, b)| a.min(*b))
        .sum();
    Ok(Histogram {
        edges,
        matching_counts,
        non_matching_counts,
        matching_density,
        non_matching_density,
        overlap,
    })
}

/// Accuracy or EER with confusion counts and distance histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: TaskKind,
    /// Accuracy for classification, EER for verification.
    pub value: f64,
    /// EER threshold (verification only).
    pub threshold: Option<f64>,
    pub n_test: usize,
    /// Ordered (true label, predicted label) -> misclassification count.
    pub confusion: BTreeMap<(String, String), usize>,
    pub histogram: Histogram,
}

/// k-NN evaluation of `query_split` against the train split.
pub fn classification_report_on(
    ds: &Dataset,
    query_split: &str,
    metric: &dyn PairMetric,
    k: usize,
    bins: usize,
) -> Result<EvalReport> {
    let train = ds.split_items(TRAIN);
    let queries = ds.split_items(query_split);
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if queries.is_empty() {
        return Err(Error::InsufficientData(format!(
            "split '{query_split}' is empty"
        )));
    }
    let q_series: Vec<&TimeSeries> = queries.iter().map(|i| &i.series).collect();
    let t_series: Vec<&TimeSeries> = train.iter().map(|i| &i.series).collect();
    let table = distance_table(&q_series, &t_series, metric, ds.provenance())?;
    let labels: Vec<&str> = train.iter().map(|t| t.label.as_str()).collect();

    let mut correct = 0usize;
    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut matching = Vec::new();
    let mut non_matching = Vec::new();
    for (qi, query) in queries.iter().enumerate() {
        let row = table.values.row(qi);
        let predicted = knn_label_from_distances(row.as_slice().unwrap(), &labels, k)?;
        if predicted == query.label {
            correct += 1;
        } else {
            *confusion
                .entry((query.label.clone(), predicted))
                .or_insert(0) += 1;
        }
        for (ti, item) in train.iter().enumerate() {
            if item.label == query.label {
                matching.push(row[ti]);
            } else {
                non_matching.push(row[ti]);
            }
        }
    }
    Ok(EvalReport {
        task: TaskKind::Classify,
        value: correct as f64 / queries.len() as f64,
        threshold: None,
        n_test: queries.len(),
        confusion,
        histogram: export_histograms(&matching, &non_matching, bins)?,
    })
}

/// k-NN evaluation of the test split against the train split.
pub fn classification_report(
    ds: &Dataset,
    metric: &dyn PairMetric,
    k: usize,
    bins: usize,
) -> Result<EvalReport> {
    classification_report_on(ds, TEST, metric, k, bins)
}

/// Mean distance from a probe to a set of reference series.
pub fn subject_distance(
    test: &TimeSeries,
    references: &[&TimeSeries],
    metric: &dyn PairMetric,
) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::NoReferences);
    }
    let mut sum = 0.0;
    for r in references {
        sum += metric.distance(test, r)?;
    }
    Ok(sum / references.len() as f64)
}

/// Verification protocol on one split: per subject, the first `n_refs`
/// genuine samples are references; remaining genuine samples and all
/// forgeries are probes scored by their mean distance to the references.
/// All probe scores are pooled into one ranking and summarized by the EER.
pub fn verification_report_on(
    ds: &Dataset,
    split: &str,
    metric: &dyn PairMetric,
    n_refs: usize,
    bins: usize,
) -> Result<EvalReport> {
    if n_refs == 0 {
        return Err(Error::NoReferences);
    }
    let items = ds.split_items(split);
    if items.is_empty() {
        return Err(Error::InsufficientData(format!("split '{split}' is empty")));
    }
    // Group by subject, preserving dataset order so "first n_refs genuine"
    // is well defined.
    let mut genuine: BTreeMap<&str, Vec<&LabeledSeries>> = BTreeMap::new();
    let mut forgeries: BTreeMap<&str, Vec<&LabeledSeries>> = BTreeMap::new();
    for item in &items {
        let subject = subject_of(&item.label);
        if is_forgery(&item.label) {
            forgeries.entry(subject).or_default().push(item);
        } else {
            genuine.entry(subject).or_default().push(item);
        }
    }
    let mut genuine_scores = Vec::new();
    let mut forgery_scores = Vec::new();
    for (subject, gens) in &genuine {
        if gens.len() < n_refs {
            return Err(Error::InsufficientData(format!(
                "subject '{subject}' has {} genuine samples, need {n_refs} references",
                gens.len()
            )));
        }
        let refs: Vec<&TimeSeries> = gens[..n_refs].iter().map(|i| &i.series).collect();
        for probe in &gens[n_refs..] {
            genuine_scores.push(subject_distance(&probe.series, &refs, metric)?);
        }
        for probe in forgeries.get(subject).map(|v| v.as_slice()).unwrap_or(&[]) {
            forgery_scores.push(subject_distance(&probe.series, &refs, metric)?);
        }
    }
    let (eer, threshold) = compute_eer(&genuine_scores, &forgery_scores)?;
    Ok(EvalReport {
        task: TaskKind::Verify,
        value: eer,
        threshold: Some(threshold),
        n_test: genuine_scores.len() + forgery_scores.len(),
        confusion: BTreeMap::new(),
        histogram: export_histograms(&genuine_scores, &forgery_scores, bins)?,
    })
}

/// Verification protocol on the test split.
pub fn verification_report(
    ds: &Dataset,
    metric: &dyn PairMetric,
    n_refs: usize,
    bins: usize,
) -> Result<EvalReport> {
    verification_report_on(ds, TEST, metric, n_refs, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic, SynthConfig};

    struct StubMetric;

    impl PairMetric for StubMetric {
        fn distance(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
            // Distance between first entries; enough to steer k-NN tests.
            Ok((a.values()[[0, 0]] - b.values()[[0, 0]]).abs())
        }

        fn id(&self) -> String {
            "stub".into()
        }
    }

    fn scalar(v: f64) -> TimeSeries {
        TimeSeries::from_rows(&[vec![v]]).unwrap()
    }

    #[test]
    fn knn_votes_majority() {
        let dists = [0.1, 0.2, 0.3, 5.0];
        let labels = ["x", "x", "y", "y"];
        assert_eq!(knn_label_from_distances(&dists, &labels, 3).unwrap(), "x");
    }

    #[test]
    fn knn_nearest_self_wins_at_k1() {
        let train: Vec<LabeledSeries> = [(0.0, "a"), (1.0, "b"), (2.0, "c")]
            .into_iter()
            .map(|(v, l)| LabeledSeries::new(scalar(v), l).unwrap())
            .collect();
        let refs: Vec<&LabeledSeries> = train.iter().collect();
        let got = knn_classify(&scalar(1.0), &refs, &StubMetric, 1).unwrap();
        assert_eq!(got, "b");
    }

    #[test]
    fn knn_three_way_tie_breaks_by_mean_distance() {
        let dists = [0.3, 0.2, 0.4];
        let labels = ["x", "y", "z"];
        assert_eq!(knn_label_from_distances(&dists, &labels, 3).unwrap(), "y");
        // Equal means fall back to lexicographic order.
        let dists = [0.2, 0.2, 0.2];
        assert_eq!(knn_label_from_distances(&dists, &labels, 3).unwrap(), "x");
    }

    #[test]
    fn knn_is_invariant_to_increasing_distance_transforms() {
        let dists = [0.5, 1.5, 0.25, 2.0, 0.75];
        let labels = ["a", "b", "b", "a", "a"];
        let base = knn_label_from_distances(&dists, &labels, 3).unwrap();
        let warped: Vec<f64> = dists.iter().map(|d| d.exp() + d * d).collect();
        assert_eq!(
            knn_label_from_distances(&warped, &labels, 3).unwrap(),
            base
        );
    }

    #[test]
    fn knn_rejects_empty_and_oversized_k() {
        assert!(matches!(
            knn_label_from_distances(&[], &[], 1),
            Err(Error::EmptyTrainingSet)
        ));
        assert!(matches!(
            knn_label_from_distances(&[1.0], &["a"], 2),
            Err(Error::InvalidConfig(_))
        ));
    }

    fn separated_dataset() -> Dataset {
        let cfg = SynthConfig {
            n_classes: 2,
            samples_per_class: 10,
            w: 12,
            k: 1,
            warp_strength: 0.1,
            noise_std: 0.01,
            ..SynthConfig::default_classification()
        };
        generate_synthetic(&cfg).unwrap()
    }

    #[test]
    fn dtw_metric_separates_the_easy_synthetic_set() {
        let ds = separated_dataset();
        let report = classification_report(&ds, &DtwMetric, 3, 10).unwrap();
        assert_eq!(report.value, 1.0);
        assert!(report.confusion.is_empty());
        assert_eq!(report.task, TaskKind::Classify);
    }

    struct AdversarialMetric;

    impl PairMetric for AdversarialMetric {
        fn distance(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
            // Inverts the DTW ranking so every query prefers the other class.
            Ok(1.0 / (1.0 + dtw_distance(a, b)?))
        }

        fn id(&self) -> String {
            "adversarial".into()
        }
    }

    #[test]
    fn all_misclassified_gives_zero_accuracy_and_full_confusion() {
        let ds = separated_dataset();
        let report = classification_report(&ds, &AdversarialMetric, 1, 10).unwrap();
        assert_eq!(report.value, 0.0);
        let miscounted: usize = report.confusion.values().sum();
        assert_eq!(miscounted, report.n_test);
    }

    #[test]
    fn confusion_counts_sum_to_misclassified_items() {
        let ds = separated_dataset();
        let report = classification_report(&ds, &StubMetric, 3, 10).unwrap();
        let wrong: usize = report.confusion.values().sum();
        let accuracy_wrong = report.n_test - (report.value * report.n_test as f64).round() as usize;
        assert_eq!(wrong, accuracy_wrong);
    }

    #[test]
    fn subject_distance_is_the_mean_and_permutation_invariant() {
        let probe = scalar(0.0);
        let refs = [scalar(1.0), scalar(2.0), scalar(3.0)];
        let r1: Vec<&TimeSeries> = refs.iter().collect();
        let d = subject_distance(&probe, &r1, &StubMetric).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        let r2: Vec<&TimeSeries> = refs.iter().rev().collect();
        assert_eq!(
            subject_distance(&probe, &r2, &StubMetric).unwrap(),
            d
        );
        let single = [&refs[0]];
        assert_eq!(subject_distance(&probe, &single, &StubMetric).unwrap(), 1.0);
        assert!(matches!(
            subject_distance(&probe, &[], &StubMetric),
            Err(Error::NoReferences)
        ));
    }

    #[test]
    fn histogram_cases() {
        // Disjoint supports: no shared mass.
        let h = export_histograms(&[0.0, 0.1], &[10.0, 10.1], 10).unwrap();
        assert_eq!(h.overlap, 0.0);
        // Identical samples: full overlap.
        let h = export_histograms(&[1.0, 1.0], &[1.0, 1.0], 5).unwrap();
        assert!((h.overlap - 1.0).abs() < 1e-12);
        // Densities are normalized per group; counts cover every pair.
        let h = export_histograms(&[0.0, 0.5, 1.0], &[0.2, 0.8], 4).unwrap();
        assert!((h.matching_density.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((h.non_matching_density.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(h.matching_counts.iter().sum::<usize>(), 3);
        assert_eq!(h.non_matching_counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn verification_protocol_runs_end_to_end_with_stub_metric() {
        let cfg = SynthConfig {
            n_classes: 5,
            samples_per_class: 8,
            w: 12,
            k: 1,
            forgeries_per_class: 4,
            forgery_strength: 1.5,
            split_fractions: (0.4, 0.2),
            noise_std: 0.02,
            warp_strength: 0.1,
            ..SynthConfig::default_classification()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let report = verification_report(&ds, &DtwMetric, 5, 10).unwrap();
        assert_eq!(report.task, TaskKind::Verify);
        // 2 test subjects, 3 genuine probes + 4 forgeries each.
        assert_eq!(report.n_test, 2 * (3 + 4));
        assert!(report.threshold.is_some());
        assert!((0.0..=1.0).contains(&report.value));
        // Distinct prototypes make the forgeries separable for DTW.
        assert!(report.value <= 0.25, "eer {}", report.value);
    }

    #[test]
    fn verification_requires_enough_references() {
        let cfg = SynthConfig {
            n_classes: 4,
            samples_per_class: 4,
            w: 12,
            k: 1,
            forgeries_per_class: 2,
            split_fractions: (0.5, 0.0),
            ..SynthConfig::default_classification()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert!(matches!(
            verification_report(&ds, &DtwMetric, 5, 10),
            Err(Error::InsufficientData(_))
        ));
    }
}
