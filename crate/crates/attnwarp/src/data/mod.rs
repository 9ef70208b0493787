//! Datasets: synthetic generation, fixed-length resampling, normalization,
//! and file I/O.

pub mod io;
pub mod synth;

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::core::{LabeledSeries, TimeSeries};
use crate::error::{Error, Result};

pub use io::{load_dataset, load_points_series, save_dataset};
pub use synth::{generate_synthetic, SynthConfig};

/// Per-dimension z-score parameters recorded after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Normalization mode for [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeMode {
    None,
    /// Per-dimension z-score with statistics from the train split only.
    ZScore,
}

/// A collection of labeled series sharing one (W, K) shape, with named
/// disjoint splits and provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<LabeledSeries>,
    splits: BTreeMap<String, Vec<usize>>,
    provenance: String,
    normalization: Option<Normalization>,
}

pub const TRAIN: &str = "train";
pub const VAL: &str = "val";
pub const TEST: &str = "test";

impl Dataset {
    pub fn new(items: Vec<LabeledSeries>, provenance: impl Into<String>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InconsistentShapes("dataset has no items".into()));
        }
        let (w, k) = (items[0].series.w(), items[0].series.k());
        for (i, it) in items.iter().enumerate() {
            if it.series.w() != w || it.series.k() != k {
                return Err(Error::InconsistentShapes(format!(
                    "item {} is {}x{}, dataset is {}x{}",
                    i,
                    it.series.w(),
                    it.series.k(),
                    w,
                    k
                )));
            }
        }
        Ok(Self {
            items,
            splits: BTreeMap::new(),
            provenance: provenance.into(),
            normalization: None,
        })
    }

    /// Registers a named split; indices must be in range, and no index may
    /// appear in more than one split.
    pub fn set_split(&mut self, name: &str, mut indices: Vec<usize>) -> Result<()> {
        indices.sort_unstable();
        indices.dedup();
        if indices.iter().any(|&i| i >= self.items.len()) {
            return Err(Error::InconsistentShapes(format!(
                "split '{name}' references an out-of-range item"
            )));
        }
        for (other, idxs) in &self.splits {
            if other != name && idxs.iter().any(|i| indices.binary_search(i).is_ok()) {
                return Err(Error::InconsistentShapes(format!(
                    "split '{name}' overlaps split '{other}'"
                )));
            }
        }
        self.splits.insert(name.to_string(), indices);
        Ok(())
    }

    pub fn items(&self) -> &[LabeledSeries] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn w(&self) -> usize {
        self.items[0].series.w()
    }

    pub fn k(&self) -> usize {
        self.items[0].series.k()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn splits(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.splits
    }

    pub fn split(&self, name: &str) -> Option<&[usize]> {
        self.splits.get(name).map(|v| v.as_slice())
    }

    /// Items of a split in index order; empty when the split is undefined.
    pub fn split_items(&self, name: &str) -> Vec<&LabeledSeries> {
        self.split(name)
            .map(|idxs| idxs.iter().map(|&i| &self.items[i]).collect())
            .unwrap_or_default()
    }
}

/// Linear interpolation of each dimension onto `w` uniformly spaced
/// positions over the original index range; endpoints are preserved exactly.
pub fn resample(x: &TimeSeries, w: usize) -> Result<TimeSeries> {
    if x.w() < 2 {
        return Err(Error::TooShort { need: 2, got: x.w() });
    }
    if w < 2 {
        return Err(Error::InvalidConfig("target length must be >= 2".into()));
    }
    let (l, k) = (x.w(), x.k());
    let mut out = Array2::zeros((w, k));
    for i in 0..w {
        let pos = (i * (l - 1)) as f64 / (w - 1) as f64;
        let idx = pos.floor() as usize;
        let frac = pos - idx as f64;
        for d in 0..k {
            out[[i, d]] = if frac == 0.0 {
                x.values()[[idx, d]]
            } else {
                (1.0 - frac) * x.values()[[idx, d]] + frac * x.values()[[idx + 1, d]]
            };
        }
    }
    TimeSeries::new(out)
}

/// Applies the chosen normalization; statistics come from the train split
/// only and are applied to every item, with the transform recorded in the
/// dataset metadata.
pub fn normalize(ds: &Dataset, mode: NormalizeMode) -> Result<Dataset> {
    match mode {
        NormalizeMode::None => Ok(ds.clone()),
        NormalizeMode::ZScore => {
            let train = ds.split_items(TRAIN);
            if train.is_empty() {
                return Err(Error::EmptyTrainSplit);
            }
            let k = ds.k();
            let mut mean = vec![0.0; k];
            let mut count = 0usize;
            for item in &train {
                for row in item.series.values().rows() {
                    for (d, v) in row.iter().enumerate() {
                        mean[d] += v;
                    }
                }
                count += item.series.w();
            }
            for m in mean.iter_mut() {
                *m /= count as f64;
            }
            let mut var = vec![0.0; k];
            for item in &train {
                for row in item.series.values().rows() {
                    for (d, v) in row.iter().enumerate() {
                        var[d] += (v - mean[d]) * (v - mean[d]);
                    }
                }
            }
            let std: Vec<f64> = var
                .iter()
                .map(|v| {
                    let s = (v / count as f64).sqrt();
                    if s < 1e-12 {
                        1.0
                    } else {
                        s
                    }
                })
                .collect();

            let items = ds
                .items
                .iter()
                .map(|it| {
                    let mut values = it.series.values().clone();
                    for mut row in values.rows_mut() {
                        for (d, v) in row.iter_mut().enumerate() {
                            *v = (*v - mean[d]) / std[d];
                        }
                    }
                    Ok(LabeledSeries {
                        series: TimeSeries::new(values)?,
                        label: it.label.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Dataset {
                items,
                splits: ds.splits.clone(),
                provenance: ds.provenance.clone(),
                normalization: Some(Normalization { mean, std }),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp() -> TimeSeries {
        TimeSeries::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap()
    }

    #[test]
    fn resample_ramp_interpolates_linearly() {
        let out = resample(&ramp(), 5).unwrap();
        let expect = [0.0, 0.5, 1.0, 1.5, 2.0];
        for (v, e) in out.values().iter().zip(expect) {
            assert_eq!(*v, e);
        }
    }

    #[test]
    fn resample_same_length_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = TimeSeries::new(Array2::from_shape_fn((9, 3), |_| rng.random_range(-5.0..5.0)))
            .unwrap();
        let out = resample(&x, 9).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn resample_is_idempotent_and_preserves_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let l = rng.random_range(2..30);
            let w = rng.random_range(2..30);
            let x = TimeSeries::new(Array2::from_shape_fn((l, 2), |_| {
                rng.random_range(-5.0..5.0)
            }))
            .unwrap();
            let once = resample(&x, w).unwrap();
            let twice = resample(&once, w).unwrap();
            for (a, b) in once.values().iter().zip(twice.values().iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            for d in 0..2 {
                assert_eq!(once.values()[[0, d]], x.values()[[0, d]]);
                assert_eq!(once.values()[[w - 1, d]], x.values()[[l - 1, d]]);
            }
        }
    }

    #[test]
    fn resample_rejects_single_point_input() {
        let x = TimeSeries::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(resample(&x, 4), Err(Error::TooShort { .. })));
    }

    #[test]
    fn splits_must_be_disjoint() {
        let items = vec![
            LabeledSeries::new(ramp(), "a").unwrap(),
            LabeledSeries::new(ramp(), "b").unwrap(),
        ];
        let mut ds = Dataset::new(items, "test").unwrap();
        ds.set_split(TRAIN, vec![0]).unwrap();
        assert!(ds.set_split(VAL, vec![0]).is_err());
        ds.set_split(VAL, vec![1]).unwrap();
    }

    #[test]
    fn normalize_none_is_identity() {
        let cfg = SynthConfig {
            n_classes: 2,
            samples_per_class: 4,
            w: 8,
            k: 2,
            ..SynthConfig::default_classification()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(normalize(&ds, NormalizeMode::None).unwrap(), ds);
    }

    #[test]
    fn zscore_uses_train_statistics_only() {
        let cfg = SynthConfig {
            n_classes: 3,
            samples_per_class: 10,
            w: 16,
            k: 2,
            ..SynthConfig::default_classification()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let normed = normalize(&ds, NormalizeMode::ZScore).unwrap();
        let k = normed.k();
        let stats = |items: &[&LabeledSeries]| {
            let mut mean = vec![0.0; k];
            let mut n = 0usize;
            for it in items {
                for row in it.series.values().rows() {
                    for (d, v) in row.iter().enumerate() {
                        mean[d] += v;
                    }
                }
                n += it.series.w();
            }
            for m in mean.iter_mut() {
                *m /= n as f64;
            }
            let mut var = vec![0.0; k];
            for it in items {
                for row in it.series.values().rows() {
                    for (d, v) in row.iter().enumerate() {
                        var[d] += (v - mean[d]) * (v - mean[d]);
                    }
                }
            }
            let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
            (mean, std)
        };
        let (train_mean, train_std) = stats(&normed.split_items(TRAIN));
        for d in 0..k {
            assert!(train_mean[d].abs() < 1e-9);
            assert!((train_std[d] - 1.0).abs() < 1e-6);
        }
        // Validation statistics are computed on different samples and do not
        // collapse to exactly (0, 1).
        let (val_mean, val_std) = stats(&normed.split_items(VAL));
        let off = val_mean
            .iter()
            .map(|m| m.abs())
            .chain(val_std.iter().map(|s| (s - 1.0).abs()))
            .fold(0.0f64, f64::max);
        assert!(off > 1e-9);
        assert!(normed.normalization().is_some());
    }

    #[test]
    fn zscore_without_train_split_is_rejected() {
        let items = vec![LabeledSeries::new(ramp(), "a").unwrap()];
        let ds = Dataset::new(items, "test").unwrap();
        assert!(matches!(
            normalize(&ds, NormalizeMode::ZScore),
            Err(Error::EmptyTrainSplit)
        ));
    }

    use ndarray::Array2;
}
