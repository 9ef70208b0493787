//! Pair sampling for training batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::core::{MatchRatio, Pair};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// One sampled pair plus the dataset indices it came from, so DTW targets
/// can be cached by pair identity.
#[derive(Debug, Clone)]
pub struct BatchPair {
    pub a_idx: usize,
    pub b_idx: usize,
    pub pair: Pair,
}

/// A batch of pairs with z labels assigned by class equality.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub pairs: Vec<BatchPair>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn matching_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.pair.matching).count()
    }
}

/// Draws batches from one split of a dataset. With a [`MatchRatio`] the
/// batch holds exactly the configured matching count (rounded down) followed
/// by non-matching pairs; without one, pairs are drawn uniformly from all
/// distinct item pairs and labeled by class equality.
pub struct PairSampler<'a> {
    ds: &'a Dataset,
    indices: Vec<usize>,
    /// Dataset indices grouped by label, labels sorted.
    by_class: Vec<Vec<usize>>,
    /// Positions in `by_class` with at least two samples.
    multi_classes: Vec<usize>,
    batch_size: usize,
    ratio: Option<MatchRatio>,
    rng: ChaCha8Rng,
}

impl<'a> PairSampler<'a> {
    pub fn new(
        ds: &'a Dataset,
        split: &str,
        batch_size: usize,
        ratio: Option<MatchRatio>,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        let indices: Vec<usize> = ds
            .split(split)
            .ok_or_else(|| Error::InsufficientData(format!("split '{split}' is undefined")))?
            .to_vec();
        if indices.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "split '{split}' has {} items, need at least 2",
                indices.len()
            )));
        }
        let mut by_label: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
        for &i in &indices {
            by_label
                .entry(ds.items()[i].label.as_str())
                .or_default()
                .push(i);
        }
        let by_class: Vec<Vec<usize>> = by_label.into_values().collect();
        let multi_classes = by_class
            .iter()
            .enumerate()
            .filter(|(_, v)| v.len() >= 2)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            ds,
            indices,
            by_class,
            multi_classes,
            batch_size,
            ratio,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn make_pair(&self, a_idx: usize, b_idx: usize) -> Result<BatchPair> {
        let a = &self.ds.items()[a_idx];
        let b = &self.ds.items()[b_idx];
        Ok(BatchPair {
            a_idx,
            b_idx,
            pair: Pair::new(a.series.clone(), b.series.clone(), a.label == b.label)?,
        })
    }

    pub fn sample_batch(&mut self) -> Result<PairBatch> {
        let mut pairs = Vec::with_capacity(self.batch_size);
        match self.ratio {
            None => {
                for _ in 0..self.batch_size {
                    let a = self.rng.random_range(0..self.indices.len());
                    let mut b = self.rng.random_range(0..self.indices.len() - 1);
                    if b >= a {
                        b += 1;
                    }
                    pairs.push(self.make_pair(self.indices[a], self.indices[b])?);
                }
            }
            Some(ratio) => {
                let n_matching = ratio.matching_count(self.batch_size);
                let n_non_matching = self.batch_size - n_matching;
                if n_matching > 0 && self.multi_classes.is_empty() {
                    return Err(Error::InsufficientData(
                        "matching pairs need a class with at least 2 samples".into(),
                    ));
                }
                if n_non_matching > 0 && self.by_class.len() < 2 {
                    return Err(Error::InsufficientData(
                        "non-matching pairs need at least 2 classes".into(),
                    ));
                }
                for _ in 0..n_matching {
                    let class =
                        &self.by_class[self.multi_classes
                            [self.rng.random_range(0..self.multi_classes.len())]];
                    let a = self.rng.random_range(0..class.len());
                    let mut b = self.rng.random_range(0..class.len() - 1);
                    if b >= a {
                        b += 1;
                    }
                    pairs.push(self.make_pair(class[a], class[b])?);
                }
                for _ in 0..n_non_matching {
                    let ca = self.rng.random_range(0..self.by_class.len());
                    let mut cb = self.rng.random_range(0..self.by_class.len() - 1);
                    if cb >= ca {
                        cb += 1;
                    }
                    let a = self.by_class[ca][self.rng.random_range(0..self.by_class[ca].len())];
                    let b = self.by_class[cb][self.rng.random_range(0..self.by_class[cb].len())];
                    pairs.push(self.make_pair(a, b)?);
                }
            }
        }
        Ok(PairBatch { pairs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{LabeledSeries, TimeSeries};
    use crate::data::TRAIN;

    fn dataset(classes: usize, per_class: usize) -> Dataset {
        let mut items = Vec::new();
        for c in 0..classes {
            for s in 0..per_class {
                let series =
                    TimeSeries::from_rows(&[vec![c as f64], vec![s as f64]]).unwrap();
                items.push(LabeledSeries::new(series, format!("c{c}")).unwrap());
            }
        }
        let n = items.len();
        let mut ds = Dataset::new(items, "test").unwrap();
        ds.set_split(TRAIN, (0..n).collect()).unwrap();
        ds
    }

    #[test]
    fn ratio_batches_hold_the_configured_counts() {
        let ds = dataset(3, 6);
        let ratio = MatchRatio::new(1, 2).unwrap();
        let mut sampler = PairSampler::new(&ds, TRAIN, 15, Some(ratio), 0).unwrap();
        let batch = sampler.sample_batch().unwrap();
        assert_eq!(batch.len(), 15);
        assert_eq!(batch.matching_count(), 5);
        for p in &batch.pairs {
            assert_ne!(p.a_idx, p.b_idx);
            let la = &ds.items()[p.a_idx].label;
            let lb = &ds.items()[p.b_idx].label;
            assert_eq!(p.pair.matching, la == lb);
        }
    }

    #[test]
    fn single_class_cannot_satisfy_a_non_matching_ratio() {
        let ds = dataset(1, 6);
        let ratio = MatchRatio::new(1, 2).unwrap();
        let mut sampler = PairSampler::new(&ds, TRAIN, 6, Some(ratio), 0).unwrap();
        assert!(matches!(
            sampler.sample_batch(),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn same_seed_reproduces_the_batch_sequence() {
        let ds = dataset(3, 5);
        let draws = |seed: u64| {
            let mut s = PairSampler::new(&ds, TRAIN, 8, None, seed).unwrap();
            (0..4)
                .flat_map(|_| {
                    s.sample_batch()
                        .unwrap()
                        .pairs
                        .iter()
                        .map(|p| (p.a_idx, p.b_idx))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draws(5), draws(5));
        assert_ne!(draws(5), draws(6));
    }

    #[test]
    fn uniform_mode_labels_pairs_by_class_equality() {
        let ds = dataset(2, 4);
        let mut sampler = PairSampler::new(&ds, TRAIN, 32, None, 1).unwrap();
        let batch = sampler.sample_batch().unwrap();
        assert!(batch.matching_count() > 0);
        assert!(batch.matching_count() < batch.len());
    }
}
