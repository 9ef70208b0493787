//! Training: DTW-guided pre-training, contrastive training with
//! validation-based model selection, Adam optimization, and target caching.

pub mod sampler;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::core::{AdamConfig, ConvParams, MatchRatio, Pair, TimeSeries, TrainingConfig, UNetParams, WarpingMatrix};
use crate::data::{Dataset, TRAIN, VAL};
use crate::dtw::dtw_target;
use crate::error::{Error, Result};
use crate::eval::{classification_report_on, verification_report_on, ModelMetric};
use crate::warpnet::graph::{record_pretrain_loss, record_training_loss};
use crate::warpnet::unet::UNetGrads;
use crate::warpnet::{make_paths, outer_concat, pretrain_loss, unet_forward};

pub use sampler::{BatchPair, PairBatch, PairSampler};

/// Optimizer moments; shapes mirror the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<ConvParams>,
    v: Vec<ConvParams>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &UNetParams) -> Self {
        let zeros = |p: &UNetParams| -> Vec<ConvParams> {
            p.convs
                .iter()
                .map(|c| ConvParams::zeros(c.out_channels(), c.in_channels()))
                .collect()
        };
        Self {
            m: zeros(params),
            v: zeros(params),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Mutable training state: parameters, optimizer moments, counters, and the
/// seed everything was derived from.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: UNetParams,
    pub adam: AdamState,
    pub epoch: usize,
    pub step: u64,
    pub seed: u64,
    pub best_val: Option<f64>,
}

impl TrainState {
    pub fn new(params: UNetParams, seed: u64) -> Self {
        let adam = AdamState::new(&params);
        Self {
            params,
            adam,
            epoch: 0,
            step: 0,
            seed,
            best_val: None,
        }
    }
}

/// One standard Adam update with bias correction; increments the step count.
pub fn adam_step(
    params: &mut UNetParams,
    opt: &mut AdamState,
    grads: &UNetGrads,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.convs.len() != params.convs.len()
        || grads
            .convs
            .iter()
            .zip(&params.convs)
            .any(|(g, p)| g.weight.dim() != p.weight.dim() || g.bias.dim() != p.bias.dim())
    {
        return Err(Error::InconsistentShapes(
            "gradient shapes do not match parameters".into(),
        ));
    }
    opt.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(opt.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(opt.t as i32);
    for ((p, g), (m, v)) in params
        .convs
        .iter_mut()
        .zip(&grads.convs)
        .zip(opt.m.iter_mut().zip(opt.v.iter_mut()))
    {
        let update = |theta: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        };
        for ((theta, &gv), (mv, vv)) in p
            .weight
            .iter_mut()
            .zip(g.weight.iter())
            .zip(m.weight.iter_mut().zip(v.weight.iter_mut()))
        {
            update(theta, gv, mv, vv);
        }
        for ((theta, &gv), (mv, vv)) in p
            .bias
            .iter_mut()
            .zip(g.bias.iter())
            .zip(m.bias.iter_mut().zip(v.bias.iter_mut()))
        {
            update(theta, gv, mv, vv);
        }
    }
    Ok(())
}

/// Memoizes DTW targets by pair identity; targets depend only on the inputs,
/// so a hit returns the bit-identical matrix.
#[derive(Debug, Default)]
pub struct DtwTargetCache {
    map: HashMap<(usize, usize), WarpingMatrix>,
}

impl DtwTargetCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(
        &mut self,
        key: (usize, usize),
        a: &TimeSeries,
        b: &TimeSeries,
    ) -> Result<WarpingMatrix> {
        if let Some(hit) = self.map.get(&key) {
            return Ok(hit.clone());
        }
        let target = dtw_target(a, b)?;
        self.map.insert(key, target.clone());
        Ok(target)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Mean loss and mean parameter gradients over a batch of recorded pair
/// losses. Pairs are processed in parallel; the reduction runs in pair order
/// so results do not depend on scheduling.
fn batch_training_step(
    params: &UNetParams,
    pairs: &[Pair],
    tau: f64,
) -> Result<(f64, UNetGrads)> {
    let per_pair: Vec<Result<(f64, UNetGrads)>> = pairs
        .par_iter()
        .map(|pair| {
            let mut graph = record_training_loss(params, pair, tau)?;
            let grads = graph.backward(params)?;
            Ok((graph.loss(), grads))
        })
        .collect();
    reduce_batch(params, per_pair)
}

fn batch_pretrain_step(
    params: &UNetParams,
    pairs: &[Pair],
    targets: &[WarpingMatrix],
) -> Result<(f64, UNetGrads)> {
    let per_pair: Vec<Result<(f64, UNetGrads)>> = pairs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(pair, target)| {
            let mut graph = record_pretrain_loss(params, &pair.a, &pair.b, target)?;
            let grads = graph.backward(params)?;
            Ok((graph.loss(), grads))
        })
        .collect();
    reduce_batch(params, per_pair)
}

fn reduce_batch(
    params: &UNetParams,
    per_pair: Vec<Result<(f64, UNetGrads)>>,
) -> Result<(f64, UNetGrads)> {
    let n = per_pair.len().max(1);
    let mut total = UNetGrads::zeros_like(params);
    let mut loss_sum = 0.0;
    for r in per_pair {
        let (loss, grads) = r?;
        loss_sum += loss;
        total.add_assign(&grads);
    }
    total.scale(1.0 / n as f64);
    Ok((loss_sum / n as f64, total))
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub val_metric: Option<f64>,
}

/// Configuration of the DTW-guided pre-training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    /// Fixed step budget.
    pub steps: usize,
    /// Stop early when the mean batch loss improves by less than
    /// `plateau_tol` relative over `plateau_window` steps.
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub match_ratio: Option<MatchRatio>,
    pub seed: u64,
    /// Size of the frozen probe pair set used to track Eq.-4 descent.
    pub probe_pairs: usize,
    /// Probe evaluation cadence in steps.
    pub probe_interval: usize,
    pub adam: AdamConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            plateau_window: 200,
            plateau_tol: 0.01,
            learning_rate: 1e-3,
            batch_size: 8,
            match_ratio: None,
            seed: 0,
            probe_pairs: 200,
            probe_interval: 50,
            adam: AdamConfig::default(),
        }
    }
}

/// Outcome of a pre-training run.
#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub steps_run: usize,
    pub initial_probe_loss: f64,
    pub final_probe_loss: f64,
    pub history: Vec<LogRecord>,
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt)
}

/// Non-finite values surfacing mid-training mean the optimization diverged.
fn as_diverged(e: Error, step: u64) -> Error {
    match e {
        Error::NonFiniteActivation | Error::NonFiniteInput => Error::DivergedLoss { step },
        other => other,
    }
}

/// Mean pre-training loss of fixed probe pairs under the current parameters.
fn probe_loss(
    params: &UNetParams,
    probes: &[(Pair, WarpingMatrix)],
) -> Result<f64> {
    let losses: Vec<Result<f64>> = probes
        .par_iter()
        .map(|(pair, target)| {
            let x = outer_concat(&pair.a, &pair.b)?;
            let raw = unet_forward(&x, params)?;
            let (p_s, _) = make_paths(&raw)?;
            pretrain_loss(&p_s, target)
        })
        .collect();
    let mut sum = 0.0;
    for l in &losses {
        sum += *l.as_ref().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(sum / probes.len().max(1) as f64)
}

/// Pre-trains against DTW targets: for every batch the softmaxed DTW path
/// is the regression target and Adam minimizes the mean squared error.
/// Stops at the step budget or on plateau. Zero steps leave the state
/// untouched.
pub fn pretrain(
    state: &mut TrainState,
    ds: &Dataset,
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    let mut sampler = PairSampler::new(
        ds,
        TRAIN,
        cfg.batch_size,
        cfg.match_ratio,
        derive_seed(cfg.seed, 1),
    )?;
    let mut cache = DtwTargetCache::new();

    // Frozen probe set, drawn once from its own stream.
    let mut probe_sampler = PairSampler::new(ds, TRAIN, 1, cfg.match_ratio, derive_seed(cfg.seed, 2))?;
    let mut probes = Vec::with_capacity(cfg.probe_pairs);
    while probes.len() < cfg.probe_pairs {
        let batch = probe_sampler.sample_batch()?;
        for bp in batch.pairs {
            let target = cache.get_or_compute((bp.a_idx, bp.b_idx), &bp.pair.a, &bp.pair.b)?;
            probes.push((bp.pair, target));
            if probes.len() == cfg.probe_pairs {
                break;
            }
        }
    }

    let initial_probe_loss = probe_loss(&state.params, &probes)?;
    let mut history = vec![LogRecord {
        epoch: 0,
        step: state.step,
        loss: initial_probe_loss,
        val_metric: Some(initial_probe_loss),
    }];

    let mut window_sum = 0.0;
    let mut prev_window_mean: Option<f64> = None;
    let mut steps_run = 0usize;
    for local_step in 1..=cfg.steps {
        let batch = sampler.sample_batch()?;
        let mut pairs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for bp in batch.pairs {
            targets.push(cache.get_or_compute((bp.a_idx, bp.b_idx), &bp.pair.a, &bp.pair.b)?);
            pairs.push(bp.pair);
        }
        let (loss, grads) = batch_pretrain_step(&state.params, &pairs, &targets)
            .map_err(|e| as_diverged(e, state.step))?;
        if !loss.is_finite() {
            return Err(Error::DivergedLoss { step: state.step });
        }
        adam_step(
            &mut state.params,
            &mut state.adam,
            &grads,
            cfg.learning_rate,
            &cfg.adam,
        )?;
        state.step += 1;
        steps_run = local_step;
        window_sum += loss;

        if cfg.probe_interval > 0 && local_step % cfg.probe_interval == 0 {
            let probe = probe_loss(&state.params, &probes)?;
            history.push(LogRecord {
                epoch: 0,
                step: state.step,
                loss,
                val_metric: Some(probe),
            });
        }
        if cfg.plateau_window > 0 && local_step % cfg.plateau_window == 0 {
            let mean = window_sum / cfg.plateau_window as f64;
            window_sum = 0.0;
            if let Some(prev) = prev_window_mean {
                if prev > 0.0 && (prev - mean) / prev < cfg.plateau_tol {
                    break;
                }
            }
            prev_window_mean = Some(mean);
        }
    }

    let final_probe_loss = probe_loss(&state.params, &probes)?;
    history.push(LogRecord {
        epoch: 0,
        step: state.step,
        loss: final_probe_loss,
        val_metric: Some(final_probe_loss),
    });
    Ok(PretrainReport {
        steps_run,
        initial_probe_loss,
        final_probe_loss,
        history,
    })
}

/// Fraction of rows, over the given pairs, where the model path and the DTW
/// target agree on the row argmax. Rows of the target whose path covers
/// several cells have tied maxima, so agreement means the model's argmax
/// lands on any maximal target cell.
pub fn dtw_argmax_agreement(params: &UNetParams, pairs: &[Pair]) -> Result<f64> {
    let mut agree = 0usize;
    let mut total = 0usize;
    for pair in pairs {
        let target = dtw_target(&pair.a, &pair.b)?;
        let x = outer_concat(&pair.a, &pair.b)?;
        let raw = unet_forward(&x, params)?;
        let (p_s, _) = make_paths(&raw)?;
        for (prow, trow) in p_s.entries().rows().into_iter().zip(target.entries().rows()) {
            let argmax = |row: ndarray::ArrayView1<f64>| -> usize {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap()
            };
            let t_max = trow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if trow[argmax(prow)] >= t_max - 1e-12 {
                agree += 1;
            }
            total += 1;
        }
    }
    Ok(agree as f64 / total.max(1) as f64)
}

/// Validation metric preset: classification accuracy (higher is better) or
/// verification EER (lower is better).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValMetric {
    KnnAccuracy { k: usize, bins: usize },
    VerificationEer { n_refs: usize, bins: usize },
}

impl ValMetric {
    fn better(&self, candidate: f64, incumbent: f64) -> bool {
        match self {
            ValMetric::KnnAccuracy { .. } => candidate > incumbent,
            ValMetric::VerificationEer { .. } => candidate < incumbent,
        }
    }

    fn evaluate(&self, ds: &Dataset, params: &UNetParams) -> Result<f64> {
        let metric = ModelMetric { params };
        match self {
            ValMetric::KnnAccuracy { k, bins } => {
                Ok(classification_report_on(ds, VAL, &metric, *k, *bins)?.value)
            }
            ValMetric::VerificationEer { n_refs, bins } => {
                Ok(verification_report_on(ds, VAL, &metric, *n_refs, *bins)?.value)
            }
        }
    }
}

/// Outcome of a contrastive training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub best_val: Option<f64>,
    pub best_epoch: usize,
    pub history: Vec<LogRecord>,
    pub warnings: Vec<String>,
}

/// Contrastive training with per-epoch validation and best-checkpoint
/// selection. The returned state holds the parameters of the epoch with the
/// best validation metric.
pub fn train_contrastive(
    state: &mut TrainState,
    ds: &Dataset,
    cfg: &TrainingConfig,
    val: ValMetric,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut sampler = PairSampler::new(
        ds,
        TRAIN,
        cfg.batch_size,
        cfg.match_ratio,
        derive_seed(cfg.seed, 3),
    )?;
    let n_train = ds.split(TRAIN).map(|s| s.len()).unwrap_or(0);
    let steps_per_epoch = cfg
        .steps_per_epoch
        .unwrap_or_else(|| n_train.div_ceil(cfg.batch_size).max(1));

    let mut history = Vec::new();
    let mut warnings = Vec::new();
    // (val metric, epoch-mean train loss, params, step, epoch)
    let mut best: Option<(f64, f64, UNetParams, u64, usize)> = None;
    let mut first_epoch_loss = None;
    let mut last_epoch_loss = 0.0;

    for epoch in 1..=cfg.max_epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            let batch = sampler.sample_batch()?;
            let pairs: Vec<Pair> = batch.pairs.into_iter().map(|bp| bp.pair).collect();
            let (loss, grads) = batch_training_step(&state.params, &pairs, cfg.margin)
                .map_err(|e| as_diverged(e, state.step))?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { step: state.step });
            }
            adam_step(
                &mut state.params,
                &mut state.adam,
                &grads,
                cfg.learning_rate,
                &cfg.adam,
            )?;
            state.step += 1;
            epoch_loss += loss;
        }
        epoch_loss /= steps_per_epoch as f64;
        first_epoch_loss.get_or_insert(epoch_loss);
        last_epoch_loss = epoch_loss;
        state.epoch = epoch;

        let val_value = val.evaluate(ds, &state.params)?;
        history.push(LogRecord {
            epoch,
            step: state.step,
            loss: epoch_loss,
            val_metric: Some(val_value),
        });
        // Keep the best validation metric; when the metric ties (it often
        // saturates on small validation splits), prefer the checkpoint with
        // the lower training loss.
        let replace = match &best {
            None => true,
            Some((incumbent, incumbent_loss, ..)) => {
                val.better(val_value, *incumbent)
                    || (val_value == *incumbent && epoch_loss < *incumbent_loss)
            }
        };
        if replace {
            best = Some((val_value, epoch_loss, state.params.clone(), state.step, epoch));
        }
    }

    if let (Some(first), true) = (first_epoch_loss, cfg.max_epochs > 1) {
        if last_epoch_loss >= first {
            warnings.push(format!(
                "training loss did not decrease ({first} -> {last_epoch_loss}); \
                 consider DTW-guided pre-training"
            ));
        }
    }

    let report = match best {
        Some((val_value, _, params, step, epoch)) => {
            state.params = params;
            state.step = step;
            state.best_val = Some(val_value);
            TrainReport {
                best_val: Some(val_value),
                best_epoch: epoch,
                history,
                warnings,
            }
        }
        None => TrainReport {
            best_val: None,
            best_epoch: 0,
            history,
            warnings,
        },
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::UNetArch;
    use crate::data::synth::{generate_synthetic, SynthConfig};
    use crate::warpnet::checkpoint::checkpoint_to_bytes;

    fn tiny_dataset() -> Dataset {
        generate_synthetic(&SynthConfig {
            n_classes: 2,
            samples_per_class: 6,
            w: 8,
            k: 1,
            warp_strength: 0.2,
            noise_std: 0.05,
            split_fractions: (0.667, 0.167),
            ..SynthConfig::default_classification()
        })
        .unwrap()
    }

    fn tiny_params(seed: u64) -> UNetParams {
        UNetParams::he_init(UNetArch::tiny(2), seed).unwrap()
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut params = tiny_params(0);
        let before = params.clone();
        let mut opt = AdamState::new(&params);
        let grads = UNetGrads::zeros_like(&params);
        adam_step(&mut params, &mut opt, &grads, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(params, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut params = tiny_params(1);
        let before = params.convs[0].weight[[0, 0, 0, 0]];
        let mut opt = AdamState::new(&params);
        let mut grads = UNetGrads::zeros_like(&params);
        grads.convs[0].weight[[0, 0, 0, 0]] = 3.5;
        grads.convs[0].weight[[0, 0, 0, 1]] = -0.002;
        let lr = 0.01;
        adam_step(&mut params, &mut opt, &grads, lr, &AdamConfig::default()).unwrap();
        let moved = params.convs[0].weight[[0, 0, 0, 0]] - before;
        // First bias-corrected step is -lr * g / (|g| + eps), about -lr*sign(g).
        assert!((moved + lr).abs() < lr * 1e-6);
        let moved_neg = params.convs[0].weight[[0, 0, 0, 1]]
            - (tiny_params(1).convs[0].weight[[0, 0, 0, 1]]);
        assert!((moved_neg - lr).abs() < lr * 1e-4);
    }

    #[test]
    fn adam_matches_a_hand_evaluated_three_step_recurrence() {
        let mut params = tiny_params(2);
        let theta0 = params.convs[1].weight[[0, 0, 1, 1]];
        let mut opt = AdamState::new(&params);
        let cfg = AdamConfig::default();
        let lr = 0.05;
        let gs = [1.0, -2.0, 0.5];
        for &g in &gs {
            let mut grads = UNetGrads::zeros_like(&params);
            grads.convs[1].weight[[0, 0, 1, 1]] = g;
            adam_step(&mut params, &mut opt, &grads, lr, &cfg).unwrap();
        }
        // Scalar recurrence, evaluated by hand for the same inputs.
        let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, theta0);
        for (i, &g) in gs.iter().enumerate() {
            let t = (i + 1) as i32;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            theta -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        assert!((params.convs[1].weight[[0, 0, 1, 1]] - theta).abs() < 1e-15);
        // Untouched coordinates stay put.
        assert_eq!(
            params.convs[0].weight[[0, 0, 0, 0]],
            tiny_params(2).convs[0].weight[[0, 0, 0, 0]]
        );
    }

    #[test]
    fn adam_rejects_mismatched_gradient_shapes() {
        let mut params = tiny_params(3);
        let mut opt = AdamState::new(&params);
        let other = UNetParams::he_init(UNetArch::tiny(4), 0).unwrap();
        let grads = UNetGrads::zeros_like(&other);
        assert!(matches!(
            adam_step(&mut params, &mut opt, &grads, 0.1, &AdamConfig::default()),
            Err(Error::InconsistentShapes(_))
        ));
    }

    #[test]
    fn dtw_cache_hits_return_identical_targets() {
        let ds = tiny_dataset();
        let a = &ds.items()[0].series;
        let b = &ds.items()[1].series;
        let mut cache = DtwTargetCache::new();
        let one = cache.get_or_compute((0, 1), a, b).unwrap();
        let two = cache.get_or_compute((0, 1), a, b).unwrap();
        assert_eq!(one, two);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn zero_pretrain_steps_leave_the_state_unchanged() {
        let ds = tiny_dataset();
        let mut state = TrainState::new(tiny_params(4), 4);
        let before = state.params.clone();
        let cfg = PretrainConfig {
            steps: 0,
            probe_pairs: 4,
            batch_size: 2,
            ..PretrainConfig::default()
        };
        let report = pretrain(&mut state, &ds, &cfg).unwrap();
        assert_eq!(state.params, before);
        assert_eq!(report.steps_run, 0);
        assert_eq!(report.initial_probe_loss, report.final_probe_loss);
    }

    #[test]
    fn pretraining_is_reproducible_to_the_byte() {
        let ds = tiny_dataset();
        let cfg = PretrainConfig {
            steps: 5,
            batch_size: 2,
            probe_pairs: 4,
            probe_interval: 2,
            seed: 9,
            ..PretrainConfig::default()
        };
        let run = || {
            let mut state = TrainState::new(tiny_params(9), 9);
            pretrain(&mut state, &ds, &cfg).unwrap();
            checkpoint_to_bytes(&state.params, state.seed, state.step).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pretraining_reduces_probe_loss_quickly() {
        // Ten-fold descent of the Eq.-4 probe loss within 500 steps on a
        // small synthetic set.
        let ds = generate_synthetic(&SynthConfig {
            n_classes: 3,
            samples_per_class: 12,
            w: 16,
            k: 1,
            warp_strength: 0.3,
            noise_std: 0.05,
            split_fractions: (0.667, 0.167),
            ..SynthConfig::default_classification()
        })
        .unwrap();
        let mut state = TrainState::new(
            UNetParams::he_init(UNetArch::small(2), 0).unwrap(),
            0,
        );
        let cfg = PretrainConfig {
            steps: 500,
            plateau_window: 0,
            batch_size: 8,
            probe_pairs: 50,
            probe_interval: 100,
            seed: 0,
            ..PretrainConfig::default()
        };
        let report = pretrain(&mut state, &ds, &cfg).unwrap();
        assert!(
            report.final_probe_loss * 10.0 <= report.initial_probe_loss,
            "probe loss {} -> {}",
            report.initial_probe_loss,
            report.final_probe_loss
        );
    }

    #[test]
    fn training_defaults_pin_the_reference_hyperparameters() {
        let cfg = TrainingConfig::default();
        assert_eq!(cfg.margin, 1.0);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.batch_size, 512);
        assert_eq!(cfg.max_epochs, 20);
        assert_eq!(cfg.adam.beta1, 0.9);
        assert_eq!(cfg.adam.beta2, 0.999);
        assert_eq!(cfg.adam.epsilon, 1e-8);
    }

    #[test]
    fn exploding_learning_rate_reports_divergence() {
        let ds = tiny_dataset();
        let mut state = TrainState::new(tiny_params(13), 13);
        let cfg = TrainingConfig {
            batch_size: 4,
            max_epochs: 50,
            steps_per_epoch: Some(10),
            learning_rate: 1e14,
            seed: 13,
            ..TrainingConfig::default()
        };
        let err = train_contrastive(
            &mut state,
            &ds,
            &cfg,
            ValMetric::KnnAccuracy { k: 1, bins: 5 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::DivergedLoss { .. }), "got {err:?}");
    }

    #[test]
    fn model_selection_returns_the_best_validation_epoch() {
        let ds = tiny_dataset();
        let mut state = TrainState::new(tiny_params(5), 5);
        let cfg = TrainingConfig {
            batch_size: 4,
            max_epochs: 3,
            steps_per_epoch: Some(2),
            learning_rate: 1e-3,
            seed: 5,
            ..TrainingConfig::default()
        };
        let report = train_contrastive(
            &mut state,
            &ds,
            &cfg,
            ValMetric::KnnAccuracy { k: 1, bins: 5 },
        )
        .unwrap();
        let best_seen = report
            .history
            .iter()
            .filter_map(|r| r.val_metric)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.best_val.unwrap(), best_seen);
        assert_eq!(report.history.len(), 3);
    }
}
