//! Training loop: hierarchical sampling, descriptor extraction, summed
//! four-branch cross-entropy minimized with Adam, and per-epoch validation.
//! Deterministic under a fixed master seed.

use super::adam::Adam;
use super::layers::softmax_xent;
use super::star::{DescriptorBatch, StarConfig, StarNetwork};
use crate::dataset::Dataset;
use crate::descriptor::{noise_substitute, DescriptorSet, DescriptorSubset};
use crate::error::{Error, Result};
use crate::metrics::{metrics_report, MetricsReport};
use crate::sampler::{epoch_batches, hierarchical_sample, SampleRef, Split};
use crate::seed;
use crate::supervisors::{BinaryLabel, SupervisorVerdict};
use ndarray::Array2;

const TAG_EPOCH: u64 = 1;
const TAG_NOISE: u64 = 2;
const TAG_VAL: u64 = 3;
const TAG_VAL_NOISE: u64 = 4;
const TAG_EVAL_NOISE: u64 = 5;
const TAG_INIT: u64 = 6;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Hierarchical draws per training epoch.
    pub train_draws: usize,
    /// Hierarchical draws per validation pass (0 disables validation).
    pub val_draws: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Master seed for init, sampling and noise streams.
    pub seed: u64,
    /// Descriptor branches replaced by standard-normal noise during both
    /// training and evaluation (the ablation mechanism). Empty = baseline.
    pub noise_subset: DescriptorSubset,
    /// Descriptor extraction parameters.
    pub n: usize,
    pub k: usize,
    pub step: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy_3: Option<f64>,
    pub val_accuracy_16: Option<f64>,
    pub val_branch_accuracy: Option<[f64; 4]>,
}

pub struct TrainOutcome {
    pub network: StarNetwork<f32>,
    pub history: Vec<EpochRecord>,
}

fn check_net_config(dataset: &Dataset, net_cfg: &StarConfig, tc: &TrainConfig) -> Result<()> {
    net_cfg.validate()?;
    if net_cfg.n != tc.n {
        return Err(Error::invalid(format!(
            "network expects N={}, descriptor config has N={}",
            net_cfg.n, tc.n
        )));
    }
    let sh_channels = dataset
        .subjects
        .first()
        .map(|s| s.sh.volume.channels)
        .unwrap_or(0);
    let expect = [3, tc.k, sh_channels, 1, dataset.region_table.len()];
    if net_cfg.in_channels != expect {
        return Err(Error::invalid(format!(
            "network input channels {:?} do not match descriptors {:?}",
            net_cfg.in_channels, expect
        )));
    }
    Ok(())
}

/// Builds, noise-substitutes and batches descriptors for one slice of draws.
/// `draw_offset` indexes the noise stream so substitution is resampled per
/// draw and identical across ablation configurations.
fn build_batch(
    dataset: &Dataset,
    subject_positions: &[usize],
    samples: &[SampleRef],
    tc: &TrainConfig,
    noise_tag: u64,
    epoch: u64,
    draw_offset: usize,
) -> Result<(DescriptorBatch<f32>, Vec<SupervisorVerdict>)> {
    let mut sets: Vec<DescriptorSet> = Vec::with_capacity(samples.len());
    let mut verdicts = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let subject_idx = subject_positions[s.subject];
        let d = dataset.descriptors(subject_idx, s.streamline as usize, tc.n, tc.k, tc.step)?;
        let d = if tc.noise_subset.is_empty() {
            d
        } else {
            let noise_seed =
                seed::derive(tc.seed, &[noise_tag, epoch, (draw_offset + i) as u64]);
            noise_substitute(&d, tc.noise_subset, noise_seed)
        };
        sets.push(d);
        verdicts.push(dataset.subjects[subject_idx].verdicts[s.streamline as usize]);
    }
    let refs: Vec<&DescriptorSet> = sets.iter().collect();
    Ok((DescriptorBatch::from_sets(&refs)?, verdicts))
}

fn branch_targets(verdicts: &[SupervisorVerdict]) -> [Vec<usize>; 4] {
    let mut t: [Vec<usize>; 4] = Default::default();
    for v in verdicts {
        for (b, label) in v.labels().iter().enumerate() {
            t[b].push(usize::from(label.is_positive()));
        }
    }
    t
}

fn predictions_from_logits(logits: &[Array2<f32>; 4]) -> Vec<SupervisorVerdict> {
    let b = logits[0].nrows();
    (0..b)
        .map(|i| {
            let lab = |o: usize| {
                // tie on equal logits predicts negative
                BinaryLabel::from_bool(logits[o][(i, 1)] > logits[o][(i, 0)])
            };
            SupervisorVerdict::new(lab(0), lab(1), lab(2), lab(3))
        })
        .collect()
}

/// Forward pass over a fixed list of (subject position, streamline id) pairs
/// in eval mode, with ablation noise applied per draw. Returns the metrics
/// report (branch losses filled) and the predicted verdicts.
pub fn evaluate_streamlines(
    dataset: &Dataset,
    pairs: &[(usize, usize)],
    net: &mut StarNetwork<f32>,
    tc: &TrainConfig,
) -> Result<(MetricsReport, Vec<SupervisorVerdict>)> {
    if pairs.is_empty() {
        return Err(Error::invalid("nothing to evaluate".to_string()));
    }
    let mut preds = Vec::with_capacity(pairs.len());
    let mut truths = Vec::with_capacity(pairs.len());
    let mut loss_sums = [0.0f64; 4];
    let mut count = 0usize;
    for (chunk_idx, chunk) in pairs.chunks(64).enumerate() {
        let mut sets = Vec::with_capacity(chunk.len());
        let mut verdicts = Vec::with_capacity(chunk.len());
        for (i, &(subject_idx, sl)) in chunk.iter().enumerate() {
            let d = dataset.descriptors(subject_idx, sl, tc.n, tc.k, tc.step)?;
            let d = if tc.noise_subset.is_empty() {
                d
            } else {
                let noise_seed = seed::derive(
                    tc.seed,
                    &[TAG_EVAL_NOISE, (chunk_idx * 64 + i) as u64],
                );
                noise_substitute(&d, tc.noise_subset, noise_seed)
            };
            sets.push(d);
            verdicts.push(dataset.subjects[subject_idx].verdicts[sl]);
        }
        let refs: Vec<&DescriptorSet> = sets.iter().collect();
        let batch = DescriptorBatch::from_sets(&refs)?;
        let (logits, _) = net.forward(&batch, false)?;
        let targets = branch_targets(&verdicts);
        for o in 0..4 {
            let (l, _) = softmax_xent(&logits[o], &targets[o])?;
            loss_sums[o] += l as f64 * chunk.len() as f64;
        }
        count += chunk.len();
        preds.extend(predictions_from_logits(&logits));
        truths.extend(verdicts);
    }
    let losses = loss_sums.map(|s| s / count as f64);
    let report = metrics_report(&preds, &truths, Some(losses))?;
    Ok((report, preds))
}

/// Evaluates every streamline of the named subjects.
pub fn evaluate_subjects(
    dataset: &Dataset,
    names: &[String],
    net: &mut StarNetwork<f32>,
    tc: &TrainConfig,
) -> Result<(MetricsReport, Vec<SupervisorVerdict>)> {
    let positions = dataset.positions(names)?;
    let mut pairs = Vec::new();
    for &p in &positions {
        for sl in 0..dataset.subjects[p].streamlines.len() {
            pairs.push((p, sl));
        }
    }
    evaluate_streamlines(dataset, &pairs, net, tc)
}

/// Trains the star network: per epoch, draw `train_draws` samples via the
/// hierarchical sampler, minimize the summed four-branch cross-entropy with
/// Adam, then score `val_draws` validation samples. Aborts on non-finite
/// loss.
pub fn train(
    dataset: &Dataset,
    split: &Split,
    net_cfg: StarConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    check_net_config(dataset, &net_cfg, tc)?;
    if split.train.is_empty() {
        return Err(Error::invalid("empty training subject set".to_string()));
    }
    let train_idx = dataset.index_for(&split.train)?;
    let train_positions = dataset.positions(&split.train)?;
    let (val_idx, val_positions) = if split.validation.is_empty() || tc.val_draws == 0 {
        (None, Vec::new())
    } else {
        (
            Some(dataset.index_for(&split.validation)?),
            dataset.positions(&split.validation)?,
        )
    };

    let mut net = StarNetwork::<f32>::new(net_cfg, seed::derive(tc.seed, &[TAG_INIT]))?;
    let mut adam = Adam::new(tc.learning_rate as f32);
    let mut history = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        let samples = hierarchical_sample(
            &train_idx,
            tc.train_draws,
            seed::derive(tc.seed, &[TAG_EPOCH, epoch as u64]),
        )?;
        let mut epoch_loss = 0.0f64;
        let mut draw_offset = 0usize;
        for batch_samples in epoch_batches(&samples, tc.batch_size) {
            let (batch, verdicts) = build_batch(
                dataset,
                &train_positions,
                batch_samples,
                tc,
                TAG_NOISE,
                epoch as u64,
                draw_offset,
            )?;
            draw_offset += batch_samples.len();
            net.zero_grad();
            let (logits, tape) = net.forward(&batch, true)?;
            let targets = branch_targets(&verdicts);
            let mut dlogits = Vec::with_capacity(4);
            let mut batch_loss = 0.0f64;
            for o in 0..4 {
                let (l, d) = softmax_xent(&logits[o], &targets[o])?;
                batch_loss += l as f64;
                dlogits.push(d);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            let dlogits: [Array2<f32>; 4] = dlogits.try_into().expect("four branches");
            net.backward(&tape, &dlogits)?;
            adam.step(|f| net.visit_params(f));
            epoch_loss += batch_loss * batch_samples.len() as f64;
        }
        epoch_loss /= samples.len() as f64;

        let mut record = EpochRecord {
            epoch,
            train_loss: epoch_loss,
            val_loss: None,
            val_accuracy_3: None,
            val_accuracy_16: None,
            val_branch_accuracy: None,
        };
        if let Some(vidx) = &val_idx {
            let vsamples = hierarchical_sample(
                vidx,
                tc.val_draws,
                seed::derive(tc.seed, &[TAG_VAL, epoch as u64]),
            )?;
            // map sampler subject indices onto dataset positions
            let mut vtc = tc.clone();
            vtc.seed = seed::derive(tc.seed, &[TAG_VAL_NOISE, epoch as u64]);
            let pairs: Vec<(usize, usize)> = vsamples
                .iter()
                .map(|s| (val_positions[s.subject], s.streamline as usize))
                .collect();
            let (report, _) = evaluate_streamlines(dataset, &pairs, &mut net, &vtc)?;
            record.val_loss = Some(
                report
                    .branches
                    .iter()
                    .map(|b| b.loss.unwrap_or(0.0))
                    .sum::<f64>(),
            );
            record.val_accuracy_3 = Some(report.accuracy_3);
            record.val_accuracy_16 = Some(report.accuracy_16);
            record.val_branch_accuracy =
                Some(report.branches.each_ref().map(|b| b.accuracy));
        }
        history.push(record);
    }
    Ok(TrainOutcome { network: net, history })
}
