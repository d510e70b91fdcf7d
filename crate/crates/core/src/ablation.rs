//! Ablation harness: retrains the model from scratch with selected input
//! branches replaced by standard-normal noise at training and evaluation
//! time, under identical seeds and sample draws across configurations.

use crate::dataset::Dataset;
use crate::descriptor::{DescriptorKind, DescriptorSubset};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::nn::star::StarConfig;
use crate::nn::train::{evaluate_subjects, train, TrainConfig};
use crate::sampler::Split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    /// Baseline plus the five configurations that drop one input each.
    LeaveOneOut,
    /// Baseline plus the five configurations that keep one input each.
    SingleInput,
    /// Baseline plus all ten configurations.
    Both,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AblationRun {
    /// Human-readable configuration label, e.g. `all-inputs`,
    /// `without-xyz`, `only-t1w`.
    pub label: String,
    /// Descriptor branches replaced by noise.
    pub substituted: DescriptorSubset,
    pub report: MetricsReport,
}

/// Enumerates the ablation configurations for a mode, baseline first.
pub fn ablation_configs(mode: AblationMode) -> Vec<(String, DescriptorSubset)> {
    let mut configs = vec![("all-inputs".to_string(), DescriptorSubset::empty())];
    let loo = DescriptorKind::ALL
        .iter()
        .map(|k| (format!("without-{}", k.name()), DescriptorSubset::of(&[*k])));
    let single = DescriptorKind::ALL
        .iter()
        .map(|k| (format!("only-{}", k.name()), DescriptorSubset::all_but(&[*k])));
    match mode {
        AblationMode::LeaveOneOut => configs.extend(loo),
        AblationMode::SingleInput => configs.extend(single),
        AblationMode::Both => {
            configs.extend(loo);
            configs.extend(single);
        }
    }
    configs
}

/// Retrains from scratch per configuration and evaluates each on the test
/// subjects. Sample draws, initialization and noise streams reuse the same
/// master seed in every run, so the baseline configuration is bit-identical
/// to a plain training run.
pub fn run_ablation(
    dataset: &Dataset,
    split: &Split,
    net_cfg: &StarConfig,
    tc: &TrainConfig,
    mode: AblationMode,
) -> Result<Vec<AblationRun>> {
    if split.test.is_empty() {
        return Err(Error::invalid(
            "ablation needs a non-empty test subject set".to_string(),
        ));
    }
    let mut runs = Vec::new();
    for (label, substituted) in ablation_configs(mode) {
        let mut tc_run = tc.clone();
        tc_run.noise_subset = substituted;
        let mut outcome = train(dataset, split, net_cfg.clone(), &tc_run)?;
        let (report, _) =
            evaluate_subjects(dataset, &split.test, &mut outcome.network, &tc_run)?;
        runs.push(AblationRun { label, substituted, report });
    }
    Ok(runs)
}
