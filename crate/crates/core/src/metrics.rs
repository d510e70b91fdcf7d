//! Classification metrics: per-branch accuracy/precision/recall, aggregated
//! 16-class and 3-class accuracy, and confusion matrices.
//!
//! Precision and recall use the positive label as the target class and are
//! reported as absent (`None`) when their denominator is zero, never as a
//! fabricated 0.

use crate::ensemble::{compose, map_to_triclass};
use crate::error::{Error, Result};
use crate::supervisors::{BinaryLabel, SupervisorVerdict};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BranchMetrics {
    /// Mean softmax cross-entropy; absent when computed from labels alone.
    pub loss: Option<f64>,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Rows: truth (negative, positive); columns: prediction.
    pub confusion: [[usize; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    /// Indexed (TQ, RBX, TS, AIF).
    pub branches: [BranchMetrics; 4],
    pub accuracy_16: f64,
    pub accuracy_3: f64,
    /// Indexed (POS, NEG, U).
    pub tri_precision: [Option<f64>; 3],
    pub tri_recall: [Option<f64>; 3],
    pub confusion_16: Vec<Vec<usize>>,
    pub confusion_3: [[usize; 3]; 3],
    pub n_samples: usize,
}

fn binary_index(l: BinaryLabel) -> usize {
    usize::from(l.is_positive())
}

/// Accuracy, precision, recall and the 2x2 confusion matrix per output
/// branch, from predicted and true verdicts.
pub fn branch_metrics(
    predictions: &[SupervisorVerdict],
    truth: &[SupervisorVerdict],
) -> Result<[BranchMetrics; 4]> {
    if predictions.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let n = predictions.len();
    let mut out = Vec::with_capacity(4);
    for b in 0..4 {
        let mut confusion = [[0usize; 2]; 2];
        for (p, t) in predictions.iter().zip(truth) {
            let pi = binary_index(p.labels()[b]);
            let ti = binary_index(t.labels()[b]);
            confusion[ti][pi] += 1;
        }
        let tp = confusion[1][1];
        let fp = confusion[0][1];
        let fne = confusion[1][0];
        let tn = confusion[0][0];
        let accuracy = if n == 0 { 0.0 } else { (tp + tn) as f64 / n as f64 };
        let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
        let recall = (tp + fne > 0).then(|| tp as f64 / (tp + fne) as f64);
        out.push(BranchMetrics { loss: None, accuracy, precision, recall, confusion });
    }
    Ok(out.try_into().expect("four branches"))
}

/// Exact-match rate over the 16 composition classes and over the 3-class
/// mapping of prediction and truth.
pub fn aggregate_accuracy(
    predictions: &[SupervisorVerdict],
    truth: &[SupervisorVerdict],
) -> Result<(f64, f64)> {
    if predictions.len() != truth.len() {
        return Err(Error::invalid("length mismatch".to_string()));
    }
    if predictions.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut hit16 = 0usize;
    let mut hit3 = 0usize;
    for (p, t) in predictions.iter().zip(truth) {
        let cp = compose(p);
        let ct = compose(t);
        if cp == ct {
            hit16 += 1;
        }
        if map_to_triclass(cp) == map_to_triclass(ct) {
            hit3 += 1;
        }
    }
    let n = predictions.len() as f64;
    Ok((hit16 as f64 / n, hit3 as f64 / n))
}

/// Full report from predicted/true verdicts, with optional per-branch mean
/// cross-entropy losses supplied by the evaluator.
pub fn metrics_report(
    predictions: &[SupervisorVerdict],
    truth: &[SupervisorVerdict],
    losses: Option<[f64; 4]>,
) -> Result<MetricsReport> {
    let mut branches = branch_metrics(predictions, truth)?;
    if let Some(losses) = losses {
        for (b, loss) in branches.iter_mut().zip(losses) {
            b.loss = Some(loss);
        }
    }
    let (accuracy_16, accuracy_3) = aggregate_accuracy(predictions, truth)?;

    let mut confusion_16 = vec![vec![0usize; 16]; 16];
    let mut confusion_3 = [[0usize; 3]; 3];
    for (p, t) in predictions.iter().zip(truth) {
        let cp = compose(p);
        let ct = compose(t);
        confusion_16[ct.index()][cp.index()] += 1;
        confusion_3[map_to_triclass(ct).index()][map_to_triclass(cp).index()] += 1;
    }
    let mut tri_precision = [None; 3];
    let mut tri_recall = [None; 3];
    for k in 0..3 {
        let tp = confusion_3[k][k];
        let predicted: usize = (0..3).map(|t| confusion_3[t][k]).sum();
        let support: usize = confusion_3[k].iter().sum();
        tri_precision[k] = (predicted > 0).then(|| tp as f64 / predicted as f64);
        tri_recall[k] = (support > 0).then(|| tp as f64 / support as f64);
    }
    Ok(MetricsReport {
        branches,
        accuracy_16,
        accuracy_3,
        tri_precision,
        tri_recall,
        confusion_16,
        confusion_3,
        n_samples: predictions.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::CompositionClass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn verdict(idx: usize) -> SupervisorVerdict {
        CompositionClass::from_index(idx).unwrap().verdict()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let truth: Vec<SupervisorVerdict> = (0..16).map(verdict).collect();
        let m = branch_metrics(&truth, &truth).unwrap();
        for b in &m {
            assert_eq!(b.accuracy, 1.0);
            assert_eq!(b.precision, Some(1.0));
            assert_eq!(b.recall, Some(1.0));
        }
        let (a16, a3) = aggregate_accuracy(&truth, &truth).unwrap();
        assert_eq!(a16, 1.0);
        assert_eq!(a3, 1.0);
    }

    #[test]
    fn all_positive_predictor_on_balanced_truth() {
        // half positive, half negative truth per branch
        let truth: Vec<SupervisorVerdict> =
            vec![verdict(0b1111); 50].into_iter().chain(vec![verdict(0); 50]).collect();
        let preds = vec![verdict(0b1111); 100];
        let m = branch_metrics(&preds, &truth).unwrap();
        for b in &m {
            assert_eq!(b.accuracy, 0.5);
            assert_eq!(b.precision, Some(0.5));
            assert_eq!(b.recall, Some(1.0));
        }
    }

    #[test]
    fn zero_denominator_reports_absent_not_zero() {
        // truth all negative, predictions all negative: no positives anywhere
        let truth = vec![verdict(0); 10];
        let preds = vec![verdict(0); 10];
        let m = branch_metrics(&preds, &truth).unwrap();
        for b in &m {
            assert_eq!(b.accuracy, 1.0);
            assert_eq!(b.precision, None);
            assert_eq!(b.recall, None);
        }
    }

    // Oracle: independent confusion tally.
    #[test]
    fn confusion_counts_match_hand_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth: Vec<SupervisorVerdict> =
            (0..1000).map(|_| verdict(rng.random_range(0..16))).collect();
        let preds: Vec<SupervisorVerdict> =
            (0..1000).map(|_| verdict(rng.random_range(0..16))).collect();
        let m = branch_metrics(&preds, &truth).unwrap();
        for b in 0..4 {
            let mut tally = [[0usize; 2]; 2];
            for (p, t) in preds.iter().zip(&truth) {
                let pi = usize::from(p.labels()[b].is_positive());
                let ti = usize::from(t.labels()[b].is_positive());
                tally[ti][pi] += 1;
            }
            assert_eq!(m[b].confusion, tally);
            let total: usize = tally.iter().flatten().sum();
            assert_eq!(total, 1000);
            // accuracy recomputed from the tally
            let acc = (tally[0][0] + tally[1][1]) as f64 / 1000.0;
            assert_eq!(m[b].accuracy, acc);
        }
    }

    #[test]
    fn near_miss_counts_for_three_class_but_not_sixteen() {
        let truth = vec![CompositionClass::from_code("pppp").unwrap().verdict()];
        let preds = vec![CompositionClass::from_code("pnpp").unwrap().verdict()];
        let (a16, a3) = aggregate_accuracy(&preds, &truth).unwrap();
        assert_eq!(a16, 0.0);
        assert_eq!(a3, 1.0); // both POS
    }

    #[test]
    fn three_class_accuracy_dominates_sixteen_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let truth: Vec<SupervisorVerdict> =
                (0..200).map(|_| verdict(rng.random_range(0..16))).collect();
            let preds: Vec<SupervisorVerdict> =
                (0..200).map(|_| verdict(rng.random_range(0..16))).collect();
            let (a16, a3) = aggregate_accuracy(&preds, &truth).unwrap();
            assert!(a3 >= a16);
        }
    }

    #[test]
    fn random_predictions_on_uniform_truth_hit_one_sixteenth() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let truth: Vec<SupervisorVerdict> =
            (0..n).map(|i| verdict(i % 16)).collect();
        let preds: Vec<SupervisorVerdict> =
            (0..n).map(|_| verdict(rng.random_range(0..16))).collect();
        let (a16, _) = aggregate_accuracy(&preds, &truth).unwrap();
        let p = 1.0 / 16.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (a16 - p).abs() <= 3.0 * sigma,
            "a16 = {a16}, expect {p} +- {}",
            3.0 * sigma
        );
    }

    #[test]
    fn report_marginals_match_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let truth: Vec<SupervisorVerdict> =
            (0..500).map(|_| verdict(rng.random_range(0..16))).collect();
        let preds: Vec<SupervisorVerdict> =
            (0..500).map(|_| verdict(rng.random_range(0..16))).collect();
        let r = metrics_report(&preds, &truth, None).unwrap();
        // row sums of the 16x16 confusion equal class supports
        for c in CompositionClass::all() {
            let support = truth.iter().filter(|t| compose(t) == c).count();
            let row_sum: usize = r.confusion_16[c.index()].iter().sum();
            assert_eq!(row_sum, support);
        }
        for k in 0..3 {
            let support = truth
                .iter()
                .filter(|t| map_to_triclass(compose(t)).index() == k)
                .count();
            assert_eq!(r.confusion_3[k].iter().sum::<usize>(), support);
        }
        assert_eq!(r.n_samples, 500);
        assert!(r.accuracy_3 >= r.accuracy_16);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = vec![verdict(0); 3];
        let b = vec![verdict(0); 4];
        assert!(branch_metrics(&a, &b).is_err());
        assert!(aggregate_accuracy(&a, &b).is_err());
    }
}
