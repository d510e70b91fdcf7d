//! Subject-level dataset splitting and the hierarchical
//! subject -> label -> streamline sampling strategy.

use crate::ensemble::CompositionClass;
use crate::error::{Error, Result};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-subject pools of streamline ids keyed by composition class.
#[derive(Debug, Clone)]
pub struct SubjectPools {
    pub subject: String,
    pools: [Vec<u32>; 16],
    total: usize,
    nonempty_classes: Vec<usize>,
}

impl SubjectPools {
    pub fn new(subject: String, classes: &[CompositionClass]) -> Self {
        let mut pools: [Vec<u32>; 16] = Default::default();
        for (id, c) in classes.iter().enumerate() {
            pools[c.index()].push(id as u32);
        }
        let nonempty_classes = (0..16).filter(|&i| !pools[i].is_empty()).collect();
        SubjectPools { subject, total: classes.len(), pools, nonempty_classes }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn pool(&self, class: CompositionClass) -> &[u32] {
        &self.pools[class.index()]
    }
}

/// Pools for every subject of one split partition.
#[derive(Debug, Clone, Default)]
pub struct DatasetIndex {
    pub subjects: Vec<SubjectPools>,
}

impl DatasetIndex {
    pub fn push(&mut self, pools: SubjectPools) {
        self.subjects.push(pools);
    }

    pub fn total_streamlines(&self) -> usize {
        self.subjects.iter().map(|s| s.total).sum()
    }
}

/// Disjoint train / validation / test subject id sets.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Randomly partitions subjects by the given (train, validation, test)
/// ratios. Validation and test sizes are floored; the remainder goes to
/// train. Deterministic for a fixed seed.
pub fn split_subjects(
    subjects: &[String],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Split> {
    let (rt, rv, rs) = ratios;
    if subjects.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 subjects to split, got {}",
            subjects.len()
        )));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 || rt <= 0.0 || rv < 0.0 || rs < 0.0 {
        return Err(Error::invalid(format!(
            "split ratios must be nonnegative and sum to 1, got ({rt}, {rv}, {rs})"
        )));
    }
    let n = subjects.len();
    let n_val = (rv * n as f64).floor() as usize;
    let n_test = (rs * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let pick = |range: std::ops::Range<usize>| -> Vec<String> {
        order[range].iter().map(|&i| subjects[i].clone()).collect()
    };
    Ok(Split {
        train: pick(0..n_train),
        validation: pick(n_train..n_train + n_val),
        test: pick(n_train + n_val..n),
    })
}

/// One sampled training example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub subject: usize,
    pub class: CompositionClass,
    pub streamline: u32,
}

/// Draws `n` i.i.d. samples: subject proportional to streamline totals, class
/// uniform over that subject's nonempty composition classes, streamline
/// uniform within the pool. Duplicates are possible by design.
pub fn hierarchical_sample(
    idx: &DatasetIndex,
    n: usize,
    seed: u64,
) -> Result<Vec<SampleRef>> {
    let weights: Vec<usize> = idx.subjects.iter().map(|s| s.total).collect();
    if weights.iter().all(|&w| w == 0) || idx.subjects.is_empty() {
        return Err(Error::invalid("all sampling pools are empty".to_string()));
    }
    let subject_dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::invalid(format!("bad subject weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let si = subject_dist.sample(&mut rng);
        let pools = &idx.subjects[si];
        let ci = pools.nonempty_classes[rng.random_range(0..pools.nonempty_classes.len())];
        let class = CompositionClass::from_index(ci).unwrap();
        let pool = pools.pool(class);
        let streamline = pool[rng.random_range(0..pool.len())];
        out.push(SampleRef { subject: si, class, streamline });
    }
    Ok(out)
}

/// Contiguous chunking into batches; the last batch may be short.
pub fn epoch_batches(samples: &[SampleRef], batch_size: usize) -> Vec<&[SampleRef]> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    samples.chunks(batch_size).collect()
}
