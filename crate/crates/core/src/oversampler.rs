//! Multi-label oversampling: a uniformly drawn sample is appended only when
//! it strictly lowers the standard deviation of the class counts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, SampleRecord};
use crate::rng::SplitMix64;
use crate::taxonomy::{LabelVector, NUM_CLASSES};

/// Number of samples carrying each class.
pub fn class_counts(manifest: &DatasetManifest) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for sample in &manifest.samples {
        add_labels(&mut counts, sample.labels);
    }
    counts
}

fn add_labels(counts: &mut [usize; NUM_CLASSES], labels: LabelVector) {
    for class in labels.classes() {
        counts[class.index()] += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdConvention {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

/// Population standard deviation.
pub fn counts_std(counts: &[usize]) -> f64 {
    counts_std_with(counts, StdConvention::Population)
}

pub fn counts_std_with(counts: &[usize], convention: StdConvention) -> f64 {
    let n = counts.len();
    if n == 0 {
        return 0.0;
    }
    let mean = counts.iter().sum::<usize>() as f64 / n as f64;
    let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
    let denom = match convention {
        StdConvention::Population => n as f64,
        StdConvention::Sample if n > 1 => (n - 1) as f64,
        StdConvention::Sample => return 0.0,
    };
    (ss / denom).sqrt()
}

/// `k·Σc² − (Σc)²`, i.e. `k²` times the population variance, in exact
/// integers. Both std conventions order count vectors the same way.
fn dispersion(counts: &[usize]) -> u128 {
    let k = counts.len() as u128;
    let sum: u128 = counts.iter().map(|&c| c as u128).sum();
    let squares: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    k * squares - sum * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawPool {
    /// Draw from the input samples only.
    #[default]
    Original,
    /// Draw from the input plus everything accepted so far.
    Growing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversampleConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub pool: DrawPool,
    /// Leave NoDamage out of the count vector (five entries instead of six).
    pub damage_only: bool,
    pub convention: StdConvention,
}

impl OversampleConfig {
    /// Defaults with `n_trials` of twice the manifest size.
    pub fn for_manifest(manifest: &DatasetManifest, seed: u64) -> Self {
        Self {
            n_trials: 2 * manifest.len(),
            seed,
            pool: DrawPool::Original,
            damage_only: false,
            convention: StdConvention::Population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OversampleTrace {
    pub trials: usize,
    pub accepted: usize,
    pub std_before: f64,
    pub std_after: f64,
    /// Source ids of accepted draws, in acceptance order.
    pub accepted_ids: Vec<String>,
    /// Count-vector std right after each acceptance.
    pub std_history: Vec<f64>,
}

/// Runs `config.n_trials` draws. The output holds the original samples
/// followed by the accepted duplicates, whose ids get a `#k` suffix for the
/// k-th copy of the same source sample.
pub fn oversample(manifest: &DatasetManifest, config: &OversampleConfig) -> Result<(DatasetManifest, OversampleTrace)> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let skip = usize::from(config.damage_only);
    let std_of = |counts: &[usize; NUM_CLASSES]| counts_std_with(&counts[skip..], config.convention);

    let mut rng = SplitMix64::new(config.seed);
    let mut counts = class_counts(manifest);
    let std_before = std_of(&counts);
    let mut current = std_before;
    let mut current_dispersion = dispersion(&counts[skip..]);

    // Indices into manifest.samples; the growing pool appends to it.
    let mut pool: Vec<usize> = (0..manifest.len()).collect();
    let mut accepted: Vec<usize> = Vec::new();
    let mut std_history = Vec::new();

    for _ in 0..config.n_trials {
        let idx = pool[rng.below(pool.len())];
        let mut candidate = counts;
        add_labels(&mut candidate, manifest.samples[idx].labels);
        let candidate_dispersion = dispersion(&candidate[skip..]);
        if candidate_dispersion < current_dispersion {
            let new_std = std_of(&candidate);
            counts = candidate;
            current = new_std;
            current_dispersion = candidate_dispersion;
            accepted.push(idx);
            std_history.push(new_std);
            if config.pool == DrawPool::Growing {
                pool.push(idx);
            }
        }
    }

    let mut copies: HashMap<usize, usize> = HashMap::new();
    let mut samples = manifest.samples.clone();
    for &idx in &accepted {
        let k = copies.entry(idx).or_insert(0);
        *k += 1;
        let source = &manifest.samples[idx];
        samples.push(SampleRecord { id: format!("{}#{}", source.id, k), ..source.clone() });
    }

    let trace = OversampleTrace {
        trials: config.n_trials,
        accepted: accepted.len(),
        std_before,
        std_after: current,
        accepted_ids: accepted.iter().map(|&i| manifest.samples[i].id.clone()).collect(),
        std_history,
    };
    let out = DatasetManifest { name: format!("{}-oversampled", manifest.name), samples, split: manifest.split };
    Ok((out, trace))
}
