//! Label-stratified train/val/test partitioning.
//!
//! Iterative stratification: the label with the fewest unassigned samples is
//! handled first, and each of its samples goes to the split that still wants
//! the most of that label. Ties fall back to the split with the most
//! remaining capacity, then to the seeded stream. A split that has reached
//! its target size takes no further samples, so the split sizes are exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, Split};
use crate::rng::SplitMix64;
use crate::taxonomy::NUM_CLASSES;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.67, val: 0.13, test: 0.20 }
    }
}

impl SplitFractions {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::BadFractions(format!("{parts:?} must all be positive")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadFractions(format!("{parts:?} sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Floors each `fraction * n`; leftovers go to train first, then val.
pub fn split_sizes(n: usize, fractions: &SplitFractions) -> [usize; 3] {
    let mut sizes = fractions.as_array().map(|f| (f * n as f64 + 1e-9).floor() as usize);
    let mut slot = 0;
    while sizes.iter().sum::<usize>() < n {
        sizes[slot % 3] += 1;
        slot += 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifests {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
}

impl SplitManifests {
    pub fn get(&self, split: Split) -> &DatasetManifest {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Split index (0 = train, 1 = val, 2 = test) for every sample.
pub fn stratified_assignment(
    labels: &[crate::taxonomy::LabelVector],
    fractions: &SplitFractions,
    seed: u64,
) -> Result<Vec<usize>> {
    fractions.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let n = labels.len();
    let fracs = fractions.as_array();
    let mut rng = SplitMix64::new(seed);

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);

    let mut capacity = split_sizes(n, fractions).map(|s| s as f64);
    let mut unassigned_per_label = [0usize; NUM_CLASSES];
    for l in labels {
        for c in l.classes() {
            unassigned_per_label[c.index()] += 1;
        }
    }
    let mut demand: [[f64; 3]; NUM_CLASSES] =
        std::array::from_fn(|c| fracs.map(|f| f * unassigned_per_label[c] as f64));

    let mut assignment: Vec<Option<usize>> = vec![None; n];

    let pick = |rng: &mut SplitMix64, scores: &[(usize, f64, f64)]| -> usize {
        // scores: (split, label demand, capacity), only splits with capacity.
        let best_demand = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let by_demand: Vec<_> = scores.iter().filter(|s| s.1 >= best_demand - TIE_EPS).collect();
        let best_cap = by_demand.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = by_demand.iter().filter(|s| s.2 >= best_cap - TIE_EPS).map(|s| s.0).collect();
        if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.below(tied.len())]
        }
    };

    loop {
        let label =
            (0..NUM_CLASSES).filter(|&c| unassigned_per_label[c] > 0).min_by_key(|&c| (unassigned_per_label[c], c));
        let Some(label) = label else { break };
        for &i in &order {
            if assignment[i].is_some() || !labels[i].get(label) {
                continue;
            }
            let scores: Vec<(usize, f64, f64)> =
                (0..3).filter(|&j| capacity[j] > 0.5).map(|j| (j, demand[label][j], capacity[j])).collect();
            let j = pick(&mut rng, &scores);
            assignment[i] = Some(j);
            capacity[j] -= 1.0;
            for c in labels[i].classes() {
                demand[c.index()][j] -= 1.0;
                unassigned_per_label[c.index()] -= 1;
            }
        }
    }

    for &i in &order {
        if assignment[i].is_none() {
            let scores: Vec<(usize, f64, f64)> =
                (0..3).filter(|&j| capacity[j] > 0.5).map(|j| (j, 0.0, capacity[j])).collect();
            let j = pick(&mut rng, &scores);
            assignment[i] = Some(j);
            capacity[j] -= 1.0;
        }
    }

    Ok(assignment.into_iter().map(|a| a.expect("every sample assigned")).collect())
}

/// Partitions the manifest; sample order is preserved inside each split.
pub fn stratified_split(manifest: &DatasetManifest, fractions: &SplitFractions, seed: u64) -> Result<SplitManifests> {
    let labels: Vec<_> = manifest.samples.iter().map(|s| s.labels).collect();
    let assignment = stratified_assignment(&labels, fractions, seed)?;
    let mut parts: [Vec<_>; 3] = Default::default();
    for (sample, j) in manifest.samples.iter().zip(assignment) {
        let mut sample = sample.clone();
        sample.split = Some(Split::ALL[j]);
        parts[j].push(sample);
    }
    let [train, val, test] = parts;
    let make = |samples, split: Split| DatasetManifest {
        name: format!("{}-{}", manifest.name, split.name()),
        samples,
        split: Some(split),
    };
    Ok(SplitManifests { train: make(train, Split::Train), val: make(val, Split::Val), test: make(test, Split::Test) })
}

/// Keeps existing split tags and stratifies only the untagged samples.
/// Returns the manifest with every sample tagged.
pub fn assign_missing_splits(
    manifest: &DatasetManifest,
    fractions: &SplitFractions,
    seed: u64,
) -> Result<DatasetManifest> {
    fractions.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let untagged: Vec<usize> = (0..manifest.len()).filter(|&i| manifest.samples[i].split.is_none()).collect();
    let mut out = manifest.clone();
    if !untagged.is_empty() {
        let labels: Vec<_> = untagged.iter().map(|&i| manifest.samples[i].labels).collect();
        let assignment = stratified_assignment(&labels, fractions, seed)?;
        for (&i, j) in untagged.iter().zip(assignment) {
            out.samples[i].split = Some(Split::ALL[j]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::SampleRecord;
    use crate::taxonomy::{Dataset, LabelVector, UnifiedClass};
    use std::collections::HashSet;

    fn manifest(labels: &[LabelVector]) -> DatasetManifest {
        DatasetManifest::new(
            "m",
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| SampleRecord {
                    id: format!("s{i}"),
                    image_path: format!("s{i}.jpg"),
                    source: Dataset::Dacl1k,
                    labels: l,
                    width: 100,
                    height: 100,
                    split: None,
                })
                .collect(),
        )
    }

    #[test]
    fn dacl1k_sizes() {
        // 987.58, 191.62, 294.8 floor to 987/191/294; two leftovers.
        assert_eq!(split_sizes(1474, &SplitFractions::default()), [988, 192, 294]);
        assert_eq!(split_sizes(1000, &SplitFractions::default()), [670, 130, 200]);
        let third = 1.0 / 3.0;
        let f = SplitFractions { train: third, val: third, test: third };
        assert_eq!(split_sizes(3, &f), [1, 1, 1]);
        assert_eq!(split_sizes(5, &f), [2, 2, 1]);
    }

    #[test]
    fn three_identical_samples() {
        let crack = LabelVector::from_classes([UnifiedClass::Crack]);
        let m = manifest(&[crack; 3]);
        let third = 1.0 / 3.0;
        let f = SplitFractions { train: third, val: third, test: 1.0 - 2.0 * third };
        let s = stratified_split(&m, &f, 9).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1, 1, 1));
    }

    #[test]
    fn bad_fractions() {
        let m = manifest(&[LabelVector::from_classes([UnifiedClass::Crack])]);
        let f = SplitFractions { train: 0.5, val: 0.3, test: 0.3 };
        assert!(matches!(stratified_split(&m, &f, 0), Err(Error::BadFractions(_))));
        let f = SplitFractions { train: 1.0, val: 0.0, test: 0.0 };
        assert!(matches!(stratified_split(&m, &f, 0), Err(Error::BadFractions(_))));
        assert!(matches!(
            stratified_split(&DatasetManifest::default(), &SplitFractions::default(), 0),
            Err(Error::EmptyManifest)
        ));
    }

    #[test]
    fn partition_and_determinism() {
        let mut rng = SplitMix64::new(3);
        let labels: Vec<_> = (0..300).map(|_| LabelVector::from_mask(1 + rng.below(63) as u8).normalized()).collect();
        let m = manifest(&labels);
        let a = stratified_split(&m, &SplitFractions::default(), 42).unwrap();
        let b = stratified_split(&m, &SplitFractions::default(), 42).unwrap();
        assert_eq!(a, b);
        let ids: HashSet<&str> =
            Split::ALL.iter().flat_map(|&s| a.get(s).samples.iter().map(|x| x.id.as_str())).collect();
        assert_eq!(ids.len(), 300);
        assert_eq!(a.train.len() + a.val.len() + a.test.len(), 300);
        assert_eq!([a.train.len(), a.val.len(), a.test.len()], split_sizes(300, &SplitFractions::default()));
    }

    #[test]
    fn existing_tags_are_kept() {
        let crack = LabelVector::from_classes([UnifiedClass::Crack]);
        let mut m = manifest(&[crack; 10]);
        m.samples[0].split = Some(Split::Test);
        let out = assign_missing_splits(&m, &SplitFractions::default(), 1).unwrap();
        assert_eq!(out.samples[0].split, Some(Split::Test));
        assert!(out.samples.iter().all(|s| s.split.is_some()));
    }
}
