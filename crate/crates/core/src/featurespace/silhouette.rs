use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{LabelVector, UnifiedClass, NUM_CLASSES};

use super::FeatureRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    ByDataset,
    ByClass,
}

/// Mean silhouette coefficient with Euclidean distance. `points` are rows
/// of equal length; `groups[i]` is the group id of row `i`.
pub fn silhouette_score(points: &[Vec<f64>], groups: &[usize]) -> Result<f64> {
    assert_eq!(points.len(), groups.len());
    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
    let mut sizes = vec![0usize; n_groups];
    for &g in groups {
        sizes[g] += 1;
    }
    let present: Vec<usize> = (0..n_groups).filter(|&g| sizes[g] > 0).collect();
    if present.len() < 2 {
        return Err(Error::TooFewGroups(format!("{} non-empty group(s)", present.len())));
    }
    if let Some(&g) = present.iter().find(|&&g| sizes[g] < 2) {
        return Err(Error::TooFewGroups(format!("group {g} has a single member")));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut total = 0.0;
    let mut sums = vec![0.0; n_groups];
    for (i, pi) in points.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, pj) in points.iter().enumerate() {
            if i != j {
                sums[groups[j]] += dist(pi, pj);
            }
        }
        let own = groups[i];
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = present.iter().filter(|&&g| g != own).map(|&g| sums[g] / sizes[g] as f64).fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        total += if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }
    Ok(total / points.len() as f64)
}

/// Rarest set class of each label vector, rarity counted over `labels`
/// themselves. Ties go to the lower class index.
pub fn rarest_class(labels: &[LabelVector]) -> Vec<Option<UnifiedClass>> {
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        for c in l.classes() {
            counts[c.index()] += 1;
        }
    }
    labels.iter().map(|l| l.classes().min_by_key(|c| (counts[c.index()], c.index()))).collect()
}

/// Indices of the records taking part in the score and their group ids.
/// Under `ByClass`, multi-label records go to their rarest class, or are
/// left out when `exclude_multilabel` is set.
pub fn assign_groups(
    records: &[FeatureRecord],
    grouping: Grouping,
    exclude_multilabel: bool,
) -> (Vec<usize>, Vec<usize>) {
    match grouping {
        Grouping::ByDataset => ((0..records.len()).collect(), records.iter().map(|r| r.source as usize).collect()),
        Grouping::ByClass => {
            let labels: Vec<LabelVector> = records.iter().map(|r| r.labels).collect();
            let rarest = rarest_class(&labels);
            let mut keep = Vec::new();
            let mut groups = Vec::new();
            for (i, class) in rarest.into_iter().enumerate() {
                let Some(class) = class else { continue };
                if exclude_multilabel && labels[i].count() > 1 {
                    continue;
                }
                keep.push(i);
                groups.push(class.index());
            }
            (keep, groups)
        }
    }
}

/// Silhouette of `points` (one per record, raw features or an embedding)
/// under the chosen grouping.
pub fn separation_score(
    points: &[Vec<f64>],
    records: &[FeatureRecord],
    grouping: Grouping,
    exclude_multilabel: bool,
) -> Result<f64> {
    assert_eq!(points.len(), records.len());
    let (keep, groups) = assign_groups(records, grouping, exclude_multilabel);
    let kept: Vec<Vec<f64>> = keep.iter().map(|&i| points[i].clone()).collect();
    silhouette_score(&kept, &groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use UnifiedClass::*;

    fn blob(rng: &mut SplitMix64, center: [f64; 2], n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| vec![center[0] + rng.gaussian(), center[1] + rng.gaussian()]).collect()
    }

    #[test]
    fn separated_blobs_score_high() {
        let mut rng = SplitMix64::new(1);
        let mut pts = blob(&mut rng, [0.0, 0.0], 40);
        pts.extend(blob(&mut rng, [100.0, 0.0], 40));
        let groups: Vec<usize> = (0..80).map(|i| i / 40).collect();
        assert!(silhouette_score(&pts, &groups).unwrap() > 0.8);
    }

    #[test]
    fn random_halves_score_near_zero() {
        let mut rng = SplitMix64::new(2);
        let pts = blob(&mut rng, [0.0, 0.0], 400);
        let groups: Vec<usize> = (0..400).map(|_| rng.below(2)).collect();
        assert!(silhouette_score(&pts, &groups).unwrap().abs() < 0.1);
    }

    #[test]
    fn hand_case() {
        // Groups {0, 1} and {4, 5} on a line.
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 4.0, 5.0].iter().map(|&x| vec![x]).collect();
        let s = silhouette_score(&pts, &[0, 0, 1, 1]).unwrap();
        // a = 1 for all; b = 4.5, 3.5, 3.5, 4.5
        let expected = ((3.5 / 4.5) + (2.5 / 3.5)) / 2.0;
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn too_few_groups() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(silhouette_score(&pts, &[0, 0, 0]), Err(Error::TooFewGroups(_))));
        assert!(matches!(silhouette_score(&pts, &[0, 0, 1]), Err(Error::TooFewGroups(_))));
    }

    #[test]
    fn rarest_assignment() {
        let labels = [
            LabelVector::from_classes([Crack]),
            LabelVector::from_classes([Crack]),
            LabelVector::from_classes([Crack, Rust]),
        ];
        assert_eq!(rarest_class(&labels), [Some(Crack), Some(Crack), Some(Rust)]);
    }
}
