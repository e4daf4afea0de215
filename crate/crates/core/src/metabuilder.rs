//! Meta dataset compilation and dataset statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, SampleRecord};
use crate::taxonomy::{Dataset, UnifiedClass, NUM_CLASSES};

/// Datasets making up each meta level, in merge order.
pub fn meta_sources(level: u8) -> Result<&'static [Dataset]> {
    const ORDER: [Dataset; 4] = [Dataset::Codebrim, Dataset::Mcds, Dataset::Bcd, Dataset::Sdnet];
    match level {
        2..=4 => Ok(&ORDER[..usize::from(level)]),
        other => Err(Error::BadLevel(other)),
    }
}

/// Concatenates the sources of meta`level` in fixed order. Ids become
/// `<SOURCE>/<id>`; source split tags are kept.
pub fn build_meta(level: u8, inputs: &BTreeMap<Dataset, DatasetManifest>) -> Result<DatasetManifest> {
    let sources = meta_sources(level)?;
    let mut samples = Vec::new();
    for &dataset in sources {
        let manifest = inputs.get(&dataset).ok_or(Error::MissingDataset { level, dataset })?;
        for sample in &manifest.samples {
            if sample.source != dataset {
                return Err(Error::Invalid(format!(
                    "sample {:?} in the {dataset} input is tagged {}",
                    sample.id, sample.source
                )));
            }
            samples.push(SampleRecord { id: format!("{dataset}/{}", sample.id), ..sample.clone() });
        }
    }
    let manifest = DatasetManifest::new(format!("meta{level}"), samples);
    manifest.validate()?;
    Ok(manifest)
}

/// (height, width) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub height: u32,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub n_samples: usize,
    pub n_labels_total: usize,
    pub class_counts: [usize; NUM_CLASSES],
    pub size_min: Option<Size>,
    pub size_median: Option<Size>,
    pub size_max: Option<Size>,
}

/// Heights and widths are ordered independently; the median of an even
/// count is the lower one.
pub fn dataset_stats(manifest: &DatasetManifest) -> DatasetStats {
    let mut class_counts = [0usize; NUM_CLASSES];
    for sample in &manifest.samples {
        for class in sample.labels.classes() {
            class_counts[class.index()] += 1;
        }
    }
    let mut heights: Vec<u32> = manifest.samples.iter().map(|s| s.height).collect();
    let mut widths: Vec<u32> = manifest.samples.iter().map(|s| s.width).collect();
    heights.sort_unstable();
    widths.sort_unstable();
    let pick = |i: usize| Size { height: heights[i], width: widths[i] };
    let n = heights.len();
    let (size_min, size_median, size_max) =
        if n == 0 { (None, None, None) } else { (Some(pick(0)), Some(pick((n - 1) / 2)), Some(pick(n - 1))) };
    DatasetStats {
        name: manifest.name.clone(),
        n_samples: manifest.len(),
        n_labels_total: class_counts.iter().sum(),
        class_counts,
        size_min,
        size_median,
        size_max,
    }
}

/// Aligned text table, one row per dataset, image sizes written as
/// `(min, median, max)x(min, median, max)` over height then width.
pub fn render_stats_table(rows: &[DatasetStats]) -> String {
    let size_cell = |s: &DatasetStats| match (s.size_min, s.size_median, s.size_max) {
        (Some(lo), Some(mid), Some(hi)) => {
            format!("({}, {}, {})x({}, {}, {})", lo.height, mid.height, hi.height, lo.width, mid.width, hi.width)
        }
        _ => "-".to_owned(),
    };
    let mut header: Vec<String> = vec!["Dataset".into(), "Samples".into(), "Labels".into()];
    header.extend(UnifiedClass::ALL.iter().map(|c| c.short_name().to_owned()));
    header.push("Image size (min, median, max)".into());
    let mut table = vec![header];
    for s in rows {
        let mut row = vec![s.name.clone(), s.n_samples.to_string(), s.n_labels_total.to_string()];
        row.extend(s.class_counts.iter().map(usize::to_string));
        row.push(size_cell(s));
        table.push(row);
    }
    render_aligned(&table)
}

/// First column left-aligned, the rest right-aligned.
pub(crate) fn render_aligned(table: &[Vec<String>]) -> String {
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in table {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                line.push_str(cell);
                line.extend(std::iter::repeat_n(' ', pad));
            } else {
                line.extend(std::iter::repeat_n(' ', pad));
                line.push_str(cell);
            }
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::LabelVector;
    use UnifiedClass::*;

    fn rec(source: Dataset, id: &str, labels: &[UnifiedClass], h: u32, w: u32) -> SampleRecord {
        SampleRecord {
            id: id.into(),
            image_path: format!("{id}.png"),
            source,
            labels: LabelVector::from_classes(labels.iter().copied()),
            width: w,
            height: h,
            split: None,
        }
    }

    fn inputs() -> BTreeMap<Dataset, DatasetManifest> {
        let mut map = BTreeMap::new();
        map.insert(Dataset::Codebrim, DatasetManifest::new("c", vec![rec(Dataset::Codebrim, "1", &[Crack], 40, 22)]));
        map.insert(Dataset::Mcds, DatasetManifest::new("m", vec![rec(Dataset::Mcds, "1", &[Rust], 50, 60)]));
        map.insert(Dataset::Bcd, DatasetManifest::new("b", vec![rec(Dataset::Bcd, "1", &[NoDamage], 224, 224)]));
        map.insert(Dataset::Sdnet, DatasetManifest::new("s", vec![rec(Dataset::Sdnet, "1", &[Crack], 256, 256)]));
        map
    }

    #[test]
    fn meta_order_and_prefixes() {
        let m = build_meta(4, &inputs()).unwrap();
        let ids: Vec<&str> = m.samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["CODEBRIM/1", "MCDS/1", "BCD/1", "SDNET/1"]);
        assert_eq!(m.name, "meta4");
    }

    #[test]
    fn meta4_restricted_equals_meta3() {
        let all = inputs();
        let m4 = build_meta(4, &all).unwrap();
        let m3 = build_meta(3, &all).unwrap();
        let restricted: Vec<_> = m4.samples.into_iter().filter(|s| s.source != Dataset::Sdnet).collect();
        assert_eq!(restricted, m3.samples);
    }

    #[test]
    fn missing_and_bad_level() {
        let mut map = inputs();
        map.remove(&Dataset::Bcd);
        assert!(build_meta(2, &map).is_ok());
        assert!(matches!(build_meta(3, &map), Err(Error::MissingDataset { level: 3, dataset: Dataset::Bcd })));
        assert!(matches!(build_meta(5, &map), Err(Error::BadLevel(5))));
    }

    #[test]
    fn empty_mcds_is_identity() {
        let mut map = inputs();
        map.insert(Dataset::Mcds, DatasetManifest::new("m", vec![]));
        let m = build_meta(2, &map).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.samples[0].source, Dataset::Codebrim);
    }

    #[test]
    fn wrong_source_tag_rejected() {
        let mut map = inputs();
        map.insert(Dataset::Mcds, DatasetManifest::new("m", vec![rec(Dataset::Bcd, "x", &[Crack], 5, 5)]));
        assert!(build_meta(2, &map).is_err());
    }

    #[test]
    fn stats_lower_median() {
        let m = DatasetManifest::new(
            "x",
            vec![
                rec(Dataset::Mcds, "a", &[Crack, Rust], 10, 40),
                rec(Dataset::Mcds, "b", &[Crack], 30, 10),
                rec(Dataset::Mcds, "c", &[Spalling], 20, 30),
                rec(Dataset::Mcds, "d", &[NoDamage], 40, 20),
            ],
        );
        let s = dataset_stats(&m);
        assert_eq!(s.n_samples, 4);
        assert_eq!(s.n_labels_total, 5);
        assert_eq!(s.class_counts, [1, 2, 0, 1, 0, 1]);
        assert_eq!(s.size_min, Some(Size { height: 10, width: 10 }));
        assert_eq!(s.size_median, Some(Size { height: 20, width: 20 }));
        assert_eq!(s.size_max, Some(Size { height: 40, width: 40 }));
    }

    #[test]
    fn stats_single_and_empty() {
        let m = DatasetManifest::new("x", vec![rec(Dataset::Bcd, "a", &[Crack], 224, 224)]);
        let s = dataset_stats(&m);
        assert_eq!((s.n_samples, s.n_labels_total), (1, 1));
        assert_eq!(s.size_min, s.size_max);
        let empty = dataset_stats(&DatasetManifest::default());
        assert_eq!(empty.n_samples, 0);
        assert!(empty.size_median.is_none());
    }

    #[test]
    fn table_renders_sizes() {
        let m = DatasetManifest::new("BCD", vec![rec(Dataset::Bcd, "a", &[Crack], 224, 224)]);
        let text = render_stats_table(&[dataset_stats(&m)]);
        assert!(text.contains("(224, 224, 224)x(224, 224, 224)"));
        assert_eq!(text.lines().count(), 2);
    }
}
