//! Scoring prediction files: Exact Match Ratio, classwise Recall and the
//! test-crop-size sweep.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{read_jsonl, SampleRecord};
use crate::metabuilder::render_aligned;
use crate::taxonomy::{LabelVector, UnifiedClass, NUM_CLASSES};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Test crop sizes from 512 to 656 in steps of 16.
pub fn sweep_grid() -> Vec<u32> {
    (512..=656).step_by(16).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub probs: [f64; NUM_CLASSES],
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.probs.iter().all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(Error::Invalid(format!("prediction {:?} has probabilities outside [0, 1]", self.id)))
        }
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let preds: Vec<PredictionRecord> = read_jsonl(path)?;
    for p in &preds {
        p.validate()?;
    }
    Ok(preds)
}

/// Bit `c` set iff `probs[c] >= threshold`.
pub fn binarize(probs: &[f64; NUM_CLASSES], threshold: f64) -> LabelVector {
    let mut bits = [false; NUM_CLASSES];
    for (bit, &p) in bits.iter_mut().zip(probs) {
        *bit = p >= threshold;
    }
    LabelVector::from_bits(bits)
}

/// (predicted, truth) per sample, in truth order. Id sets must match exactly.
fn paired(
    preds: &[PredictionRecord],
    truths: &[SampleRecord],
    threshold: f64,
) -> Result<Vec<(LabelVector, LabelVector)>> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::IdMismatch(format!("duplicate prediction id {:?}", p.id)));
        }
    }
    let mut seen = HashSet::with_capacity(truths.len());
    let mut out = Vec::with_capacity(truths.len());
    for t in truths {
        if !seen.insert(t.id.as_str()) {
            return Err(Error::IdMismatch(format!("duplicate truth id {:?}", t.id)));
        }
        let p = by_id.get(t.id.as_str()).ok_or_else(|| Error::IdMismatch(format!("no prediction for {:?}", t.id)))?;
        out.push((binarize(&p.probs, threshold), t.labels));
    }
    if preds.len() != truths.len() {
        let extra = preds.iter().find(|p| !seen.contains(p.id.as_str())).map(|p| p.id.clone());
        return Err(Error::IdMismatch(format!("prediction {:?} has no ground truth", extra.unwrap_or_default())));
    }
    if out.is_empty() {
        return Err(Error::EmptyManifest);
    }
    Ok(out)
}

pub fn exact_match_ratio(preds: &[PredictionRecord], truths: &[SampleRecord]) -> Result<f64> {
    exact_match_ratio_at(preds, truths, DEFAULT_THRESHOLD)
}

pub fn exact_match_ratio_at(preds: &[PredictionRecord], truths: &[SampleRecord], threshold: f64) -> Result<f64> {
    let pairs = paired(preds, truths, threshold)?;
    Ok(emr_of(&pairs))
}

fn emr_of(pairs: &[(LabelVector, LabelVector)]) -> f64 {
    let hits = pairs.iter().filter(|(p, t)| p == t).count();
    hits as f64 / pairs.len() as f64
}

/// `TP / (TP + FN)` per class; `None` where no truth carries the class.
pub fn classwise_recall(preds: &[PredictionRecord], truths: &[SampleRecord]) -> Result<[Option<f64>; NUM_CLASSES]> {
    classwise_recall_at(preds, truths, DEFAULT_THRESHOLD)
}

pub fn classwise_recall_at(
    preds: &[PredictionRecord],
    truths: &[SampleRecord],
    threshold: f64,
) -> Result<[Option<f64>; NUM_CLASSES]> {
    let pairs = paired(preds, truths, threshold)?;
    let (recall, _) = recall_of(&pairs);
    Ok(recall)
}

fn recall_of(pairs: &[(LabelVector, LabelVector)]) -> ([Option<f64>; NUM_CLASSES], [usize; NUM_CLASSES]) {
    let mut tp = [0usize; NUM_CLASSES];
    let mut support = [0usize; NUM_CLASSES];
    for (p, t) in pairs {
        for c in t.classes() {
            support[c.index()] += 1;
            if p.contains(c) {
                tp[c.index()] += 1;
            }
        }
    }
    let recall = std::array::from_fn(|c| (support[c] > 0).then(|| tp[c] as f64 / support[c] as f64));
    (recall, support)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub emr: f64,
    pub recall: [Option<f64>; NUM_CLASSES],
    pub n_samples: usize,
    pub per_class_support: [usize; NUM_CLASSES],
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn evaluate(preds: &[PredictionRecord], truths: &[SampleRecord], threshold: f64) -> Result<EvalReport> {
    let pairs = paired(preds, truths, threshold)?;
    let (recall, per_class_support) = recall_of(&pairs);
    Ok(EvalReport { emr: emr_of(&pairs), recall, n_samples: pairs.len(), per_class_support, threshold, seed: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub crop_size: u32,
    pub emr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Crop size with the highest EMR; ties go to the larger crop.
    pub best: u32,
}

impl SweepReport {
    pub fn from_rows(rows: Vec<SweepRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Invalid("sweep has no rows".into()));
        }
        if rows.windows(2).any(|w| w[0].crop_size >= w[1].crop_size) {
            return Err(Error::Invalid("sweep crop sizes must be strictly increasing".into()));
        }
        let best = rows.iter().fold(rows[0], |best, row| if row.emr >= best.emr { *row } else { best }).crop_size;
        Ok(Self { rows, best })
    }

    pub fn best_row(&self) -> SweepRow {
        *self.rows.iter().find(|r| r.crop_size == self.best).expect("best row present")
    }
}

/// EMR for every crop size.
pub fn sweep_report(runs: &BTreeMap<u32, (Vec<PredictionRecord>, Vec<SampleRecord>)>) -> Result<SweepReport> {
    let rows = runs
        .iter()
        .map(|(&crop_size, (preds, truths))| Ok(SweepRow { crop_size, emr: exact_match_ratio(preds, truths)? }))
        .collect::<Result<Vec<_>>>()?;
    SweepReport::from_rows(rows)
}

/// Prediction files named `preds_<cropsize>.jsonl` in `dir`, keyed by size.
pub fn find_sweep_files(dir: &Path) -> Result<BTreeMap<u32, std::path::PathBuf>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let size = name
            .strip_prefix("preds_")
            .and_then(|rest| rest.strip_suffix(".jsonl"))
            .and_then(|n| n.parse::<u32>().ok());
        if let Some(size) = size {
            files.insert(size, path);
        }
    }
    if files.is_empty() {
        return Err(Error::Invalid(format!("no preds_<size>.jsonl files in {}", dir.display())));
    }
    Ok(files)
}

/// Sweep over a directory of prediction files against one ground truth.
pub fn sweep_dir(dir: &Path, truths: &[SampleRecord]) -> Result<SweepReport> {
    let mut rows = Vec::new();
    for (crop_size, path) in find_sweep_files(dir)? {
        let preds = read_predictions(&path)?;
        rows.push(SweepRow { crop_size, emr: exact_match_ratio(&preds, truths)? });
    }
    SweepReport::from_rows(rows)
}

/// Fraction as a percentage with two decimals; `None` renders as an em dash.
pub fn format_percent(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.2}", v * 100.0),
        None => "\u{2014}".to_owned(),
    }
}

pub fn render_report_text(report: &EvalReport) -> String {
    let mut header = vec!["".to_owned(), "EMR".to_owned()];
    header.extend(UnifiedClass::ALL.iter().map(|c| c.short_name().to_owned()));
    let mut values = vec!["value".to_owned(), format_percent(Some(report.emr))];
    values.extend(report.recall.iter().map(|r| format_percent(*r)));
    let mut support = vec!["support".to_owned(), report.n_samples.to_string()];
    support.extend(report.per_class_support.iter().map(usize::to_string));
    render_aligned(&[header, values, support])
}

pub fn render_sweep_text(report: &SweepReport) -> String {
    let mut table = vec![vec!["TestCS".to_owned(), "EMR".to_owned(), "".to_owned()]];
    for row in &report.rows {
        let mark = if row.crop_size == report.best { "*" } else { "" };
        table.push(vec![row.crop_size.to_string(), format_percent(Some(row.emr)), mark.to_owned()]);
    }
    let mut out = render_aligned(&table);
    let _ = writeln!(out, "best: {} ({})", report.best, format_percent(Some(report.best_row().emr)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::Dataset;
    use UnifiedClass::*;

    fn truth(id: &str, labels: &[UnifiedClass]) -> SampleRecord {
        SampleRecord {
            id: id.into(),
            image_path: String::new(),
            source: Dataset::Dacl1k,
            labels: LabelVector::from_classes(labels.iter().copied()),
            width: 1,
            height: 1,
            split: None,
        }
    }

    fn pred(id: &str, probs: [f64; 6]) -> PredictionRecord {
        PredictionRecord { id: id.into(), probs }
    }

    #[test]
    fn binarize_cases() {
        assert_eq!(binarize(&[0.9, 0.1, 0.1, 0.1, 0.1, 0.1], 0.5), LabelVector::from_classes([NoDamage]));
        assert_eq!(binarize(&[0.5; 6], 0.5), LabelVector::from_mask(0b11_1111));
        assert_eq!(
            binarize(&[0.2, 0.6, 0.2, 0.7, 0.8, 0.9], 0.5),
            LabelVector::from_classes([Crack, Spalling, BarsExposed, Rust])
        );
    }

    #[test]
    fn five_of_six_is_a_miss() {
        let t = [truth("a", &[Crack, Rust])];
        let p = [pred("a", [0.0, 0.9, 0.0, 0.0, 0.0, 0.2])];
        assert_eq!(exact_match_ratio(&p, &t).unwrap(), 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let t = [truth("a", &[Crack]), truth("b", &[NoDamage])];
        let p = [pred("b", [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), pred("a", [0.0, 1.0, 0.0, 0.0, 0.0, 0.0])];
        assert_eq!(exact_match_ratio(&p, &t).unwrap(), 1.0);
        let r = classwise_recall(&p, &t).unwrap();
        assert_eq!(r, [Some(1.0), Some(1.0), None, None, None, None]);
    }

    #[test]
    fn overlooked_cracks() {
        let t = [truth("a", &[Crack]), truth("b", &[Crack])];
        let p = [pred("a", [0.9, 0.0, 0.0, 0.0, 0.0, 0.0]), pred("b", [0.9, 0.0, 0.0, 0.0, 0.0, 0.0])];
        assert_eq!(classwise_recall(&p, &t).unwrap()[Crack.index()], Some(0.0));
    }

    #[test]
    fn id_mismatch() {
        let t = [truth("a", &[Crack])];
        assert!(matches!(exact_match_ratio(&[pred("b", [0.0; 6])], &t), Err(Error::IdMismatch(_))));
        let p = [pred("a", [0.0; 6]), pred("b", [0.0; 6])];
        assert!(matches!(exact_match_ratio(&p, &t), Err(Error::IdMismatch(_))));
        let p = [pred("a", [0.0; 6]), pred("a", [0.0; 6])];
        assert!(matches!(classwise_recall(&p, &t), Err(Error::IdMismatch(_))));
    }

    #[test]
    fn out_of_range_probability() {
        assert!(pred("a", [0.0, 1.2, 0.0, 0.0, 0.0, 0.0]).validate().is_err());
    }

    #[test]
    fn sweep_tie_goes_to_larger_crop() {
        let rows = vec![
            SweepRow { crop_size: 512, emr: 0.2 },
            SweepRow { crop_size: 528, emr: 0.3 },
            SweepRow { crop_size: 544, emr: 0.3 },
            SweepRow { crop_size: 560, emr: 0.1 },
        ];
        assert_eq!(SweepReport::from_rows(rows).unwrap().best, 544);
        let single = SweepReport::from_rows(vec![SweepRow { crop_size: 600, emr: 0.0 }]).unwrap();
        assert_eq!(single.best, 600);
        let unordered = vec![SweepRow { crop_size: 528, emr: 0.1 }, SweepRow { crop_size: 512, emr: 0.1 }];
        assert!(SweepReport::from_rows(unordered).is_err());
    }

    #[test]
    fn grid() {
        let g = sweep_grid();
        assert_eq!(g.len(), 10);
        assert_eq!((g[0], g[9]), (512, 656));
    }

    #[test]
    fn rendering() {
        assert_eq!(format_percent(Some(0.3242)), "32.42");
        assert_eq!(format_percent(None), "\u{2014}");
        let t = [truth("a", &[Crack])];
        let p = [pred("a", [0.0, 0.9, 0.0, 0.0, 0.0, 0.0])];
        let report = evaluate(&p, &t, 0.5).unwrap();
        let text = render_report_text(&report);
        assert!(text.contains("100.00"));
        assert!(text.contains('\u{2014}'));
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), report);
    }
}
