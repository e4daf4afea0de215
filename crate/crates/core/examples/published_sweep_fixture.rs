//! Writes the published crop-size sweep fixture: a 219-sample test-set
//! ground truth and one prediction file per crop size.
//!
//! The 624 file reproduces the published EMR and classwise recalls of the
//! best meta3+dacl1k model exactly. Other crop sizes only reproduce the
//! shape of the sweep (equal peaks at 528 and 624).
//!
//! Usage: cargo run --example published_sweep_fixture -- <out-dir>

use std::path::PathBuf;

use rcdkit::manifest::write_jsonl;
use rcdkit::metrics::{sweep_grid, PredictionRecord};
use rcdkit::taxonomy::{Dataset, LabelVector, UnifiedClass, NUM_CLASSES};
use rcdkit::{SampleRecord, Split};
use UnifiedClass::*;

fn lv(classes: &[UnifiedClass]) -> LabelVector {
    LabelVector::from_classes(classes.iter().copied())
}

/// (count, truth, prediction) blocks for crop 624.
fn blocks() -> Vec<(usize, LabelVector, LabelVector)> {
    let nd = lv(&[NoDamage]);
    let sbr = lv(&[Spalling, BarsExposed, Rust]);
    let cer = lv(&[Crack, Efflorescence, Rust]);
    let cs = lv(&[Crack, Spalling]);
    let es = lv(&[Efflorescence, Spalling]);
    vec![
        (31, nd, nd),
        (15, nd, lv(&[Crack])),
        (32, sbr, lv(&[Crack, Spalling, BarsExposed, Rust])),
        (18, sbr, lv(&[Spalling, Rust])),
        (3, sbr, lv(&[Rust])),
        (8, cer, lv(&[Crack, Efflorescence, Rust, Spalling])),
        (7, cer, lv(&[Efflorescence, Rust])),
        (15, cer, lv(&[Rust])),
        (29, cer, nd),
        (5, cs, cs),
        (8, cs, lv(&[Crack])),
        (13, es, lv(&[Efflorescence])),
        (8, lv(&[Crack]), lv(&[Crack])),
        (16, lv(&[Efflorescence]), lv(&[Efflorescence])),
        (11, lv(&[Spalling]), lv(&[Spalling])),
    ]
}

/// Exact matches per crop size; 71 of 219 gives 32.42 %.
const EXACT: [(u32, usize); 10] =
    [(512, 62), (528, 71), (544, 66), (560, 68), (576, 65), (592, 67), (608, 69), (624, 71), (640, 64), (656, 63)];

fn probs(labels: LabelVector) -> [f64; NUM_CLASSES] {
    std::array::from_fn(|c| if labels.get(c) { 0.9 } else { 0.1 })
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).expect("usage: published_sweep_fixture <out-dir>"));
    std::fs::create_dir_all(&out).expect("create output directory");

    let mut truths = Vec::new();
    let mut base_preds = Vec::new();
    for (count, truth, pred) in blocks() {
        for _ in 0..count {
            let id = format!("test_{:03}", truths.len());
            truths.push(SampleRecord {
                id: id.clone(),
                image_path: format!("images/{id}.jpg"),
                source: Dataset::Dacl1k,
                labels: truth,
                width: 1365,
                height: 1024,
                split: Some(Split::Test),
            });
            base_preds.push(pred);
        }
    }
    assert_eq!(truths.len(), 219);
    write_jsonl(&out.join("truth.jsonl"), &truths).expect("write truth");

    let crack = lv(&[Crack]);
    for (crop, exact) in EXACT {
        assert!(sweep_grid().contains(&crop));
        // Break the first (71 - exact) NoDamage hits.
        let broken = 71 - exact;
        let preds: Vec<PredictionRecord> = truths
            .iter()
            .zip(&base_preds)
            .enumerate()
            .map(|(i, (t, &p))| {
                let p = if i < broken { crack } else { p };
                PredictionRecord { id: t.id.clone(), probs: probs(p) }
            })
            .collect();
        write_jsonl(&out.join(format!("preds_{crop}.jsonl")), &preds).expect("write predictions");
    }
}
