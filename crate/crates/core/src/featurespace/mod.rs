//! Bottleneck-feature analysis: per-dataset subsampling, exact t-SNE and
//! separation scoring by dataset versus by class.

mod silhouette;
mod tsne;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use self::silhouette::{assign_groups, rarest_class, separation_score, silhouette_score, Grouping};
pub use self::tsne::{
    initial_points, input_affinities, kl_divergence, kl_gradient, output_affinities, squared_distances, tsne,
    tsne_from_affinities, Affinities, Embedding, KlSample, TsneConfig, PERPLEXITY_TOL,
};
use crate::error::{Error, Result};
use crate::manifest::write_jsonl;
use crate::rng::SplitMix64;
use crate::taxonomy::{Dataset, LabelVector};

pub const FEATURE_DIM: usize = 960;
pub const DEFAULT_PER_DATASET: usize = 330;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub source: Dataset,
    pub labels: LabelVector,
    pub vector: Vec<f64>,
}

impl FeatureRecord {
    pub fn validate(&self) -> Result<()> {
        if self.vector.len() != FEATURE_DIM {
            return Err(Error::Invalid(format!(
                "feature {:?} has {} dimensions, expected {FEATURE_DIM}",
                self.id,
                self.vector.len()
            )));
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("feature {:?} has non-finite entries", self.id)));
        }
        Ok(())
    }
}

/// Dense row-major matrix of feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Invalid("feature rows differ in length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("feature rows contain non-finite values".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_records(records: &[FeatureRecord]) -> Result<Self> {
        Self::from_rows(records.iter().map(|r| r.vector.clone()).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Per-column z-scoring; constant columns become zero.
    pub fn standardized(&self) -> Self {
        let n = self.rows as f64;
        let mut out = self.clone();
        for c in 0..self.cols {
            let mean = (0..self.rows).map(|r| self.data[r * self.cols + c]).sum::<f64>() / n;
            let var = (0..self.rows).map(|r| (self.data[r * self.cols + c] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for r in 0..self.rows {
                let v = &mut out.data[r * self.cols + c];
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
        out
    }
}

/// `n` records per dataset drawn without replacement, datasets in their
/// fixed order and records of each in input order.
pub fn sample_per_dataset(records: &[FeatureRecord], n: usize, seed: u64) -> Result<Vec<FeatureRecord>> {
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    for dataset in Dataset::ALL {
        let mut idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].source == dataset).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < n {
            return Err(Error::InsufficientRecords { dataset, have: idx.len(), need: n });
        }
        // Partial Fisher-Yates from the front.
        for k in 0..n {
            let j = k + rng.below(idx.len() - k);
            idx.swap(k, j);
        }
        let mut chosen = idx[..n].to_vec();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| records[i].clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureHeader {
    dim: usize,
    count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    source: Dataset,
    labels: LabelVector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SidecarIndex {
    dim: usize,
    count: usize,
    records: Vec<IndexEntry>,
}

/// JSON index next to a binary feature file: same stem, `.json` extension.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Reads a `.bin` file (little-endian f32 rows plus sidecar index) or a
/// JSON Lines file (header line then one record per line).
pub fn read_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    let records = if path.extension().is_some_and(|e| e == "bin") {
        read_features_bin(path)?
    } else {
        read_features_jsonl(path)?
    };
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {msg}", path.display()))
}

fn read_features_jsonl(path: &Path) -> Result<Vec<FeatureRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines.next().ok_or_else(|| parse_err(path, "missing header line"))?;
    let header: FeatureHeader =
        serde_json::from_str(&header_line.map_err(|e| Error::io(path, e))?).map_err(|e| parse_err(path, e))?;
    if header.dim != FEATURE_DIM {
        return Err(parse_err(path, format!("header dim {} differs from {FEATURE_DIM}", header.dim)));
    }
    let mut records = Vec::with_capacity(header.count);
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str::<FeatureRecord>(&line).map_err(|e| parse_err(path, e))?);
    }
    if records.len() != header.count {
        return Err(parse_err(path, format!("header count {} but {} records", header.count, records.len())));
    }
    Ok(records)
}

fn read_features_bin(path: &Path) -> Result<Vec<FeatureRecord>> {
    let index_path = sidecar_path(path);
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: SidecarIndex = serde_json::from_str(&text).map_err(|e| parse_err(&index_path, e))?;
    if index.dim != FEATURE_DIM || index.count != index.records.len() {
        return Err(parse_err(&index_path, "dim or count does not match the records"));
    }
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    let expected = index.count * index.dim * 4;
    if bytes.len() != expected {
        return Err(parse_err(path, format!("{} bytes, expected {expected}", bytes.len())));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))).collect();
    Ok(index
        .records
        .into_iter()
        .zip(values.chunks_exact(index.dim))
        .map(|(entry, vector)| FeatureRecord {
            id: entry.id,
            source: entry.source,
            labels: entry.labels,
            vector: vector.to_vec(),
        })
        .collect())
}

pub fn write_features_jsonl(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    records.iter().try_for_each(FeatureRecord::validate)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = FeatureHeader { dim: FEATURE_DIM, count: records.len() };
    let mut emit = |value: String| writeln!(w, "{value}").map_err(|e| Error::io(path, e));
    emit(serde_json::to_string(&header).map_err(|e| parse_err(path, e))?)?;
    for r in records {
        emit(serde_json::to_string(r).map_err(|e| parse_err(path, e))?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `path` (f32 little-endian) and its sidecar index.
pub fn write_features_bin(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    records.iter().try_for_each(FeatureRecord::validate)?;
    let mut bytes = Vec::with_capacity(records.len() * FEATURE_DIM * 4);
    for r in records {
        for &v in &r.vector {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let index = SidecarIndex {
        dim: FEATURE_DIM,
        count: records.len(),
        records: records.iter().map(|r| IndexEntry { id: r.id.clone(), source: r.source, labels: r.labels }).collect(),
    };
    let index_path = sidecar_path(path);
    let text = serde_json::to_string(&index).map_err(|e| parse_err(&index_path, e))?;
    std::fs::write(&index_path, text).map_err(|e| Error::io(&index_path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub id: String,
    pub source: Dataset,
    pub labels: LabelVector,
    pub x: f64,
    pub y: f64,
}

pub fn embedded_points(records: &[FeatureRecord], embedding: &Embedding) -> Vec<EmbeddedPoint> {
    records
        .iter()
        .zip(&embedding.points)
        .map(|(r, p)| EmbeddedPoint { id: r.id.clone(), source: r.source, labels: r.labels, x: p[0], y: p[1] })
        .collect()
}

pub fn write_embedding(path: &Path, points: &[EmbeddedPoint]) -> Result<()> {
    write_jsonl(path, points)
}
