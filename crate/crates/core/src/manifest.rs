//! Sample records, manifests and their JSON Lines encoding.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{Dataset, LabelVector, RuleTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub image_path: String,
    pub source: Dataset,
    pub labels: LabelVector,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid(format!("sample {:?} has zero size", self.id)));
        }
        if !self.labels.is_admissible() {
            return Err(Error::Invalid(format!("sample {:?} has inadmissible labels {}", self.id, self.labels)));
        }
        Ok(())
    }
}

/// A sample as listed by its source dataset, before remapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSampleRecord {
    pub id: String,
    pub image_path: String,
    pub labels: Vec<String>,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub name: String,
    pub samples: Vec<SampleRecord>,
    pub split: Option<Split>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, samples: Vec<SampleRecord>) -> Self {
        Self { name: name.into(), samples, split: None }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks id uniqueness and every record's invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.samples.len());
        for sample in &self.samples {
            sample.validate()?;
            if !seen.insert(sample.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate sample id {:?}", sample.id)));
            }
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let samples: Vec<SampleRecord> = read_jsonl(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let manifest = Self::new(name, samples);
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.samples)
    }

    pub fn filter_split(&self, split: Split) -> Self {
        let samples = self.samples.iter().filter(|s| s.split == Some(split)).cloned().collect();
        Self { name: format!("{}-{}", self.name, split.name()), samples, split: Some(split) }
    }
}

/// Remaps raw records of one dataset. Samples whose labels all drop are
/// excluded; the count of excluded samples is returned alongside.
pub fn remap_raw(rules: &RuleTable, dataset: Dataset, raw: &[RawSampleRecord]) -> Result<(DatasetManifest, usize)> {
    let mut samples = Vec::with_capacity(raw.len());
    let mut excluded = 0;
    for record in raw {
        let labels = rules.remap(dataset, &record.labels)?;
        if labels.is_empty() {
            excluded += 1;
            continue;
        }
        samples.push(SampleRecord {
            id: record.id.clone(),
            image_path: record.image_path.clone(),
            source: dataset,
            labels,
            width: record.width,
            height: record.height,
            split: record.split,
        });
    }
    let manifest = DatasetManifest::new(dataset.name(), samples);
    manifest.validate()?;
    Ok((manifest, excluded))
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
