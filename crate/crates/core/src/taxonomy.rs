//! The unified six-class label space and the per-dataset remapping into it.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 6;

/// Unified damage classes, in their fixed index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnifiedClass {
    NoDamage = 0,
    Crack = 1,
    Efflorescence = 2,
    Spalling = 3,
    BarsExposed = 4,
    Rust = 5,
}

impl UnifiedClass {
    pub const ALL: [UnifiedClass; NUM_CLASSES] = [
        UnifiedClass::NoDamage,
        UnifiedClass::Crack,
        UnifiedClass::Efflorescence,
        UnifiedClass::Spalling,
        UnifiedClass::BarsExposed,
        UnifiedClass::Rust,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            UnifiedClass::NoDamage => "NoDamage",
            UnifiedClass::Crack => "Crack",
            UnifiedClass::Efflorescence => "Efflorescence",
            UnifiedClass::Spalling => "Spalling",
            UnifiedClass::BarsExposed => "BarsExposed",
            UnifiedClass::Rust => "Rust",
        }
    }

    /// Column header used in rendered tables.
    pub fn short_name(self) -> &'static str {
        match self {
            UnifiedClass::NoDamage => "NoDam.",
            UnifiedClass::Crack => "Crack",
            UnifiedClass::Efflorescence => "Effl.",
            UnifiedClass::Spalling => "Spall.",
            UnifiedClass::BarsExposed => "BExp.",
            UnifiedClass::Rust => "Rust",
        }
    }
}

impl fmt::Display for UnifiedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UnifiedClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown unified class {s:?}")))
    }
}

/// Source datasets, in their fixed merge order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "CODEBRIM", alias = "codebrim")]
    Codebrim,
    #[serde(rename = "MCDS", alias = "mcds")]
    Mcds,
    #[serde(rename = "BCD", alias = "bcd")]
    Bcd,
    #[serde(rename = "SDNET", alias = "sdnet")]
    Sdnet,
    #[serde(rename = "DACL1K", alias = "dacl1k")]
    Dacl1k,
}

impl Dataset {
    pub const ALL: [Dataset; 5] = [Dataset::Codebrim, Dataset::Mcds, Dataset::Bcd, Dataset::Sdnet, Dataset::Dacl1k];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Codebrim => "CODEBRIM",
            Dataset::Mcds => "MCDS",
            Dataset::Bcd => "BCD",
            Dataset::Sdnet => "SDNET",
            Dataset::Dacl1k => "DACL1K",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown dataset {s:?}")))
    }
}

/// Binary membership over the six unified classes. Serialized as an array
/// of six 0/1 integers in class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LabelVector(u8);

impl LabelVector {
    pub const EMPTY: LabelVector = LabelVector(0);

    pub fn from_bits(bits: [bool; NUM_CLASSES]) -> Self {
        bits.iter().enumerate().fold(Self::EMPTY, |acc, (i, &b)| if b { acc.with_index(i) } else { acc })
    }

    pub fn from_classes<I: IntoIterator<Item = UnifiedClass>>(classes: I) -> Self {
        classes.into_iter().fold(Self::EMPTY, |acc, c| acc.with(c))
    }

    /// Raw mask, bit `c` for class index `c`. Bits above 5 are discarded.
    pub fn from_mask(mask: u8) -> Self {
        LabelVector(mask & 0b11_1111)
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn with(self, class: UnifiedClass) -> Self {
        self.with_index(class.index())
    }

    fn with_index(self, index: usize) -> Self {
        LabelVector(self.0 | (1 << index))
    }

    pub fn without(self, class: UnifiedClass) -> Self {
        LabelVector(self.0 & !(1 << class.index()))
    }

    pub fn contains(self, class: UnifiedClass) -> bool {
        self.get(class.index())
    }

    pub fn get(self, index: usize) -> bool {
        index < NUM_CLASSES && self.0 & (1 << index) != 0
    }

    pub fn union(self, other: LabelVector) -> Self {
        LabelVector(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn classes(self) -> impl Iterator<Item = UnifiedClass> {
        UnifiedClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    pub fn to_array(self) -> [u8; NUM_CLASSES] {
        std::array::from_fn(|i| u8::from(self.get(i)))
    }

    /// Drops NoDamage when any damage class is also present.
    pub fn normalized(self) -> Self {
        if self.contains(UnifiedClass::NoDamage) && self.count() > 1 {
            self.without(UnifiedClass::NoDamage)
        } else {
            self
        }
    }

    /// Non-empty, and NoDamage only on its own.
    pub fn is_admissible(self) -> bool {
        !self.is_empty() && self.normalized() == self
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.classes().map(UnifiedClass::name).collect();
        write!(f, "[{}]", names.join(","))
    }
}

impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<u8> = Vec::deserialize(deserializer)?;
        if raw.len() != NUM_CLASSES {
            return Err(D::Error::custom(format!("label vector needs {NUM_CLASSES} entries, got {}", raw.len())));
        }
        let mut bits = [false; NUM_CLASSES];
        for (slot, v) in bits.iter_mut().zip(raw) {
            *slot = match v {
                0 => false,
                1 => true,
                other => return Err(D::Error::custom(format!("label flag must be 0 or 1, got {other}"))),
            };
        }
        Ok(LabelVector::from_bits(bits))
    }
}

/// One row of the nomenclature table; `target: None` drops the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapRule {
    pub dataset: Dataset,
    pub source_label: String,
    pub target: Option<UnifiedClass>,
}

impl RemapRule {
    fn new(dataset: Dataset, source_label: &str, target: Option<UnifiedClass>) -> Self {
        Self { dataset, source_label: source_label.to_owned(), target }
    }
}

/// Native label names of the four open-source datasets. DACL1K already uses
/// the unified names and is handled by [`RuleTable`] directly.
pub fn builtin_rule_table() -> Vec<RemapRule> {
    use Dataset::*;
    use UnifiedClass::*;
    vec![
        RemapRule::new(Codebrim, "Background", Some(NoDamage)),
        RemapRule::new(Codebrim, "Crack", Some(Crack)),
        RemapRule::new(Codebrim, "Efflorescence", Some(Efflorescence)),
        RemapRule::new(Codebrim, "Spallation", Some(Spalling)),
        RemapRule::new(Codebrim, "CorrosionStain", Some(Rust)),
        RemapRule::new(Codebrim, "ExposedBars", Some(BarsExposed)),
        RemapRule::new(Mcds, "NoDefect", Some(NoDamage)),
        RemapRule::new(Mcds, "Cracks", Some(Crack)),
        RemapRule::new(Mcds, "Efflorescence", Some(Efflorescence)),
        RemapRule::new(Mcds, "Scaling", Some(Spalling)),
        RemapRule::new(Mcds, "Spalling", Some(Spalling)),
        RemapRule::new(Mcds, "Rust Staining", Some(Rust)),
        RemapRule::new(Mcds, "Exposed Reinfor.", Some(BarsExposed)),
        RemapRule::new(Mcds, "General", None),
        RemapRule::new(Bcd, "Crack", Some(Crack)),
        RemapRule::new(Bcd, "NoCrack", Some(NoDamage)),
        RemapRule::new(Sdnet, "Crack", Some(Crack)),
        RemapRule::new(Sdnet, "Uncracked", Some(NoDamage)),
    ]
}

/// Lookup structure over a set of [`RemapRule`]s.
#[derive(Debug, Clone)]
pub struct RuleTable {
    rules: HashMap<(Dataset, String), Option<UnifiedClass>>,
}

impl Default for RuleTable {
    fn default() -> Self {
        Self::from_rules(builtin_rule_table()).expect("builtin table has no duplicates")
    }
}

impl RuleTable {
    pub fn from_rules(rules: Vec<RemapRule>) -> Result<Self> {
        let mut map = HashMap::with_capacity(rules.len());
        for rule in rules {
            let key = (rule.dataset, rule.source_label.clone());
            if map.insert(key, rule.target).is_some() {
                return Err(Error::Invalid(format!("duplicate rule for ({}, {:?})", rule.dataset, rule.source_label)));
            }
        }
        Ok(Self { rules: map })
    }

    /// Builtin rules extended (not overridden) by the rules in a JSON file of
    /// `[{"dataset", "source_label", "target"}]`.
    pub fn with_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let extra: Vec<RemapRule> =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut rules = builtin_rule_table();
        rules.extend(extra);
        Self::from_rules(rules)
    }

    /// `Ok(None)` for a dropped label.
    pub fn lookup(&self, dataset: Dataset, label: &str) -> Result<Option<UnifiedClass>> {
        if let Some(target) = self.rules.get(&(dataset, label.to_owned())) {
            return Ok(*target);
        }
        if dataset == Dataset::Dacl1k {
            if let Ok(class) = label.parse::<UnifiedClass>() {
                return Ok(Some(class));
            }
        }
        Err(Error::UnknownLabel { dataset, label: label.to_owned() })
    }

    /// Union of all mapped targets, with NoDamage cleared next to damage.
    /// An empty result means every label was dropped and the sample must be
    /// excluded.
    pub fn remap<S: AsRef<str>>(&self, dataset: Dataset, labels: &[S]) -> Result<LabelVector> {
        let mut out = LabelVector::EMPTY;
        for label in labels {
            if let Some(class) = self.lookup(dataset, label.as_ref())? {
                out = out.with(class);
            }
        }
        Ok(out.normalized())
    }
}

/// [`RuleTable::remap`] over the builtin rules.
pub fn remap_labels<S: AsRef<str>>(dataset: Dataset, labels: &[S]) -> Result<LabelVector> {
    RuleTable::default().remap(dataset, labels)
}
