//! Preprocessing and the stochastic augmentation pipeline:
//! resize + centre crop, horizontal flip, one TrivialAugment-style op,
//! random erasing.
//!
//! Every stage draws from one [`SplitMix64`] stream in a fixed order:
//!
//! 1. flip: one `next_f64`, flipped when `< p_flip`;
//! 2. op choice: `below(ops.len())`, then `below(n_bins)`, then for signed
//!    ops one `next_f64`, negated when `< 0.5`;
//! 3. erase: one `next_f64`, erased when `< p_erase`, followed by the
//!    rectangle draws documented on [`ops::random_erase`].

mod image;
pub mod ops;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::image::Image;
pub use self::ops::{hflip, preprocess, EraseParams, EraseRect};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_BINS: usize = 34;
pub const DEFAULT_CROP: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    Brightness,
    Contrast,
    Sharpness,
    Color,
    Solarize,
    Posterize,
}

impl OpKind {
    pub fn apply(self, img: &Image, magnitude: f64) -> Image {
        match self {
            OpKind::ShearX => ops::shear_x(img, magnitude),
            OpKind::ShearY => ops::shear_y(img, magnitude),
            OpKind::TranslateX => ops::translate_x(img, magnitude),
            OpKind::TranslateY => ops::translate_y(img, magnitude),
            OpKind::Rotate => ops::rotate(img, magnitude),
            OpKind::Brightness => ops::brightness(img, magnitude),
            OpKind::Contrast => ops::contrast(img, magnitude),
            OpKind::Sharpness => ops::sharpness(img, magnitude),
            OpKind::Color => ops::color(img, magnitude),
            OpKind::Solarize => ops::solarize(img, magnitude),
            OpKind::Posterize => ops::posterize(img, magnitude),
        }
    }

    /// Magnitude at which the op leaves an image untouched.
    pub fn identity_magnitude(self) -> f64 {
        match self {
            OpKind::ShearX | OpKind::ShearY | OpKind::TranslateX | OpKind::TranslateY | OpKind::Rotate => 0.0,
            OpKind::Brightness | OpKind::Contrast | OpKind::Sharpness | OpKind::Color => 1.0,
            OpKind::Solarize => 256.0,
            OpKind::Posterize => 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOp {
    pub name: OpKind,
    pub min: f64,
    pub max: f64,
    pub signed: bool,
}

impl PolicyOp {
    const fn new(name: OpKind, min: f64, max: f64, signed: bool) -> Self {
        Self { name, min, max, signed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub ops: Vec<PolicyOp>,
    pub n_bins: usize,
}

impl AugmentPolicy {
    /// Geometric and photometric ops only, contrast floor at 0.5.
    pub fn custom() -> Self {
        use OpKind::*;
        Self {
            ops: vec![
                PolicyOp::new(ShearX, 0.0, 0.99, true),
                PolicyOp::new(ShearY, 0.0, 0.99, true),
                PolicyOp::new(TranslateX, 0.0, 32.0, true),
                PolicyOp::new(TranslateY, 0.0, 32.0, true),
                PolicyOp::new(Rotate, 0.0, 135.0, true),
                PolicyOp::new(Brightness, 0.01, 2.0, false),
                PolicyOp::new(Contrast, 0.5, 1.8, false),
                PolicyOp::new(Sharpness, 0.5, 1.8, false),
            ],
            n_bins: DEFAULT_BINS,
        }
    }

    /// The wide space: the custom ops with contrast down to 0.01, plus
    /// saturation, solarize (threshold) and posterize (bits).
    pub fn default_wide() -> Self {
        let mut policy = Self::custom();
        for op in &mut policy.ops {
            if op.name == OpKind::Contrast {
                op.min = 0.01;
            }
        }
        policy.ops.extend([
            PolicyOp::new(OpKind::Color, 0.01, 1.99, false),
            PolicyOp::new(OpKind::Solarize, 0.0, 255.0, false),
            PolicyOp::new(OpKind::Posterize, 2.0, 8.0, false),
        ]);
        policy
    }

    pub fn with_bins(mut self, n_bins: usize) -> Self {
        self.n_bins = n_bins;
        self
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let policy: Self = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ops.is_empty() {
            return Err(Error::Invalid("augmentation policy has no ops".into()));
        }
        if self.n_bins < 2 {
            return Err(Error::Invalid(format!("n_bins must be at least 2, got {}", self.n_bins)));
        }
        for op in &self.ops {
            if !(op.min.is_finite() && op.max.is_finite()) || op.min > op.max {
                return Err(Error::Invalid(format!("bad range for {:?}: [{}, {}]", op.name, op.min, op.max)));
            }
        }
        Ok(())
    }

    /// Magnitude of bin `k`, bins spaced linearly from `min` to `max`.
    pub fn bin_magnitude(&self, op: &PolicyOp, bin: usize) -> f64 {
        op.min + (op.max - op.min) * bin as f64 / (self.n_bins - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedOp {
    pub op: OpKind,
    pub bin: usize,
    /// Signed magnitude actually applied.
    pub magnitude: f64,
    pub negated: bool,
}

pub fn trivial_augment_with(img: &Image, policy: &AugmentPolicy, rng: &mut SplitMix64) -> (Image, AppliedOp) {
    let op = &policy.ops[rng.below(policy.ops.len())];
    let bin = rng.below(policy.n_bins);
    let mut magnitude = policy.bin_magnitude(op, bin);
    let negated = op.signed && rng.bernoulli(0.5);
    if negated {
        magnitude = -magnitude;
    }
    let out = op.name.apply(img, magnitude);
    (out, AppliedOp { op: op.name, bin, magnitude, negated })
}

/// Applies one uniformly chosen op at one uniformly chosen bin.
pub fn trivial_augment(img: &Image, policy: &AugmentPolicy, seed: u64) -> Result<(Image, AppliedOp)> {
    policy.validate()?;
    Ok(trivial_augment_with(img, policy, &mut SplitMix64::new(seed)))
}

pub fn random_erase(img: &Image, p: f64, seed: u64) -> Result<Image> {
    check_probability("p_erase", p)?;
    Ok(ops::random_erase(img, p, &EraseParams::default(), &mut SplitMix64::new(seed)).0)
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must lie in [0, 1], got {p}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub crop: u32,
    pub policy: AugmentPolicy,
    pub p_flip: f64,
    pub p_erase: f64,
    pub erase: EraseParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            crop: DEFAULT_CROP,
            policy: AugmentPolicy::custom(),
            p_flip: 0.5,
            p_erase: 0.1,
            erase: EraseParams::default(),
        }
    }
}

/// What the pipeline did to one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub flipped: bool,
    pub op: AppliedOp,
    pub erased: Option<EraseRect>,
}

pub fn augment_pipeline_with(
    img: &Image,
    config: &PipelineConfig,
    rng: &mut SplitMix64,
) -> Result<(Image, PipelineRecord)> {
    config.policy.validate()?;
    check_probability("p_flip", config.p_flip)?;
    check_probability("p_erase", config.p_erase)?;
    if config.crop == 0 {
        return Err(Error::Invalid("crop must be at least 1".into()));
    }
    let mut out = preprocess(img, config.crop);
    let flipped = rng.bernoulli(config.p_flip);
    if flipped {
        out = hflip(&out);
    }
    let (out, op) = trivial_augment_with(&out, &config.policy, rng);
    let (out, erased) = ops::random_erase(&out, config.p_erase, &config.erase, rng);
    Ok((out, PipelineRecord { flipped, op, erased }))
}

pub fn augment_pipeline(img: &Image, config: &PipelineConfig, seed: u64) -> Result<Image> {
    Ok(augment_pipeline_with(img, config, &mut SplitMix64::new(seed))?.0)
}

/// Pipeline with a stream keyed by `(seed, sample_id)`, so a batch gives the
/// same per-sample results in any processing order.
pub fn augment_sample(
    img: &Image,
    config: &PipelineConfig,
    seed: u64,
    sample_id: &str,
) -> Result<(Image, PipelineRecord)> {
    augment_pipeline_with(img, config, &mut SplitMix64::for_key(seed, sample_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: u32, h: u32) -> Image {
        Image::from_fn(w, h, |x, y| [(x * 7 + y * 3) as u8, (x * y) as u8, (255 - x) as u8])
    }

    #[test]
    fn custom_policy_table() {
        let p = AugmentPolicy::custom();
        assert_eq!(p.n_bins, 34);
        let names: Vec<OpKind> = p.ops.iter().map(|o| o.name).collect();
        use OpKind::*;
        assert_eq!(names, [ShearX, ShearY, TranslateX, TranslateY, Rotate, Brightness, Contrast, Sharpness]);
        let contrast = p.ops.iter().find(|o| o.name == Contrast).unwrap();
        assert_eq!((contrast.min, contrast.max), (0.5, 1.8));
        assert!(p.ops.iter().all(|o| o.signed == matches!(o.name, ShearX | ShearY | TranslateX | TranslateY | Rotate)));
        let wide = AugmentPolicy::default_wide();
        assert_eq!(wide.ops.iter().find(|o| o.name == Contrast).unwrap().min, 0.01);
        assert!(wide.ops.iter().any(|o| o.name == Solarize));
    }

    #[test]
    fn bins_are_linear() {
        let p = AugmentPolicy::custom();
        let rotate = p.ops[4];
        assert_eq!(p.bin_magnitude(&rotate, 0), 0.0);
        assert_eq!(p.bin_magnitude(&rotate, 33), 135.0);
        assert!((p.bin_magnitude(&rotate, 1) - 135.0 / 33.0).abs() < 1e-12);
    }

    #[test]
    fn policy_validation() {
        let mut p = AugmentPolicy::custom();
        p.n_bins = 1;
        assert!(p.validate().is_err());
        let mut p = AugmentPolicy::custom();
        p.ops[0].min = 2.0;
        assert!(p.validate().is_err());
        assert!(AugmentPolicy { ops: vec![], n_bins: 5 }.validate().is_err());
    }

    #[test]
    fn policy_json() {
        let json = r#"{"ops":[{"name":"Rotate","min":0,"max":30,"signed":true}],"n_bins":5}"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        std::fs::write(&path, json).unwrap();
        let p = AugmentPolicy::from_file(&path).unwrap();
        assert_eq!(p.ops[0].name, OpKind::Rotate);
        assert_eq!(p.n_bins, 5);
    }

    #[test]
    fn applied_op_comes_from_policy() {
        let img = pattern(16, 16);
        let p = AugmentPolicy::custom();
        for seed in 0..100 {
            let (out, rec) = trivial_augment(&img, &p, seed).unwrap();
            assert_eq!((out.width(), out.height()), (16, 16));
            let op = p.ops.iter().find(|o| o.name == rec.op).unwrap();
            assert!(rec.magnitude.abs() >= op.min - 1e-12 && rec.magnitude.abs() <= op.max + 1e-12);
            assert!(!rec.negated || op.signed);
            assert_eq!(rec.magnitude.abs(), p.bin_magnitude(op, rec.bin));
        }
    }

    #[test]
    fn identity_policy_pipeline_equals_preprocess() {
        let img = pattern(40, 30);
        let ops = AugmentPolicy::default_wide()
            .ops
            .iter()
            .map(|o| {
                let m = o.name.identity_magnitude();
                PolicyOp { min: m, max: m, ..*o }
            })
            .collect();
        let config = PipelineConfig {
            crop: 20,
            policy: AugmentPolicy { ops, n_bins: 34 },
            p_flip: 0.0,
            p_erase: 0.0,
            ..PipelineConfig::default()
        };
        for seed in 0..30 {
            assert_eq!(augment_pipeline(&img, &config, seed).unwrap(), preprocess(&img, 20));
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let img = pattern(50, 40);
        let config = PipelineConfig { crop: 32, p_erase: 0.5, ..PipelineConfig::default() };
        let a = augment_pipeline(&img, &config, 77).unwrap();
        let b = augment_pipeline(&img, &config, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.width(), a.height()), (32, 32));
        let (x, rx) = augment_sample(&img, &config, 5, "sample-1").unwrap();
        let (y, ry) = augment_sample(&img, &config, 5, "sample-1").unwrap();
        assert_eq!((x, rx), (y, ry));
    }

    #[test]
    fn bad_probabilities() {
        let img = pattern(4, 4);
        assert!(random_erase(&img, 1.5, 0).is_err());
        let config = PipelineConfig { p_flip: -0.1, ..PipelineConfig::default() };
        assert!(augment_pipeline(&img, &config, 0).is_err());
    }
}
