//! Training hyperparameters for external training systems.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::DEFAULT_BINS;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Head then all: head-only training with a frozen base, then every
    /// layer.
    #[serde(rename = "HTA")]
    Hta,
    /// Different learning rates for head and base.
    #[serde(rename = "DHB")]
    Dhb,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "HTA" => Ok(Strategy::Hta),
            "DHB" => Ok(Strategy::Dhb),
            _ => Err(Error::Parse(format!("unknown strategy {s:?}, expected HTA or DHB"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Hta => "HTA",
            Strategy::Dhb => "DHB",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub strategy: Strategy,
    /// HTA: learning rate of the head-only step. DHB: head learning rate.
    pub lr_head: f64,
    /// HTA: learning rate of the all-layers step. DHB: base learning rate.
    pub lr_base: f64,
    pub epochs: u32,
    pub model: String,
    pub pretrained: String,
    pub optimizer: String,
    pub scheduler: String,
    pub activation: String,
    pub loss: String,
    pub crop_train: u32,
    pub crop_test: u32,
    pub resize_factor: f64,
    pub interpolation: String,
    pub augmentation: String,
    pub p_hflip: f64,
    pub p_random_erase: f64,
    pub oversample: bool,
    pub bins: u32,
    pub runs_per_setting: u32,
    pub selection: String,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn for_strategy(strategy: Strategy, seed: u64) -> Self {
        let common = Self {
            strategy,
            lr_head: 5e-4,
            lr_base: 1e-5,
            epochs: 100,
            model: "MobileNetV3-Large".into(),
            pretrained: "ImageNet".into(),
            optimizer: "AdamW".into(),
            scheduler: "cosine_with_warmup".into(),
            activation: "sigmoid".into(),
            loss: "binary_cross_entropy".into(),
            crop_train: 224,
            crop_test: 224,
            resize_factor: 1.1,
            interpolation: "bilinear".into(),
            augmentation: "basic".into(),
            p_hflip: 0.5,
            p_random_erase: 0.0,
            oversample: false,
            bins: DEFAULT_BINS as u32,
            runs_per_setting: 2,
            selection: "max_emr".into(),
            seed,
        };
        match strategy {
            Strategy::Hta => common,
            Strategy::Dhb => Self {
                lr_head: 1e-3,
                lr_base: 1e-5,
                epochs: 50,
                crop_train: 512,
                crop_test: 512,
                augmentation: "trivial_augment_custom".into(),
                p_random_erase: 0.1,
                oversample: true,
                ..common
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hta_values() {
        let c = TrainingConfig::for_strategy(Strategy::Hta, 0);
        assert_eq!((c.lr_head, c.lr_base, c.epochs, c.crop_train), (5e-4, 1e-5, 100, 224));
    }

    #[test]
    fn dhb_values() {
        let c = TrainingConfig::for_strategy(Strategy::Dhb, 0);
        assert_eq!((c.lr_head, c.lr_base, c.epochs, c.crop_train, c.bins), (1e-3, 1e-5, 50, 512, 34));
    }

    #[test]
    fn json_roundtrip() {
        for s in [Strategy::Hta, Strategy::Dhb] {
            let c = TrainingConfig::for_strategy(s, 7);
            let json = serde_json::to_string_pretty(&c).unwrap();
            assert_eq!(serde_json::from_str::<TrainingConfig>(&json).unwrap(), c);
        }
        assert_eq!("dhb".parse::<Strategy>().unwrap(), Strategy::Dhb);
        assert!("xyz".parse::<Strategy>().is_err());
    }
}
