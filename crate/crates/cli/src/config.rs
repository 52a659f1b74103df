//! Flat run configuration: defaults, then a TOML file, then `--set` and
//! dedicated flag overrides.

use std::fs;
use std::path::Path;

use haze_core::data::synth::GenerateConfig;
use haze_core::gaze::GazeConfig;
use haze_core::sr::{HfMode, SrConfig};
use haze_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every key a command may consume. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scale: usize,
    pub hr_height: usize,
    pub hr_width: usize,
    pub channels: usize,
    pub num_hfab: usize,
    pub reduction: usize,
    pub hf_mode: String,
    pub lambda: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Alternating end-to-end epochs.
    pub epochs: usize,
    pub sr_epochs: usize,
    pub gaze_epochs: usize,
    pub phase_period: usize,
    pub joint: bool,
    pub backbone: Vec<usize>,
    pub hidden: usize,
    pub patch_frac: f64,
    pub count: usize,
    pub identities: usize,
    pub gaze_range: f64,
    pub val_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sr = SrConfig::default();
        let gaze = GazeConfig::default();
        let train = TrainConfig::default();
        let gen = GenerateConfig::default();
        RunConfig {
            seed: 0,
            scale: sr.scale,
            hr_height: sr.hr_size.0,
            hr_width: sr.hr_size.1,
            channels: sr.channels,
            num_hfab: sr.num_hfab,
            reduction: sr.reduction,
            hf_mode: sr.hf_mode.as_str().to_string(),
            lambda: train.lambda,
            alpha: train.alpha,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            epochs: train.epochs,
            sr_epochs: train.epochs,
            gaze_epochs: train.epochs,
            phase_period: train.phase_period,
            joint: train.joint,
            backbone: gaze.backbone,
            hidden: gaze.hidden,
            patch_frac: gaze.patch_frac,
            count: gen.count,
            identities: gen.identities,
            gaze_range: gen.gaze_range,
            val_frac: 0.25,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Merges `file` (if any) and `key=value` overrides over the defaults.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut table = match file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    CliError::usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for kv in overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("override `{kv}` is not key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::usage(format!("config: {}", e.message())))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        self.sr_config()?.validate().map_err(CliError::from)?;
        self.gaze_config().validate().map_err(CliError::from)?;
        self.train_config(self.epochs)
            .validate()
            .map_err(CliError::from)?;
        if !(0.0..1.0).contains(&self.val_frac) {
            return Err(CliError::usage(format!(
                "val_frac {} outside [0, 1)",
                self.val_frac
            )));
        }
        Ok(())
    }

    pub fn hf_mode(&self) -> Result<HfMode, CliError> {
        self.hf_mode.parse().map_err(|_| {
            CliError::usage(format!(
                "hf_mode `{}` must be one of per-block, once, disabled",
                self.hf_mode
            ))
        })
    }

    pub fn sr_config(&self) -> Result<SrConfig, CliError> {
        Ok(SrConfig {
            scale: self.scale,
            channels: self.channels,
            num_hfab: self.num_hfab,
            lambda: self.lambda,
            hr_size: (self.hr_height, self.hr_width),
            reduction: self.reduction,
            hf_mode: self.hf_mode()?,
        })
    }

    pub fn gaze_config(&self) -> GazeConfig {
        GazeConfig {
            patch_frac: self.patch_frac,
            backbone: self.backbone.clone(),
            hidden: self.hidden,
            lambda: self.lambda,
        }
    }

    pub fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs,
            phase_period: self.phase_period,
            seed: self.seed,
            joint: self.joint,
        }
    }

    pub fn generate_config(&self) -> GenerateConfig {
        GenerateConfig {
            count: self.count,
            identities: self.identities,
            size: (self.hr_height, self.hr_width),
            scale: self.scale,
            gaze_range: self.gaze_range,
            seed: self.seed,
        }
    }

    /// `key = value` lines recorded in checkpoints.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::load(None, &["lamda=0.3".into()]).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("lamda"), "{}", err.message);
    }

    #[test]
    fn overrides_parse_types() {
        let cfg = RunConfig::load(
            None,
            &[
                "lambda=0.4".into(),
                "backbone=[4,4]".into(),
                "hf_mode=once".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.lambda, 0.4);
        assert_eq!(cfg.backbone, vec![4, 4]);
        assert_eq!(cfg.hf_mode().unwrap(), HfMode::Once);
    }

    #[test]
    fn file_then_flags() {
        let path = std::env::temp_dir().join(format!("haze-cfg-{}.toml", std::process::id()));
        fs::write(&path, "seed = 5\nepochs = 3\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &["epochs=7".into()]).unwrap();
        assert_eq!((cfg.seed, cfg.epochs), (5, 7));
        fs::remove_file(path).unwrap();
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        assert_eq!(
            RunConfig::load(None, &["lambda=1.5".into()])
                .unwrap_err()
                .code,
            2
        );
        assert_eq!(
            RunConfig::load(None, &["scale=5".into()]).unwrap_err().code,
            2
        );
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
