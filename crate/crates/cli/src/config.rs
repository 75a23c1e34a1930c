//! Flat run configuration: built-in defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use mugan_core::data::{resolve_data_root, ATTR_FILE};
use mugan_core::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 128x128, widths 64..1024.
    Full,
    /// 64x64, widths 16..256.
    Smoke,
}

/// Every training setting as an optional flat key. The same struct parses
/// config files and command-line flags.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    /// Base profile the other settings override.
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Generator variant, e.g. M0, M3, AUC_2, Feat_32,64.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub lr_decay_every: Option<u64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Critic updates per generator update.
    #[arg(long)]
    pub n_critic: Option<u64>,
    #[arg(long)]
    pub lambda_cls_d: Option<f64>,
    #[arg(long)]
    pub lambda_cls_g: Option<f64>,
    #[arg(long)]
    pub lambda_rec: Option<f64>,
    /// Gradient-penalty weight; 0 disables the penalty.
    #[arg(long)]
    pub lambda_gp: Option<f64>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub base_width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Center-crop size applied to the 178x218 source images.
    #[arg(long)]
    pub crop: Option<u32>,
    #[arg(long)]
    pub hflip: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps between sample grids (0 disables them).
    #[arg(long)]
    pub sample_every: Option<u64>,
    /// Epochs between checkpoints (0 = final only).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Dataset directory; falls back to MUGAN_DATA_ROOT.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Use only the first N records of the annotation file.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl TrainSettings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Values set in `over` replace those in `self`.
    pub fn overlay(self, over: &TrainSettings) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        let top = serde_json::to_value(over)?;
        if let (Some(b), Some(t)) = (base.as_object_mut(), top.as_object()) {
            for (k, v) in t {
                if !v.is_null() {
                    b.insert(k.clone(), v.clone());
                }
            }
        }
        Ok(serde_json::from_value(base)?)
    }

    /// Settings from an optional file with `flags` on top.
    pub fn load(file: Option<&Path>, flags: &TrainSettings) -> Result<Self> {
        let base = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        base.overlay(flags)
    }

    /// Materialise every default into a validated [`TrainConfig`].
    pub fn resolve(&self, output_dir: Option<PathBuf>) -> Result<TrainConfig> {
        let mut c = match self.profile.unwrap_or(Profile::Full) {
            Profile::Full => TrainConfig::default(),
            Profile::Smoke => TrainConfig::smoke(),
        };
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { c.$($target).+ = v; })*
            };
        }
        set!(
            variant => variant,
            epochs => epochs,
            batch_size => batch_size,
            lr => lr,
            lr_decay => lr_decay,
            lr_decay_every => lr_decay_every,
            beta1 => adam.beta1,
            beta2 => adam.beta2,
            n_critic => n_critic,
            lambda_cls_d => weights.lambda_cls_d,
            lambda_cls_g => weights.lambda_cls_g,
            lambda_rec => weights.lambda_rec,
            lambda_gp => weights.lambda_gp,
            image_size => arch.image_size,
            base_width => arch.base_width,
            depth => arch.depth,
            crop => crop,
            hflip => hflip,
            seed => seed,
            sample_every => sample_every,
            checkpoint_every => checkpoint_every,
        );
        c.output_dir = output_dir;
        c.validate()?;
        Ok(c)
    }

    /// Data root from settings or the environment; the annotation file
    /// must exist.
    pub fn data_root(&self) -> Result<PathBuf> {
        data_root_checked(self.data_root.as_deref())
    }
}

pub fn data_root_checked(explicit: Option<&Path>) -> Result<PathBuf> {
    let root = resolve_data_root(explicit)?;
    if !root.join(ATTR_FILE).is_file() {
        bail!(
            "data root {} has no {ATTR_FILE} (expected the CelebA layout; `mugan synth` writes a synthetic one)",
            root.display()
        );
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mugan_core::ArchConfig;

    #[test]
    fn flags_override_file_override_defaults() {
        let file: TrainSettings = serde_json::from_str(r#"{"epochs": 7, "lr": 0.01, "profile": "smoke"}"#).unwrap();
        let flags = TrainSettings {
            lr: Some(0.5),
            ..Default::default()
        };
        let merged = file.overlay(&flags).unwrap();
        let c = merged.resolve(None).unwrap();
        assert_eq!(c.epochs, 7);
        assert_eq!(c.lr, 0.5);
        assert_eq!(c.arch, ArchConfig::smoke());
        assert_eq!(c.n_critic, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<TrainSettings>(r#"{"epoch": 3}"#).is_err());
    }
}
