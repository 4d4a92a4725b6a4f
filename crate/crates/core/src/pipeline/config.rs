//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use super::{PipelineError, Result};
use crate::centernet::{CenterConfig, TrainConfig};
use crate::chem::ConformerParams;
use crate::diffusion::DiffusionTrainConfig;
use crate::egnn::{EgnnConfig, SizeConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub center: CenterConfig,
    pub center_train: TrainConfig,
    pub size: SizeConfig,
    pub size_train: TrainConfig,
    /// Diffusion steps `T`.
    pub t_max: usize,
    pub egnn: EgnnConfig,
    pub diffusion_train: DiffusionTrainConfig,
    pub conformer_steps: usize,
    /// Sampling chains per product.
    pub samples: usize,
    pub topk: Vec<usize>,
    /// Reaction centers that share the sampling budget.
    pub centers: usize,
    /// Chains advanced together through the denoiser.
    pub chunk: usize,
    pub data: Option<PathBuf>,
    pub models: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            center: CenterConfig {
                hidden: 32,
                mlp_hidden: 32,
                ..CenterConfig::default()
            },
            center_train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            size: SizeConfig::default(),
            size_train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            t_max: 100,
            egnn: EgnnConfig::default(),
            diffusion_train: DiffusionTrainConfig::default(),
            conformer_steps: ConformerParams::default().steps,
            samples: 300,
            topk: vec![1, 3, 5, 10],
            centers: 2,
            chunk: 50,
            data: None,
            models: None,
        }
    }
}

/// Every accepted key, in file order.
pub const KEYS: &[&str] = &[
    "seed",
    "center.layers",
    "center.hidden",
    "center.mlp_hidden",
    "center.lambda",
    "center.dual",
    "center.epochs",
    "center.lr",
    "center.batch",
    "size.layers",
    "size.hidden",
    "size.classes",
    "size.epochs",
    "size.lr",
    "size.batch",
    "diffusion.T",
    "diffusion.steps",
    "diffusion.lr",
    "diffusion.batch",
    "egnn.layers",
    "egnn.hidden",
    "conformer.steps",
    "samples",
    "topk",
    "centers",
    "chunk",
    "data",
    "models",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("{key}: cannot parse {value:?}")))
}

/// `on`/`off` as well as `true`/`false`.
pub fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(PipelineError::Config(format!(
            "{key}: expected on or off, got {value:?}"
        ))),
    }
}

impl PipelineConfig {
    /// Sets one key; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = num(key, v)?,
            "center.layers" => self.center.layers = num(key, v)?,
            "center.hidden" => self.center.hidden = num(key, v)?,
            "center.mlp_hidden" => self.center.mlp_hidden = num(key, v)?,
            "center.lambda" => self.center.lambda = num(key, v)?,
            "center.dual" => self.center.dual = parse_switch(key, v)?,
            "center.epochs" => self.center_train.epochs = num(key, v)?,
            "center.lr" => self.center_train.lr = num(key, v)?,
            "center.batch" => self.center_train.batch_size = num(key, v)?,
            "size.layers" => self.size.layers = num(key, v)?,
            "size.hidden" => self.size.hidden = num(key, v)?,
            "size.classes" => self.size.classes = num(key, v)?,
            "size.epochs" => self.size_train.epochs = num(key, v)?,
            "size.lr" => self.size_train.lr = num(key, v)?,
            "size.batch" => self.size_train.batch_size = num(key, v)?,
            "diffusion.T" => self.t_max = num(key, v)?,
            "diffusion.steps" => self.diffusion_train.steps = num(key, v)?,
            "diffusion.lr" => self.diffusion_train.lr = num(key, v)?,
            "diffusion.batch" => self.diffusion_train.batch_size = num(key, v)?,
            "egnn.layers" => self.egnn.layers = num(key, v)?,
            "egnn.hidden" => self.egnn.hidden = num(key, v)?,
            "conformer.steps" => self.conformer_steps = num(key, v)?,
            "samples" => self.samples = num(key, v)?,
            "topk" => self.topk = parse_topk(v)?,
            "centers" => self.centers = num(key, v)?,
            "chunk" => self.chunk = num(key, v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "models" => self.models = Some(PathBuf::from(v)),
            other => return Err(PipelineError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines over the current values; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", no + 1))
            })?;
            self.set(k, v)
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::default();
        c.apply_text(&text)?;
        Ok(c)
    }

    /// Rejects values no run can use.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        let positive = [
            ("center.layers", self.center.layers),
            ("center.hidden", self.center.hidden),
            ("center.mlp_hidden", self.center.mlp_hidden),
            ("center.batch", self.center_train.batch_size),
            ("size.layers", self.size.layers),
            ("size.hidden", self.size.hidden),
            ("size.batch", self.size_train.batch_size),
            ("diffusion.batch", self.diffusion_train.batch_size),
            ("egnn.layers", self.egnn.layers),
            ("egnn.hidden", self.egnn.hidden),
            ("samples", self.samples),
            ("centers", self.centers),
            ("chunk", self.chunk),
        ];
        for (k, v) in positive {
            if v == 0 {
                return bad(&format!("{k} must be positive"));
            }
        }
        if self.size.classes < 2 {
            return bad("size.classes must be at least 2");
        }
        if self.t_max < 2 {
            return bad("diffusion.T must be at least 2");
        }
        for (k, v) in [
            ("center.lr", self.center_train.lr),
            ("size.lr", self.size_train.lr),
            ("diffusion.lr", self.diffusion_train.lr),
            ("center.lambda", self.center.lambda),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{k} must be a positive number"));
            }
        }
        if self.topk.is_empty() || self.topk.contains(&0) {
            return bad("topk must list positive integers");
        }
        Ok(())
    }

    pub fn conformer(&self) -> ConformerParams {
        ConformerParams {
            steps: self.conformer_steps,
            ..ConformerParams::default()
        }
    }

    /// Training settings with the run seed folded in.
    pub fn center_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.center_train.clone()
        }
    }

    pub fn size_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(1),
            ..self.size_train.clone()
        }
    }

    pub fn diffusion_train(&self) -> DiffusionTrainConfig {
        DiffusionTrainConfig {
            seed: self.seed.wrapping_add(2),
            ..self.diffusion_train.clone()
        }
    }
}

/// Comma-separated positive integers, sorted and deduplicated.
pub fn parse_topk(s: &str) -> Result<Vec<usize>> {
    let mut ks = s
        .split(',')
        .map(|p| num::<usize>("topk", p.trim()))
        .collect::<Result<Vec<_>>>()?;
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(PipelineError::Config(
            "topk must list positive integers".into(),
        ));
    }
    Ok(ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let mut c = PipelineConfig::default();
        c.apply_text("# comment\nseed = 7\ncenter.dual = off  # trailing\n\ntopk = 5,1,3\n")
            .unwrap();
        assert_eq!(c.seed, 7);
        assert!(!c.center.dual);
        assert_eq!(c.topk, vec![1, 3, 5]);
        assert_eq!(c.samples, 300);
        c.validate().unwrap();
    }

    #[test]
    fn every_key_is_settable() {
        let mut c = PipelineConfig::default();
        for k in KEYS {
            let v = match *k {
                "center.dual" => "on",
                "topk" => "1,2",
                "data" | "models" => "x",
                k if k.ends_with("lr") || k.ends_with("lambda") => "0.5",
                _ => "3",
            };
            c.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        c.validate().unwrap();
    }

    #[test]
    fn bad_input_is_reported_with_its_line() {
        let mut c = PipelineConfig::default();
        let err = c
            .apply_text("seed = 1\nnope = 2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2") && err.contains("nope"), "{err}");
        assert!(c.apply_text("samples = many").is_err());
        assert!(c.apply_text("just words").is_err());
        assert!(parse_topk("1,0").is_err());
        assert!(parse_switch("center.dual", "maybe").is_err());
    }

    #[test]
    fn validation_rejects_unusable_values() {
        for (k, v) in [
            ("samples", "0"),
            ("diffusion.T", "1"),
            ("center.lr", "-1"),
            ("size.classes", "1"),
            ("chunk", "0"),
        ] {
            let mut c = PipelineConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k} = {v}");
        }
    }
}
