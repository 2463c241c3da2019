//! Experiment configuration: TOML files, an inline JSON alternative, and
//! the preset registry.

use std::path::{Path, PathBuf};

use recall_gym_core::eval::PassKEstimator;
use recall_gym_core::trainers::TrainConfig;
use recall_gym_core::world::SplitSizes;
use recall_gym_core::{VerifierMode, WorldConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// A world plus the training hyperparameters calibrated for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub world: WorldConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

pub const PRESET_NAMES: [&str; 5] = ["nq_like", "trivia_like", "pop_like", "simple_like", "alias_rich"];

fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "nq_like" => include_str!("../presets/nq_like.toml"),
        "trivia_like" => include_str!("../presets/trivia_like.toml"),
        "pop_like" => include_str!("../presets/pop_like.toml"),
        "simple_like" => include_str!("../presets/simple_like.toml"),
        "alias_rich" => include_str!("../presets/alias_rich.toml"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<Preset> {
    let text = preset_text(name).ok_or_else(|| {
        Error::config(format!("unknown preset {name:?} (known: {})", PRESET_NAMES.join(", ")))
    })?;
    let p: Preset = toml::from_str(text).map_err(|e| Error::config(format!("preset {name}: {e}")))?;
    p.world.validate()?;
    p.train.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    /// No training; evaluates the base policy.
    None,
    Grpo,
    Ppo,
    Sft,
    Rft,
    Dpo,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::None => "none",
            TrainerKind::Grpo => "grpo",
            TrainerKind::Ppo => "ppo",
            TrainerKind::Sft => "sft",
            TrainerKind::Rft => "rft",
            TrainerKind::Dpo => "dpo",
        }
    }
}

/// Training queries, by pre-training accessibility on the train split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSubset {
    #[default]
    All,
    Ia,
    Pa,
    Ha,
    IaPa,
    IaHa,
    PaHa,
}

impl TrainSubset {
    pub const PRIMARY: [TrainSubset; 3] = [TrainSubset::Ia, TrainSubset::Pa, TrainSubset::Ha];
    pub const PAIRS: [TrainSubset; 3] = [TrainSubset::IaPa, TrainSubset::IaHa, TrainSubset::PaHa];

    pub fn label(self) -> &'static str {
        match self {
            TrainSubset::All => "all",
            TrainSubset::Ia => "IA",
            TrainSubset::Pa => "PA",
            TrainSubset::Ha => "HA",
            TrainSubset::IaPa => "IA+PA",
            TrainSubset::IaHa => "IA+HA",
            TrainSubset::PaHa => "PA+HA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorldSpec {
    Preset(String),
    Inline(WorldConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalPlan {
    pub passk: bool,
    pub passk_samples: usize,
    pub estimator: PassKEstimator,
    pub repair: bool,
    pub voting: bool,
    pub voting_samples: usize,
    pub temperature: f64,
}

impl Default for EvalPlan {
    fn default() -> Self {
        EvalPlan {
            passk: false,
            passk_samples: 256,
            estimator: PassKEstimator::Unbiased,
            repair: false,
            voting: false,
            voting_samples: 32,
            temperature: 1.0,
        }
    }
}

fn default_splits() -> SplitSizes {
    SplitSizes { train: 2000, validation: 128, test: 500 }
}

/// Evaluate on a second world generated from the same parameters with a
/// shifted seed. Only `w` carries over; delta rows are per-query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferPlan {
    pub world: WorldSpec,
    #[serde(default = "default_seed_offset")]
    pub seed_offset: u64,
}

fn default_seed_offset() -> u64 {
    1_000_003
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub world: WorldSpec,
    #[serde(default = "default_splits")]
    pub splits: SplitSizes,
    pub trainer: TrainerKind,
    /// Overrides on top of the preset's `[train]` table (or the defaults
    /// for an inline world).
    #[serde(default)]
    pub train: Map<String, Value>,
    #[serde(default)]
    pub train_subset: TrainSubset,
    /// Downsample attribution subsets to a common size: primaries with
    /// each other, pairwise unions with each other.
    #[serde(default)]
    pub balance_subsets: bool,
    /// Verifier used as the training reward. Evaluation is always semantic.
    #[serde(default)]
    pub verifier: VerifierMode,
    #[serde(default)]
    pub eval: EvalPlan,
    #[serde(default)]
    pub transfer: Option<TransferPlan>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// An [`ExperimentConfig`] with the preset and overrides applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub name: String,
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub transfer_world: Option<(WorldConfig, u64)>,
    pub config: ExperimentConfig,
}

impl ExperimentConfig {
    /// JSON if the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must be nonempty"));
        }
        let (world, base_train, preset_name) = match &self.world {
            WorldSpec::Preset(name) => {
                let p = preset(name)?;
                (p.world, p.train, Some(name.clone()))
            }
            WorldSpec::Inline(w) => (w.clone(), TrainConfig::default(), None),
        };
        world.validate()?;
        let train = apply_overrides(&base_train, &self.train)?;
        train.validate()?;
        let transfer_world = match &self.transfer {
            None => None,
            Some(t) => {
                let w = match &t.world {
                    WorldSpec::Preset(name) => preset(name)?.world,
                    WorldSpec::Inline(w) => w.clone(),
                };
                w.validate()?;
                Some((w, t.seed_offset))
            }
        };
        if matches!(self.train_subset, TrainSubset::All) && self.balance_subsets {
            return Err(Error::config("balance_subsets needs a train_subset other than \"all\""));
        }
        let name = self.name.clone().unwrap_or_else(|| {
            format!("{}-{}", preset_name.as_deref().unwrap_or("inline"), self.trainer.name())
        });
        Ok(Resolved { name, world, train, transfer_world, config: self.clone() })
    }
}

impl Resolved {
    /// Self-contained config for one seed: inline worlds and a complete
    /// `[train]` table. Running it reproduces that seed's artifacts.
    pub fn snapshot(&self, seed: u64) -> ExperimentConfig {
        let train = match serde_json::to_value(&self.train) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        };
        ExperimentConfig {
            name: Some(self.name.clone()),
            world: WorldSpec::Inline(self.world.clone()),
            train,
            transfer: self.transfer_world.as_ref().map(|(w, off)| TransferPlan {
                world: WorldSpec::Inline(w.clone()),
                seed_offset: *off,
            }),
            seeds: vec![seed],
            output: None,
            ..self.config.clone()
        }
    }
}

fn apply_overrides(base: &TrainConfig, overrides: &Map<String, Value>) -> Result<TrainConfig> {
    let Value::Object(mut merged) =
        serde_json::to_value(base).map_err(|e| Error::config(e.to_string()))?
    else {
        return Err(Error::config("train config does not serialize to a table"));
    };
    for (k, v) in overrides {
        if !merged.contains_key(k) {
            return Err(Error::config(format!("unknown train setting {k:?}")));
        }
        merged.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::config(format!("train: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in PRESET_NAMES {
            preset(name).unwrap();
        }
        assert!(matches!(preset("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn toml_and_json_agree() {
        let t = ExperimentConfig::parse(
            "world = \"nq_like\"\ntrainer = \"grpo\"\nseeds = [0, 1]\n[train]\nepochs = 2\n",
        )
        .unwrap();
        let j = ExperimentConfig::parse(
            r#"{"world": "nq_like", "trainer": "grpo", "seeds": [0, 1], "train": {"epochs": 2}}"#,
        )
        .unwrap();
        assert_eq!(t, j);
        assert_eq!(t.resolve().unwrap().train.epochs, 2);
    }

    #[test]
    fn overrides_keep_preset_values() {
        let p = preset("nq_like").unwrap();
        let cfg = ExperimentConfig::parse("world = \"nq_like\"\ntrainer = \"sft\"\nseeds = [3]\n[train]\nepochs = 1\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.train.learning_rate, p.train.learning_rate);
        assert_eq!(cfg.train.epochs, 1);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "world = \"nq_like\"\ntrainer = \"grpo\"\nseeds = []\n",
            "world = \"mars\"\ntrainer = \"grpo\"\nseeds = [0]\n",
            "world = \"nq_like\"\ntrainer = \"grpo\"\nseeds = [0]\n[train]\nlearnin_rate = 1.0\n",
        ];
        for text in bad {
            let r = ExperimentConfig::parse(text).and_then(|c| c.resolve());
            assert!(matches!(r, Err(Error::Config(_))), "{text}");
        }
        assert!(ExperimentConfig::parse("world = \"nq_like\"\ntrainer = \"reinforce\"\nseeds = [0]\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let r = ExperimentConfig::parse("world = \"nq_like\"\ntrainer = \"grpo\"\nseeds = [0, 1]\n")
            .unwrap()
            .resolve()
            .unwrap();
        let snap = r.snapshot(1);
        let text = serde_json::to_string(&snap).unwrap();
        let again = ExperimentConfig::parse(&text).unwrap().resolve().unwrap();
        assert_eq!(again.world, r.world);
        assert_eq!(again.train, r.train);
        assert_eq!(again.config.seeds, vec![1]);
    }
}
