use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gates::HardConcrete;
use crate::models::{GatePlacement, ModelConfig, ModelKind, TrainingDomain};
use crate::sim::{FeatureSchema, SimConfig};

/// Which feature fields a model sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSubset {
    All,
    /// The first ⌈F/2⌉ fields.
    Half,
}

impl FeatureSubset {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSubset::All => "all",
            FeatureSubset::Half => "half",
        }
    }

    pub fn apply(self, schema: &FeatureSchema) -> FeatureSchema {
        match self {
            FeatureSubset::All => schema.clone(),
            FeatureSubset::Half => schema.truncated(schema.len().div_ceil(2)),
        }
    }
}

impl FromStr for FeatureSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureSubset::All),
            "half" => Ok(FeatureSubset::Half),
            _ => Err(Error::Config(format!(
                "unknown feature subset `{s}` (all|half)"
            ))),
        }
    }
}

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub domain: TrainingDomain,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_ks: Vec<usize>,
    pub features: FeatureSubset,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            sim: SimConfig::default(),
            model: ModelConfig::default(),
            domain: TrainingDomain::EntireChain,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 5,
            eval_ks: vec![1, 10, 50],
            features: FeatureSubset::All,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_array4<T: FromStr + Copy>(key: &str, value: &str) -> Result<[T; 4]> {
    let v: Vec<T> = parse_list(key, value)?;
    v.try_into()
        .map_err(|_| Error::Config(format!("`{key}` needs exactly 4 comma-separated values")))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Every key, in the order written by [`ExperimentConfig::to_text`].
    pub const KEYS: [&'static str; 32] = [
        "seed",
        "n_users",
        "n_items",
        "latent_dim",
        "latent_scale",
        "click_bias",
        "activity_effect",
        "stage_noise",
        "stage_bias",
        "user_buckets",
        "item_buckets",
        "pool_size",
        "stage_sizes",
        "train_requests",
        "eval_requests",
        "rate_t1",
        "rate_t2",
        "rate_s3_s5",
        "rate_s2_s3",
        "model",
        "domain",
        "towers",
        "lambda",
        "beta",
        "gamma",
        "zeta",
        "gate_placement",
        "learning_rate",
        "batch_size",
        "epochs",
        "eval_ks",
        "features",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let w = &mut self.sim.world;
        let c = &mut self.sim.cascade;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "n_users" => w.n_users = parse(key, value)?,
            "n_items" => w.n_items = parse(key, value)?,
            "latent_dim" => w.latent_dim = parse(key, value)?,
            "latent_scale" => w.latent_scale = parse(key, value)?,
            "click_bias" => w.click_bias = parse(key, value)?,
            "activity_effect" => w.activity_effect = parse(key, value)?,
            "stage_noise" => w.stage_noise = parse_array4(key, value)?,
            "stage_bias" => w.stage_bias = parse_array4(key, value)?,
            "user_buckets" => w.user_buckets = parse(key, value)?,
            "item_buckets" => w.item_buckets = parse(key, value)?,
            "pool_size" => c.pool_size = parse(key, value)?,
            "stage_sizes" => c.stage_sizes = parse_array4(key, value)?,
            "train_requests" => c.train_requests = parse(key, value)?,
            "eval_requests" => c.eval_requests = parse(key, value)?,
            "rate_t1" => c.rates.t1 = parse(key, value)?,
            "rate_t2" => c.rates.t2 = parse(key, value)?,
            "rate_s3_s5" => c.rates.s3_s5 = parse(key, value)?,
            "rate_s2_s3" => c.rates.s2_s3 = parse(key, value)?,
            "model" => self.model.kind = value.parse()?,
            "domain" => self.domain = value.parse()?,
            "towers" => self.model.towers = parse(key, value)?,
            "lambda" => self.model.lambda = parse(key, value)?,
            "beta" => self.model.hard_concrete.beta = parse(key, value)?,
            "gamma" => self.model.hard_concrete.gamma = parse(key, value)?,
            "zeta" => self.model.hard_concrete.zeta = parse(key, value)?,
            "gate_placement" => self.model.gate_placement = value.parse()?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "eval_ks" => self.eval_ks = parse_list(key, value)?,
            "features" => self.features = value.parse()?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let w = &self.sim.world;
        let c = &self.sim.cascade;
        let hc = &self.model.hard_concrete;
        Ok(match key {
            "seed" => self.seed.to_string(),
            "n_users" => w.n_users.to_string(),
            "n_items" => w.n_items.to_string(),
            "latent_dim" => w.latent_dim.to_string(),
            "latent_scale" => w.latent_scale.to_string(),
            "click_bias" => w.click_bias.to_string(),
            "activity_effect" => w.activity_effect.to_string(),
            "stage_noise" => join(&w.stage_noise),
            "stage_bias" => join(&w.stage_bias),
            "user_buckets" => w.user_buckets.to_string(),
            "item_buckets" => w.item_buckets.to_string(),
            "pool_size" => c.pool_size.to_string(),
            "stage_sizes" => join(&c.stage_sizes),
            "train_requests" => c.train_requests.to_string(),
            "eval_requests" => c.eval_requests.to_string(),
            "rate_t1" => c.rates.t1.to_string(),
            "rate_t2" => c.rates.t2.to_string(),
            "rate_s3_s5" => c.rates.s3_s5.to_string(),
            "rate_s2_s3" => c.rates.s2_s3.to_string(),
            "model" => self.model.kind.to_string(),
            "domain" => self.domain.to_string(),
            "towers" => self.model.towers.to_string(),
            "lambda" => self.model.lambda.to_string(),
            "beta" => hc.beta.to_string(),
            "gamma" => hc.gamma.to_string(),
            "zeta" => hc.zeta.to_string(),
            "gate_placement" => self.model.gate_placement.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "eval_ks" => join(&self.eval_ks),
            "features" => self.features.name().to_string(),
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        })
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse_text(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, origin)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    origin,
                    i + 1,
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, path)
    }

    /// Canonical `key = value` listing of every field.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            writeln!(s, "{key} = {}", self.get(key).expect("listed key")).unwrap();
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.cascade.validate()?;
        self.model.hard_concrete.validate()?;
        let w = &self.sim.world;
        if w.n_users == 0 || w.n_items == 0 || w.user_buckets == 0 || w.item_buckets == 0 {
            return Err(Error::Config(
                "world sizes and bucket counts must be ≥ 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.eval_ks.is_empty() || self.eval_ks.contains(&0) {
            return Err(Error::Config(
                "eval_ks must be a non-empty list of positive integers".into(),
            ));
        }
        if !(3..=4).contains(&self.model.towers) {
            return Err(Error::Config("towers must be 3 or 4".into()));
        }
        if !(self.model.lambda >= 0.0 && self.model.lambda.is_finite()) {
            return Err(Error::Config("lambda must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    /// Feature layout the model is built on.
    pub fn schema(&self) -> FeatureSchema {
        let w = &self.sim.world;
        self.features
            .apply(&FeatureSchema::standard(w.user_buckets, w.item_buckets))
    }

    pub fn hard_concrete(&self) -> HardConcrete {
        self.model.hard_concrete
    }

    pub fn with_model(mut self, kind: ModelKind, domain: TrainingDomain) -> Self {
        self.model.kind = kind;
        self.domain = domain;
        self
    }

    pub fn with_gate_placement(mut self, placement: GatePlacement) -> Self {
        self.model.gate_placement = placement;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("lambda", "0.00003").unwrap();
        cfg.set("stage_bias", "0.1, 0.2,0.3,0.4").unwrap();
        cfg.set("model", "ecmm").unwrap();
        cfg.set("features", "half").unwrap();
        let text = cfg.to_text();
        let back = ExperimentConfig::parse_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text);
        assert_eq!(text.lines().count(), ExperimentConfig::KEYS.len());
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\nepochs = 2   # short\nmodel=esmm\n";
        let cfg = ExperimentConfig::parse_text(text, Path::new("mem")).unwrap();
        assert_eq!(cfg.epochs, 2);
        assert_eq!(cfg.model.kind, ModelKind::Esmm);
    }

    #[test]
    fn unknown_and_bad_values_are_rejected() {
        let p = Path::new("c.cfg");
        let err = ExperimentConfig::parse_text("epoch = 3\n", p)
            .unwrap_err()
            .to_string();
        assert!(err.contains("c.cfg:1") && err.contains("epoch"), "{err}");
        assert!(ExperimentConfig::parse_text("epochs = three\n", p).is_err());
        assert!(ExperimentConfig::parse_text("towers = 5\n", p).is_err());
        assert!(ExperimentConfig::parse_text("gamma = 0.1\n", p).is_err());
        assert!(ExperimentConfig::parse_text("stage_sizes = 50,20,10\n", p).is_err());
        assert!(ExperimentConfig::parse_text("just words\n", p).is_err());
    }

    #[test]
    fn half_features_keep_first_fields() {
        let cfg = ExperimentConfig {
            features: FeatureSubset::Half,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.schema().len(), 6);
    }
}
