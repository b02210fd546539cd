//! Pre-ranking model families with hand-written backward passes.
//!
//! Every model maps a [`Batch`] to per-sample [`PredictionHeads`] and exposes
//! a mean minibatch loss whose gradient is accumulated into a
//! [`ParameterSet`] of the same layout as its parameters.

mod batch;
mod classifier;
mod ecmm;
mod embedding;
mod esmm;
mod heads;
mod mlp;
mod rank;
mod two_tower;

use std::fmt;
use std::str::FromStr;

pub use batch::Batch;
pub use classifier::{ClassifierOutput, MlpClassifier};
pub use ecmm::{Ecmm, GateMode, GatePlacement};
pub use embedding::{Embeddings, EMBED_DIM};
pub use esmm::Esmm;
pub use heads::{HeadSelector, PredictionHeads};
pub use mlp::{Mlp, MlpCache};
pub use rank::rank_by_score;
pub use two_tower::TwoTower;

use crate::error::{Error, Result};
use crate::gates::{HardConcrete, HardConcreteGate};
use crate::numerics::{ParameterSet, RngStream};
use crate::sim::FeatureSchema;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    TwoTower,
    DeepBaseline,
    DeepBaselineSoftmax,
    Ecm,
    Esmm,
    Ecmm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::TwoTower,
        ModelKind::DeepBaseline,
        ModelKind::DeepBaselineSoftmax,
        ModelKind::Ecm,
        ModelKind::Esmm,
        ModelKind::Ecmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TwoTower => "two_tower",
            ModelKind::DeepBaseline => "deep_baseline",
            ModelKind::DeepBaselineSoftmax => "deep_baseline_softmax",
            ModelKind::Ecm => "ecm",
            ModelKind::Esmm => "esmm",
            ModelKind::Ecmm => "ecmm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

/// Which records a model is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainingDomain {
    /// Exposure records only (deepest stage ≥ 5).
    ExposureOnly,
    /// Every subsampled record of the chain.
    EntireChain,
}

impl TrainingDomain {
    pub fn name(self) -> &'static str {
        match self {
            TrainingDomain::ExposureOnly => "exposure_only",
            TrainingDomain::EntireChain => "entire_chain",
        }
    }
}

impl fmt::Display for TrainingDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exposure_only" => Ok(TrainingDomain::ExposureOnly),
            "entire_chain" => Ok(TrainingDomain::EntireChain),
            _ => Err(Error::Config(format!("unknown training domain `{s}`"))),
        }
    }
}

/// Architecture settings that are not part of the learned state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// ECMM tower count, 3 or 4.
    pub towers: usize,
    pub lambda: f64,
    pub hard_concrete: HardConcrete,
    pub gate_placement: GatePlacement,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Ecm,
            towers: 3,
            lambda: 1e-5,
            hard_concrete: HardConcrete::default(),
            gate_placement: GatePlacement::RoutingAndTowers,
        }
    }
}

/// Common interface over all model families.
pub trait Model: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn init_params(&self, rng: &mut RngStream) -> ParameterSet;

    /// Number of stochastic gates; the length of the noise slice passed to [`Model::loss`].
    fn gate_count(&self) -> usize {
        0
    }

    /// Inference outputs (gates, if any, at their deterministic test value).
    fn predict(&self, params: &ParameterSet, batch: &Batch) -> Result<Vec<PredictionHeads>>;

    /// Mean training loss over the batch. When `grads` is given, the gradient
    /// is accumulated into it. `noise` holds one uniform draw per gate.
    fn loss(
        &self,
        params: &ParameterSet,
        batch: &Batch,
        noise: &[f64],
        grads: Option<&mut ParameterSet>,
    ) -> Result<f64>;

    /// Stochastic gates in noise order.
    fn gates(&self, _params: &ParameterSet) -> Result<Vec<HardConcreteGate>> {
        Ok(Vec::new())
    }

    /// `Σ P(z ≠ 0)` over all gates.
    fn expected_active_gates(&self, params: &ParameterSet) -> Result<f64> {
        Ok(self
            .gates(params)?
            .iter()
            .map(HardConcreteGate::expected_l0)
            .sum())
    }
}

pub fn build_model(config: &ModelConfig, schema: &FeatureSchema) -> Result<Box<dyn Model>> {
    if schema.is_empty() {
        return Err(Error::Config(
            "model needs at least one feature field".into(),
        ));
    }
    Ok(match config.kind {
        ModelKind::TwoTower => Box::new(TwoTower::new(schema)?),
        ModelKind::DeepBaseline => Box::new(MlpClassifier::new(
            ModelKind::DeepBaseline,
            schema,
            ClassifierOutput::Sigmoid,
        )),
        ModelKind::DeepBaselineSoftmax | ModelKind::Ecm => Box::new(MlpClassifier::new(
            config.kind,
            schema,
            ClassifierOutput::Softmax,
        )),
        ModelKind::Esmm => Box::new(Esmm::new(schema)),
        ModelKind::Ecmm => Box::new(Ecmm::new(
            schema,
            config.towers,
            config.lambda,
            config.hard_concrete,
            config.gate_placement,
        )?),
    })
}

/// Rejects batches containing a click without exposure.
pub(crate) fn check_labels(batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    for (i, (&y5, &y6)) in batch.y5.iter().zip(&batch.y6).enumerate() {
        if y6 > y5 {
            return Err(Error::Label(format!("row {i}: y6=1 without y5=1")));
        }
    }
    Ok(())
}

pub(crate) fn all_fields(schema: &FeatureSchema) -> Embeddings {
    Embeddings::new(
        "emb",
        (0..schema.len()).collect(),
        schema.cardinalities.clone(),
    )
}
