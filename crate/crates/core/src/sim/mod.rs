//! Synthetic world and cascade simulator.
//!
//! Each request samples a candidate pool (S1) and pushes it through four
//! selectors (matching, pre-ranking, ranking, re-ranking) producing the
//! nested sets S2 ⊃ S3 ⊃ S4 ⊃ S5. Clicks (S6) are Bernoulli draws of the
//! true propensity on exposed items. Selectors score with the true logit
//! plus per-stage noise and a bias on the item's commercial attribute, so
//! exposure is a biased sample of the matching domain.

mod cascade;
mod dataset;
mod world;

pub use cascade::{
    empirical_rate_check, label_domains, simulate_request, subsample_domains, CascadeConfig,
    CascadeSample, DomainTag, RateCheck, SamplingRates,
};
pub use dataset::{
    generate, oracle_to_tsv, read_oracle, Dataset, SimConfig, SimOutput, DATASET_HEADER,
};
pub use world::{FeatureSchema, FieldSide, World, WorldConfig, NUM_FIELDS};

/// World with default shape parameters and the given sizes.
pub fn generate_world(seed: u64, n_users: usize, n_items: usize, latent_dim: usize) -> World {
    World::generate(
        seed,
        WorldConfig {
            n_users,
            n_items,
            latent_dim,
            ..WorldConfig::default()
        },
    )
}
