use crate::numerics::{sigmoid, RngStream};

/// Number of categorical fields emitted per record.
pub const NUM_FIELDS: usize = 12;
/// Latent coordinates exposed as quantised features.
pub const FEATURE_LATENT_DIMS: usize = 4;
const LATENT_BINS: u32 = 8;
const ACTIVITY_LEVELS: u32 = 5;

/// Which tower of a two-tower model a field feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldSide {
    User,
    Item,
}

/// Field layout: cardinality and side per field.
///
/// Layout: user id bucket, item id bucket, then user/item latent bins
/// interleaved (u0 v0 u1 v1 u2 v2 u3 v3), user activity, item commercial bin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    pub cardinalities: Vec<usize>,
    pub sides: Vec<FieldSide>,
}

impl FeatureSchema {
    pub fn standard(user_buckets: usize, item_buckets: usize) -> Self {
        let mut cardinalities = vec![user_buckets, item_buckets];
        let mut sides = vec![FieldSide::User, FieldSide::Item];
        for _ in 0..FEATURE_LATENT_DIMS {
            cardinalities.extend([LATENT_BINS as usize, LATENT_BINS as usize]);
            sides.extend([FieldSide::User, FieldSide::Item]);
        }
        cardinalities.extend([ACTIVITY_LEVELS as usize, LATENT_BINS as usize]);
        sides.extend([FieldSide::User, FieldSide::Item]);
        Self {
            cardinalities,
            sides,
        }
    }

    pub fn len(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cardinalities.is_empty()
    }

    /// Keeps the first `n` fields.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            cardinalities: self.cardinalities[..n].to_vec(),
            sides: self.sides[..n].to_vec(),
        }
    }
}

/// Parameters of the synthetic world.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    /// Multiplier on `⟨u, v⟩/√d` in the click logit.
    pub latent_scale: f64,
    pub click_bias: f64,
    /// Click-logit shift per user activity level above the middle one.
    pub activity_effect: f64,
    /// Selector noise scale for matching, pre-ranking, ranking, re-ranking.
    pub stage_noise: [f64; 4],
    /// Selector weight on the item commercial attribute, per stage.
    pub stage_bias: [f64; 4],
    pub user_buckets: usize,
    pub item_buckets: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_users: 2_000,
            n_items: 10_000,
            latent_dim: 4,
            latent_scale: 1.5,
            click_bias: -2.0,
            activity_effect: 0.25,
            stage_noise: [1.0, 0.8, 0.6, 0.4],
            stage_bias: [0.6, 0.6, 0.6, 0.6],
            user_buckets: 512,
            item_buckets: 1024,
        }
    }
}

/// Users, items and the ground-truth click model.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    user_latent: Vec<f64>,
    item_latent: Vec<f64>,
    /// Item attribute vectors `[commercial, v_0, …, v_{d−1}]`.
    item_attrs: Vec<f64>,
    user_activity: Vec<u32>,
    user_fields: Vec<[u32; 6]>,
    item_fields: Vec<[u32; 6]>,
    schema: FeatureSchema,
}

impl World {
    pub fn generate(seed: u64, config: WorldConfig) -> World {
        let mut rng = RngStream::new(seed, "world");
        let d = config.latent_dim;
        let user_latent: Vec<f64> = (0..config.n_users * d).map(|_| rng.normal()).collect();
        let item_latent: Vec<f64> = (0..config.n_items * d).map(|_| rng.normal()).collect();
        let commercial: Vec<f64> = (0..config.n_items).map(|_| rng.normal()).collect();
        let user_activity: Vec<u32> = (0..config.n_users)
            .map(|_| rng.below(ACTIVITY_LEVELS as usize) as u32)
            .collect();

        let mut item_attrs = Vec::with_capacity(config.n_items * (d + 1));
        for i in 0..config.n_items {
            item_attrs.push(commercial[i]);
            item_attrs.extend_from_slice(&item_latent[i * d..(i + 1) * d]);
        }
        let latent_bin = |v: &[f64], k: usize| v.get(k).map_or(0, |&x| quantize(x));
        let user_fields = (0..config.n_users)
            .map(|u| {
                let v = &user_latent[u * d..(u + 1) * d];
                [
                    hash_bucket(u as u64, 0x5eed_0001, config.user_buckets),
                    latent_bin(v, 0),
                    latent_bin(v, 1),
                    latent_bin(v, 2),
                    latent_bin(v, 3),
                    user_activity[u],
                ]
            })
            .collect();
        let item_fields = (0..config.n_items)
            .map(|i| {
                let v = &item_latent[i * d..(i + 1) * d];
                [
                    hash_bucket(i as u64, 0x5eed_0002, config.item_buckets),
                    latent_bin(v, 0),
                    latent_bin(v, 1),
                    latent_bin(v, 2),
                    latent_bin(v, 3),
                    quantize(commercial[i]),
                ]
            })
            .collect();
        let schema = FeatureSchema::standard(config.user_buckets, config.item_buckets);
        World {
            config,
            user_latent,
            item_latent,
            item_attrs,
            user_activity,
            user_fields,
            item_fields,
            schema,
        }
    }

    pub fn n_users(&self) -> usize {
        self.config.n_users
    }

    pub fn n_items(&self) -> usize {
        self.config.n_items
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn true_logit(&self, user: usize, item: usize) -> f64 {
        let d = self.config.latent_dim;
        let activity = self.user_activity[user] as f64 - (ACTIVITY_LEVELS / 2) as f64;
        let base = self.config.click_bias + self.config.activity_effect * activity;
        if d == 0 {
            return base;
        }
        let u = &self.user_latent[user * d..(user + 1) * d];
        let v = &self.item_latent[item * d..(item + 1) * d];
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        base + self.config.latent_scale * dot / (d as f64).sqrt()
    }

    /// Ground-truth click propensity `p*(u, i)`.
    pub fn propensity(&self, user: usize, item: usize) -> f64 {
        sigmoid(self.true_logit(user, item))
    }

    pub fn item_attrs(&self, item: usize) -> &[f64] {
        let w = self.config.latent_dim + 1;
        &self.item_attrs[item * w..(item + 1) * w]
    }

    pub fn commercial(&self, item: usize) -> f64 {
        self.item_attrs(item)[0]
    }

    pub fn commercial_bin(&self, item: usize) -> u32 {
        self.item_fields[item][5]
    }

    /// Stage-`k` selector bias term for an item.
    pub fn stage_bias_term(&self, stage: usize, item: usize) -> f64 {
        self.config.stage_bias[stage] * self.commercial(item)
    }

    /// Categorical feature ids for a (user, item) pair, in schema order.
    pub fn features(&self, user: usize, item: usize) -> Vec<u32> {
        let u = &self.user_fields[user];
        let v = &self.item_fields[item];
        vec![
            u[0], v[0], u[1], v[1], u[2], v[2], u[3], v[3], u[4], v[4], u[5], v[5],
        ]
    }
}

/// Equal-width bins over [−2, 2]; tails fold into the edge bins.
fn quantize(x: f64) -> u32 {
    let b = ((x + 2.0) / 4.0 * LATENT_BINS as f64).floor();
    b.clamp(0.0, (LATENT_BINS - 1) as f64) as u32
}

fn hash_bucket(id: u64, salt: u64, buckets: usize) -> u32 {
    let mut x = id.wrapping_add(salt).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x ^= x >> 29;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 32;
    (x % buckets as u64) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            n_users: 50,
            n_items: 300,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn same_seed_same_world() {
        assert_eq!(World::generate(5, small()), World::generate(5, small()));
        assert_ne!(World::generate(5, small()), World::generate(6, small()));
    }

    #[test]
    fn zero_latent_dim_gives_flat_propensity() {
        let cfg = WorldConfig {
            latent_dim: 0,
            activity_effect: 0.0,
            ..small()
        };
        let w = World::generate(1, cfg);
        let p = sigmoid(w.config.click_bias);
        for u in 0..10 {
            for i in 0..10 {
                assert_eq!(w.propensity(u, i), p);
            }
        }
    }

    #[test]
    fn features_respect_schema() {
        let w = World::generate(2, small());
        let schema = w.schema();
        assert_eq!(schema.len(), NUM_FIELDS);
        for u in 0..w.n_users() {
            for i in (0..w.n_items()).step_by(7) {
                let f = w.features(u, i);
                for (id, card) in f.iter().zip(&schema.cardinalities) {
                    assert!((*id as usize) < *card);
                }
            }
        }
    }

    #[test]
    fn quantize_edges() {
        assert_eq!(quantize(-5.0), 0);
        assert_eq!(quantize(5.0), 7);
        assert_eq!(quantize(0.0), 4);
        assert_eq!(quantize(-0.01), 3);
    }
}
