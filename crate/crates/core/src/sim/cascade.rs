use std::cmp::Ordering;

use super::world::World;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Domain target of a record: click, non-click exposure, or implication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainTag {
    T1,
    T2,
    T3,
}

impl DomainTag {
    /// Derives the tag from labels, checking their consistency with the stage.
    pub fn from_labels(y5: bool, y6: bool, deepest_stage: u8) -> Result<DomainTag> {
        if y6 && !y5 {
            return Err(Error::Label("click without exposure (y6=1, y5=0)".into()));
        }
        if y5 != (deepest_stage >= 5) {
            return Err(Error::Label(format!(
                "y5={} inconsistent with deepest stage S{deepest_stage}",
                y5 as u8
            )));
        }
        if !(2..=6).contains(&deepest_stage) || (y6 != (deepest_stage == 6)) {
            return Err(Error::Label(format!(
                "y6={} inconsistent with deepest stage S{deepest_stage}",
                y6 as u8
            )));
        }
        Ok(match (y5, y6) {
            (true, true) => DomainTag::T1,
            (true, false) => DomainTag::T2,
            _ => DomainTag::T3,
        })
    }

    pub fn index(self) -> usize {
        match self {
            DomainTag::T1 => 0,
            DomainTag::T2 => 1,
            DomainTag::T3 => 2,
        }
    }

    pub fn code(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_code(code: u8) -> Result<DomainTag> {
        match code {
            1 => Ok(DomainTag::T1),
            2 => Ok(DomainTag::T2),
            3 => Ok(DomainTag::T3),
            _ => Err(Error::Label(format!("unknown domain tag {code}"))),
        }
    }

    /// One-hot training label over (t1, t2, t3).
    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

/// One (request, item) record of the matching domain or below.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeSample {
    pub request_id: u64,
    pub user_id: u32,
    pub item_id: u32,
    pub features: Vec<u32>,
    /// Deepest stage reached, 2..=6 (S6 = clicked).
    pub deepest_stage: u8,
    pub y5: bool,
    pub y6: bool,
    pub domain_tag: DomainTag,
    /// Sampling rate applied to this record (1 when unsampled).
    pub sample_rate_weight: f64,
}

/// Keep-probabilities per domain slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingRates {
    pub t1: f64,
    pub t2: f64,
    pub s3_s5: f64,
    pub s2_s3: f64,
}

impl SamplingRates {
    pub const ALL: SamplingRates = SamplingRates {
        t1: 1.0,
        t2: 1.0,
        s3_s5: 1.0,
        s2_s3: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("rate_t1", self.t1),
            ("rate_t2", self.t2),
            ("rate_s3_s5", self.s3_s5),
            ("rate_s2_s3", self.s2_s3),
        ] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1], got {r}")));
            }
        }
        Ok(())
    }

    pub fn rate_for(&self, s: &CascadeSample) -> f64 {
        match s.domain_tag {
            DomainTag::T1 => self.t1,
            DomainTag::T2 => self.t2,
            DomainTag::T3 if s.deepest_stage >= 3 => self.s3_s5,
            DomainTag::T3 => self.s2_s3,
        }
    }
}

impl Default for SamplingRates {
    fn default() -> Self {
        Self {
            t1: 1.0,
            t2: 0.4,
            s3_s5: 0.05,
            s2_s3: 0.01,
        }
    }
}

/// Cascade sizes and request counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeConfig {
    /// Candidate pool drawn from the catalogue per request (S1).
    pub pool_size: usize,
    /// Stage output sizes N2 ≥ N3 ≥ N4 ≥ N5.
    pub stage_sizes: [usize; 4],
    pub train_requests: usize,
    pub eval_requests: usize,
    pub rates: SamplingRates,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            pool_size: 200,
            stage_sizes: [50, 20, 10, 5],
            train_requests: 50_000,
            eval_requests: 5_000,
            rates: SamplingRates::default(),
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        let [n2, n3, n4, n5] = self.stage_sizes;
        if !(self.pool_size >= n2 && n2 >= n3 && n3 >= n4 && n4 >= n5 && n5 >= 1) {
            return Err(Error::Config(format!(
                "stage sizes must satisfy N1 >= N2 >= N3 >= N4 >= N5 >= 1, got {} {:?}",
                self.pool_size, self.stage_sizes
            )));
        }
        self.rates.validate()
    }
}

/// Positions of the top-`n` of `items` by score, ties broken by ascending item id.
fn select_top(items: &[usize], scores: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(items[a].cmp(&items[b]))
    });
    order.truncate(n);
    order
}

/// Runs one request through the cascade.
///
/// Every S2 member becomes one record, sorted by item id. Labels and the
/// domain tag are set; `sample_rate_weight` is 1.
pub fn simulate_request(
    world: &World,
    config: &CascadeConfig,
    request_id: u64,
    user: usize,
    rng: &mut RngStream,
) -> Result<Vec<CascadeSample>> {
    if config.pool_size > world.n_items() || config.pool_size < config.stage_sizes[0] {
        return Err(Error::Config(format!(
            "candidate pool of {} cannot feed N2={} from {} items",
            config.pool_size,
            config.stage_sizes[0],
            world.n_items()
        )));
    }
    config.validate()?;
    let pool = rng.sample_distinct(world.n_items(), config.pool_size);
    let logits: Vec<f64> = pool.iter().map(|&i| world.true_logit(user, i)).collect();

    // stage membership tracked as indices into `pool`
    let mut current: Vec<usize> = (0..pool.len()).collect();
    let mut stage_members: Vec<Vec<usize>> = Vec::with_capacity(4);
    for (stage, &n) in config.stage_sizes.iter().enumerate() {
        let noise = world.config.stage_noise[stage];
        let items: Vec<usize> = current.iter().map(|&k| pool[k]).collect();
        let scores: Vec<f64> = current
            .iter()
            .map(|&k| logits[k] + noise * rng.normal() + world.stage_bias_term(stage, pool[k]))
            .collect();
        let chosen = select_top(&items, &scores, n);
        stage_members.push(chosen.iter().map(|&pos| items[pos]).collect());
        current = chosen.into_iter().map(|pos| current[pos]).collect();
    }

    let mut s2 = stage_members[0].clone();
    s2.sort_unstable();
    let mut out = Vec::with_capacity(s2.len());
    for item in s2 {
        let mut deepest = 2u8;
        for (k, members) in stage_members.iter().enumerate().skip(1) {
            if members.contains(&item) {
                deepest = 2 + k as u8;
            }
        }
        let y5 = deepest >= 5;
        let y6 = y5 && rng.bernoulli(world.propensity(user, item));
        if y6 {
            deepest = 6;
        }
        out.push(CascadeSample {
            request_id,
            user_id: user as u32,
            item_id: item as u32,
            features: world.features(user, item),
            deepest_stage: deepest,
            y5,
            y6,
            domain_tag: DomainTag::from_labels(y5, y6, deepest)?,
            sample_rate_weight: 1.0,
        });
    }
    Ok(out)
}

/// Recomputes every domain tag from the labels.
pub fn label_domains(samples: &mut [CascadeSample]) -> Result<()> {
    for s in samples.iter_mut() {
        s.domain_tag = DomainTag::from_labels(s.y5, s.y6, s.deepest_stage)?;
    }
    Ok(())
}

/// Bernoulli-thins each domain slice and records the applied rate.
pub fn subsample_domains(
    samples: Vec<CascadeSample>,
    rates: &SamplingRates,
    rng: &mut RngStream,
) -> Vec<CascadeSample> {
    samples
        .into_iter()
        .filter_map(|mut s| {
            let rate = rates.rate_for(&s);
            if rate >= 1.0 || rng.bernoulli(rate) {
                s.sample_rate_weight = rate;
                Some(s)
            } else {
                None
            }
        })
        .collect()
}

/// Non-negative reduced fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    fn new(num: u64, den: u64) -> Option<Ratio> {
        (den > 0).then(|| Ratio::reduced(num as u128, den as u128))
    }

    fn reduced(num: u128, den: u128) -> Ratio {
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    fn mul(self, other: Ratio) -> Ratio {
        Ratio::reduced(self.num * other.num, self.den * other.den)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Count ratios over an unsampled split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateCheck {
    pub matching: u64,
    pub exposure: u64,
    pub click: u64,
    /// Exposure / matching.
    pub etr: Option<f64>,
    /// Click / exposure.
    pub ctr: Option<f64>,
    /// Click / matching.
    pub etctr: Option<f64>,
    /// `(S5/S2)·(S6/S5) = S6/S2` in exact integer arithmetic.
    pub identity_holds: bool,
}

pub fn empirical_rate_check(samples: &[CascadeSample]) -> RateCheck {
    let matching = samples.len() as u64;
    let exposure = samples.iter().filter(|s| s.y5).count() as u64;
    let click = samples.iter().filter(|s| s.y6).count() as u64;
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let identity_holds = match (
        Ratio::new(exposure, matching),
        Ratio::new(click, exposure),
        Ratio::new(click, matching),
    ) {
        (Some(etr), Some(ctr), Some(etctr)) => etr.mul(ctr) == etctr,
        // S5 = 0 forces S6 = 0, so the identity is 0 = 0 whenever S2 > 0
        (_, None, _) => click == 0,
        _ => true,
    };
    let ctr = ratio(click, exposure);
    RateCheck {
        matching,
        exposure,
        click,
        etr: ratio(exposure, matching),
        ctr,
        etctr: ratio(click, matching),
        identity_holds,
    }
}
