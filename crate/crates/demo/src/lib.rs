//! Browser demo: hard-concrete gate sampling, a cascade bias view and a
//! ranking-metric scratchpad. Every export returns a JSON string.

use ecpr::gates::{HardConcrete, HardConcreteGate};
use ecpr::metrics::{auc, RankedList, RecallTarget};
use ecpr::numerics::RngStream;
use ecpr::sim::{simulate_request, CascadeConfig, World, WorldConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_SAMPLES: usize = 2_000_000;
const MAX_REQUESTS: usize = 5_000;

#[derive(Serialize, Debug)]
pub struct GateHistogram {
    /// Counts over `bins` equal-width bins on the open interval (0, 1).
    pub interior: Vec<usize>,
    pub zeros: usize,
    pub ones: usize,
    pub samples: usize,
    pub nonzero_rate: f64,
    pub expected_l0: f64,
}

pub fn gate_histogram(
    log_alpha: f64,
    beta: f64,
    gamma: f64,
    zeta: f64,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<GateHistogram, String> {
    if samples == 0 || samples > MAX_SAMPLES || bins == 0 {
        return Err(format!(
            "need 1..={MAX_SAMPLES} samples and at least one bin"
        ));
    }
    let shape = HardConcrete::new(beta, gamma, zeta).map_err(|e| e.to_string())?;
    let gate = HardConcreteGate::new(log_alpha, shape);
    let mut rng = RngStream::new(seed, "demo/gate");
    let mut out = GateHistogram {
        interior: vec![0; bins],
        zeros: 0,
        ones: 0,
        samples,
        nonzero_rate: 0.0,
        expected_l0: gate.expected_l0(),
    };
    for _ in 0..samples {
        let z = gate
            .sample(rng.uniform_open())
            .map_err(|e| e.to_string())?
            .z;
        if z == 0.0 {
            out.zeros += 1;
        } else if z == 1.0 {
            out.ones += 1;
        } else {
            out.interior[((z * bins as f64) as usize).min(bins - 1)] += 1;
        }
    }
    out.nonzero_rate = (samples - out.zeros) as f64 / samples as f64;
    Ok(out)
}

#[derive(Serialize, Debug, PartialEq)]
pub struct StageRow {
    /// Domain S2..S6.
    pub stage: u8,
    pub items: usize,
    /// Mean true click propensity of items reaching the stage.
    pub mean_propensity: f64,
    /// Mean commercial attribute of items reaching the stage.
    pub mean_commercial: f64,
}

/// Pushes `requests` requests through a small cascade and summarises each
/// nested domain. `stage_bias` is the selectors' weight on the commercial
/// attribute (same at every stage).
pub fn cascade_view(seed: u64, requests: usize, stage_bias: f64) -> Result<Vec<StageRow>, String> {
    if requests == 0 || requests > MAX_REQUESTS {
        return Err(format!("need 1..={MAX_REQUESTS} requests"));
    }
    if !stage_bias.is_finite() {
        return Err("stage bias must be finite".into());
    }
    let world = World::generate(
        seed,
        WorldConfig {
            n_users: 300,
            n_items: 3_000,
            stage_bias: [stage_bias; 4],
            ..WorldConfig::default()
        },
    );
    let cascade = CascadeConfig::default();
    let mut sums = [(0usize, 0.0f64, 0.0f64); 5];
    for rid in 0..requests as u64 {
        let mut rng = RngStream::new(seed, format!("demo/request/{rid}"));
        let user = rng.below(world.n_users());
        for rec in
            simulate_request(&world, &cascade, rid, user, &mut rng).map_err(|e| e.to_string())?
        {
            let p = world.propensity(user, rec.item_id as usize);
            let c = world.commercial(rec.item_id as usize);
            for slot in &mut sums[..(rec.deepest_stage as usize - 1)] {
                slot.0 += 1;
                slot.1 += p;
                slot.2 += c;
            }
        }
    }
    Ok(sums
        .iter()
        .enumerate()
        .map(|(i, &(n, p, c))| StageRow {
            stage: i as u8 + 2,
            items: n,
            mean_propensity: if n > 0 { p / n as f64 } else { f64::NAN },
            mean_commercial: if n > 0 { c / n as f64 } else { f64::NAN },
        })
        .collect())
}

#[derive(Serialize, Debug, PartialEq)]
pub struct RankingMetrics {
    pub items: usize,
    pub auc: Option<f64>,
    pub recall: Option<f64>,
    pub rcs: f64,
    /// Row numbers (1-based) in model-score order.
    pub ranking: Vec<u32>,
}

/// Parses rows of `score oracle clicked` and scores the model ranking.
pub fn ranking_metrics(rows: &str, k: usize) -> Result<RankingMetrics, String> {
    let (mut scores, mut oracle, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in rows.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|c| !c.is_empty())
            .collect();
        let bad = || format!("line {}: expected `score oracle clicked(0/1)`", i + 1);
        if cols.len() != 3 {
            return Err(bad());
        }
        let s: f64 = cols[0].parse().map_err(|_| bad())?;
        let o: f64 = cols[1].parse().map_err(|_| bad())?;
        if !s.is_finite() || !o.is_finite() {
            return Err(bad());
        }
        scores.push(s);
        oracle.push(o);
        labels.push(match cols[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        });
    }
    if scores.is_empty() || k == 0 {
        return Err("need at least one row and k ≥ 1".into());
    }
    let ids: Vec<u32> = (1..=scores.len() as u32).collect();
    let clicked: Vec<u32> = ids
        .iter()
        .copied()
        .filter(|&i| labels[i as usize - 1])
        .collect();
    let list = RankedList::new(0, &ids, &scores, &oracle, clicked.clone(), clicked)
        .map_err(|e| e.to_string())?;
    Ok(RankingMetrics {
        items: ids.len(),
        auc: auc(&scores, &labels).ok(),
        recall: list.recall(k, RecallTarget::Click),
        rcs: list.rcs(k).map_err(|e| e.to_string())?,
        ranking: list.items.clone(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = gateHistogram)]
pub fn gate_histogram_js(
    log_alpha: f64,
    beta: f64,
    gamma: f64,
    zeta: f64,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<String, JsError> {
    to_js(gate_histogram(
        log_alpha, beta, gamma, zeta, samples, bins, seed,
    ))
}

#[wasm_bindgen(js_name = cascadeView)]
pub fn cascade_view_js(seed: u64, requests: usize, stage_bias: f64) -> Result<String, JsError> {
    to_js(cascade_view(seed, requests, stage_bias))
}

#[wasm_bindgen(js_name = rankingMetrics)]
pub fn ranking_metrics_js(rows: &str, k: usize) -> Result<String, JsError> {
    to_js(ranking_metrics(rows, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_accounts_for_every_sample() {
        let h = gate_histogram(0.0, 0.5, -0.1, 1.1, 200_000, 10, 1).unwrap();
        assert_eq!(h.zeros + h.ones + h.interior.iter().sum::<usize>(), 200_000);
        assert!((h.nonzero_rate - h.expected_l0).abs() < 0.01);
        assert!(gate_histogram(0.0, 0.5, 0.1, 1.1, 10, 10, 1).is_err());
        assert!(gate_histogram(0.0, 0.5, -0.1, 1.1, 0, 10, 1).is_err());
    }

    #[test]
    fn cascade_domains_are_nested() {
        let rows = cascade_view(3, 50, 0.8).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.stage).collect::<Vec<_>>(),
            [2, 3, 4, 5, 6]
        );
        assert_eq!(rows[0].items, 50 * 50);
        assert_eq!(rows[3].items, 50 * 5);
        assert!(rows.windows(2).all(|w| w[0].items >= w[1].items));
        assert!(cascade_view(3, 0, 0.8).is_err());
    }

    #[test]
    fn commercial_bias_shows_up_in_exposure() {
        let rows = cascade_view(3, 200, 2.0).unwrap();
        assert!(rows[3].mean_commercial > rows[0].mean_commercial);
    }

    #[test]
    fn ranking_scratchpad() {
        let m = ranking_metrics("0.9 0.1 1\n0.8 0.9 0\n# note\n0.1, 0.5, 1\n", 1).unwrap();
        assert_eq!(m.ranking, [1, 2, 3]);
        assert_eq!(m.auc, Some(0.5));
        assert_eq!(m.recall, Some(1.0));
        assert_eq!(m.rcs, 0.0);
        assert!(ranking_metrics("1 2\n", 1).is_err());
        assert!(ranking_metrics("1 2 x\n", 1).is_err());
        assert_eq!(ranking_metrics("1 2 0\n", 3).unwrap().auc, None);
    }
}
