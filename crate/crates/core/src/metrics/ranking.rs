use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::models::rank_by_score;
use crate::numerics::pairwise_sum;

/// Area under the ROC curve by rank-sum, ties counted as one half.
///
/// Ranks are kept doubled so the statistic is an exact integer ratio.
/// Returns [`Error::Undefined`] unless both classes are present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            op: "auc",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("auc score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Σ over positives of 2·rank, with tied groups sharing their mean rank.
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group_rank2 = (i + 1 + j) as u128;
        let group_pos = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        rank2_sum += group_rank2 * group_pos;
        i = j;
    }
    let numerator = rank2_sum - pos * (pos + 1);
    Ok(numerator as f64 / (2 * pos * neg) as f64)
}

/// Impression-weighted mean of per-user AUC; users with one class are skipped.
pub fn gauc(scores: &[f64], labels: &[bool], users: &[u32]) -> Result<f64> {
    if users.len() != scores.len() {
        return Err(Error::Dimension {
            op: "gauc",
            left: (scores.len(), 1),
            right: (users.len(), 1),
        });
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &u) in users.iter().enumerate() {
        groups.entry(u).or_default().push(i);
    }
    let mut per_user = Vec::new();
    for idx in groups.values() {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        match auc(&s, &l) {
            Ok(a) => per_user.push((a, idx.len() as f64)),
            Err(Error::Undefined(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if per_user.is_empty() {
        return Err(Error::Undefined("gauc: no user has both classes".into()));
    }
    // normalised weights make a lone user's weight exactly 1
    let total = pairwise_sum(&per_user.iter().map(|p| p.1).collect::<Vec<_>>());
    let terms: Vec<f64> = per_user.iter().map(|&(a, w)| w / total * a).collect();
    Ok(pairwise_sum(&terms))
}

/// Which per-request item set counts as relevant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecallTarget {
    Exposure,
    Click,
}

impl RecallTarget {
    pub fn name(self) -> &'static str {
        match self {
            RecallTarget::Exposure => "exposure",
            RecallTarget::Click => "click",
        }
    }
}

/// One request's candidates ranked by a model, with its targets and oracle order.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub request_id: u64,
    /// Item ids by descending model score.
    pub items: Vec<u32>,
    /// Scores aligned with `items` (non-increasing).
    pub scores: Vec<f64>,
    pub exposed: Vec<u32>,
    pub clicked: Vec<u32>,
    /// Item ids by descending oracle score.
    pub oracle_order: Vec<u32>,
}

impl RankedList {
    /// Ranks `candidates` by `scores` and the oracle by `oracle`.
    pub fn new(
        request_id: u64,
        candidates: &[u32],
        scores: &[f64],
        oracle: &[f64],
        exposed: Vec<u32>,
        clicked: Vec<u32>,
    ) -> Result<Self> {
        if oracle.len() != candidates.len() {
            return Err(Error::Dimension {
                op: "RankedList oracle",
                left: (candidates.len(), 1),
                right: (oracle.len(), 1),
            });
        }
        let items = rank_by_score(candidates, scores)?;
        let by_id: BTreeMap<u32, f64> = candidates
            .iter()
            .copied()
            .zip(scores.iter().copied())
            .collect();
        let sorted_scores = items.iter().map(|i| by_id[i]).collect();
        if exposed
            .iter()
            .chain(&clicked)
            .any(|t| !by_id.contains_key(t))
        {
            return Err(Error::Domain(format!(
                "request {request_id}: target item outside the candidate set"
            )));
        }
        Ok(Self {
            request_id,
            items,
            scores: sorted_scores,
            exposed,
            clicked,
            oracle_order: rank_by_score(candidates, oracle)?,
        })
    }

    pub fn targets(&self, target: RecallTarget) -> &[u32] {
        match target {
            RecallTarget::Exposure => &self.exposed,
            RecallTarget::Click => &self.clicked,
        }
    }

    /// `|top-K ∩ T| / min(K, |T|)`, or `None` when `T` is empty.
    pub fn recall(&self, k: usize, target: RecallTarget) -> Option<f64> {
        let t = self.targets(target);
        if t.is_empty() || k == 0 {
            return None;
        }
        let hits = self.items.iter().take(k).filter(|i| t.contains(i)).count();
        Some(hits as f64 / k.min(t.len()) as f64)
    }

    /// Top-K overlap with the oracle order.
    pub fn rcs(&self, k: usize) -> Result<f64> {
        rcs_at_k(&self.items, &self.oracle_order, k)
    }
}

/// Mean per-request recall over requests with a non-empty target set.
pub fn recall_at_k(lists: &[RankedList], k: usize, target: RecallTarget) -> Result<f64> {
    let vals: Vec<f64> = lists.iter().filter_map(|l| l.recall(k, target)).collect();
    if vals.is_empty() {
        return Err(Error::Undefined(format!(
            "recall@{k}: no request has {} targets",
            target.name()
        )));
    }
    Ok(pairwise_sum(&vals) / vals.len() as f64)
}

/// `|TopK(pre) ∩ TopK(oracle)| / K`, with `K` truncated to the candidate count.
pub fn rcs_at_k(pre: &[u32], oracle: &[u32], k: usize) -> Result<f64> {
    if pre.len() != oracle.len() {
        return Err(Error::Dimension {
            op: "rcs_at_k",
            left: (pre.len(), 1),
            right: (oracle.len(), 1),
        });
    }
    let k = k.min(pre.len());
    if k == 0 {
        return Err(Error::Undefined("rcs on an empty candidate set".into()));
    }
    let top: Vec<u32> = oracle[..k].to_vec();
    let hits = pre[..k].iter().filter(|i| top.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

/// Mean RCS@K over requests.
pub fn mean_rcs_at_k(lists: &[RankedList], k: usize) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::Undefined("rcs over zero requests".into()));
    }
    let vals = lists.iter().map(|l| l.rcs(k)).collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&vals) / vals.len() as f64)
}

/// `|weighted mean over D_obs − mean over D|` of per-sample losses.
///
/// `observed` pairs each loss with its weight; unit weights give the plain
/// mean.
pub fn bias_gap(observed: &[(f64, f64)], full: &[f64]) -> Result<f64> {
    if observed.is_empty() || full.is_empty() {
        return Err(Error::Domain("bias_gap needs non-empty splits".into()));
    }
    let num: Vec<f64> = observed.iter().map(|(l, w)| l * w).collect();
    let den: Vec<f64> = observed.iter().map(|(_, w)| *w).collect();
    let obs = pairwise_sum(&num) / pairwise_sum(&den);
    let all = pairwise_sum(full) / full.len() as f64;
    Ok((obs - all).abs())
}
