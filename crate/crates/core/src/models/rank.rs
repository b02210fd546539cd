use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Candidate ids ordered by descending score, ties by ascending id.
pub fn rank_by_score(ids: &[u32], scores: &[f64]) -> Result<Vec<u32>> {
    if ids.is_empty() {
        return Err(Error::Domain("empty candidate set".into()));
    }
    if ids.len() != scores.len() {
        return Err(Error::Dimension {
            op: "rank_by_score",
            left: (ids.len(), 1),
            right: (scores.len(), 1),
        });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    Ok(order.into_iter().map(|i| ids[i]).collect())
}
