//! Ranking and bias metrics, plus the report they are collected into.
//!
//! AUC and GAUC score the exposure records against click labels. Recall and
//! RCS rank each request's full matching-stage candidate set.

mod ranking;

pub use ranking::{
    auc, bias_gap, gauc, mean_rcs_at_k, rcs_at_k, recall_at_k, RankedList, RecallTarget,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A metric value at one cut-off. `None` marks an undefined metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub k: usize,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub requests: usize,
    pub candidates: usize,
    pub exposures: usize,
    pub clicks: usize,
}

/// Every metric for one (model, head) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub domain: String,
    pub head: String,
    pub auc: Option<f64>,
    pub gauc: Option<f64>,
    pub recall_exposure: Vec<AtK>,
    pub recall_click: Vec<AtK>,
    pub rcs: Vec<AtK>,
    pub bias_gap: Option<f64>,
    pub counts: SampleCounts,
}

pub const REPORT_HEADER: &str = "model\tdomain\thead\tmetric\tk\tvalue";

/// Maps an undefined metric to `None` and passes other errors through.
pub fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl MetricsReport {
    /// `(metric, k, value)` rows in a fixed order; `k` is 0 for scalar metrics.
    pub fn rows(&self) -> Vec<(&'static str, usize, Option<f64>)> {
        let mut rows = vec![("auc", 0, self.auc), ("gauc", 0, self.gauc)];
        for (name, series) in [
            ("recall_exposure", &self.recall_exposure),
            ("recall_click", &self.recall_click),
            ("rcs", &self.rcs),
        ] {
            rows.extend(series.iter().map(|a| (name, a.k, a.value)));
        }
        rows.push(("bias_gap", 0, self.bias_gap));
        rows
    }

    /// TSV body rows (no header).
    pub fn tsv_rows(&self) -> String {
        let mut s = String::new();
        for (metric, k, v) in self.rows() {
            writeln!(
                s,
                "{}\t{}\t{}\t{metric}\t{k}\t{}",
                self.model,
                self.domain,
                self.head,
                fmt_value(v)
            )
            .unwrap();
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        format!("{REPORT_HEADER}\n{}", self.tsv_rows())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn from_json(text: &str, origin: &std::path::Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.line(), e.to_string()))
    }

    pub fn value(&self, metric: &str, k: usize) -> Option<f64> {
        self.rows()
            .into_iter()
            .find(|(m, kk, _)| *m == metric && *kk == k)
            .and_then(|(_, _, v)| v)
    }
}
