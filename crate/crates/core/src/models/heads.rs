use crate::error::{Error, Result};
use crate::numerics::clamp_prob;

/// Per-sample model outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PredictionHeads {
    /// Single click probability (two-tower, single-task deep baseline).
    Single { p: f64 },
    /// Softmax over (t1, t2, t3).
    Softmax { t: [f64; 3] },
    /// ESMM towers: `pETR` and `pCTR`.
    Joint { etr: f64, ctr: f64 },
    /// Independent sigmoid towers; `t[3]` is used only when `towers == 4`.
    Towers { t: [f64; 4], towers: usize },
}

/// Score used to rank candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadSelector {
    T1,
    T2,
    Etr,
}

impl std::str::FromStr for HeadSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t1" => Ok(HeadSelector::T1),
            "t2" => Ok(HeadSelector::T2),
            "petr" | "pETR" | "etr" => Ok(HeadSelector::Etr),
            _ => Err(Error::Config(format!("unknown head `{s}` (t1|t2|petr)"))),
        }
    }
}

impl std::fmt::Display for HeadSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadSelector::T1 => "t1",
            HeadSelector::T2 => "t2",
            HeadSelector::Etr => "petr",
        })
    }
}

impl PredictionHeads {
    /// Click head: `pETCTR` for entire-chain models, the click probability otherwise.
    pub fn t1(&self) -> f64 {
        match *self {
            PredictionHeads::Single { p } => p,
            PredictionHeads::Softmax { t } => t[0],
            PredictionHeads::Joint { etr, ctr } => etr * ctr,
            PredictionHeads::Towers { t, .. } => t[0],
        }
    }

    /// Non-click exposure head, where the model has one.
    pub fn t2(&self) -> Option<f64> {
        match *self {
            PredictionHeads::Single { .. } => None,
            PredictionHeads::Softmax { t } => Some(t[1]),
            PredictionHeads::Joint { etr, ctr } => Some(etr * (1.0 - ctr)),
            PredictionHeads::Towers { t, .. } => Some(t[1]),
        }
    }

    /// Implication head (S2 − S5); for four towers, the S3 − S5 tower.
    pub fn t3(&self) -> Option<f64> {
        match *self {
            PredictionHeads::Single { .. } => None,
            PredictionHeads::Softmax { t } => Some(t[2]),
            PredictionHeads::Joint { etr, .. } => Some(1.0 - etr),
            PredictionHeads::Towers { t, .. } => Some(t[2]),
        }
    }

    pub fn p_etctr(&self) -> f64 {
        self.t1()
    }

    pub fn p_etr(&self) -> Option<f64> {
        match *self {
            PredictionHeads::Single { .. } => None,
            PredictionHeads::Softmax { t } => Some(t[0] + t[1]),
            PredictionHeads::Joint { etr, .. } => Some(etr),
            PredictionHeads::Towers { t, .. } => Some(clamp_prob(t[0] + t[1])),
        }
    }

    pub fn p_ctr(&self) -> Option<f64> {
        match *self {
            PredictionHeads::Joint { ctr, .. } => Some(ctr),
            _ => self.p_etr().map(|etr| self.t1() / etr),
        }
    }

    /// Implication-through rate.
    pub fn p_itr(&self) -> Option<f64> {
        match *self {
            PredictionHeads::Towers { t, towers: 4 } => Some(t[2] + t[3]),
            _ => self.t3(),
        }
    }

    pub fn select(&self, head: HeadSelector) -> Result<f64> {
        match head {
            HeadSelector::T1 => Some(self.t1()),
            HeadSelector::T2 => self.t2(),
            HeadSelector::Etr => self.p_etr(),
        }
        .ok_or_else(|| Error::Config(format!("head {head} not available for this model")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_arithmetic() {
        let h = PredictionHeads::Softmax {
            t: [0.02, 0.08, 0.90],
        };
        assert!((h.p_etr().unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(h.p_etctr(), 0.02);
        assert!((h.p_ctr().unwrap() - 0.2).abs() < 1e-15);

        let third = 1.0 / 3.0;
        let u = PredictionHeads::Softmax {
            t: [third, third, third],
        };
        assert_eq!(u.p_ctr().unwrap(), 0.5);
    }

    #[test]
    fn joint_product() {
        let h = PredictionHeads::Joint { etr: 0.1, ctr: 0.2 };
        assert!((h.p_etctr() - 0.02).abs() < 1e-17);
        let h = PredictionHeads::Joint { etr: 0.3, ctr: 1.0 };
        assert_eq!(h.p_etctr(), h.p_etr().unwrap());
    }

    #[test]
    fn single_head_has_no_t2() {
        let h = PredictionHeads::Single { p: 0.3 };
        assert_eq!(h.select(HeadSelector::T1).unwrap(), 0.3);
        assert!(h.select(HeadSelector::T2).is_err());
    }

    #[test]
    fn tower_etr_is_clamped() {
        let h = PredictionHeads::Towers {
            t: [0.7, 0.6, 0.1, 0.0],
            towers: 3,
        };
        let etr = h.p_etr().unwrap();
        assert!(etr < 1.0 && h.p_etctr() <= etr + crate::numerics::PROB_EPS);
    }
}
