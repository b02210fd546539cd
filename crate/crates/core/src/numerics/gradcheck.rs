use super::params::ParameterSet;
use crate::error::{Error, Result};

/// Finite-difference formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`.
    Central,
    /// `(8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h`; fourth-order
    /// truncation error, which permits a larger step and so a lower
    /// round-off floor.
    Central4,
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub stencil: Stencil,
    /// Check at most this many coordinates per tensor (evenly strided); `None` checks all.
    pub max_coords_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            stencil: Stencil::Central,
            max_coords_per_tensor: None,
        }
    }
}

impl GradCheckOptions {
    /// Settings used for whole-model checks: the loss itself is only exact
    /// to about 1e-16, so small gradients need a larger step.
    pub fn model() -> Self {
        Self {
            step: 1e-3,
            stencil: Stencil::Central4,
            max_coords_per_tensor: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss_fn`.
///
/// `loss_fn` must be deterministic: any stochastic gate noise has to be frozen
/// by the caller.
pub fn finite_diff_check<F>(
    params: &ParameterSet,
    analytic: &ParameterSet,
    mut loss_fn: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterSet) -> Result<f64>,
{
    params.check_aligned(analytic)?;
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let len = params.get(&name)?.len();
        let stride = match opts.max_coords_per_tensor {
            Some(k) if k > 0 && len > k => len.div_ceil(k),
            _ => 1,
        };
        let grad = analytic.get(&name)?;
        for idx in (0..len).step_by(stride) {
            let orig = params.get(&name)?.data()[idx];
            let mut eval = |offset: f64| -> Result<f64> {
                work.get_mut(&name)?.data_mut()[idx] = orig + offset;
                let v = loss_fn(&work)?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{name}[{idx}]")));
                }
                Ok(v)
            };
            let h = opts.step;
            let numeric = match opts.stencil {
                Stencil::Central => (eval(h)? - eval(-h)?) / (2.0 * h),
                Stencil::Central4 => {
                    let d1 = eval(h)? - eval(-h)?;
                    let d2 = eval(2.0 * h)? - eval(-2.0 * h)?;
                    (8.0 * d1 - d2) / (12.0 * h)
                }
            };
            work.get_mut(&name)?.data_mut()[idx] = orig;
            let a = grad.data()[idx];
            let rel = relative_error(a, numeric);
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
