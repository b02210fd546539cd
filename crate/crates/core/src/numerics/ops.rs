//! Scalar activations, losses and the affine layer.

use super::tensor::Tensor2D;
use crate::error::{Error, Result};

/// Probability clamp applied before every log.
pub const PROB_EPS: f64 = 1e-7;

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// SiLU activation `x·σ(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary cross-entropy on a clamped probability.
pub fn bce_loss(y: f64, yhat: f64) -> Result<f64> {
    check_prob(yhat)?;
    let p = clamp_prob(yhat);
    Ok(-y * p.ln() - (1.0 - y) * (1.0 - p).ln())
}

/// `∂bce/∂yhat`; zero where the clamp is active.
pub fn bce_grad(y: f64, yhat: f64) -> Result<f64> {
    check_prob(yhat)?;
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&yhat) {
        return Ok(0.0);
    }
    Ok(-y / yhat + (1.0 - y) / (1.0 - yhat))
}

/// Loss and gradient w.r.t. the logit for `bce(y, σ(logit))`.
pub fn bce_with_logit(y: f64, logit: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    let q = clamp_prob(p);
    let loss = -y * q.ln() - (1.0 - y) * (1.0 - q).ln();
    let grad = if q == p { p - y } else { 0.0 };
    (loss, grad)
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy `−log softmax(logits)[label]` and its logit gradient.
///
/// Evaluated in log-sum-exp form, so no probability is ever passed to `ln`.
pub fn softmax_xent(label: usize, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Domain(format!(
            "label index {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.into_iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

pub fn softmax_xent_loss(label: usize, logits: &[f64]) -> Result<f64> {
    softmax_xent(label, logits).map(|(l, _)| l)
}

/// `x·W + b`, with `b` broadcast over rows.
pub fn affine_forward(x: &Tensor2D, w: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if x.cols() != w.rows() {
        return Err(Error::Dimension {
            op: "affine_forward",
            left: x.shape(),
            right: w.shape(),
        });
    }
    if b.shape() != (1, w.cols()) {
        return Err(Error::Dimension {
            op: "affine_forward(bias)",
            left: w.shape(),
            right: b.shape(),
        });
    }
    let mut out = Tensor2D::zeros(x.rows(), w.cols());
    for r in 0..x.rows() {
        out.row_mut(r).copy_from_slice(b.data());
    }
    let prod = x.matmul(w)?;
    for (o, p) in out.data_mut().iter_mut().zip(prod.data()) {
        *o += p;
    }
    Ok(out)
}

/// Accumulates `∂W += xᵀ·dy`, `∂b += Σ_rows dy` and returns `∂x = dy·Wᵀ`.
pub fn affine_backward(
    x: &Tensor2D,
    w: &Tensor2D,
    d_out: &Tensor2D,
    grad_w: &mut Tensor2D,
    grad_b: &mut Tensor2D,
) -> Result<Tensor2D> {
    x.t_matmul_acc(d_out, grad_w)?;
    d_out.col_sum_acc(grad_b)?;
    d_out.matmul_t(w)
}
