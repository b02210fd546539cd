//! Hard-concrete stochastic gates and the input feature gate.
//!
//! A gate draws `m ~ U(0,1)` and computes
//!
//! ```text
//! s = σ((log m − log(1−m) + log α) / β)
//! s̄ = s·(ζ − γ) + γ
//! z = min(1, max(s̄, 0))
//! ```
//!
//! The stretch to `(γ, ζ) ⊃ [0, 1]` followed by clipping gives `z` point
//! masses at exactly 0 and 1, while remaining differentiable in `log α`
//! inside the open interval.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Tensor2D};

/// Shape hyper-parameters shared by a family of gates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HardConcrete {
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl Default for HardConcrete {
    fn default() -> Self {
        Self {
            beta: 0.7,
            gamma: -0.1,
            zeta: 1.1,
        }
    }
}

impl HardConcrete {
    pub fn new(beta: f64, gamma: f64, zeta: f64) -> Result<Self> {
        let hc = Self { beta, gamma, zeta };
        hc.validate()?;
        Ok(hc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma < 0.0 && self.zeta > 1.0) {
            return Err(Error::Config(format!(
                "hard-concrete needs gamma < 0 < 1 < zeta, got gamma={} zeta={}",
                self.gamma, self.zeta
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!(
                "hard-concrete beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// One learnable gate: `log α` plus its distribution shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HardConcreteGate {
    pub log_alpha: f64,
    pub shape: HardConcrete,
}

/// A single reparameterised draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSample {
    pub m: f64,
    pub s: f64,
    pub s_bar: f64,
    pub z: f64,
}

impl GateSample {
    /// True where `z` is not clipped, i.e. the draw carries gradient.
    pub fn is_interior(&self) -> bool {
        self.s_bar > 0.0 && self.s_bar < 1.0
    }
}

impl HardConcreteGate {
    pub fn new(log_alpha: f64, shape: HardConcrete) -> Self {
        Self { log_alpha, shape }
    }

    /// Draws the gate for a frozen uniform `m ∈ (0, 1)`.
    pub fn sample(&self, m: f64) -> Result<GateSample> {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::Domain(format!("gate noise m={m} outside (0, 1)")));
        }
        let HardConcrete { beta, gamma, zeta } = self.shape;
        let s = sigmoid((m.ln() - (1.0 - m).ln() + self.log_alpha) / beta);
        let s_bar = s * (zeta - gamma) + gamma;
        Ok(GateSample {
            m,
            s,
            s_bar,
            z: s_bar.clamp(0.0, 1.0),
        })
    }

    /// `∂z/∂log α` for a draw; zero where the clip is active.
    pub fn dz_dlog_alpha(&self, sample: &GateSample) -> f64 {
        if !sample.is_interior() {
            return 0.0;
        }
        let HardConcrete { beta, gamma, zeta } = self.shape;
        (zeta - gamma) * sample.s * (1.0 - sample.s) / beta
    }

    /// Probability that the gate is non-zero, `σ(log α − β·log(−γ/ζ))`.
    pub fn expected_l0(&self) -> f64 {
        sigmoid(self.log_alpha - self.l0_offset())
    }

    /// `∂ expected_l0 / ∂ log α`.
    pub fn expected_l0_grad(&self) -> f64 {
        let p = self.expected_l0();
        p * (1.0 - p)
    }

    fn l0_offset(&self) -> f64 {
        let HardConcrete { beta, gamma, zeta } = self.shape;
        beta * (-gamma / zeta).ln()
    }

    /// Noise-free inference gate `clip(σ(log α)·(ζ−γ) + γ)`.
    pub fn test_gate(&self) -> f64 {
        let HardConcrete { gamma, zeta, .. } = self.shape;
        (sigmoid(self.log_alpha) * (zeta - gamma) + gamma).clamp(0.0, 1.0)
    }

    pub fn test_gate_grad(&self) -> f64 {
        let HardConcrete { gamma, zeta, .. } = self.shape;
        let s = sigmoid(self.log_alpha);
        let v = s * (zeta - gamma) + gamma;
        if v > 0.0 && v < 1.0 {
            (zeta - gamma) * s * (1.0 - s)
        } else {
            0.0
        }
    }

    /// Analytic `P(z = 0)` and `P(z = 1)`.
    pub fn point_masses(&self) -> (f64, f64) {
        let HardConcrete { beta, gamma, zeta } = self.shape;
        // z = 0 ⇔ s ≤ −γ/(ζ−γ);  z = 1 ⇔ s ≥ (1−γ)/(ζ−γ)
        let lo = -gamma / (zeta - gamma);
        let hi = (1.0 - gamma) / (zeta - gamma);
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let p_zero = 1.0 - sigmoid(self.log_alpha - beta * logit(lo));
        let p_one = sigmoid(self.log_alpha - beta * logit(hi));
        (p_zero, p_one)
    }
}

/// `λ · Σ P(z ≠ 0)` over a set of gates.
pub fn l0_penalty(gates: &[HardConcreteGate], lambda: f64) -> f64 {
    lambda * gates.iter().map(HardConcreteGate::expected_l0).sum::<f64>()
}

/// Row-wise `E' = E ⊙ σ(Wgᵀ E)` for a batch of concatenated embeddings.
pub fn feature_gate(e: &Tensor2D, wg: &Tensor2D) -> Result<Tensor2D> {
    Ok(feature_gate_with_mask(e, wg)?.0)
}

/// Returns the gated batch and the sigmoid mask `σ(E·Wg)`.
pub fn feature_gate_with_mask(e: &Tensor2D, wg: &Tensor2D) -> Result<(Tensor2D, Tensor2D)> {
    if wg.rows() != e.cols() || wg.cols() != e.cols() {
        return Err(Error::Dimension {
            op: "feature_gate",
            left: e.shape(),
            right: wg.shape(),
        });
    }
    let mask = e.matmul(wg)?.map(sigmoid);
    let out = e.hadamard(&mask)?;
    Ok((out, mask))
}

/// Backward pass of [`feature_gate`]: accumulates `∂Wg` and returns `∂E`.
pub fn feature_gate_backward(
    e: &Tensor2D,
    wg: &Tensor2D,
    mask: &Tensor2D,
    d_out: &Tensor2D,
    grad_wg: &mut Tensor2D,
) -> Result<Tensor2D> {
    // out = e ⊙ σ(a), a = e·Wg
    let mut d_e = d_out.hadamard(mask)?;
    let mut d_a = d_out.hadamard(e)?;
    for (da, &m) in d_a.data_mut().iter_mut().zip(mask.data()) {
        *da *= m * (1.0 - m);
    }
    e.t_matmul_acc(&d_a, grad_wg)?;
    d_e.add_assign(&d_a.matmul_t(wg)?)?;
    Ok(d_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn reference_shape() -> HardConcrete {
        HardConcrete::new(0.5, -0.1, 1.1).unwrap()
    }

    #[test]
    fn midpoint_sample() {
        let g = HardConcreteGate::new(0.0, HardConcrete::new(0.9, -0.1, 1.1).unwrap());
        let s = g.sample(0.5).unwrap();
        assert_eq!(s.s, 0.5);
        assert!((s.s_bar - 0.5).abs() < 1e-15);
        assert!((s.z - 0.5).abs() < 1e-15);
    }

    #[test]
    fn upper_boundary_clamps_to_one() {
        let g = HardConcreteGate::new(-3.0, reference_shape());
        let s = g.sample(1.0 - 1e-15).unwrap();
        assert_eq!(s.z, 1.0);
        assert_eq!(g.dz_dlog_alpha(&s), 0.0);
    }

    #[test]
    fn sample_rejects_endpoints() {
        let g = HardConcreteGate::new(0.0, reference_shape());
        assert!(g.sample(0.0).is_err());
        assert!(g.sample(1.0).is_err());
        assert!(g.sample(f64::NAN).is_err());
    }

    #[test]
    fn expected_l0_limits_and_value() {
        let shape = reference_shape();
        assert!(HardConcreteGate::new(-60.0, shape).expected_l0() < 1e-20);
        assert!(HardConcreteGate::new(60.0, shape).expected_l0() > 1.0 - 1e-15);
        let p = HardConcreteGate::new(0.0, shape).expected_l0();
        assert!((p - 0.768_337_521).abs() < 1e-9, "{p}");
    }

    #[test]
    fn expected_l0_matches_point_mass() {
        let g = HardConcreteGate::new(0.7, reference_shape());
        let (p0, _) = g.point_masses();
        assert!((1.0 - p0 - g.expected_l0()).abs() < 1e-12);
    }

    #[test]
    fn test_gate_examples() {
        let shape = HardConcrete::new(0.7, -0.1, 1.1).unwrap();
        assert!((HardConcreteGate::new(0.0, shape).test_gate() - 0.5).abs() < 1e-15);
        assert_eq!(HardConcreteGate::new(-40.0, shape).test_gate(), 0.0);
        let z = HardConcreteGate::new(1.0, shape).test_gate();
        assert!((z - 0.777_270_3).abs() < 1e-7, "{z}");
        assert_eq!(HardConcreteGate::new(50.0, shape).test_gate(), 1.0);
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(HardConcrete::new(0.5, 0.1, 1.1).is_err());
        assert!(HardConcrete::new(0.5, -0.1, 0.9).is_err());
        assert!(HardConcrete::new(0.0, -0.1, 1.1).is_err());
        assert!(HardConcrete::new(1.5, -0.1, 1.1).is_err());
    }

    #[test]
    fn dz_matches_finite_difference_on_interior_draws() {
        let mut rng = RngStream::new(11, "gate-fd");
        let h = 1e-6;
        let mut checked = 0;
        for _ in 0..200 {
            let la = rng.uniform(-2.0, 2.0);
            let m = rng.uniform_open();
            let g = HardConcreteGate::new(la, reference_shape());
            let s = g.sample(m).unwrap();
            if !s.is_interior() {
                continue;
            }
            let up = HardConcreteGate::new(la + h, g.shape).sample(m).unwrap();
            let dn = HardConcreteGate::new(la - h, g.shape).sample(m).unwrap();
            if !up.is_interior() || !dn.is_interior() {
                continue;
            }
            let fd = (up.z - dn.z) / (2.0 * h);
            let rel = crate::numerics::relative_error(g.dz_dlog_alpha(&s), fd);
            assert!(rel < 1e-4, "rel {rel} at log_alpha={la}, m={m}");
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn expected_l0_monotone() {
        let shape = reference_shape();
        let mut prev = 0.0;
        for i in -20..=20 {
            let p = HardConcreteGate::new(i as f64 * 0.5, shape).expected_l0();
            assert!(p > prev);
            prev = p;
        }
        let mut prev = 0.0;
        for b in [0.5, 0.6, 0.7, 0.8, 0.9] {
            let p =
                HardConcreteGate::new(0.0, HardConcrete::new(b, -0.1, 1.1).unwrap()).expected_l0();
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn feature_gate_examples() {
        let e = Tensor2D::from_rows(&[&[1.0, -1.0]]).unwrap();
        let zero = Tensor2D::zeros(2, 2);
        assert_eq!(feature_gate(&e, &zero).unwrap().data(), &[0.5, -0.5]);
        let z = Tensor2D::zeros(1, 2);
        assert_eq!(
            feature_gate(&z, &Tensor2D::identity(2)).unwrap().data(),
            &[0.0, 0.0]
        );
        let out = feature_gate(&e, &Tensor2D::identity(2)).unwrap();
        assert!((out.get(0, 0) - 0.731_058_6).abs() < 1e-7);
        assert!((out.get(0, 1) + 0.268_941_4).abs() < 1e-7);
        assert!(feature_gate(&e, &Tensor2D::zeros(3, 3)).is_err());
    }
}
