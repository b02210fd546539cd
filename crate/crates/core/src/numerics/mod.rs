//! Dense tensors, activations and losses, Adam, seeded streams and a
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
pub mod init;
mod ops;
mod params;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{
    finite_diff_check, relative_error, GradCheckOptions, GradCheckReport, Stencil,
};
pub use ops::{
    affine_backward, affine_forward, bce_grad, bce_loss, bce_with_logit, clamp_prob, sigmoid, silu,
    silu_grad, softmax, softmax_xent, softmax_xent_loss, PROB_EPS,
};
pub use params::ParameterSet;
pub use rng::RngStream;
pub use tensor::{pairwise_sum, CompensatedSum, Tensor2D};
