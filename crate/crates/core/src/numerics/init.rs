use super::rng::RngStream;
use super::tensor::Tensor2D;

/// Glorot-uniform weights in `±√(6/(in+out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor2D {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, limit, rng)
}

pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut RngStream) -> Tensor2D {
    let data = (0..rows * cols)
        .map(|_| rng.uniform(-limit, limit))
        .collect();
    Tensor2D::from_vec(rows, cols, data).expect("length matches by construction")
}
