use crate::error::Result;
use crate::numerics::{
    affine_backward, affine_forward, init, silu, silu_grad, ParameterSet, RngStream, Tensor2D,
};

/// Stack of affine layers with SiLU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    prefix: String,
    sizes: Vec<usize>,
    activate_last: bool,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Tensor2D>,
    pre: Vec<Tensor2D>,
}

impl Mlp {
    /// `sizes = [in, h1, …, out]`.
    pub fn new(prefix: impl Into<String>, sizes: &[usize], activate_last: bool) -> Self {
        assert!(sizes.len() >= 2);
        Self {
            prefix: prefix.into(),
            sizes: sizes.to_vec(),
            activate_last,
        }
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.w", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.b", self.prefix)
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.n_layers() || self.activate_last
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut RngStream) {
        for l in 0..self.n_layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            params.insert(self.weight_name(l), init::glorot_uniform(i, o, rng));
            params.insert(self.bias_name(l), Tensor2D::zeros(1, o));
        }
    }

    pub fn forward(&self, params: &ParameterSet, x: &Tensor2D) -> Result<(Tensor2D, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.n_layers()),
            pre: Vec::with_capacity(self.n_layers()),
        };
        let mut h = x.clone();
        for l in 0..self.n_layers() {
            let z = affine_forward(
                &h,
                params.get(&self.weight_name(l))?,
                params.get(&self.bias_name(l))?,
            )?;
            let next = if self.activated(l) {
                z.map(silu)
            } else {
                z.clone()
            };
            cache.inputs.push(h);
            cache.pre.push(z);
            h = next;
        }
        Ok((h, cache))
    }

    pub fn backward(
        &self,
        params: &ParameterSet,
        cache: &MlpCache,
        d_out: &Tensor2D,
        grads: &mut ParameterSet,
    ) -> Result<Tensor2D> {
        let mut d = d_out.clone();
        for l in (0..self.n_layers()).rev() {
            if self.activated(l) {
                for (g, &z) in d.data_mut().iter_mut().zip(cache.pre[l].data()) {
                    *g *= silu_grad(z);
                }
            }
            let w = params.get(&self.weight_name(l))?;
            let mut gw =
                std::mem::replace(grads.get_mut(&self.weight_name(l))?, Tensor2D::zeros(0, 0));
            let mut gb =
                std::mem::replace(grads.get_mut(&self.bias_name(l))?, Tensor2D::zeros(0, 0));
            let dx = affine_backward(&cache.inputs[l], w, &d, &mut gw, &mut gb);
            *grads.get_mut(&self.weight_name(l))? = gw;
            *grads.get_mut(&self.bias_name(l))? = gb;
            d = dx?;
        }
        Ok(d)
    }
}
