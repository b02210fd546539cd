use super::{check_labels, Batch, Embeddings, Mlp, MlpCache, Model, ModelKind, PredictionHeads};
use crate::error::{Error, Result};
use crate::numerics::{bce_with_logit, sigmoid, CompensatedSum, ParameterSet, RngStream, Tensor2D};
use crate::sim::{FeatureSchema, FieldSide};

const TOWER: [usize; 2] = [64, 32];

/// Vector-product model: separate user and item towers joined by a dot product.
#[derive(Clone, Debug)]
pub struct TwoTower {
    user_emb: Embeddings,
    item_emb: Embeddings,
    user_tower: Mlp,
    item_tower: Mlp,
}

struct Forward {
    u: Tensor2D,
    v: Tensor2D,
    u_cache: MlpCache,
    v_cache: MlpCache,
}

impl TwoTower {
    pub fn new(schema: &FeatureSchema) -> Result<Self> {
        let side = |s: FieldSide| -> (Vec<usize>, Vec<usize>) {
            (0..schema.len())
                .filter(|&f| schema.sides[f] == s)
                .map(|f| (f, schema.cardinalities[f]))
                .unzip()
        };
        let (uf, uc) = side(FieldSide::User);
        let (vf, vc) = side(FieldSide::Item);
        if uf.is_empty() || vf.is_empty() {
            return Err(Error::Config(
                "two_tower needs at least one user field and one item field".into(),
            ));
        }
        let user_emb = Embeddings::new("user_emb", uf, uc);
        let item_emb = Embeddings::new("item_emb", vf, vc);
        let user_tower = Mlp::new(
            "user_tower",
            &[user_emb.out_dim(), TOWER[0], TOWER[1]],
            false,
        );
        let item_tower = Mlp::new(
            "item_tower",
            &[item_emb.out_dim(), TOWER[0], TOWER[1]],
            false,
        );
        Ok(Self {
            user_emb,
            item_emb,
            user_tower,
            item_tower,
        })
    }

    fn forward(&self, params: &ParameterSet, batch: &Batch) -> Result<Forward> {
        let (u, u_cache) = self
            .user_tower
            .forward(params, &self.user_emb.forward(params, batch)?)?;
        let (v, v_cache) = self
            .item_tower
            .forward(params, &self.item_emb.forward(params, batch)?)?;
        Ok(Forward {
            u,
            v,
            u_cache,
            v_cache,
        })
    }
}

/// Row-wise dot product.
pub(crate) fn dot_rows(u: &Tensor2D, v: &Tensor2D, r: usize) -> f64 {
    u.row(r).iter().zip(v.row(r)).map(|(a, b)| a * b).sum()
}

impl Model for TwoTower {
    fn kind(&self) -> ModelKind {
        ModelKind::TwoTower
    }

    fn init_params(&self, rng: &mut RngStream) -> ParameterSet {
        let mut p = ParameterSet::new();
        self.user_emb.init(&mut p, rng);
        self.item_emb.init(&mut p, rng);
        self.user_tower.init(&mut p, rng);
        self.item_tower.init(&mut p, rng);
        p
    }

    fn predict(&self, params: &ParameterSet, batch: &Batch) -> Result<Vec<PredictionHeads>> {
        let f = self.forward(params, batch)?;
        Ok((0..batch.len)
            .map(|r| PredictionHeads::Single {
                p: sigmoid(dot_rows(&f.u, &f.v, r)),
            })
            .collect())
    }

    fn loss(
        &self,
        params: &ParameterSet,
        batch: &Batch,
        _noise: &[f64],
        grads: Option<&mut ParameterSet>,
    ) -> Result<f64> {
        check_labels(batch)?;
        let f = self.forward(params, batch)?;
        let n = batch.len as f64;
        let mut du = Tensor2D::zeros(f.u.rows(), f.u.cols());
        let mut dv = Tensor2D::zeros(f.v.rows(), f.v.cols());
        let mut total = CompensatedSum::default();
        for r in 0..batch.len {
            let (l, g) = bce_with_logit(batch.y6[r], dot_rows(&f.u, &f.v, r));
            total.add(l);
            let g = g / n;
            for (d, &x) in du.row_mut(r).iter_mut().zip(f.v.row(r)) {
                *d = g * x;
            }
            for (d, &x) in dv.row_mut(r).iter_mut().zip(f.u.row(r)) {
                *d = g * x;
            }
        }
        if let Some(grads) = grads {
            let de = self.user_tower.backward(params, &f.u_cache, &du, grads)?;
            self.user_emb.backward(batch, &de, grads)?;
            let de = self.item_tower.backward(params, &f.v_cache, &dv, grads)?;
            self.item_emb.backward(batch, &de, grads)?;
        }
        Ok(total.value() / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{gradcheck, small_schema};

    #[test]
    fn gradients_match_finite_differences() {
        let m = TwoTower::new(&small_schema()).unwrap();
        let rep = gradcheck(&m, 5);
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn dot_product_examples() {
        let u = Tensor2D::from_rows(&[&[1.0, 2.0], &[1.0, 0.0], &[0.6, 0.8]]).unwrap();
        let v = Tensor2D::from_rows(&[&[3.0, 4.0], &[0.0, 1.0], &[0.6, 0.8]]).unwrap();
        assert_eq!(dot_rows(&u, &v, 0), 11.0);
        assert_eq!(sigmoid(dot_rows(&u, &v, 1)), 0.5);
        assert!((sigmoid(dot_rows(&u, &v, 2)) - sigmoid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn needs_both_sides() {
        let schema = small_schema().truncated(1);
        assert!(TwoTower::new(&schema).is_err());
    }
}
