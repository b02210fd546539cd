use super::classifier::HIDDEN;
use super::{all_fields, check_labels, Batch, Embeddings, Mlp, Model, ModelKind, PredictionHeads};
use crate::error::Result;
use crate::numerics::{
    bce_grad, bce_loss, bce_with_logit, sigmoid, CompensatedSum, ParameterSet, RngStream, Tensor2D,
};
use crate::sim::FeatureSchema;

/// Shared embeddings with an exposure tower and a click-given-exposure tower.
#[derive(Clone, Debug)]
pub struct Esmm {
    emb: Embeddings,
    etr: Mlp,
    ctr: Mlp,
}

impl Esmm {
    pub fn new(schema: &FeatureSchema) -> Self {
        let emb = all_fields(schema);
        let sizes = [emb.out_dim(), HIDDEN[0], HIDDEN[1], HIDDEN[2], 1];
        Self {
            etr: Mlp::new("etr", &sizes, false),
            ctr: Mlp::new("ctr", &sizes, false),
            emb,
        }
    }
}

impl Model for Esmm {
    fn kind(&self) -> ModelKind {
        ModelKind::Esmm
    }

    fn init_params(&self, rng: &mut RngStream) -> ParameterSet {
        let mut p = ParameterSet::new();
        self.emb.init(&mut p, rng);
        self.etr.init(&mut p, rng);
        self.ctr.init(&mut p, rng);
        p
    }

    fn predict(&self, params: &ParameterSet, batch: &Batch) -> Result<Vec<PredictionHeads>> {
        let e = self.emb.forward(params, batch)?;
        let a = self.etr.forward(params, &e)?.0;
        let c = self.ctr.forward(params, &e)?.0;
        Ok((0..batch.len)
            .map(|r| PredictionHeads::Joint {
                etr: sigmoid(a.get(r, 0)),
                ctr: sigmoid(c.get(r, 0)),
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
        let e = self.emb.forward(params, batch)?;
        let (a, a_cache) = self.etr.forward(params, &e)?;
        let (c, c_cache) = self.ctr.forward(params, &e)?;
        let n = batch.len as f64;
        let mut da = Tensor2D::zeros(batch.len, 1);
        let mut dc = Tensor2D::zeros(batch.len, 1);
        let mut total = CompensatedSum::default();
        for r in 0..batch.len {
            let (pe, pc) = (sigmoid(a.get(r, 0)), sigmoid(c.get(r, 0)));
            let (l_etr, g_etr) = bce_with_logit(batch.y5[r], a.get(r, 0));
            let joint = pe * pc;
            let l_joint = bce_loss(batch.y6[r], joint)?;
            let g_joint = bce_grad(batch.y6[r], joint)?;
            total.add(l_etr);
            total.add(l_joint);
            da.set(r, 0, (g_etr + g_joint * pc * pe * (1.0 - pe)) / n);
            dc.set(r, 0, g_joint * pe * pc * (1.0 - pc) / n);
        }
        if let Some(grads) = grads {
            let mut de = self.etr.backward(params, &a_cache, &da, grads)?;
            de.add_assign(&self.ctr.backward(params, &c_cache, &dc, grads)?)?;
            self.emb.backward(batch, &de, grads)?;
        }
        Ok(total.value() / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{batch16, gradcheck, small_schema};

    #[test]
    fn gradients_match_finite_differences() {
        let rep = gradcheck(&Esmm::new(&small_schema()), 7);
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn joint_identity_holds() {
        let m = Esmm::new(&small_schema());
        let p = m.init_params(&mut RngStream::new(2, "init"));
        for h in m.predict(&p, &batch16()).unwrap() {
            let diff = h.p_etctr() - h.p_etr().unwrap() * h.p_ctr().unwrap();
            assert_eq!(diff, 0.0);
        }
    }
}
