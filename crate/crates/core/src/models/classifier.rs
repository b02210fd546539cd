use super::{all_fields, check_labels, Batch, Embeddings, Mlp, Model, ModelKind, PredictionHeads};
use crate::error::Result;
use crate::numerics::{
    bce_with_logit, sigmoid, softmax, softmax_xent, CompensatedSum, ParameterSet, RngStream,
    Tensor2D,
};
use crate::sim::FeatureSchema;

/// Hidden widths of the deep classifiers.
pub const HIDDEN: [usize; 3] = [128, 64, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierOutput {
    /// One logit, BCE against the click label.
    Sigmoid,
    /// Three logits, softmax cross-entropy against the domain tag.
    Softmax,
}

/// Embeddings followed by an MLP; backs the deep baselines and ECM.
#[derive(Clone, Debug)]
pub struct MlpClassifier {
    kind: ModelKind,
    output: ClassifierOutput,
    emb: Embeddings,
    mlp: Mlp,
}

impl MlpClassifier {
    pub fn new(kind: ModelKind, schema: &FeatureSchema, output: ClassifierOutput) -> Self {
        let emb = all_fields(schema);
        let out = match output {
            ClassifierOutput::Sigmoid => 1,
            ClassifierOutput::Softmax => 3,
        };
        let sizes = [emb.out_dim(), HIDDEN[0], HIDDEN[1], HIDDEN[2], out];
        Self {
            kind,
            output,
            emb,
            mlp: Mlp::new("mlp", &sizes, false),
        }
    }

    pub fn logits(&self, params: &ParameterSet, batch: &Batch) -> Result<Tensor2D> {
        let e = self.emb.forward(params, batch)?;
        Ok(self.mlp.forward(params, &e)?.0)
    }
}

impl Model for MlpClassifier {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn init_params(&self, rng: &mut RngStream) -> ParameterSet {
        let mut p = ParameterSet::new();
        self.emb.init(&mut p, rng);
        self.mlp.init(&mut p, rng);
        p
    }

    fn predict(&self, params: &ParameterSet, batch: &Batch) -> Result<Vec<PredictionHeads>> {
        let logits = self.logits(params, batch)?;
        Ok((0..batch.len)
            .map(|r| match self.output {
                ClassifierOutput::Sigmoid => PredictionHeads::Single {
                    p: sigmoid(logits.get(r, 0)),
                },
                ClassifierOutput::Softmax => {
                    let p = softmax(logits.row(r));
                    PredictionHeads::Softmax {
                        t: [p[0], p[1], p[2]],
                    }
                }
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
        let (logits, cache) = self.mlp.forward(params, &e)?;
        let n = batch.len as f64;
        let mut d = Tensor2D::zeros(logits.rows(), logits.cols());
        let mut total = CompensatedSum::default();
        for r in 0..batch.len {
            match self.output {
                ClassifierOutput::Sigmoid => {
                    let (l, g) = bce_with_logit(batch.y6[r], logits.get(r, 0));
                    total.add(l);
                    d.set(r, 0, g / n);
                }
                ClassifierOutput::Softmax => {
                    let (l, g) = softmax_xent(batch.tags[r].index(), logits.row(r))?;
                    total.add(l);
                    for (dst, gi) in d.row_mut(r).iter_mut().zip(g) {
                        *dst = gi / n;
                    }
                }
            }
        }
        if let Some(grads) = grads {
            let de = self.mlp.backward(params, &cache, &d, grads)?;
            self.emb.backward(batch, &de, grads)?;
        }
        Ok(total.value() / n)
    }
}
