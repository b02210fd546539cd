use super::batch::Batch;
use crate::error::Result;
use crate::numerics::{init, ParameterSet, RngStream, Tensor2D};

/// Embedding width shared by every field.
pub const EMBED_DIM: usize = 8;
const INIT_SCALE: f64 = 0.2;

/// Per-field lookup tables over a subset of record fields.
///
/// Each table has `cardinality + 1` rows; the last row serves ids that fall
/// outside the vocabulary.
#[derive(Clone, Debug)]
pub struct Embeddings {
    prefix: String,
    fields: Vec<usize>,
    cardinalities: Vec<usize>,
}

impl Embeddings {
    pub fn new(prefix: impl Into<String>, fields: Vec<usize>, cardinalities: Vec<usize>) -> Self {
        assert_eq!(fields.len(), cardinalities.len());
        Self {
            prefix: prefix.into(),
            fields,
            cardinalities,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.fields.len() * EMBED_DIM
    }

    fn table_name(&self, k: usize) -> String {
        format!("{}.f{:02}", self.prefix, self.fields[k])
    }

    fn row(&self, k: usize, id: u32) -> usize {
        (id as usize).min(self.cardinalities[k])
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut RngStream) {
        for k in 0..self.fields.len() {
            let t = init::uniform(self.cardinalities[k] + 1, EMBED_DIM, INIT_SCALE, rng);
            params.insert(self.table_name(k), t);
        }
    }

    /// Concatenated embeddings, `batch × out_dim`.
    pub fn forward(&self, params: &ParameterSet, batch: &Batch) -> Result<Tensor2D> {
        let mut out = Tensor2D::zeros(batch.len, self.out_dim());
        for (k, &field) in self.fields.iter().enumerate() {
            let table = params.get(&self.table_name(k))?;
            for r in 0..batch.len {
                let src = table.row(self.row(k, batch.feature(r, field)));
                out.row_mut(r)[k * EMBED_DIM..(k + 1) * EMBED_DIM].copy_from_slice(src);
            }
        }
        Ok(out)
    }

    pub fn backward(
        &self,
        batch: &Batch,
        d_out: &Tensor2D,
        grads: &mut ParameterSet,
    ) -> Result<()> {
        for (k, &field) in self.fields.iter().enumerate() {
            let table = grads.get_mut(&self.table_name(k))?;
            for r in 0..batch.len {
                let row = self.row(k, batch.feature(r, field));
                let src = &d_out.row(r)[k * EMBED_DIM..(k + 1) * EMBED_DIM];
                for (g, d) in table.row_mut(row).iter_mut().zip(src) {
                    *g += d;
                }
            }
        }
        Ok(())
    }
}
