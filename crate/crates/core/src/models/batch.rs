use crate::sim::{CascadeSample, DomainTag};

/// Column-major view of a minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub len: usize,
    pub n_fields: usize,
    /// `len × n_fields` feature ids, row-major.
    pub features: Vec<u32>,
    pub y5: Vec<f64>,
    pub y6: Vec<f64>,
    pub tags: Vec<DomainTag>,
    pub stages: Vec<u8>,
}

impl Batch {
    pub fn from_records<'a, I>(records: I) -> Batch
    where
        I: IntoIterator<Item = &'a CascadeSample>,
    {
        let mut b = Batch {
            len: 0,
            n_fields: 0,
            features: Vec::new(),
            y5: Vec::new(),
            y6: Vec::new(),
            tags: Vec::new(),
            stages: Vec::new(),
        };
        for r in records {
            if b.len == 0 {
                b.n_fields = r.features.len();
            }
            debug_assert_eq!(r.features.len(), b.n_fields);
            b.features.extend_from_slice(&r.features);
            b.y5.push(r.y5 as u8 as f64);
            b.y6.push(r.y6 as u8 as f64);
            b.tags.push(r.domain_tag);
            b.stages.push(r.deepest_stage);
            b.len += 1;
        }
        b
    }

    pub fn feature(&self, row: usize, field: usize) -> u32 {
        self.features[row * self.n_fields + field]
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}
