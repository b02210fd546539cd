use super::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::metrics::{
    auc, bias_gap, defined, gauc, mean_rcs_at_k, recall_at_k, AtK, MetricsReport, RankedList,
    RecallTarget, SampleCounts,
};
use crate::models::{Batch, HeadSelector, Model, PredictionHeads, TrainingDomain};
use crate::numerics::{bce_loss, ParameterSet, RngStream};
use crate::sim::{subsample_domains, Dataset, SamplingRates};

const PREDICT_CHUNK: usize = 2048;

/// Heads for every record, predicted in fixed-size chunks.
pub fn predict_all(
    model: &dyn Model,
    params: &ParameterSet,
    data: &Dataset,
) -> Result<Vec<PredictionHeads>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.records.chunks(PREDICT_CHUNK) {
        out.extend(model.predict(params, &Batch::from_records(chunk))?);
    }
    Ok(out)
}

/// Evaluation settings beyond the model itself.
#[derive(Clone, Debug)]
pub struct EvalSpec<'a> {
    pub head: HeadSelector,
    pub ks: &'a [usize],
    /// Training domain and rates defining the observed split for bias_gap.
    pub domain: TrainingDomain,
    pub rates: SamplingRates,
    /// Seed of the stream that subsamples the observed split.
    pub seed: u64,
}

impl<'a> EvalSpec<'a> {
    /// Settings implied by a checkpoint's own config.
    pub fn for_checkpoint(ckpt: &'a Checkpoint, head: HeadSelector) -> Self {
        Self {
            head,
            ks: &ckpt.config.eval_ks,
            domain: ckpt.config.domain,
            rates: ckpt.config.sim.cascade.rates,
            seed: ckpt.config.seed,
        }
    }
}

/// Observed split of `data`: each request subsampled at the training rates
/// and filtered to the training domain. Returns record indices and weights.
fn observed_split(data: &Dataset, spec: &EvalSpec) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for g in data.request_groups() {
        let rid = data.records[g.start].request_id;
        let mut rng = RngStream::new(spec.seed, format!("observed/{rid}"));
        let tagged: Vec<_> = g
            .clone()
            .map(|i| {
                let mut r = data.records[i].clone();
                r.request_id = i as u64;
                r
            })
            .collect();
        for r in subsample_domains(tagged, &spec.rates, &mut rng) {
            let keep = match spec.domain {
                TrainingDomain::EntireChain => true,
                TrainingDomain::ExposureOnly => r.deepest_stage >= 5,
            };
            if keep {
                out.push((r.request_id as usize, 1.0 / r.sample_rate_weight));
            }
        }
    }
    out
}

/// All metrics of one model on an evaluation split with its oracle.
pub fn evaluate(
    model: &dyn Model,
    params: &ParameterSet,
    data: &Dataset,
    oracle: &[f64],
    spec: &EvalSpec,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Domain("empty evaluation split".into()));
    }
    if oracle.len() != data.len() {
        return Err(Error::Dimension {
            op: "evaluate oracle",
            left: (data.len(), 1),
            right: (oracle.len(), 1),
        });
    }
    let heads = predict_all(model, params, data)?;
    let scores = heads
        .iter()
        .map(|h| h.select(spec.head))
        .collect::<Result<Vec<f64>>>()?;

    let exposed: Vec<usize> = (0..data.len())
        .filter(|&i| data.records[i].deepest_stage >= 5)
        .collect();
    let ex_scores: Vec<f64> = exposed.iter().map(|&i| scores[i]).collect();
    let ex_labels: Vec<bool> = exposed.iter().map(|&i| data.records[i].y6).collect();
    let ex_users: Vec<u32> = exposed.iter().map(|&i| data.records[i].user_id).collect();

    let mut lists = Vec::new();
    for g in data.request_groups() {
        let recs = &data.records[g.clone()];
        let items: Vec<u32> = recs.iter().map(|r| r.item_id).collect();
        let exp = recs.iter().filter(|r| r.y5).map(|r| r.item_id).collect();
        let clk = recs.iter().filter(|r| r.y6).map(|r| r.item_id).collect();
        lists.push(RankedList::new(
            recs[0].request_id,
            &items,
            &scores[g.clone()],
            &oracle[g],
            exp,
            clk,
        )?);
    }
    let at = |f: &dyn Fn(usize) -> Result<f64>| -> Result<Vec<AtK>> {
        spec.ks
            .iter()
            .map(|&k| {
                Ok(AtK {
                    k,
                    value: defined(f(k))?,
                })
            })
            .collect()
    };

    let click_loss = |i: usize| bce_loss(data.records[i].y6 as u8 as f64, heads[i].t1());
    let full = (0..data.len())
        .map(click_loss)
        .collect::<Result<Vec<f64>>>()?;
    let observed = observed_split(data, spec)
        .into_iter()
        .map(|(i, w)| Ok((full[i], w)))
        .collect::<Result<Vec<_>>>()?;
    let gap = if observed.is_empty() {
        None
    } else {
        Some(bias_gap(&observed, &full)?)
    };

    Ok(MetricsReport {
        model: model.kind().to_string(),
        domain: spec.domain.to_string(),
        head: spec.head.to_string(),
        auc: defined(auc(&ex_scores, &ex_labels))?,
        gauc: defined(gauc(&ex_scores, &ex_labels, &ex_users))?,
        recall_exposure: at(&|k| recall_at_k(&lists, k, RecallTarget::Exposure))?,
        recall_click: at(&|k| recall_at_k(&lists, k, RecallTarget::Click))?,
        rcs: at(&|k| mean_rcs_at_k(&lists, k))?,
        bias_gap: gap,
        counts: SampleCounts {
            requests: lists.len(),
            candidates: data.len(),
            exposures: exposed.len(),
            clicks: ex_labels.iter().filter(|&&c| c).count(),
        },
    })
}

/// Evaluates a checkpoint with the settings stored in its config.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    data: &Dataset,
    oracle: &[f64],
    head: HeadSelector,
    ks: Option<&[usize]>,
) -> Result<MetricsReport> {
    let model = ckpt.model()?;
    let mut spec = EvalSpec::for_checkpoint(ckpt, head);
    if let Some(ks) = ks {
        spec.ks = ks;
    }
    evaluate(model.as_ref(), &ckpt.params, data, oracle, &spec)
}
