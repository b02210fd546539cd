use std::time::{Duration, Instant};

use super::checkpoint::Checkpoint;
use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::models::{build_model, Batch, Model, TrainingDomain};
use crate::numerics::{adam_step, AdamState, CompensatedSum, RngStream};
use crate::sim::Dataset;

/// Result of a training run. `checkpoint` always holds the last finite parameters.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean minibatch loss per epoch of the step budget.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    /// Set when a non-finite loss or gradient stopped training early.
    pub aborted: Option<String>,
    /// Wall-clock time. Never written to any output file.
    pub elapsed: Duration,
}

impl TrainOutcome {
    pub fn seconds_per_epoch(&self) -> f64 {
        self.elapsed.as_secs_f64() / self.epoch_losses.len().max(1) as f64
    }
}

/// Records a model of `domain` may train on.
pub fn training_records(data: &Dataset, domain: TrainingDomain) -> Dataset {
    match domain {
        TrainingDomain::EntireChain => data.clone(),
        TrainingDomain::ExposureOnly => data.exposure_only(),
    }
}

/// Gradient steps per epoch, counted on the entire-chain set so both
/// training domains get the same number of updates.
pub fn steps_per_epoch(full_len: usize, batch_size: usize) -> usize {
    full_len.div_ceil(batch_size)
}

/// Endless stream of shuffled passes over `0..n`.
struct IndexStream {
    seed: u64,
    n: usize,
    pass: u64,
    order: Vec<usize>,
    pos: usize,
}

impl IndexStream {
    fn new(seed: u64, n: usize) -> Self {
        Self {
            seed,
            n,
            pass: 0,
            order: Vec::new(),
            pos: 0,
        }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order = (0..self.n).collect();
            RngStream::new(self.seed, format!("shuffle/{}", self.pass)).shuffle(&mut self.order);
            self.pass += 1;
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Minibatch Adam on the training split.
///
/// The caller passes the full (entire-chain) training split; the config's
/// domain decides which records are used.
pub fn train(config: &ExperimentConfig, data: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let model = build_model(&config.model, &config.schema())?;
    let mut init = RngStream::new(config.seed, "init");
    let params = model.init_params(&mut init);
    train_from(config, model.as_ref(), params, data)
}

fn train_from(
    config: &ExperimentConfig,
    model: &dyn Model,
    mut params: crate::numerics::ParameterSet,
    data: &Dataset,
) -> Result<TrainOutcome> {
    let start = Instant::now();
    let records = training_records(data, config.domain);
    let per_epoch = steps_per_epoch(data.len(), config.batch_size);
    let total = per_epoch * config.epochs;
    if total > 0 && records.is_empty() {
        return Err(Error::Domain(format!(
            "no {} records to train on",
            config.domain
        )));
    }
    let mut adam = AdamState::new(&params, config.learning_rate);
    let mut grads = params.zeros_like();
    let mut order = IndexStream::new(config.seed, records.len());
    let mut noise_rng = RngStream::new(config.seed, "gate_noise");
    let mut noise = vec![0.0; model.gate_count()];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut epoch_sum = CompensatedSum::default();
    let mut aborted = None;
    let mut steps = 0;

    'outer: for _ in 0..config.epochs {
        for _ in 0..per_epoch {
            let idx: Vec<usize> = (0..config.batch_size.min(records.len()))
                .map(|_| order.next())
                .collect();
            let batch = Batch::from_records(idx.iter().map(|&i| &records.records[i]));
            for m in noise.iter_mut() {
                *m = noise_rng.uniform_open();
            }
            grads.zero();
            let loss = match model.loss(&params, &batch, &noise, Some(&mut grads)) {
                Ok(l) if l.is_finite() => l,
                Ok(l) => {
                    aborted = Some(format!("loss became {l} at step {}", steps + 1));
                    break 'outer;
                }
                Err(e @ Error::NonFinite(_)) => {
                    aborted = Some(format!("{e} at step {}", steps + 1));
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            let before = params.clone();
            match adam_step(&mut params, &grads, &mut adam) {
                Ok(()) if params.is_finite() => {}
                Ok(()) => {
                    params = before;
                    aborted = Some(format!(
                        "parameters became non-finite at step {}",
                        steps + 1
                    ));
                    break 'outer;
                }
                Err(e @ Error::Training { .. }) => {
                    params = before;
                    aborted = Some(format!("{e} at step {}", steps + 1));
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
            epoch_sum.add(loss);
            steps += 1;
        }
        epoch_losses.push(epoch_sum.value() / per_epoch as f64);
        epoch_sum = CompensatedSum::default();
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            params,
        },
        epoch_losses,
        steps,
        aborted,
        elapsed: start.elapsed(),
    })
}
