use crate::error::Result;
use crate::gates::HardConcreteGate;
use crate::models::{build_model, Batch, ModelConfig, ModelKind};
use crate::numerics::{finite_diff_check, GradCheckOptions, GradCheckReport, RngStream};
use crate::sim::{generate, CascadeConfig, FeatureSchema, SimConfig, WorldConfig};

/// Records in the gradient-check batch.
pub const GRADCHECK_BATCH: usize = 16;

fn small_sim() -> SimConfig {
    SimConfig {
        world: WorldConfig {
            n_users: 40,
            n_items: 400,
            user_buckets: 16,
            item_buckets: 32,
            ..WorldConfig::default()
        },
        cascade: CascadeConfig {
            train_requests: 0,
            eval_requests: 2,
            ..CascadeConfig::default()
        },
    }
}

/// A batch of 16 records, half exposed and half not, from a small world.
pub fn gradcheck_batch(seed: u64) -> Result<Batch> {
    let out = generate(seed, &small_sim())?;
    let recs = &out.eval.records;
    let mut picked: Vec<_> = recs
        .iter()
        .filter(|r| r.y5)
        .take(GRADCHECK_BATCH / 2)
        .collect();
    picked.extend(
        recs.iter()
            .filter(|r| !r.y5)
            .take(GRADCHECK_BATCH - picked.len()),
    );
    Ok(Batch::from_records(picked))
}

/// Finite-difference check of `config`'s loss gradient at a seeded
/// initialisation, with gate noise drawn once and frozen. Draws whose
/// clip point lies within the difference stencil are redrawn.
pub fn gradcheck_model(
    config: &ModelConfig,
    seed: u64,
    max_coords_per_tensor: Option<usize>,
) -> Result<GradCheckReport> {
    let w = small_sim().world;
    let model = build_model(
        config,
        &FeatureSchema::standard(w.user_buckets, w.item_buckets),
    )?;
    let params = model.init_params(&mut RngStream::new(seed, "init"));
    let batch = gradcheck_batch(seed)?;
    let options = GradCheckOptions {
        max_coords_per_tensor,
        ..GradCheckOptions::model()
    };
    let mut rng = RngStream::new(seed, "gate_noise");
    let mut noise = Vec::with_capacity(model.gate_count());
    for gate in model.gates(&params)? {
        // the clip is a kink in log α; keep the stencil on one side of it
        let reach = 3.0 * options.step;
        loop {
            let m = rng.uniform_open();
            if same_clip_side(&gate, m, reach)? {
                noise.push(m);
                break;
            }
        }
    }
    let mut grads = params.zeros_like();
    model.loss(&params, &batch, &noise, Some(&mut grads))?;
    finite_diff_check(
        &params,
        &grads,
        |p| model.loss(p, &batch, &noise, None),
        &options,
    )
}

fn same_clip_side(gate: &HardConcreteGate, m: f64, reach: f64) -> Result<bool> {
    let side = |la: f64| -> Result<i8> {
        let s = HardConcreteGate::new(la, gate.shape).sample(m)?.s_bar;
        Ok(if s <= 0.0 {
            -1
        } else if s >= 1.0 {
            1
        } else {
            0
        })
    };
    let mid = side(gate.log_alpha)?;
    Ok(side(gate.log_alpha - reach)? == mid && side(gate.log_alpha + reach)? == mid)
}

/// Default model config of the given kind.
pub fn model_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        ..ModelConfig::default()
    }
}
