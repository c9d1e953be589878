use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::forward::{graph_loss_grad, mpn_backward, mpn_forward};
use super::{Aggregation, MessageSource, ModelParams};
use crate::error::{Error, Result};
use crate::featurize::{Calibrations, DescriptorStore};
use crate::graph::FrameGraph;
use crate::numeric::optim::sgd_step;
use crate::numeric::schedule::TrainSchedule;

/// Default cap on the batch gradient norm.
pub const DEFAULT_GRAD_CLIP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: TrainSchedule,
    /// Seeds weight init and then every epoch shuffle, from one generator.
    pub seed: u64,
    pub steps: usize,
    pub message_source: MessageSource,
    pub aggregation: Aggregation,
    /// Batch gradients with a larger Euclidean norm are rescaled to this
    /// norm before the update. `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Scale of the positive BCE term; 1 is the plain loss.
    pub positive_weight: f64,
    /// Worker threads for per-graph passes; 0 picks automatically.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: TrainSchedule::default(),
            seed: 0,
            steps: 4,
            message_source: MessageSource::SelfState,
            aggregation: Aggregation::default(),
            grad_clip: Some(DEFAULT_GRAD_CLIP),
            positive_weight: 1.0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-graph loss over the epoch, measured before each update.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochLog>,
}

struct Sample<'a> {
    graph: &'a FrameGraph,
    labels: Vec<bool>,
}

/// Initializes a model from `config.seed` and trains it on labelled frames.
pub fn train(frames: &[FrameGraph], store: &DescriptorStore, calibs: &Calibrations, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = ModelParams::init(store.dim(), config.steps, config.message_source, &mut rng)?.with_aggregation(config.aggregation);
    run(params, frames, store, calibs, config, &mut rng)
}

/// Trains existing parameters; shuffling is seeded from `config.seed`.
pub fn train_from(
    params: ModelParams,
    frames: &[FrameGraph],
    store: &DescriptorStore,
    calibs: &Calibrations,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run(params, frames, store, calibs, config, &mut rng)
}

fn run(
    mut params: ModelParams,
    frames: &[FrameGraph],
    store: &DescriptorStore,
    calibs: &Calibrations,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    config.schedule.validate()?;
    params.validate()?;
    if !(config.positive_weight.is_finite() && config.positive_weight > 0.0) {
        return Err(Error::Config(format!("positive_weight must be > 0, got {}", config.positive_weight)));
    }
    if let Some(c) = config.grad_clip {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("grad_clip must be > 0, got {c}")));
        }
    }
    let samples = frames
        .iter()
        .filter(|g| g.num_edges() > 0)
        .map(|g| Ok(Sample { graph: g, labels: g.edge_labels()? }))
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(Error::Data("training set has no frame with a cross-camera edge".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let schedule = &config.schedule;
    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(schedule.total_epochs);

    for epoch in 0..schedule.total_epochs {
        let lr = schedule.lr_at_epoch(epoch)?;
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(schedule.batch_size).enumerate() {
            let results: Vec<Result<(f64, ModelParams)>> = if config.threads == 1 {
                batch.iter().map(|&k| sample_grad(&samples[k], &params, store, calibs, config)).collect()
            } else {
                pool.install(|| {
                    batch
                        .par_iter()
                        .map(|&k| sample_grad(&samples[k], &params, store, calibs, config))
                        .collect()
                })
            };
            // Reduce in batch order so results do not depend on thread count.
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, g) = r?;
                batch_loss += loss;
                grads.add_assign(&g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}, batch {batch_idx}")));
            }
            epoch_loss += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            if let Some(limit) = config.grad_clip {
                let norm = grads.l2_norm();
                if norm > limit {
                    grads.scale(limit / norm);
                }
            }
            let momentum = schedule.momentum;
            for (((name, p), (_, g)), (_, v)) in params.networks_mut().zip(grads.networks()).zip(velocity.networks_mut()) {
                sgd_step(name, p, g, lr, momentum, v)
                    .map_err(|e| Error::Training(format!("epoch {epoch}, batch {batch_idx}: {e}")))?;
            }
        }
        history.push(EpochLog {
            epoch,
            lr,
            mean_loss: epoch_loss / samples.len() as f64,
        });
    }
    Ok(TrainOutcome { params, history })
}

fn sample_grad(
    sample: &Sample<'_>,
    params: &ModelParams,
    store: &DescriptorStore,
    calibs: &Calibrations,
    config: &TrainConfig,
) -> Result<(f64, ModelParams)> {
    let (preds, trace) = mpn_forward(sample.graph, params, store, calibs)?;
    let (loss, dlogit) = graph_loss_grad(&preds, &sample.labels, config.positive_weight)?;
    let mut grads = params.zeros_like();
    mpn_backward(sample.graph, params, &trace, &dlogit, &mut grads)?;
    Ok((loss, grads))
}
