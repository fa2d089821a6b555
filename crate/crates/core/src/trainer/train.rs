use std::time::Instant;

use crate::codec::{encode, rank, DecodeMode, ItemScores, ProbabilityVector, ScoreOrdering, SparseInstance};
use crate::error::{Error, Result};
use crate::hashing::Projector;
use crate::metrics::{average_precision_at, EvaluationResult, Measure};
use crate::rng;

use super::{accumulate_batch, Input, Network, Optimizer, OptimizerSpec, Real};

/// A training pair in network coordinates: active input bits and active
/// target bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub input: Vec<u32>,
    pub target: Vec<u32>,
}

fn active_bits(instance: &SparseInstance, h: Option<&dyn Projector>) -> Result<Vec<u32>> {
    match h {
        Some(h) => Ok(encode(instance, h)?.ones().map(|r| r as u32).collect()),
        None => Ok(instance.positions().to_vec()),
    }
}

/// Encodes `(input, output)` instance pairs. `None` leaves that side in the
/// original `d`-dimensional space.
pub fn encode_examples(
    pairs: &[(SparseInstance, SparseInstance)],
    h_in: Option<&dyn Projector>,
    h_out: Option<&dyn Projector>,
) -> Result<Vec<Example>> {
    pairs
        .iter()
        .map(|(x, y)| {
            Ok(Example {
                input: active_bits(x, h_in)?,
                target: active_bits(y, h_out)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 128,
            shuffle_seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    /// Mean batch loss of every epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of every optimisation step, in order.
    pub step_losses: Vec<f64>,
    /// Wall-clock seconds of every epoch (optimisation loop only).
    pub epoch_seconds: Vec<f64>,
    pub evaluation: Option<EvaluationResult>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epoch_seconds.is_empty() {
            0.0
        } else {
            self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len() as f64
        }
    }
}

/// Mini-batch training over pre-encoded examples. The example order is
/// reshuffled every epoch from a single stream seeded by `shuffle_seed`.
pub fn train_examples<T: Real>(
    net: &mut Network<T>,
    examples: &[Example],
    optimizer: OptimizerSpec,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if config.epochs > 0 && examples.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    for ex in examples {
        if let Some(&b) = ex.target.iter().find(|&&b| b as usize >= net.output_dim()) {
            return Err(Error::OutOfRange {
                what: "target bit",
                value: b as usize,
                low: 0,
                high: net.output_dim() - 1,
            });
        }
    }
    let mut opt = Optimizer::new(optimizer, net)?;
    let mut r = rng::seeded(config.shuffle_seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grads = net.zeros_like();
    let mut scratch = net.scratch();
    let mut batch: Vec<(Input<'_, T>, &[u32])> = Vec::with_capacity(config.batch_size);
    let mut report = TrainReport {
        epochs: config.epochs,
        ..TrainReport::default()
    };

    for _ in 0..config.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng::below(&mut r, i as u32 + 1) as usize);
        }
        let start = Instant::now();
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(
                chunk
                    .iter()
                    .map(|&i| (Input::Active(&examples[i].input[..]), &examples[i].target[..])),
            );
            grads.for_each_parameter_mut(|g| *g = T::zero());
            let loss = accumulate_batch(net, &batch, &mut scratch, &mut grads)?;
            opt.step(net, &grads)?;
            let loss = loss.to_f64().unwrap();
            report.step_losses.push(loss);
            epoch_loss += loss;
            steps += 1;
        }
        report.epoch_seconds.push(start.elapsed().as_secs_f64());
        report.epoch_losses.push(epoch_loss / steps as f64);
        log::debug!(
            "epoch {}: loss {:.6} ({:.3}s)",
            report.epoch_losses.len(),
            report.epoch_losses.last().unwrap(),
            report.epoch_seconds.last().unwrap()
        );
    }
    Ok(report)
}

/// Encodes `pairs` with the given projections and trains on them.
pub fn train<T: Real>(
    net: &mut Network<T>,
    pairs: &[(SparseInstance, SparseInstance)],
    h_in: Option<&dyn Projector>,
    h_out: Option<&dyn Projector>,
    optimizer: OptimizerSpec,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if let Some(h) = h_in {
        if h.embed_dim() != net.input_dim() {
            return Err(Error::mismatch(
                "input embedding vs network input",
                net.input_dim(),
                h.embed_dim(),
            ));
        }
    }
    if let Some(h) = h_out {
        if h.embed_dim() != net.output_dim() {
            return Err(Error::mismatch(
                "output embedding vs network output",
                net.output_dim(),
                h.embed_dim(),
            ));
        }
    }
    let examples = encode_examples(pairs, h_in, h_out)?;
    train_examples(net, &examples, optimizer, config)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub measure: Measure,
    pub decode: DecodeMode,
    /// Truncate rankings for MAP.
    pub cutoff: Option<usize>,
    /// Rank the items already present in the input last.
    pub exclude_inputs: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            measure: Measure::Map,
            decode: DecodeMode::Likelihood,
            cutoff: None,
            exclude_inputs: true,
        }
    }
}

/// Scores the network on `(input, output)` pairs in the original item space.
///
/// Without `h_out` the network output is read directly as item scores;
/// otherwise it is decoded through `h_out`. The reported wall time covers
/// encoding, the forward pass, decoding and ranking.
pub fn evaluate<T: Real>(
    net: &Network<T>,
    pairs: &[(SparseInstance, SparseInstance)],
    h_in: Option<&dyn Projector>,
    h_out: Option<&dyn Projector>,
    config: &EvalConfig,
) -> Result<EvaluationResult> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let start = Instant::now();
    let mut scratch = net.scratch();
    let mut total = 0.0;
    for (x, y) in pairs {
        if y.is_empty() {
            return Err(Error::Empty("evaluation target".into()));
        }
        let bits = active_bits(x, h_in)?;
        net.forward_into(Input::Active(&bits), &mut scratch)?;
        let probs: Vec<f64> = scratch
            .acts
            .last()
            .unwrap()
            .iter()
            .map(|p| p.to_f64().unwrap().clamp(0.0, 1.0))
            .collect();
        let mut scores = match h_out {
            Some(h) => config.decode.decode(&ProbabilityVector::new(probs)?, h)?,
            None => ItemScores::new(probs, ScoreOrdering::Descending)?,
        };
        if scores.d() != y.d() {
            return Err(Error::mismatch("scored items", y.d(), scores.d()));
        }
        if config.exclude_inputs {
            scores.suppress(x.positions());
        }
        let depth = match (config.measure, config.cutoff) {
            (Measure::Map, Some(c)) => c.clamp(1, scores.d()),
            _ => scores.d(),
        };
        let ranked = rank(&scores, depth)?;
        let relevant: Vec<usize> = y.positions().iter().map(|&p| p as usize).collect();
        total += match config.measure {
            Measure::Map => average_precision_at(&ranked, &relevant, config.cutoff)?,
            Measure::Rr => ranked
                .iter()
                .position(|i| y.contains(*i))
                .map_or(0.0, |pos| 1.0 / (pos + 1) as f64),
            Measure::Acc => {
                if y.contains(ranked[0]) {
                    100.0
                } else {
                    0.0
                }
            }
        };
    }
    Ok(EvaluationResult {
        score: total / pairs.len() as f64,
        measure: config.measure,
        n_evaluated: pairs.len(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}
