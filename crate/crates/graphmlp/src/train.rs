//! Mini-batch training with Adam, the step-decay schedule and optional
//! flip augmentation.

use graphmlp_core::data::{augment_with_flips, PoseSample};
use graphmlp_core::graph::SkeletonTopology;
use graphmlp_core::metrics::{pose_loss, to_points, Point3};
use graphmlp_core::model::{GraphMlpModel, ModelConfig};
use graphmlp_core::optim::Adam;
use graphmlp_core::tensor::Tape;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainOptions;
use crate::error::{Error, Result};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sample loss (sum of joint distances, millimeters).
    pub train_loss: f64,
    pub train_mpjpe: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_mpjpe: Option<f64>,
}

pub struct TrainOutcome {
    pub model: GraphMlpModel,
    /// Parameters of the epoch with the lowest eval MPJPE, or train MPJPE
    /// when there is no eval set.
    pub best: GraphMlpModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Checks that every sample matches the model's frame and joint counts.
pub fn check_compatible(cfg: &ModelConfig, samples: &[PoseSample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.frames != cfg.frames || s.joints != cfg.joints {
            return Err(Error::Config(format!(
                "sample {i} ('{}') has T={}, N={}; model expects T={}, N={}",
                s.id, s.frames, s.joints, cfg.frames, cfg.joints
            )));
        }
    }
    Ok(())
}

pub fn train(
    model: GraphMlpModel,
    topo: &SkeletonTopology,
    opts: &TrainOptions,
    train_set: &[PoseSample],
    eval_set: Option<&[PoseSample]>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    opts.validate()?;
    if train_set.is_empty() {
        return Err(graphmlp_core::Error::Contract("training set is empty".into()).into());
    }
    check_compatible(model.config(), train_set)?;
    if let Some(e) = eval_set {
        check_compatible(model.config(), e)?;
    }

    let mut model = model;
    let joints = model.config().joints as f64;
    let mut adam = Adam::new(opts.adam, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut tape = Tape::new();
    let mut log = Vec::with_capacity(opts.epochs);
    let mut best: Option<(f64, usize, GraphMlpModel)> = None;

    for epoch in 0..opts.epochs {
        let lr = opts.schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(opts.batch_size) {
            let picked: Vec<PoseSample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let batch = if opts.augment_flip {
                augment_with_flips(&picked, topo)
            } else {
                picked
            };
            tape.reset();
            model.zero_grads();
            let vars = model.bind(&mut tape);
            let mut total = None;
            for s in &batch {
                let pred = model.forward_on(&mut tape, &vars, &s.input_tensor())?;
                let target = tape.constant(s.target_tensor());
                let l = pose_loss(&mut tape, pred, target)?;
                total = Some(match total {
                    Some(t) => tape.add(t, l)?,
                    None => l,
                });
            }
            let total = total.expect("chunks are non-empty");
            let value = tape.value(total).item();
            if !value.is_finite() {
                let at = tape.first_non_finite().expect("a non-finite node exists");
                return Err(Error::NonFinite { epoch, at });
            }
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            tape.backward(mean)?;
            model.accumulate_grads(&tape, &vars);
            adam.step(model.params_mut(), lr);
            loss_sum += value;
            seen += batch.len();
        }
        let train_loss = loss_sum / seen as f64;
        let eval_mpjpe = match eval_set {
            Some(e) if !e.is_empty() => Some(mean_mpjpe(&model, e)?),
            _ => None,
        };
        let entry = EpochLog {
            epoch,
            lr,
            train_loss,
            // Loss is the per-sample sum of joint errors.
            train_mpjpe: train_loss / joints,
            eval_mpjpe,
        };
        log::debug!("epoch {epoch}: {entry:?}");
        on_epoch(&entry);
        let score = eval_mpjpe.unwrap_or(entry.train_mpjpe);
        if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
            best = Some((score, epoch, model.clone()));
        }
        log.push(entry);
    }
    model.zero_grads();
    let (_, best_epoch, best) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        model,
        best,
        best_epoch,
        log,
    })
}

/// Predictions for every sample, in sample order. Work is split across
/// threads in contiguous chunks and merged in order.
pub fn predict(model: &GraphMlpModel, samples: &[PoseSample]) -> Result<Vec<Vec<Point3>>> {
    check_compatible(model.config(), samples)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(samples.len().max(1));
    let chunk = samples.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<Vec<Point3>>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| Ok(to_points(&model.forward(&s.input_tensor())?)?))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("prediction worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn mean_mpjpe(model: &GraphMlpModel, samples: &[PoseSample]) -> Result<f64> {
    let preds = predict(model, samples)?;
    let mut sum = 0.0;
    for (p, s) in preds.iter().zip(samples) {
        sum += graphmlp_core::metrics::mpjpe(p, &s.target_points())?;
    }
    Ok(sum / samples.len() as f64)
}
