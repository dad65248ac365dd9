use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, Split};
use crate::embeddings::{build_frequency_table, EmbeddingStore, FrequencyTable};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::evaluate_prepared;
use crate::reranker::{prepare_instances, ModelParams, PreparedInstance, PreparedWindow};

use super::objective::raw_total;
use super::{adam_step, gradients, AdamState, Checkpoint, RngState, TrainConfig};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Window-weighted mean of the batch losses.
    pub train_loss: f64,
    pub dev_p_at_1: Option<f64>,
    pub dev_map: Option<f64>,
    pub dev_mrr: Option<f64>,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State after the last epoch.
    pub checkpoint: Checkpoint,
    /// Epoch with the highest dev MAP (earliest on ties); `None` without dev data.
    pub best: Option<Checkpoint>,
    pub log: Vec<EpochLog>,
}

/// Train on `train`, evaluating on `dev` after every epoch.
///
/// All windows are aligned before the first epoch, so missing embeddings
/// fail fast.
pub fn train(
    train: &Corpus,
    dev: Option<&Corpus>,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(d) = dev {
        if d.split == Split::Train {
            return Err(Error::WrongSplit {
                expected: "dev or test",
                found: d.split.as_str(),
            });
        }
    }
    let freq = build_frequency_table(train)?;
    let train_prep = prepare_instances(&train.instances, store, &freq, &cfg.sinkhorn, exec)?;
    let dev_prep = match dev {
        Some(d) => Some(prepare_instances(
            &d.instances,
            store,
            &freq,
            &cfg.sinkhorn,
            exec,
        )?),
        None => None,
    };
    train_prepared(
        &train_prep,
        dev_prep.as_deref(),
        store.dim(),
        freq,
        cfg,
        exec,
    )
}

/// Training loop over already aligned windows.
pub fn train_prepared(
    train: &[PreparedInstance],
    dev: Option<&[PreparedInstance]>,
    dim: usize,
    freq: FrequencyTable,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let windows: Vec<&PreparedWindow> = train.iter().flat_map(|i| &i.windows).collect();
    if windows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(w) = windows
        .iter()
        .find(|w| w.input.reps.iter().any(|r| r.len() != dim))
    {
        return Err(Error::ShapeMismatch(format!(
            "window {:?} has representations of the wrong width (model dim {dim})",
            w.window_id
        )));
    }
    let shape = cfg.shape(dim);
    shape.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(shape, &mut rng);
    let mut adam = AdamState::new(&params);
    let adam_cfg = cfg.adam();
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;
    let snapshot =
        |params: &ModelParams, adam: &AdamState, rng: &ChaCha8Rng, epoch: usize| Checkpoint {
            params: params.clone(),
            config: cfg.clone(),
            epoch: epoch as u64,
            adam: adam.clone(),
            rng: RngState::capture(rng),
            freq: freq.clone(),
        };

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreparedWindow> = chunk.iter().map(|&i| windows[i]).collect();
            let (loss, grads) = match gradients(&batch, &params, cfg.gamma, exec) {
                Ok(r) => r,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        loss: raw_total(&batch, &params, cfg.gamma),
                    })
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss.total * batch.len() as f64;
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
        }
        let train_loss = loss_sum / windows.len() as f64;

        let report = match dev {
            Some(d) => Some(evaluate_prepared(d, &params, exec)?.report),
            None => None,
        };
        let entry = EpochLog {
            epoch,
            train_loss,
            dev_p_at_1: report.as_ref().map(|r| r.p_at_1),
            dev_map: report.as_ref().map(|r| r.map),
            dev_mrr: report.as_ref().map(|r| r.mrr),
            wallclock_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.6}{}",
            report
                .as_ref()
                .map(|r| format!(
                    ", dev P@1 {:.4} MAP {:.4} MRR {:.4}",
                    r.p_at_1, r.map, r.mrr
                ))
                .unwrap_or_default()
        );
        log.push(entry);
        if let Some(r) = &report {
            if best.as_ref().is_none_or(|(m, _)| r.map > *m) {
                best = Some((r.map, snapshot(&params, &adam, &rng, epoch)));
            }
        }
    }

    Ok(TrainOutcome {
        checkpoint: snapshot(&params, &adam, &rng, cfg.epochs),
        best: best.map(|(_, c)| c),
        log,
    })
}
