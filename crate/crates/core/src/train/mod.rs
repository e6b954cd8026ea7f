//! Metric learning for the fusion network: triplet mining, margin loss,
//! Adam, and the epoch loop.
//!
//! Descriptors used for mining are recomputed once at the start of every
//! epoch. Queries without a usable triplet are skipped and do not count
//! towards the epoch mean.

mod adam;
mod mining;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{lr_schedule, Adam, BETA1, BETA2, EPSILON};
pub use mining::{mine_triplet, triplet_loss, Mined, MiningConfig, SkipReason, TripletBatch};

use crate::cloud::FrameMeta;
use crate::engine::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::net::{forward, Descriptor, FusionNet};
use crate::seed::{rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Initial learning rate; divided by 10 every 10 epochs.
    pub lr: f64,
    /// Triplets per optimizer step.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-5,
            batch_size: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("lr must be positive and batch_size >= 1".into()));
        }
        Ok(())
    }
}

/// One encoded training frame.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub meta: FrameMeta,
    pub riv: Tensor,
    pub bev: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// `None` when every query was skipped.
    pub mean_loss: Option<f64>,
    pub lr: f64,
    pub batches_used: usize,
    pub batches_skipped: usize,
}

/// Loss log as CSV, preceded by a `# config_hash=` comment line.
pub fn loss_log_csv(logs: &[EpochLog], config_hash: u64) -> String {
    let mut s = format!("# config_hash={config_hash:016x}\nepoch,mean_loss,lr,batches_used,batches_skipped\n");
    for l in logs {
        let loss = l.mean_loss.map(|v| format!("{v:.12}")).unwrap_or_default();
        writeln!(s, "{},{},{:e},{},{}", l.epoch, loss, l.lr, l.batches_used, l.batches_skipped).unwrap();
    }
    s
}

pub fn describe_all(net: &FusionNet, samples: &[TrainSample]) -> Result<Vec<Descriptor>> {
    samples.iter().map(|s| net.describe_tensors(&s.riv, &s.bev)).collect()
}

/// Forward + backward + Adam on one group of triplets. Returns each
/// triplet's loss before the update.
pub fn train_step(
    net: &mut FusionNet,
    adam: &mut Adam,
    samples: &[TrainSample],
    triplets: &[TripletBatch],
    margin: f64,
    lr: f64,
) -> Result<Vec<f64>> {
    if triplets.is_empty() {
        return Err(Error::Empty("triplets"));
    }
    let mut tape = Tape::new();
    let params = net.weights().register(&mut tape, true);
    let mut outputs: BTreeMap<usize, Var> = BTreeMap::new();
    let mut embed = |tape: &mut Tape, i: usize| -> Result<Var> {
        if let Some(v) = outputs.get(&i) {
            return Ok(*v);
        }
        let v = forward(tape, &params, net.config(), &samples[i].riv, &samples[i].bev)?;
        outputs.insert(i, v);
        Ok(v)
    };

    let mut losses = Vec::with_capacity(triplets.len());
    let mut total: Option<Var> = None;
    for t in triplets {
        let q = embed(&mut tape, t.query)?;
        let p = embed(&mut tape, t.positive)?;
        let d_pos = tape.distance(q, p)?;
        let mut acc: Option<Var> = None;
        for &n in &t.negatives {
            let nv = embed(&mut tape, n)?;
            let d_neg = tape.distance(q, nv)?;
            let diff = tape.sub(d_pos, d_neg)?;
            let shifted = tape.add_scalar(diff, margin);
            let hinge = tape.relu(shifted);
            acc = Some(match acc {
                Some(a) => tape.add(a, hinge)?,
                None => hinge,
            });
        }
        let acc = acc.ok_or(Error::Empty("negatives"))?;
        let loss = tape.scale(acc, 1.0 / t.negatives.len() as f64);
        losses.push(tape.value(loss).item()?);
        total = Some(match total {
            Some(a) => tape.add(a, loss)?,
            None => loss,
        });
    }
    let total = tape.scale(total.expect("non-empty"), 1.0 / triplets.len() as f64);
    let mut grads = tape.backward(total)?;
    let mut named = BTreeMap::new();
    for (name, var) in params.iter() {
        let g = grads
            .take(*var)
            .unwrap_or_else(|| Tensor::zeros(tape.value(*var).shape()));
        named.insert(name.clone(), g);
    }
    adam.step(net.weights_mut(), &named, lr)?;
    Ok(losses)
}

/// Runs `cfg.epochs` epochs, calling `on_epoch` after each.
///
/// Fails if the first epoch yields no usable triplet.
pub fn train(
    net: &mut FusionNet,
    samples: &[TrainSample],
    mining: &MiningConfig,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog, &FusionNet),
) -> Result<Vec<EpochLog>> {
    mining.validate()?;
    cfg.validate()?;
    let frames: Vec<FrameMeta> = samples.iter().map(|s| s.meta.clone()).collect();
    let mut adam = Adam::new();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.lr);
        let descriptors = describe_all(net, samples)?;
        let mut r = rng(seed, Stream::Mining, epoch as u64);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut r);

        let mut triplets = Vec::new();
        let mut skipped: BTreeMap<&'static str, usize> = BTreeMap::new();
        for &i in &order {
            match mine_triplet(i, &frames, &descriptors, mining, &mut r)? {
                Mined::Triplet(t) => triplets.push(t),
                Mined::Skip(reason) => {
                    let key = match reason {
                        SkipReason::NoPositive => "no positive",
                        SkipReason::NoNegativeCandidates => "no negative candidates",
                        SkipReason::NegativesSatisfied => "all negatives beyond margin",
                    };
                    *skipped.entry(key).or_default() += 1;
                }
            }
        }
        if epoch == 0 && triplets.is_empty() {
            return Err(Error::Dataset(format!(
                "no valid triplet among {} frames (skips: {skipped:?})",
                samples.len()
            )));
        }

        let mut losses = Vec::with_capacity(triplets.len());
        for group in triplets.chunks(cfg.batch_size) {
            losses.extend(train_step(net, &mut adam, samples, group, mining.margin, lr)?);
        }
        let log = EpochLog {
            epoch,
            mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            lr,
            batches_used: losses.len(),
            batches_skipped: skipped.values().sum(),
        };
        on_epoch(&log, net);
        logs.push(log);
    }
    Ok(logs)
}
