//! Stage-weighted focal + dice objective and the minibatch training loop.

use rand::seq::SliceRandom;

use crate::encoders::StageTokens;
use crate::ensemble::TextFeature;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::loss::{dice_loss, focal_loss_two_class, validate_weights, GroundTruth, StageLoss};
use crate::optim::AdamW;
use crate::params::ParamSet;
use crate::rng::labeled_rng;
use crate::umci::Umci;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub stage_weights: Vec<f64>,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            stage_weights: vec![0.1, 0.1, 0.1, 0.7],
            lr: 1e-4,
            weight_decay: 0.01,
            batch: 8,
            epochs: 6,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, stages: usize) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::config("loss.gamma", "must be non-negative"));
        }
        validate_weights(&self.stage_weights, stages)?;
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::config("train.lr", "must be a non-negative number"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        if self.batch == 0 {
            return Err(Error::config("train.batch", "must be at least 1"));
        }
        Ok(())
    }
}

/// One training example: precomputed stage tokens and its full-resolution mask.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub tokens: StageTokens,
    pub truth: GroundTruth,
}

/// Total loss node plus the unweighted terms of every stage.
pub struct LossNodes {
    pub total: Var,
    pub stages: Vec<StageLoss>,
}

/// Records the full objective for one sample on `g`.
pub fn loss_graph(
    model: &Umci,
    g: &mut Graph,
    ps: &ParamSet,
    tokens: &StageTokens,
    text: &TextFeature,
    truth: &GroundTruth,
    cfg: &LossConfig,
) -> Result<LossNodes> {
    validate_weights(&cfg.stage_weights, model.stages().len())?;
    let hw = (truth.mask().shape()[0], truth.mask().shape()[1]);
    let logits = model.forward_graph(g, ps, tokens, text)?;
    let mut terms = Vec::with_capacity(2 * logits.len());
    let mut stages = Vec::with_capacity(logits.len());
    for (&l, &w) in logits.iter().zip(&cfg.stage_weights) {
        let up = g.resize(l, hw.0, hw.1)?;
        let probs = g.softmax(up)?;
        let fg = g.channel(probs, 1)?;
        let (f, fgrad) = focal_loss_two_class(g.value(probs), truth, cfg.gamma)?;
        let (d, dgrad) = dice_loss(g.value(fg), truth)?;
        terms.push((g.scalar_fn(probs, f, fgrad)?, w));
        terms.push((g.scalar_fn(fg, d, dgrad)?, w));
        stages.push(StageLoss { focal: f, dice: d });
    }
    Ok(LossNodes { total: g.lin_comb(&terms)?, stages })
}

/// One line of the loss trace: batch means of the stage-weighted terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub step: usize,
    pub focal: f64,
    pub dice: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
}

impl TrainReport {
    /// Mean total loss of each epoch, in order.
    pub fn epoch_means(&self) -> Vec<f64> {
        let epochs = self.trace.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
        (0..epochs)
            .map(|e| {
                let rows: Vec<f64> = self.trace.iter().filter(|r| r.epoch == e).map(|r| r.total).collect();
                rows.iter().sum::<f64>() / rows.len().max(1) as f64
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,step,focal,dice,total\n");
        for r in &self.trace {
            out.push_str(&format!("{},{},{:.8},{:.8},{:.8}\n", r.epoch, r.step, r.focal, r.dice, r.total));
        }
        out
    }
}

/// Minibatch AdamW over `data`; visit order is reshuffled per epoch from `cfg.seed`.
/// `observe` sees each trace row as it is produced.
pub fn train(
    model: &mut Umci,
    data: &[TrainSample],
    text: &TextFeature,
    cfg: &LossConfig,
    mut observe: impl FnMut(&TraceRow),
) -> Result<TrainReport> {
    cfg.validate(model.stages().len())?;
    if data.is_empty() {
        return Err(Error::invalid("train", "dataset is empty"));
    }
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut report = TrainReport::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut labeled_rng(cfg.seed, &format!("train.epoch{epoch}")));
        for batch in order.chunks(cfg.batch) {
            let mut params = std::mem::take(model.params_mut());
            params.zero_grads();
            let mut row = TraceRow { epoch, step, focal: 0.0, dice: 0.0, total: 0.0 };
            for &i in batch {
                let mut g = Graph::new();
                let nodes = loss_graph(model, &mut g, &params, &data[i].tokens, text, &data[i].truth, cfg)?;
                let total = g.value(nodes.total).data()[0];
                if !total.is_finite() {
                    *model.params_mut() = params;
                    return Err(Error::invalid(
                        "train",
                        format!("non-finite loss at epoch {epoch}, step {step}, sample {i}"),
                    ));
                }
                for (s, w) in nodes.stages.iter().zip(&cfg.stage_weights) {
                    row.focal += w * s.focal;
                    row.dice += w * s.dice;
                }
                row.total += total;
                let grads = g.backward(nodes.total)?;
                g.accumulate_param_grads(&grads, &mut params);
            }
            let n = batch.len() as f64;
            row.focal /= n;
            row.dice /= n;
            row.total /= n;
            let stepped = opt.step(&mut params, 1.0 / n);
            *model.params_mut() = params;
            stepped?;
            observe(&row);
            report.trace.push(row);
            step += 1;
        }
    }
    model.params_mut().drop_grads();
    Ok(report)
}
