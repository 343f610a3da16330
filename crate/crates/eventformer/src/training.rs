//! Losses, optimizer, and the two-stage masked-training regimen.
//!
//! The objective is `alpha * L_ce + beta * L_focal + gamma * L_mse`: verb
//! cross-entropy, a cosine-similarity focal loss identifying noun nodes among
//! historical arguments, and an MSE pulling slot embeddings toward the gold
//! noun embeddings. Pretraining masks a random non-initial graph per chain
//! per step; post-training masks the chain's designated target.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::EventChain;
use crate::evaluation;
use crate::model::{EventFormer, ForwardOutput};
use crate::numeric::checkpoint::{self, ParamCheckpoint};
use crate::numeric::{Binder, ParamStore, Tensor};

// ---------------------------------------------------------------------------
// Loss pieces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0, gamma: 0.5 }
    }
}

/// Cross-entropy of the verb logits against the ground-truth verb id.
pub fn verb_loss(verb_logits: &Tensor, gt: usize) -> Result<Tensor> {
    let v = verb_logits.cols();
    if gt >= v {
        return Err(Error::Data(format!(
            "ground-truth verb id {gt} outside vocabulary of size {v}"
        )));
    }
    Ok(verb_logits.log_softmax_rows().slice_cols(gt, gt + 1).neg().sum())
}

/// Cosine similarities between slot embeddings (S x d) and candidate
/// embeddings (C x d), entries in [-1, 1]. Norms are floored at 1e-8 so
/// zero vectors yield similarity 0, never NaN.
pub fn noun_similarities(slots: &Tensor, candidates: &Tensor) -> Result<Tensor> {
    if candidates.rows() == 0 {
        return Err(Error::Contract(
            "noun similarity requires at least one historical argument".into(),
        ));
    }
    let dots = slots.matmul(&candidates.transpose());
    let sn = slots.mul(slots).sum_axis(1).sqrt().clamp(1e-8, f64::INFINITY);
    let cn = candidates
        .mul(candidates)
        .sum_axis(1)
        .sqrt()
        .clamp(1e-8, f64::INFINITY);
    Ok(dots.div(&sn.matmul(&cn.transpose())))
}

/// Binary focal loss over (slot, candidate) pairs. Similarities map to
/// probabilities `p = (sim + 1) / 2` clipped to `[1e-6, 1 - 1e-6]`;
/// `-(1 - p_t)^g * log(p_t)` averaged over all pairs. `g = 0` reduces to
/// binary cross-entropy.
pub fn noun_focal_loss(sims: &Tensor, labels: &[Vec<bool>], g: f64) -> Tensor {
    let (s, c) = sims.shape();
    assert_eq!(labels.len(), s, "label rows must match slots");
    let mut lbl = vec![0.0; s * c];
    for (i, row) in labels.iter().enumerate() {
        assert_eq!(row.len(), c, "label cols must match candidates");
        for (j, &b) in row.iter().enumerate() {
            if b {
                lbl[i * c + j] = 1.0;
            }
        }
    }
    let p = sims.add_scalar(1.0).scale(0.5).clamp(1e-6, 1.0 - 1e-6);
    focal_term(&p, &Tensor::constant(s, c, lbl), g)
}

fn focal_term(p: &Tensor, labels: &Tensor, g: f64) -> Tensor {
    let ones_minus_l = labels.neg().add_scalar(1.0);
    let pt = p.mul(labels).add(&p.neg().add_scalar(1.0).mul(&ones_minus_l));
    pt.neg().add_scalar(1.0).powf(g).mul(&pt.ln().neg()).mean()
}

/// Focal-form binary loss on the slot presence logits against the
/// matched-slot indicators.
pub fn presence_loss(presence_logits: &Tensor, matched: &[bool], g: f64) -> Tensor {
    let s = presence_logits.rows();
    assert_eq!(matched.len(), s);
    let lbl: Vec<f64> = matched.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let p = presence_logits.sigmoid().clamp(1e-6, 1.0 - 1e-6);
    focal_term(&p, &Tensor::constant(s, 1, lbl), g)
}

/// Greedy one-to-one matching of gold nouns to slots by descending cosine
/// similarity. Ties break on the lower slot, then lower gold index.
pub fn greedy_match(sims_slot_gold: &Tensor) -> Vec<(usize, usize)> {
    let (s, g) = sims_slot_gold.shape();
    let d = sims_slot_gold.data();
    let mut used_slot = vec![false; s];
    let mut used_gold = vec![false; g];
    let mut pairs = Vec::with_capacity(s.min(g));
    for _ in 0..s.min(g) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..s {
            if used_slot[i] {
                continue;
            }
            for j in 0..g {
                if used_gold[j] {
                    continue;
                }
                let v = d[i * g + j];
                if best.map_or(true, |(_, _, bv)| v > bv) {
                    best = Some((i, j, v));
                }
            }
        }
        let (i, j, _) = best.expect("counts checked");
        used_slot[i] = true;
        used_gold[j] = true;
        pairs.push((i, j));
    }
    pairs.sort_unstable();
    pairs
}

/// Mean squared error over matched (slot, gold) embedding pairs; no gold
/// nouns contributes 0.
pub fn noun_mse_loss(slots: &Tensor, golds: &Tensor, matching: &[(usize, usize)]) -> Tensor {
    if matching.is_empty() {
        return Tensor::scalar(0.0);
    }
    let slot_idx: Vec<usize> = matching.iter().map(|&(s, _)| s).collect();
    let gold_idx: Vec<usize> = matching.iter().map(|&(_, g)| g).collect();
    let a = slots.select_rows(&slot_idx);
    let b = golds.select_rows(&gold_idx);
    a.sub(&b).powf(2.0).mean()
}

/// `alpha * ce + beta * focal + gamma * mse`.
pub fn total_loss(ce: &Tensor, focal: &Tensor, mse: &Tensor, w: &LossWeights) -> Tensor {
    ce.scale(w.alpha).add(&focal.scale(w.beta)).add(&mse.scale(w.gamma))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub focal: f64,
    pub mse: f64,
}

/// Assemble the full objective for one forward output.
pub fn chain_loss(out: &ForwardOutput, weights: &LossWeights, focal_g: f64) -> Result<(Tensor, LossParts)> {
    let ce = verb_loss(&out.verb_logits, out.gold.verb)?;
    let sims_cand = noun_similarities(&out.slot_embeddings, &out.history.embeddings)?;
    let matching = if out.gold.noun_lexemes.is_empty() {
        Vec::new()
    } else {
        let sims_gold = noun_similarities(&out.slot_embeddings, &out.gold.noun_embeddings)?;
        greedy_match(&sims_gold)
    };
    // (slot, candidate) is positive iff the candidate's lexeme is the gold
    // noun matched to that slot.
    let slots = out.slot_embeddings.rows();
    let mut labels = vec![vec![false; out.history.lexemes.len()]; slots];
    let mut matched = vec![false; slots];
    for &(s, g) in &matching {
        matched[s] = true;
        let gold_lex = out.gold.noun_lexemes[g];
        for (c, &lex) in out.history.lexemes.iter().enumerate() {
            if lex == gold_lex {
                labels[s][c] = true;
            }
        }
    }
    let focal = noun_focal_loss(&sims_cand, &labels, focal_g)
        .add(&presence_loss(&out.presence_logits, &matched, focal_g));
    let mse = noun_mse_loss(&out.slot_embeddings, &out.gold.noun_embeddings, &matching);
    let total = total_loss(&ce, &focal, &mse, weights);
    let parts = LossParts {
        total: total.item(),
        ce: ce.item(),
        focal: focal.item(),
        mse: mse.item(),
    };
    Ok((total, parts))
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adaptive-moment optimizer with decoupled weight decay.
#[derive(Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let shapes: Vec<usize> = store.iter().map(|(_, e)| e.data.len()).collect();
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update from gradients aligned with the store (missing entries are
    /// treated as zero gradient; weight decay still applies).
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Vec<f64>>]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        for (idx, id) in ids.into_iter().enumerate() {
            let e = store.entry_mut(id);
            let zero;
            let g = match grads.get(idx).and_then(|g| g.as_ref()) {
                Some(g) => g,
                None => {
                    zero = vec![0.0; e.data.len()];
                    &zero
                }
            };
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for k in 0..e.data.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                e.data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                e.data[k] -= self.lr * self.weight_decay * e.data[k];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Posttrain,
}

impl Stage {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Stage::Pretrain),
            "posttrain" => Ok(Stage::Posttrain),
            _ => Err(Error::Config(format!(
                "unknown stage \"{s}\" (expected pretrain|posttrain)"
            ))),
        }
    }
}

fn default_lr() -> f64 {
    1e-5
}
fn default_wd() -> f64 {
    1e-6
}
fn default_batch() -> usize {
    64
}
fn default_steps() -> usize {
    300
}
fn default_dropout() -> f64 {
    0.3
}
fn default_mask_rate() -> f64 {
    0.15
}
fn default_focal_g() -> f64 {
    2.0
}
fn default_stage() -> Stage {
    Stage::Posttrain
}
fn default_eval_every() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub max_steps: usize,
    /// Optional cap in epochs; 0 means no epoch cap.
    pub max_epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    pub stage: Stage,
    /// Fraction of (non-initial) graphs masked per chain per pretrain step.
    pub pretrain_mask_rate: f64,
    pub weights: LossWeights,
    pub focal_g: f64,
    /// Validate (and keep the best parameters by verb-noun F1) every this
    /// many steps; 0 disables.
    pub eval_every: usize,
    /// Similarity threshold used for validation scoring.
    pub tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: default_lr(),
            weight_decay: default_wd(),
            batch: default_batch(),
            max_steps: default_steps(),
            max_epochs: 0,
            dropout: default_dropout(),
            seed: 0,
            stage: default_stage(),
            pretrain_mask_rate: default_mask_rate(),
            weights: LossWeights::default(),
            focal_g: default_focal_g(),
            eval_every: default_eval_every(),
            tau: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("lr must be positive and weight_decay non-negative".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.pretrain_mask_rate) {
            return Err(Error::Config("pretrain_mask_rate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepLoss {
    pub step: usize,
    pub loss_total: f64,
    pub loss_ce: f64,
    pub loss_focal: f64,
    pub loss_mse: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub loss_log: Vec<StepLoss>,
    pub steps_run: usize,
    /// Best validation verb-noun F1 seen, with the step it occurred at.
    pub best_val: Option<(usize, f64)>,
}

/// Write the loss log as `step,loss_total,loss_ce,loss_focal,loss_mse`.
pub fn write_loss_log(path: &Path, log: &[StepLoss]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,loss_total,loss_ce,loss_focal,loss_mse")?;
    for l in log {
        writeln!(
            f,
            "{},{:.6},{:.6},{:.6},{:.6}",
            l.step, l.loss_total, l.loss_ce, l.loss_focal, l.loss_mse
        )?;
    }
    Ok(())
}

/// Masked targets for one chain in the current stage.
fn stage_targets(stage: Stage, chain: &EventChain, rate: f64, rng: &mut ChaCha20Rng) -> Vec<usize> {
    match stage {
        Stage::Posttrain => vec![chain.target_index],
        Stage::Pretrain => {
            // Never graph 0, so history is never empty.
            let eligible: Vec<usize> = (1..chain.len()).collect();
            let k = ((rate * eligible.len() as f64).round() as usize).max(1).min(eligible.len());
            let mut picks = eligible;
            picks.shuffle(rng);
            picks.truncate(k);
            picks.sort_unstable();
            picks
        }
    }
}

/// Run one stage of training, mutating the model's parameters in place.
pub fn train(
    model: &mut EventFormer,
    train_set: &[EventChain],
    val_set: Option<&[EventChain]>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    model.config.dropout = cfg.dropout;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut optimizer = AdamW::new(&model.store, cfg.lr, cfg.weight_decay);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut epoch = 0usize;
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, ParamCheckpoint)> = None;

    let mut step = 0usize;
    while step < cfg.max_steps {
        step += 1;
        // next batch, reshuffling at epoch boundaries
        let mut batch = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            if cursor >= order.len() {
                cursor = 0;
                epoch += 1;
                order.shuffle(&mut rng);
                if cfg.max_epochs > 0 && epoch >= cfg.max_epochs {
                    break;
                }
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        if batch.is_empty() {
            step -= 1;
            break;
        }

        let binder = Binder::new(&model.store, true);
        let mut parts_sum = LossParts::default();
        let mut n_terms = 0usize;
        for &idx in &batch {
            let chain = &train_set[idx];
            let targets = stage_targets(cfg.stage, chain, cfg.pretrain_mask_rate, &mut rng);
            for &t in &targets {
                let out = model.forward(chain, Some(t), &binder, Some(&mut rng), false)?;
                let (loss, parts) = chain_loss(&out, &cfg.weights, cfg.focal_g)?;
                n_terms += 1;
                parts_sum.total += parts.total;
                parts_sum.ce += parts.ce;
                parts_sum.focal += parts.focal;
                parts_sum.mse += parts.mse;
                // scale now so accumulated grads equal the batch mean
                loss.scale(1.0 / (batch.len() * targets.len()) as f64).backward()?;
            }
        }
        let grads = binder.grads();
        optimizer.step(&mut model.store, &grads);
        let n = n_terms.max(1) as f64;
        log.push(StepLoss {
            step,
            loss_total: parts_sum.total / n,
            loss_ce: parts_sum.ce / n,
            loss_focal: parts_sum.focal / n,
            loss_mse: parts_sum.mse / n,
        });

        if let Some(val) = val_set {
            if cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.max_steps) {
                let f1 = validation_verb_noun_f1(model, val, cfg.tau)?;
                if best.as_ref().map_or(true, |(_, b, _)| f1 > *b) {
                    best = Some((step, f1, checkpoint::snapshot(&model.store)));
                }
            }
        }
    }

    let best_val = if let Some((bstep, bf1, snap)) = best {
        checkpoint::restore(&mut model.store, &snap)?;
        Some((bstep, bf1))
    } else {
        None
    };
    Ok(TrainReport {
        loss_log: log,
        steps_run: step,
        best_val,
    })
}

fn validation_verb_noun_f1(model: &EventFormer, val: &[EventChain], tau: f64) -> Result<f64> {
    let results = evaluation::score_corpus(model, val, tau)?;
    let (_, _, f1) = evaluation::verb_noun_prf(&results, evaluation::Averaging::Macro);
    Ok(f1)
}

/// Random-mask pretraining followed by last-graph post-training.
pub fn train_two_stage(
    model: &mut EventFormer,
    train_set: &[EventChain],
    val_set: Option<&[EventChain]>,
    pre: &TrainConfig,
    post: &TrainConfig,
) -> Result<(TrainReport, TrainReport)> {
    let mut pre = pre.clone();
    pre.stage = Stage::Pretrain;
    let mut post = post.clone();
    post.stage = Stage::Posttrain;
    let r1 = train(model, train_set, None, &pre)?;
    let r2 = train(model, train_set, val_set, &post)?;
    Ok((r1, r2))
}
