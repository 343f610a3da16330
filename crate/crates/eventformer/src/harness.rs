//! Comparison harnesses: GNN-variant ablation and two-stage vs one-stage
//! training, producing table-shaped reports from one command.

use serde::Serialize;

use crate::error::Result;
use crate::evaluation::{evaluate, render_table, Averaging, MetricsReport};
use crate::event_model::EventChain;
use crate::gnn::GnnKind;
use crate::model::{EventFormer, ModelConfig};
use crate::synthetic::SyntheticCorpus;
use crate::training::{train, train_two_stage, TrainConfig};

#[derive(Debug, Serialize)]
pub struct AblationRow {
    pub method: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Serialize)]
pub struct AblationReport {
    pub compare: String,
    pub split: String,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn table(&self) -> String {
        let rows: Vec<(&str, &MetricsReport)> = self
            .rows
            .iter()
            .map(|r| (r.method.as_str(), &r.metrics))
            .collect();
        render_table(&rows)
    }
}

fn eval_split<'a>(corpus: &'a SyntheticCorpus, split: &str) -> &'a [EventChain] {
    match split {
        "val" => &corpus.val,
        _ => &corpus.test,
    }
}

/// Train one model per GNN kind on the same corpus and seed; one-stage
/// task training, identical configs except the QKV network.
pub fn gnn_ablation(
    corpus: &SyntheticCorpus,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    split: &str,
    tau: f64,
    ks: &[usize],
    averaging: Averaging,
) -> Result<AblationReport> {
    let mut rows = Vec::new();
    for kind in GnnKind::ALL {
        let mut mc = model_cfg.clone();
        mc.gnn_kind = kind;
        let mut model = EventFormer::new(mc, &corpus.vocab, seed)?;
        train(&mut model, &corpus.train, None, train_cfg)?;
        let report = evaluate(&model, eval_split(corpus, split), split, tau, ks, averaging)?;
        rows.push(AblationRow {
            method: format!("EventFormer-{kind}"),
            metrics: report.metrics,
        });
    }
    Ok(AblationReport {
        compare: "gnn".into(),
        split: split.into(),
        rows,
    })
}

/// One-stage vs two-stage training across seeds; two-stage runs the random
/// mask pretraining before the identical task stage.
pub fn stage_comparison(
    corpus: &SyntheticCorpus,
    model_cfg: &ModelConfig,
    pre_cfg: &TrainConfig,
    post_cfg: &TrainConfig,
    seeds: &[u64],
    split: &str,
    tau: f64,
    ks: &[usize],
    averaging: Averaging,
) -> Result<AblationReport> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let mut one = EventFormer::new(model_cfg.clone(), &corpus.vocab, seed)?;
        let mut post = post_cfg.clone();
        post.seed = post.seed.wrapping_add(seed);
        train(&mut one, &corpus.train, None, &post)?;
        let rep1 = evaluate(&one, eval_split(corpus, split), split, tau, ks, averaging)?;
        rows.push(AblationRow {
            method: format!("one-stage (seed {seed})"),
            metrics: rep1.metrics,
        });

        let mut two = EventFormer::new(model_cfg.clone(), &corpus.vocab, seed)?;
        let mut pre = pre_cfg.clone();
        pre.seed = pre.seed.wrapping_add(seed);
        train_two_stage(&mut two, &corpus.train, None, &pre, &post)?;
        let rep2 = evaluate(&two, eval_split(corpus, split), split, tau, ks, averaging)?;
        rows.push(AblationRow {
            method: format!("two-stage (seed {seed})"),
            metrics: rep2.metrics,
        });
    }
    Ok(AblationReport {
        compare: "stages".into(),
        split: split.into(),
        rows,
    })
}
