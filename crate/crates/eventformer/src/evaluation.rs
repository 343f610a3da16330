//! Metric suite: verb Acc@K, noun precision/recall/F1, and the verb-noun
//! metrics where noun credit is granted only when the top-1 verb is correct.
//!
//! Corpus-level P and R are per-sample (macro) averages by default, with F1
//! computed from the averaged P and R; micro averaging is available behind
//! [`Averaging::Micro`].

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::EventChain;
use crate::model::EventFormer;

/// Gold and predicted labels for one evaluated sample.
#[derive(Debug, Clone)]
pub struct SampleResult {
    pub gold_verb: usize,
    /// Predicted verb ids, best first, no duplicates.
    pub ranked_verbs: Vec<usize>,
    pub gold_nouns: BTreeSet<usize>,
    pub pred_nouns: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    Micro,
}

impl Averaging {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            _ => Err(Error::Config(format!(
                "unknown averaging \"{s}\" (expected macro|micro)"
            ))),
        }
    }
}

/// Fraction of samples whose gold verb appears in the top K predictions.
pub fn acc_at_k(results: &[SampleResult], k: usize) -> f64 {
    assert!(k >= 1, "K must be at least 1");
    if results.is_empty() {
        return 0.0;
    }
    let hits = results
        .iter()
        .filter(|r| r.ranked_verbs.iter().take(k).any(|&v| v == r.gold_verb))
        .count();
    hits as f64 / results.len() as f64
}

fn sample_pr(pred: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> (f64, f64) {
    let inter = pred.intersection(gold).count() as f64;
    let p = if pred.is_empty() {
        if gold.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        inter / pred.len() as f64
    };
    let r = if gold.is_empty() {
        if pred.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        inter / gold.len() as f64
    };
    (p, r)
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Noun set precision, recall, F1 (F1 computed from the averaged P and R).
pub fn noun_prf(results: &[SampleResult], averaging: Averaging) -> (f64, f64, f64) {
    prf_inner(results, averaging, false)
}

/// Noun metrics gated on the top-1 verb being correct; wrong-verb samples
/// contribute (0, 0) and stay in the average.
pub fn verb_noun_prf(results: &[SampleResult], averaging: Averaging) -> (f64, f64, f64) {
    prf_inner(results, averaging, true)
}

fn prf_inner(results: &[SampleResult], averaging: Averaging, gate_on_verb: bool) -> (f64, f64, f64) {
    if results.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let verb_ok = |r: &SampleResult| r.ranked_verbs.first() == Some(&r.gold_verb);
    match averaging {
        Averaging::Macro => {
            let mut psum = 0.0;
            let mut rsum = 0.0;
            for r in results {
                let (p, rr) = if gate_on_verb && !verb_ok(r) {
                    (0.0, 0.0)
                } else {
                    sample_pr(&r.pred_nouns, &r.gold_nouns)
                };
                psum += p;
                rsum += rr;
            }
            let n = results.len() as f64;
            let (p, r) = (psum / n, rsum / n);
            (p, r, f1_of(p, r))
        }
        Averaging::Micro => {
            let mut inter = 0usize;
            let mut pred_total = 0usize;
            let mut gold_total = 0usize;
            for r in results {
                gold_total += r.gold_nouns.len();
                if gate_on_verb && !verb_ok(r) {
                    // no credit, but predictions still count against precision
                    pred_total += r.pred_nouns.len();
                    continue;
                }
                inter += r.pred_nouns.intersection(&r.gold_nouns).count();
                pred_total += r.pred_nouns.len();
            }
            let p = if pred_total == 0 { 0.0 } else { inter as f64 / pred_total as f64 };
            let r = if gold_total == 0 { 0.0 } else { inter as f64 / gold_total as f64 };
            (p, r, f1_of(p, r))
        }
    }
}

// ---------------------------------------------------------------------------
// Corpus scoring and reports
// ---------------------------------------------------------------------------

/// Run the model over a corpus split and collect per-sample results.
pub fn score_corpus(model: &EventFormer, corpus: &[EventChain], tau: f64) -> Result<Vec<SampleResult>> {
    let mut out = Vec::with_capacity(corpus.len());
    for chain in corpus {
        let target = &chain.graphs[chain.target_index.min(chain.len().saturating_sub(1))];
        let gold_verb = target
            .trigger()
            .map(|t| t.lexeme_id)
            .ok_or_else(|| Error::Data(format!("chain {}: target has no trigger", chain.chain_id)))?;
        let gold_nouns: BTreeSet<usize> = target.arguments().map(|a| a.lexeme_id).collect();
        let pred = model.predict(chain, tau)?;
        out.push(SampleResult {
            gold_verb,
            ranked_verbs: pred.verb_ranking,
            gold_nouns,
            pred_nouns: pred.nouns.into_iter().collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PrfReport {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub samples: usize,
    /// Acc@K keyed by K, ascending.
    pub acc: Vec<(usize, f64)>,
    pub noun: PrfReport,
    pub verb_noun: PrfReport,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub split: String,
    pub tau: f64,
    pub averaging: Averaging,
    pub metrics: MetricsReport,
}

/// Compute the full metric set for one split.
pub fn evaluate(
    model: &EventFormer,
    corpus: &[EventChain],
    split: &str,
    tau: f64,
    ks: &[usize],
    averaging: Averaging,
) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(Error::Data(format!("split {split} is empty")));
    }
    let results = score_corpus(model, corpus, tau)?;
    Ok(EvalReport {
        split: split.to_string(),
        tau,
        averaging,
        metrics: summarize(&results, ks, averaging),
    })
}

pub fn summarize(results: &[SampleResult], ks: &[usize], averaging: Averaging) -> MetricsReport {
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let (np, nr, nf) = noun_prf(results, averaging);
    let (vp, vr, vf) = verb_noun_prf(results, averaging);
    MetricsReport {
        samples: results.len(),
        acc: ks.iter().map(|&k| (k, acc_at_k(results, k))).collect(),
        noun: PrfReport { p: np, r: nr, f1: nf },
        verb_noun: PrfReport { p: vp, r: vr, f1: vf },
    }
}

/// Aligned text table: Top1, Top5, then P R F1 for Noun and Verb-Noun.
pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} | {:>6} {:>6} | {:>6} {:>6} {:>6} | {:>6} {:>6} {:>6}",
        "Set", "Top1", "Top5", "P", "R", "F1", "P", "R", "F1"
    );
    let _ = writeln!(s, "{}", "-".repeat(14 + 3 + 14 + 3 + 22 + 3 + 22));
    for (name, m) in rows {
        let acc_of = |k: usize| {
            m.acc
                .iter()
                .find(|(kk, _)| *kk == k)
                .map(|(_, v)| *v)
                .unwrap_or(f64::NAN)
        };
        let _ = writeln!(
            s,
            "{:<14} | {:>6.2} {:>6.2} | {:>6.2} {:>6.2} {:>6.2} | {:>6.2} {:>6.2} {:>6.2}",
            name,
            100.0 * acc_of(1),
            100.0 * acc_of(5),
            100.0 * m.noun.p,
            100.0 * m.noun.r,
            100.0 * m.noun.f1,
            100.0 * m.verb_noun.p,
            100.0 * m.verb_noun.r,
            100.0 * m.verb_noun.f1,
        );
    }
    s
}
