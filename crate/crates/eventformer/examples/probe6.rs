use eventformer::evaluation::{acc_at_k, noun_prf, score_corpus, Averaging};
use eventformer::model::{EventFormer, ModelConfig};
use eventformer::synthetic::{generate, GeneratorConfig, Rule};
use eventformer::training::{train, Stage, TrainConfig};
use std::time::Instant;

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let pre: usize = a.get(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let post: usize = a.get(2).and_then(|s| s.parse().ok()).unwrap_or(5500);
    let max_len: usize = a.get(3).and_then(|s| s.parse().ok()).unwrap_or(6);
    let text_dim: usize = a.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);
    let gnn_hidden: usize = a.get(5).and_then(|s| s.parse().ok()).unwrap_or(96);
    let head_hidden: usize = a.get(6).and_then(|s| s.parse().ok()).unwrap_or(384);
    let lr: f64 = a.get(7).and_then(|s| s.parse().ok()).unwrap_or(1e-3);

    let gen_cfg = GeneratorConfig {
        seed: 1, num_chains: 5000, min_len: 4, max_len,
        verbs: 16, entities: 12, rule: Rule::Order2,
        ..GeneratorConfig::default()
    };
    let corpus = generate(&gen_cfg).unwrap();
    let mc = ModelConfig {
        d: 64, layers: 2, heads: 4, ffn_dim: 256, gnn_hidden, head_hidden,
        text_dim, visual_dim: 32,
        ..ModelConfig::default()
    };
    let mut model = EventFormer::new(mc, &gen_cfg.vocabulary(), 7).unwrap();
    eprintln!("max_len {max_len} text_dim {text_dim} gnnh {gnn_hidden} hh {head_hidden} params {}", model.param_count());
    let t0 = Instant::now();
    let ptc = TrainConfig {
        lr, batch: 16, max_steps: pre, dropout: 0.0,
        stage: Stage::Pretrain, eval_every: 0, seed: 11,
        ..TrainConfig::default()
    };
    train(&mut model, &corpus.train, None, &ptc).unwrap();
    let ttc = TrainConfig {
        lr, batch: 16, max_steps: post, dropout: 0.0,
        stage: Stage::Posttrain, eval_every: 0, seed: 12,
        ..TrainConfig::default()
    };
    let r2 = train(&mut model, &corpus.train, None, &ttc).unwrap();
    let l = r2.loss_log.last().unwrap();
    eprintln!("train {:?} final ce {:.3} focal {:.3} mse {:.3}", t0.elapsed(), l.loss_ce, l.loss_focal, l.loss_mse);
    for tau in [0.2, 0.0] {
        let results = score_corpus(&model, &corpus.test, tau).unwrap();
        let (p, r, f1) = noun_prf(&results, Averaging::Macro);
        eprintln!("tau {:.2}: Acc@1 {:.4} Acc@5 {:.4} noun P {:.3} R {:.3} F1 {:.3}",
            tau, acc_at_k(&results, 1), acc_at_k(&results, 5), p, r, f1);
    }
}
