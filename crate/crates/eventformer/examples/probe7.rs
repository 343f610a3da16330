use eventformer::evaluation::{acc_at_k, noun_prf, score_corpus, Averaging};
use eventformer::model::{EventFormer, ModelConfig};
use eventformer::synthetic::{generate, GeneratorConfig, Rule};
use eventformer::training::{train, Stage, TrainConfig};
use std::time::Instant;

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let pre: usize = a.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let post: usize = a.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let wd: f64 = a.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let dropout: f64 = a.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let mask_rate: f64 = a.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.15);

    let gen_cfg = GeneratorConfig {
        seed: 1, num_chains: 5000, min_len: 4, max_len: 8,
        verbs: 16, entities: 12, rule: Rule::Order2,
        ..GeneratorConfig::default()
    };
    let corpus = generate(&gen_cfg).unwrap();
    let mc = ModelConfig {
        d: 64, layers: 2, heads: 4, ffn_dim: 256, gnn_hidden: 64, head_hidden: 256,
        text_dim: 32, visual_dim: 32,
        ..ModelConfig::default()
    };
    let mut model = EventFormer::new(mc, &gen_cfg.vocabulary(), 7).unwrap();
    let t0 = Instant::now();
    let ptc = TrainConfig {
        lr: 1e-3, weight_decay: wd, batch: 16, max_steps: pre, dropout,
        stage: Stage::Pretrain, eval_every: 0, seed: 11, pretrain_mask_rate: mask_rate,
        ..TrainConfig::default()
    };
    train(&mut model, &corpus.train, None, &ptc).unwrap();
    let ttc = TrainConfig {
        lr: 1e-3, weight_decay: wd, batch: 16, max_steps: post, dropout,
        stage: Stage::Posttrain, eval_every: 0, seed: 12,
        ..TrainConfig::default()
    };
    let r2 = train(&mut model, &corpus.train, None, &ttc).unwrap();
    let l = r2.loss_log.last().unwrap();
    eprintln!("wd {wd} dropout {dropout} rate {mask_rate}: train {:?} final ce {:.3} focal {:.3} mse {:.3}",
        t0.elapsed(), l.loss_ce, l.loss_focal, l.loss_mse);
    for tau in [0.2, 0.0] {
        let results = score_corpus(&model, &corpus.test, tau).unwrap();
        let (p, r, f1) = noun_prf(&results, Averaging::Macro);
        eprintln!("tau {:.2}: Acc@1 {:.4} Acc@5 {:.4} noun P {:.3} R {:.3} F1 {:.3}",
            tau, acc_at_k(&results, 1), acc_at_k(&results, 5), p, r, f1);
    }
}
