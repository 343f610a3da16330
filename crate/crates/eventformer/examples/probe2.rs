use eventformer::evaluation::{acc_at_k, noun_prf, score_corpus, Averaging};
use eventformer::model::{EventFormer, ModelConfig};
use eventformer::synthetic::{generate, GeneratorConfig, Rule};
use eventformer::training::{train, Stage, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let pre: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(800);
    let post: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(800);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let gamma: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.5);

    let gen_cfg = GeneratorConfig {
        seed: 1, num_chains: 5000, min_len: 4, max_len: 8,
        verbs: 16, entities: 12, rule: Rule::Order2,
        ..GeneratorConfig::default()
    };
    let corpus = generate(&gen_cfg).unwrap();
    let mc = ModelConfig {
        d: 64, layers: 2, heads: 4, ffn_dim: 128, gnn_hidden: 64,
        text_dim: 32, visual_dim: 32,
        ..ModelConfig::default()
    };
    let mut model = EventFormer::new(mc, &gen_cfg.vocabulary(), 7).unwrap();
    let t0 = Instant::now();
    let mut weights = eventformer::training::LossWeights::default();
    weights.gamma = gamma;
    let ptc = TrainConfig {
        lr, batch: 32, max_steps: pre, dropout: 0.0,
        stage: Stage::Pretrain, eval_every: 0, seed: 11, weights,
        ..TrainConfig::default()
    };
    let r1 = train(&mut model, &corpus.train, None, &ptc).unwrap();
    let ttc = TrainConfig {
        lr, batch: 32, max_steps: post, dropout: 0.0,
        stage: Stage::Posttrain, eval_every: 200, seed: 12, weights,
        ..TrainConfig::default()
    };
    let r2 = train(&mut model, &corpus.train, Some(&corpus.val), &ttc).unwrap();
    let l1 = r1.loss_log.last().unwrap();
    let l2 = r2.loss_log.last().unwrap();
    eprintln!("trained in {:?}; pre last (ce {:.3} focal {:.3} mse {:.3}) post last (ce {:.3} focal {:.3} mse {:.3}) best val {:?}",
        t0.elapsed(), l1.loss_ce, l1.loss_focal, l1.loss_mse, l2.loss_ce, l2.loss_focal, l2.loss_mse, r2.best_val);
    for tau in [0.5, 0.35, 0.2, 0.0] {
        let results = score_corpus(&model, &corpus.test, tau).unwrap();
        let (p, r, f1) = noun_prf(&results, Averaging::Macro);
        eprintln!("tau {:.2}: Acc@1 {:.4} Acc@5 {:.4} noun P {:.3} R {:.3} F1 {:.3}",
            tau, acc_at_k(&results, 1), acc_at_k(&results, 5), p, r, f1);
    }
}
