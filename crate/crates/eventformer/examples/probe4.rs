use eventformer::evaluation::{acc_at_k, noun_prf, score_corpus, Averaging};
use eventformer::model::{EventFormer, ModelConfig};
use eventformer::synthetic::{generate, GeneratorConfig, MarkovBaseline, Rule};
use eventformer::training::{train, Stage, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let pre: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let post: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let batch: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(16);

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
    eprintln!("params {}", model.param_count());
    let t0 = Instant::now();
    let ptc = TrainConfig {
        lr, batch, max_steps: pre, dropout: 0.0,
        stage: Stage::Pretrain, eval_every: 0, seed: 11,
        ..TrainConfig::default()
    };
    let r1 = train(&mut model, &corpus.train, None, &ptc).unwrap();
    eprintln!("pre done {:?} ce {:.3}", t0.elapsed(), r1.loss_log.last().unwrap().loss_ce);
    let ttc = TrainConfig {
        lr, batch, max_steps: post, dropout: 0.0,
        stage: Stage::Posttrain, eval_every: 0, seed: 12,
        ..TrainConfig::default()
    };
    let r2 = train(&mut model, &corpus.train, None, &ttc).unwrap();
    for l in r2.loss_log.iter().step_by((post / 10).max(1)) {
        eprintln!("post step {:4} ce {:.4} focal {:.4} mse {:.4}", l.step, l.loss_ce, l.loss_focal, l.loss_mse);
    }
    eprintln!("total train {:?}", t0.elapsed());
    for tau in [0.5, 0.2, 0.0] {
        let results = score_corpus(&model, &corpus.test, tau).unwrap();
        let (p, r, f1) = noun_prf(&results, Averaging::Macro);
        eprintln!("tau {:.2}: Acc@1 {:.4} Acc@5 {:.4} noun P {:.3} R {:.3} F1 {:.3}",
            tau, acc_at_k(&results, 1), acc_at_k(&results, 5), p, r, f1);
    }
    let baseline = MarkovBaseline::fit(&corpus.train, 16);
    eprintln!("markov Acc@1 {:.4}", acc_at_k(&baseline.score(&corpus.test).unwrap(), 1));
}
