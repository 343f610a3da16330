use eventformer::evaluation::{acc_at_k, score_corpus};
use eventformer::model::{EventFormer, ModelConfig};
use eventformer::synthetic::{generate, GeneratorConfig, Rule};
use eventformer::training::{train, LossWeights, Stage, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(800);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let batch: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let ffn: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(128);
    let hh: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(64);

    let gen_cfg = GeneratorConfig {
        seed: 1, num_chains: 5000, min_len: 4, max_len: 8,
        verbs: 16, entities: 12, rule: Rule::Order2,
        ..GeneratorConfig::default()
    };
    let corpus = generate(&gen_cfg).unwrap();
    let mc = ModelConfig {
        d: 64, layers: 2, heads: 4, ffn_dim: ffn, gnn_hidden: 64, head_hidden: hh,
        text_dim: 32, visual_dim: 32,
        ..ModelConfig::default()
    };
    let mut model = EventFormer::new(mc, &gen_cfg.vocabulary(), 7).unwrap();
    let weights = LossWeights { alpha: 1.0, beta: 0.0, gamma: 0.0 };
    let tc = TrainConfig {
        lr, batch, max_steps: steps, dropout: 0.0,
        stage: Stage::Posttrain, eval_every: 0, seed: 11, weights,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &corpus.train, None, &tc).unwrap();
    for l in report.loss_log.iter().step_by((steps / 8).max(1)) {
        eprintln!("step {:4} ce {:.4}", l.step, l.loss_ce);
    }
    let results = score_corpus(&model, &corpus.test, 0.5).unwrap();
    eprintln!("lr {lr} ffn {ffn} hh {hh}: Acc@1 {:.4} Acc@5 {:.4}", acc_at_k(&results, 1), acc_at_k(&results, 5));
}
