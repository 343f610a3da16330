use eventformer::evaluation::{acc_at_k, noun_prf, score_corpus, Averaging};
use eventformer::model::{EventFormer, ModelConfig};
use eventformer::synthetic::{generate, GeneratorConfig, Rule};
use eventformer::training::{train, Stage, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let rule = match args.get(1).map(|s| s.as_str()).unwrap_or("order1") {
        "order2" => Rule::Order2,
        "coref" => Rule::CorefSubject,
        _ => Rule::Order1,
    };
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let d: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);
    let layers: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2);
    let chains: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(2000);

    let gen_cfg = GeneratorConfig {
        seed: 1, num_chains: chains, min_len: 4, max_len: 8,
        verbs: 16, entities: 12, rule,
        ..GeneratorConfig::default()
    };
    let corpus = generate(&gen_cfg).unwrap();
    let mc = ModelConfig {
        d, layers, heads: 4, ffn_dim: 2 * d, gnn_hidden: d,
        text_dim: 32, visual_dim: 32,
        ..ModelConfig::default()
    };
    let mut model = EventFormer::new(mc, &gen_cfg.vocabulary(), 7).unwrap();
    eprintln!("rule {rule:?} params {}", model.param_count());
    let tc = TrainConfig {
        lr, batch: 32, max_steps: steps, dropout: 0.0,
        stage: Stage::Posttrain, eval_every: 0, seed: 11,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &corpus.train, None, &tc).unwrap();
    for l in report.loss_log.iter().step_by((steps / 10).max(1)) {
        eprintln!("step {:4} total {:.4} ce {:.4} focal {:.4} mse {:.4}", l.step, l.loss_total, l.loss_ce, l.loss_focal, l.loss_mse);
    }
    let results = score_corpus(&model, &corpus.test, 0.5).unwrap();
    let (p, r, f1) = noun_prf(&results, Averaging::Macro);
    eprintln!("Acc@1 {:.4} Acc@5 {:.4} noun P {:.3} R {:.3} F1 {:.3}",
        acc_at_k(&results, 1), acc_at_k(&results, 5), p, r, f1);
}
