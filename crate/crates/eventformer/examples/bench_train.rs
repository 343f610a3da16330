use eventformer::evaluation::{acc_at_k, noun_prf, score_corpus, Averaging};
use eventformer::model::{EventFormer, ModelConfig};
use eventformer::synthetic::{generate, GeneratorConfig, MarkovBaseline, Rule};
use eventformer::training::{train, Stage, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let pre_steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let post_steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let batch: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(32);
    let dropout: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.1);

    let gen_cfg = GeneratorConfig {
        seed: 1,
        num_chains: 5000,
        min_len: 4,
        max_len: 8,
        verbs: 16,
        entities: 12,
        rule: Rule::Order2,
        ..GeneratorConfig::default()
    };
    let t0 = Instant::now();
    let corpus = generate(&gen_cfg).unwrap();
    println!("gen 5000 chains: {:?} (train {} val {} test {})", t0.elapsed(), corpus.train.len(), corpus.val.len(), corpus.test.len());

    let mc = ModelConfig {
        d: 64,
        layers: 2,
        heads: 4,
        ffn_dim: 128,
        gnn_hidden: 64,
        text_dim: 32,
        visual_dim: 32,
        ..ModelConfig::default()
    };
    let mut model = EventFormer::new(mc, &gen_cfg.vocabulary(), 7).unwrap();
    println!("params: {}", model.param_count());

    let t0 = Instant::now();
    let pre = TrainConfig {
        lr, batch, max_steps: pre_steps, dropout,
        stage: Stage::Pretrain, eval_every: 0, seed: 11,
        ..TrainConfig::default()
    };
    let r1 = train(&mut model, &corpus.train, None, &pre).unwrap();
    println!("pretrain {} steps: {:?}, loss {:.4} -> {:.4}", r1.steps_run, t0.elapsed(),
        r1.loss_log.first().map(|l| l.loss_total).unwrap_or(0.0),
        r1.loss_log.last().map(|l| l.loss_total).unwrap_or(0.0));

    let t0 = Instant::now();
    let post = TrainConfig {
        lr, batch, max_steps: post_steps, dropout,
        stage: Stage::Posttrain, eval_every: 100, seed: 12,
        ..TrainConfig::default()
    };
    let r2 = train(&mut model, &corpus.train, Some(&corpus.val), &post).unwrap();
    println!("posttrain {} steps: {:?}, loss {:.4} -> {:.4}, best val {:?}", r2.steps_run, t0.elapsed(),
        r2.loss_log.first().map(|l| l.loss_total).unwrap_or(0.0),
        r2.loss_log.last().map(|l| l.loss_total).unwrap_or(0.0), r2.best_val);

    let t0 = Instant::now();
    let results = score_corpus(&model, &corpus.test, 0.5).unwrap();
    let acc1 = acc_at_k(&results, 1);
    let acc5 = acc_at_k(&results, 5);
    let (p, r, f1) = noun_prf(&results, Averaging::Macro);
    println!("eval {:?}: Acc@1 {:.4} Acc@5 {:.4} noun P {:.4} R {:.4} F1 {:.4}", t0.elapsed(), acc1, acc5, p, r, f1);

    let baseline = MarkovBaseline::fit(&corpus.train, 16);
    let bres = baseline.score(&corpus.test).unwrap();
    println!("markov baseline Acc@1 {:.4}", acc_at_k(&bres, 1));
}
