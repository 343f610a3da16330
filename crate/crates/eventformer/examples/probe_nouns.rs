use eventformer::model::{EventFormer, ModelConfig};
use eventformer::numeric::Binder;
use eventformer::synthetic::{generate, GeneratorConfig, Rule};
use eventformer::training::{train, noun_similarities, Stage, TrainConfig};

fn main() {
    let gen_cfg = GeneratorConfig {
        seed: 1, num_chains: 2000, min_len: 4, max_len: 8,
        verbs: 16, entities: 12, rule: Rule::Order1,
        ..GeneratorConfig::default()
    };
    let corpus = generate(&gen_cfg).unwrap();
    let mc = ModelConfig {
        d: 64, layers: 2, heads: 4, ffn_dim: 128, gnn_hidden: 64,
        text_dim: 32, visual_dim: 32,
        ..ModelConfig::default()
    };
    let mut model = EventFormer::new(mc, &gen_cfg.vocabulary(), 7).unwrap();
    let tc = TrainConfig {
        lr: 3e-3, batch: 32, max_steps: 300, dropout: 0.0,
        stage: Stage::Posttrain, eval_every: 0, seed: 11,
        ..TrainConfig::default()
    };
    train(&mut model, &corpus.train, None, &tc).unwrap();

    for chain in corpus.test.iter().take(3) {
        let binder = Binder::new(&model.store, false);
        let out = model.forward(chain, None, &binder, None, false).unwrap();
        let gold: Vec<usize> = out.gold.noun_lexemes.clone();
        let sims = noun_similarities(&out.slot_embeddings, &out.history.embeddings).unwrap();
        let presence = out.presence_logits.data();
        println!("chain {} gold nouns {:?}", chain.chain_id, gold);
        println!("  history lexemes {:?}", out.history.lexemes);
        let c = out.history.lexemes.len();
        let sd = sims.data();
        for s in 0..4 {
            let row = &sd[s * c..(s + 1) * c];
            let best = (0..c).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
            println!(
                "  slot {s}: presence {:+.3} best cand lex {} sim {:+.3} | sims {:?}",
                presence[s],
                out.history.lexemes[best],
                row[best],
                row.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
            );
        }
        // sims to gold embeddings
        let gs = noun_similarities(&out.slot_embeddings, &out.gold.noun_embeddings).unwrap();
        let gd = gs.data();
        let g = gold.len();
        for s in 0..4 {
            println!("  slot {s} vs gold: {:?}", gd[s * g..(s + 1) * g].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
        }
    }
}
