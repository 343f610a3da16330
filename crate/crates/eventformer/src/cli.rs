//! Command-line driver: gen | train | eval | predict | inspect | gradcheck |
//! params | ablate.
//!
//! Exit codes: 0 success, 1 validation/usage failure, 2 internal error. All
//! randomness is controlled by `--seed`; identical invocations produce
//! identical output files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, render_table};
use crate::event_model::{chain_from_json, chain_stats, read_corpus, validate_chain, Vocabulary};
use crate::harness::{gnn_ablation, stage_comparison};
use crate::model::EventFormer;
use crate::numeric::grad_check;
use crate::synthetic::{generate, write_corpus_files, MarkovBaseline, RuleOracle};
use crate::training::{chain_loss, train, train_two_stage, write_loss_log, Stage};

#[derive(Parser)]
#[command(
    name = "eventformer",
    version,
    about = "Event prediction over event-graph chains with node-graph hierarchical attention"
)]
struct Cli {
    /// Config file (TOML or JSON) applied below env vars and flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed controlling all randomness (model init, generator, training)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags mirroring config keys; every key also has an
/// `EVENTFORMER_<SECTION>_<KEY>` environment variable.
#[derive(Args, Default)]
struct KeyFlags {
    /// Model dimension d [default: 64]
    #[arg(long)]
    d: Option<usize>,
    /// Encoder layers [default: 2]
    #[arg(long)]
    layers: Option<usize>,
    /// Attention heads [default: 4]
    #[arg(long)]
    heads: Option<usize>,
    /// FFN inner dim; 0 means 4*d [default: 0]
    #[arg(long)]
    ffn_dim: Option<usize>,
    /// Dropout ratio for training [default: 0.3]
    #[arg(long)]
    dropout: Option<f64>,
    /// Argument placeholders in the masked graph [default: 4]
    #[arg(long)]
    mask_slots: Option<usize>,
    /// Head perceptron hidden width; 0 means d [default: 0]
    #[arg(long)]
    head_hidden: Option<usize>,
    /// Coreference encoding scale s [default: 1]
    #[arg(long)]
    ce_scale: Option<f64>,
    /// Similarity threshold for noun selection [default: 0.5]
    #[arg(long)]
    tau: Option<f64>,
    /// QKV network kind: linear|gcn|gat|gin [default: gin]
    #[arg(long)]
    gnn_kind: Option<String>,
    /// Message-passing layers per QKV network [default: 1]
    #[arg(long)]
    gnn_layers: Option<usize>,
    /// Internal GAT heads; 0 means same as --heads [default: 0]
    #[arg(long)]
    gnn_heads: Option<usize>,
    /// GIN perceptron hidden width; 0 means d [default: 0]
    #[arg(long)]
    gnn_hidden: Option<usize>,
    /// Learned role embeddings in messages [default: true]
    #[arg(long)]
    use_role_embeddings: Option<bool>,
    /// Share graph attention across heads [default: false]
    #[arg(long)]
    shared_graph_attention: Option<bool>,
    /// Embedding provider: stub|file [default: stub]
    #[arg(long)]
    provider: Option<String>,
    /// Text embedding dim [default: 32]
    #[arg(long)]
    text_dim: Option<usize>,
    /// Visual embedding dim; 0 means text_dim [default: 0]
    #[arg(long)]
    visual_dim: Option<usize>,
    /// Embedding stub seed [default: 13]
    #[arg(long)]
    embed_seed: Option<u64>,
    /// Learning rate [default: 1e-5]
    #[arg(long)]
    lr: Option<f64>,
    /// Weight decay [default: 1e-6]
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Batch size [default: 64]
    #[arg(long)]
    batch: Option<usize>,
    /// Maximum training steps [default: 300]
    #[arg(long)]
    max_steps: Option<usize>,
    /// Maximum epochs; 0 disables the epoch cap [default: 0]
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Fraction of graphs masked per chain per pretrain step [default: 0.15]
    #[arg(long)]
    pretrain_mask_rate: Option<f64>,
    /// Verb loss weight alpha [default: 1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Focal loss weight beta [default: 1]
    #[arg(long)]
    beta: Option<f64>,
    /// MSE loss weight gamma [default: 0.5]
    #[arg(long)]
    gamma: Option<f64>,
    /// Focal focusing parameter g [default: 2]
    #[arg(long)]
    focal_g: Option<f64>,
    /// Validate every N steps, keeping the best parameters; 0 disables [default: 100]
    #[arg(long)]
    eval_every: Option<usize>,
    /// Metric averaging: macro|micro [default: macro]
    #[arg(long)]
    averaging: Option<String>,
    /// Acc@K values, comma separated [default: 1,5]
    #[arg(long)]
    ks: Option<String>,
    /// Verb vocabulary size for params [default: 2284]
    #[arg(long)]
    vocab_verbs: Option<usize>,
    /// Noun vocabulary size for params [default: 6000]
    #[arg(long)]
    vocab_nouns: Option<usize>,
}

impl KeyFlags {
    fn pairs(&self, seed: Option<u64>) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        if let Some(s) = seed {
            out.push(("train.seed".into(), s.to_string()));
            out.push(("gen.seed".into(), s.to_string()));
        }
        macro_rules! push {
            ($field:expr, $key:expr) => {
                if let Some(v) = &$field {
                    out.push(($key.into(), v.to_string()));
                }
            };
        }
        push!(self.d, "model.d");
        push!(self.layers, "model.layers");
        push!(self.heads, "model.heads");
        push!(self.ffn_dim, "model.ffn_dim");
        push!(self.mask_slots, "model.mask_slots");
        push!(self.head_hidden, "model.head_hidden");
        push!(self.ce_scale, "model.ce_scale");
        push!(self.tau, "model.tau");
        push!(self.gnn_kind, "gnn.kind");
        push!(self.gnn_layers, "gnn.layers");
        push!(self.gnn_heads, "gnn.heads");
        push!(self.gnn_hidden, "gnn.hidden");
        push!(self.use_role_embeddings, "gnn.use_role_embeddings");
        push!(self.shared_graph_attention, "attention.shared_graph_attention");
        push!(self.provider, "embedding.provider");
        push!(self.text_dim, "embedding.text_dim");
        push!(self.visual_dim, "embedding.visual_dim");
        push!(self.embed_seed, "embedding.seed");
        push!(self.lr, "train.lr");
        push!(self.weight_decay, "train.weight_decay");
        push!(self.batch, "train.batch");
        push!(self.max_steps, "train.max_steps");
        push!(self.max_epochs, "train.max_epochs");
        push!(self.pretrain_mask_rate, "train.pretrain_mask_rate");
        push!(self.alpha, "train.alpha");
        push!(self.beta, "train.beta");
        push!(self.gamma, "train.gamma");
        push!(self.focal_g, "train.focal_g");
        push!(self.eval_every, "train.eval_every");
        push!(self.averaging, "metrics.averaging");
        push!(self.ks, "metrics.ks");
        push!(self.vocab_verbs, "vocab.verbs");
        push!(self.vocab_nouns, "vocab.nouns");
        if let Some(v) = self.dropout {
            out.push(("model.dropout".into(), v.to_string()));
            out.push(("train.dropout".into(), v.to_string()));
        }
        out
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic rule-based corpus (train/val/test + vocab)
    Gen(GenArgs),
    /// Train a model on a corpus directory
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus split
    Eval(EvalArgs),
    /// Predict the next event for a single chain
    Predict(PredictArgs),
    /// Dump node-graph attention matrices for a chain
    Inspect(InspectArgs),
    /// Verify analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
    /// Count model parameters for a configuration
    Params(ParamsArgs),
    /// Train comparison grids: GNN variants or two-stage vs one-stage
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for train.jsonl, val.jsonl, test.jsonl, vocab.json
    #[arg(long)]
    out: PathBuf,
    /// Generation rule: order1|order2|coref_subject [default: order2]
    #[arg(long)]
    rule: Option<String>,
    /// Number of chains [default: 1000]
    #[arg(long)]
    chains: Option<usize>,
    /// Verb vocabulary size [default: 16]
    #[arg(long)]
    verbs: Option<usize>,
    /// Entity vocabulary size [default: 12]
    #[arg(long)]
    entities: Option<usize>,
    /// Minimum chain length [default: 3]
    #[arg(long)]
    min_len: Option<usize>,
    /// Maximum chain length [default: 15]
    #[arg(long)]
    max_len: Option<usize>,
    /// Fraction of chains with a corrupted target verb [default: 0]
    #[arg(long)]
    noise_rate: Option<f64>,
    /// Argument count distribution, e.g. "2:0.5,3:0.5"
    #[arg(long)]
    args_dist: Option<String>,
    /// Visual stub feature dimension [default: 32]
    #[arg(long)]
    feat_dim: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory from `gen` (train.jsonl, val.jsonl, vocab.json)
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// Training stage: pretrain|posttrain|two-stage [default: two-stage]
    #[arg(long, default_value = "two-stage")]
    stage: String,
    /// Pretraining steps for two-stage; defaults to --max-steps
    #[arg(long)]
    pre_steps: Option<usize>,
    /// Loss log CSV path [default: <out dir>/loss.csv]
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus directory
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split to evaluate: val|test
    #[arg(long)]
    split: String,
    /// Report JSON output path
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Args)]
struct PredictArgs {
    /// Single-chain JSON file (corpus line format)
    #[arg(long)]
    chain: PathBuf,
    /// Trained checkpoint; omitted runs the freshly initialized model
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Vocabulary file (required without --checkpoint)
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// How many top verbs to print [default: 5]
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Args)]
struct InspectArgs {
    /// Single-chain JSON file (corpus line format)
    #[arg(long)]
    chain: PathBuf,
    /// Trained checkpoint; omitted runs the freshly initialized model
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Vocabulary file (required without --checkpoint)
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Attention dump JSON output path
    #[arg(long)]
    out: PathBuf,
    /// Also print an ASCII heat rendering
    #[arg(long)]
    ascii: bool,
    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Model dimension [default: 8]
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Graphs in the probe chain [default: 3]
    #[arg(long, default_value_t = 3)]
    graphs: usize,
    /// Relative tolerance [default: 1e-3]
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    /// Central-difference step [default: 1e-4]
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Args)]
struct AblateArgs {
    /// Corpus directory
    #[arg(long)]
    data: PathBuf,
    /// What to compare: gnn|stages
    #[arg(long)]
    compare: String,
    /// Seeds for the stage comparison, comma separated [default: 1,2,3]
    #[arg(long, default_value = "1,2,3")]
    seeds: String,
    /// Split to score: val|test [default: test]
    #[arg(long, default_value = "test")]
    split: String,
    /// Pretraining steps for the two-stage arm; defaults to --max-steps
    #[arg(long)]
    pre_steps: Option<usize>,
    /// Report JSON output path
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    keys: KeyFlags,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_config(cli_config: &Option<PathBuf>, keys: &KeyFlags, seed: Option<u64>) -> Result<RunConfig> {
    let env = RunConfig::env_pairs()?;
    RunConfig::resolve(cli_config.as_deref(), &env, &keys.pairs(seed))
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(&cli, a),
        Cmd::Train(a) => cmd_train(&cli, a),
        Cmd::Eval(a) => cmd_eval(&cli, a),
        Cmd::Predict(a) => cmd_predict(&cli, a),
        Cmd::Inspect(a) => cmd_inspect(&cli, a),
        Cmd::Gradcheck(a) => cmd_gradcheck(&cli, a),
        Cmd::Params(a) => cmd_params(&cli, a),
        Cmd::Ablate(a) => cmd_ablate(&cli, a),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    use std::io::Write;
    f.write_all(b"\n")?;
    Ok(())
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let mut flags = KeyFlags::default().pairs(cli.seed);
    macro_rules! push {
        ($field:expr, $key:expr) => {
            if let Some(v) = &$field {
                flags.push(($key.into(), v.to_string()));
            }
        };
    }
    push!(a.rule, "gen.rule");
    push!(a.chains, "gen.chains");
    push!(a.verbs, "gen.verbs");
    push!(a.entities, "gen.entities");
    push!(a.min_len, "gen.min_len");
    push!(a.max_len, "gen.max_len");
    push!(a.noise_rate, "gen.noise_rate");
    push!(a.args_dist, "gen.args_dist");
    push!(a.feat_dim, "gen.feat_dim");
    let env = RunConfig::env_pairs()?;
    let cfg = RunConfig::resolve(cli.config.as_deref(), &env, &flags)?;
    let corpus = generate(&cfg.gen)?;
    write_corpus_files(&a.out, &corpus, &cfg.gen)?;
    let all: Vec<_> = corpus.all().cloned().collect();
    let stats = chain_stats(&all)?;
    println!(
        "wrote {} chains ({} train / {} val / {} test), {} events, mean args/event {:.3} -> {}",
        stats.chains,
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len(),
        stats.graphs,
        stats.mean_args_per_event,
        a.out.display()
    );
    Ok(())
}

fn load_split(dir: &Path, name: &str) -> Result<Vec<crate::event_model::EventChain>> {
    let path = dir.join(format!("{name}.jsonl"));
    let chains = read_corpus(&path)?;
    for chain in &chains {
        let violations = validate_chain(chain);
        if !violations.is_empty() {
            return Err(Error::Data(format!(
                "chain {} is invalid: {}",
                chain.chain_id,
                violations.join("; ")
            )));
        }
    }
    Ok(chains)
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(&cli.config, &a.keys, cli.seed)?;
    let vocab = Vocabulary::load(&a.data.join("vocab.json"))?;
    let train_set = load_split(&a.data, "train")?;
    let val_set = load_split(&a.data, "val").ok();
    let mut model = EventFormer::new(cfg.model.clone(), &vocab, cli.seed.unwrap_or(0))?;
    println!("model: {} parameters", model.param_count());

    let report = match a.stage.as_str() {
        "two-stage" => {
            let mut pre = cfg.train.clone();
            pre.stage = Stage::Pretrain;
            if let Some(s) = a.pre_steps {
                pre.max_steps = s;
            }
            let mut post = cfg.train.clone();
            post.stage = Stage::Posttrain;
            let (r1, r2) = train_two_stage(&mut model, &train_set, val_set.as_deref(), &pre, &post)?;
            println!(
                "pretrain: {} steps, final loss {:.4}",
                r1.steps_run,
                r1.loss_log.last().map(|l| l.loss_total).unwrap_or(f64::NAN)
            );
            r2
        }
        stage => {
            let mut tc = cfg.train.clone();
            tc.stage = Stage::parse(stage)?;
            train(&mut model, &train_set, val_set.as_deref(), &tc)?
        }
    };
    println!(
        "trained: {} steps, final loss {:.4}{}",
        report.steps_run,
        report.loss_log.last().map(|l| l.loss_total).unwrap_or(f64::NAN),
        report
            .best_val
            .map(|(s, f1)| format!(", best val verb-noun F1 {f1:.4} at step {s}"))
            .unwrap_or_default()
    );
    model.save(&a.out)?;
    let log_path = a
        .loss_log
        .clone()
        .unwrap_or_else(|| a.out.parent().unwrap_or(Path::new(".")).join("loss.csv"));
    write_loss_log(&log_path, &report.loss_log)?;
    println!("checkpoint -> {}", a.out.display());
    println!("loss log   -> {}", log_path.display());
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let cfg = resolve_config(&cli.config, &a.keys, cli.seed)?;
    if a.split != "val" && a.split != "test" {
        return Err(Error::Config(format!(
            "unknown split \"{}\" (expected val|test)",
            a.split
        )));
    }
    let model = EventFormer::load(&a.checkpoint)?;
    let corpus = load_split(&a.data, &a.split)?;
    let tau = a.keys.tau.unwrap_or(model.config.tau);
    let report = evaluate(&model, &corpus, &a.split, tau, &cfg.ks, cfg.averaging)?;
    print!("{}", render_table(&[(a.split.as_str(), &report.metrics)]));
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        println!("report -> {}", out.display());
    }
    Ok(())
}

fn load_or_init_model(
    checkpoint: &Option<PathBuf>,
    vocab: &Option<PathBuf>,
    cfg: &RunConfig,
    seed: u64,
) -> Result<EventFormer> {
    match checkpoint {
        Some(path) => EventFormer::load(path),
        None => {
            let vocab_path = vocab.as_ref().ok_or_else(|| {
                Error::Config("--vocab is required when no --checkpoint is given".into())
            })?;
            let vocab = Vocabulary::load(vocab_path)?;
            EventFormer::new(cfg.model.clone(), &vocab, seed)
        }
    }
}

fn read_single_chain(path: &Path) -> Result<crate::event_model::EventChain> {
    let text = std::fs::read_to_string(path)?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Data(format!("{} is empty", path.display())))?;
    chain_from_json(line)
}

fn cmd_predict(cli: &Cli, a: &PredictArgs) -> Result<()> {
    let cfg = resolve_config(&cli.config, &a.keys, cli.seed)?;
    let model = load_or_init_model(&a.checkpoint, &a.vocab, &cfg, cli.seed.unwrap_or(0))?;
    let chain = read_single_chain(&a.chain)?;
    let tau = a.keys.tau.unwrap_or(model.config.tau);
    let pred = model.predict(&chain, tau)?;
    println!("top-{} verbs:", a.top);
    for (rank, &v) in pred.verb_ranking.iter().take(a.top).enumerate() {
        let name = model.vocab.verbs.get(v).map(String::as_str).unwrap_or("?");
        println!("  {}. {name} (id {v})", rank + 1);
    }
    let nouns: Vec<String> = pred
        .nouns
        .iter()
        .map(|&n| model.vocab.nouns.get(n).cloned().unwrap_or_else(|| format!("id{n}")))
        .collect();
    println!(
        "nouns: {}",
        if nouns.is_empty() { "(none)".into() } else { nouns.join(", ") }
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct InspectLayer {
    layer: usize,
    graph_attention: Vec<Vec<f64>>,
    node_attention: Vec<Vec<f64>>,
}

#[derive(serde::Serialize)]
struct InspectDump {
    chain_id: String,
    node_labels: Vec<String>,
    graph_of: Vec<usize>,
    target_index: usize,
    layers: Vec<InspectLayer>,
    prediction: crate::model::Prediction,
}

fn mean_heads(mats: Vec<&Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    let h = mats.len() as f64;
    let rows = mats[0].len();
    let cols = mats[0][0].len();
    let mut out = vec![vec![0.0; cols]; rows];
    for m in mats {
        for i in 0..rows {
            for j in 0..cols {
                out[i][j] += m[i][j] / h;
            }
        }
    }
    out
}

fn ascii_heat(m: &[Vec<f64>], labels: &[String]) -> String {
    const SHADES: [char; 7] = [' ', '.', ':', '+', '*', '#', '@'];
    let mut s = String::new();
    for (i, row) in m.iter().enumerate() {
        let label = labels.get(i).map(String::as_str).unwrap_or("");
        let cells: String = row
            .iter()
            .map(|&v| {
                let idx = (v.clamp(0.0, 1.0) * (SHADES.len() - 1) as f64).round() as usize;
                SHADES[idx]
            })
            .collect();
        s.push_str(&format!("{label:>14} |{cells}|\n"));
    }
    s
}

fn cmd_inspect(cli: &Cli, a: &InspectArgs) -> Result<()> {
    let cfg = resolve_config(&cli.config, &a.keys, cli.seed)?;
    let model = load_or_init_model(&a.checkpoint, &a.vocab, &cfg, cli.seed.unwrap_or(0))?;
    let chain = read_single_chain(&a.chain)?;
    let binder = crate::numeric::Binder::new(&model.store, false);
    let out = model.forward(&chain, None, &binder, None, true)?;
    let traces = out.traces.as_ref().expect("traces requested");
    let layers: Vec<InspectLayer> = traces
        .iter()
        .enumerate()
        .map(|(li, heads)| InspectLayer {
            layer: li,
            graph_attention: mean_heads(heads.iter().map(|t| &t.s_g).collect()),
            node_attention: mean_heads(heads.iter().map(|t| &t.s_n).collect()),
        })
        .collect();
    let tau = a.keys.tau.unwrap_or(model.config.tau);
    let prediction = model.select(&out, tau);
    let dump = InspectDump {
        chain_id: chain.chain_id.clone(),
        node_labels: out.layout.labels.clone(),
        graph_of: out.layout.graph_of.clone(),
        target_index: out.target_index,
        layers,
        prediction,
    };
    if a.ascii {
        for layer in &dump.layers {
            println!("layer {} graph attention (rows: nodes, cols: graphs)", layer.layer);
            print!("{}", ascii_heat(&layer.graph_attention, &dump.node_labels));
        }
    }
    write_json(&a.out, &dump)?;
    println!("attention dump -> {}", a.out.display());
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<()> {
    let cfg = resolve_config(&cli.config, &a.keys, cli.seed)?;
    if a.graphs < 3 {
        return Err(Error::Config("gradcheck needs at least 3 graphs".into()));
    }
    let mut model_cfg = cfg.model.clone();
    model_cfg.d = a.dim;
    model_cfg.layers = 1;
    model_cfg.text_dim = (a.dim / 2).max(2);
    model_cfg.visual_dim = (a.dim / 2).max(2);
    model_cfg.ffn_dim = 2 * a.dim;
    model_cfg.gnn_hidden = a.dim;
    model_cfg.head_hidden = a.dim;
    model_cfg.mask_slots = 3;
    model_cfg.dropout = 0.0;
    let vocab = Vocabulary::new(
        (0..5).map(|i| format!("verb{i}")).collect(),
        (0..4).map(|i| format!("noun{i}")).collect(),
    )?;
    let mut model = EventFormer::new(model_cfg, &vocab, cli.seed.unwrap_or(0))?;
    let chain = probe_chain(a.graphs, model.config.visual_dim_effective());
    let weights = cfg.train.weights;
    let g = cfg.train.focal_g;
    let mut store = std::mem::take(&mut model.store);
    let report = grad_check(&mut store, a.tolerance, a.step, |binder| {
        let out = model.forward(&chain, None, binder, None, false)?;
        Ok(chain_loss(&out, &weights, g)?.0)
    })?;
    model.store = store;
    print!("{report}");
    if report.pass() {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "gradient check failed: max_rel_err {:.3e} > tolerance {:.1e}",
            report.max_rel_err, report.tolerance
        )))
    }
}

/// Deterministic chain for gradient probes: `graphs` events, 2 args each.
fn probe_chain(graphs: usize, feat_dim: usize) -> crate::event_model::EventChain {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let graphs_json: Vec<String> = (0..graphs)
        .map(|gi| {
            let feat: Vec<String> = (0..feat_dim)
                .map(|_| format!("{:.6}", crate::numeric::gauss(&mut rng) * 0.5))
                .collect();
            format!(
                r#"{{"trigger": {{"text": "verb{v}", "verb_id": {v}}}, "args": [
                    {{"text": "noun0", "noun_id": 0, "role": "subj", "coref": 0}},
                    {{"text": "noun{x}", "noun_id": {x}, "role": "obj", "coref": {x}, "feat": [{feats}]}}
                ]}}"#,
                v = gi % 5,
                x = 1 + gi % 3,
                feats = feat.join(",")
            )
        })
        .collect();
    chain_from_json(&format!(
        r#"{{"chain_id": "probe", "graphs": [{}], "target_index": {}}}"#,
        graphs_json.join(","),
        graphs - 1
    ))
    .expect("probe chain is well-formed")
}

fn cmd_params(cli: &Cli, a: &ParamsArgs) -> Result<()> {
    let cfg = resolve_config(&cli.config, &a.keys, cli.seed)?;
    let vocab = Vocabulary::new(
        (0..cfg.vocab_verbs).map(|i| format!("v{i}")).collect(),
        (0..cfg.vocab_nouns).map(|i| format!("n{i}")).collect(),
    )?;
    let model = EventFormer::new(cfg.model.clone(), &vocab, cli.seed.unwrap_or(0))?;
    println!("{}", model.param_count());
    Ok(())
}

fn cmd_ablate(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let cfg = resolve_config(&cli.config, &a.keys, cli.seed)?;
    let vocab = Vocabulary::load(&a.data.join("vocab.json"))?;
    let corpus = crate::synthetic::SyntheticCorpus {
        train: load_split(&a.data, "train")?,
        val: load_split(&a.data, "val")?,
        test: load_split(&a.data, "test")?,
        vocab,
    };
    let tau = a.keys.tau.unwrap_or(cfg.model.tau);
    let mut tc = cfg.train.clone();
    tc.stage = Stage::Posttrain;
    let report = match a.compare.as_str() {
        "gnn" => gnn_ablation(
            &corpus,
            &cfg.model,
            &tc,
            cli.seed.unwrap_or(1),
            &a.split,
            tau,
            &cfg.ks,
            cfg.averaging,
        )?,
        "stages" => {
            let seeds: Vec<u64> = a
                .seeds
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad seed \"{s}\"")))
                })
                .collect::<Result<_>>()?;
            let mut pre = cfg.train.clone();
            pre.stage = Stage::Pretrain;
            if let Some(s) = a.pre_steps {
                pre.max_steps = s;
            }
            stage_comparison(
                &corpus, &cfg.model, &pre, &tc, &seeds, &a.split, tau, &cfg.ks, cfg.averaging,
            )?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown comparison \"{other}\" (expected gnn|stages)"
            )))
        }
    };
    print!("{}", report.table());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        println!("report -> {}", out.display());
    }
    Ok(())
}

/// Oracle and first-order baseline verb accuracies for a generated corpus.
pub fn reference_scores(
    gen_cfg: &crate::synthetic::GeneratorConfig,
    corpus: &crate::synthetic::SyntheticCorpus,
) -> Result<(f64, f64)> {
    let oracle = RuleOracle::new(gen_cfg);
    let all: Vec<_> = corpus.all().cloned().collect();
    let oracle_acc = oracle.verb_accuracy(&all)?;
    let baseline = MarkovBaseline::fit(&corpus.train, gen_cfg.verbs);
    let results = baseline.score(&corpus.test)?;
    let baseline_acc = crate::evaluation::acc_at_k(&results, 1);
    Ok((oracle_acc, baseline_acc))
}
