//! Layered run configuration with per-key provenance.
//!
//! Precedence: command-line flags > `EVENTFORMER_*` environment variables >
//! config file (TOML or JSON) > built-in defaults. Every key resolves to
//! exactly one source, recorded in the provenance map; unknown file keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::encoding::ProviderMode;
use crate::error::{Error, Result};
use crate::evaluation::Averaging;
use crate::gnn::GnnKind;
use crate::model::ModelConfig;
use crate::synthetic::{GeneratorConfig, Rule};
use crate::training::{Stage, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
}

/// Fully resolved configuration for a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub gen: GeneratorConfig,
    pub averaging: Averaging,
    /// K values for Acc@K.
    pub ks: Vec<usize>,
    /// Vocabulary sizes used by `params` when no corpus is at hand.
    pub vocab_verbs: usize,
    pub vocab_nouns: usize,
    provenance: BTreeMap<String, Source>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            gen: GeneratorConfig::default(),
            averaging: Averaging::Macro,
            ks: vec![1, 5],
            vocab_verbs: 2284,
            vocab_nouns: 6000,
            provenance: BTreeMap::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value \"{v}\" for key {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean \"{v}\" for key {key}"))),
    }
}

impl RunConfig {
    /// Load with precedence file < env < flags. `flags` are (key, value)
    /// pairs already extracted from the command line.
    pub fn resolve(
        file: Option<&Path>,
        env: &[(String, String)],
        flags: &[(String, String)],
    ) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            for (k, v) in flatten_config_file(path)? {
                cfg.apply(&k, &v, Source::File)?;
            }
        }
        for (k, v) in env {
            cfg.apply(k, v, Source::Env)?;
        }
        for (k, v) in flags {
            cfg.apply(k, v, Source::Flag)?;
        }
        Ok(cfg)
    }

    /// Read `EVENTFORMER_*` variables from the process environment into
    /// (key, value) pairs; unknown names are rejected.
    pub fn env_pairs() -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (name, value) in std::env::vars() {
            if let Some(rest) = name.strip_prefix("EVENTFORMER_") {
                let key = env_name_to_key(rest)
                    .ok_or_else(|| Error::Config(format!("unknown environment variable {name}")))?;
                out.push((key, value));
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn source_of(&self, key: &str) -> Source {
        self.provenance.get(key).copied().unwrap_or(Source::Default)
    }

    pub fn provenance(&self) -> &BTreeMap<String, Source> {
        &self.provenance
    }

    /// Apply one dotted-key assignment. Unknown keys are errors.
    pub fn apply(&mut self, key: &str, v: &str, source: Source) -> Result<()> {
        match key {
            "model.d" => self.model.d = parse(key, v)?,
            "model.layers" => self.model.layers = parse(key, v)?,
            "model.heads" => self.model.heads = parse(key, v)?,
            "model.ffn_dim" => self.model.ffn_dim = parse(key, v)?,
            "model.dropout" => self.model.dropout = parse(key, v)?,
            "model.mask_slots" => self.model.mask_slots = parse(key, v)?,
            "model.head_hidden" => self.model.head_hidden = parse(key, v)?,
            "model.ce_scale" => self.model.ce_scale = parse(key, v)?,
            "model.tau" => self.model.tau = parse(key, v)?,
            "attention.shared_graph_attention" => {
                self.model.shared_graph_attention = parse_bool(key, v)?
            }
            "gnn.kind" => self.model.gnn_kind = GnnKind::parse(v)?,
            "gnn.layers" => self.model.gnn_layers = parse(key, v)?,
            "gnn.heads" => self.model.gnn_heads = parse(key, v)?,
            "gnn.hidden" => self.model.gnn_hidden = parse(key, v)?,
            "gnn.use_role_embeddings" => self.model.use_role_embeddings = parse_bool(key, v)?,
            "embedding.provider" => {
                self.model.provider = match v {
                    "stub" => ProviderMode::Stub,
                    "file" => ProviderMode::File,
                    _ => {
                        return Err(Error::Config(format!(
                            "unknown provider \"{v}\" (expected stub|file)"
                        )))
                    }
                }
            }
            "embedding.text_dim" => self.model.text_dim = parse(key, v)?,
            "embedding.visual_dim" => self.model.visual_dim = parse(key, v)?,
            "embedding.seed" => self.model.embed_seed = parse(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, v)?,
            "train.batch" => self.train.batch = parse(key, v)?,
            "train.max_steps" => self.train.max_steps = parse(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,
            "train.dropout" => self.train.dropout = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.stage" => self.train.stage = Stage::parse(v)?,
            "train.pretrain_mask_rate" => self.train.pretrain_mask_rate = parse(key, v)?,
            "train.alpha" => self.train.weights.alpha = parse(key, v)?,
            "train.beta" => self.train.weights.beta = parse(key, v)?,
            "train.gamma" => self.train.weights.gamma = parse(key, v)?,
            "train.focal_g" => self.train.focal_g = parse(key, v)?,
            "train.eval_every" => self.train.eval_every = parse(key, v)?,
            "metrics.averaging" => self.averaging = Averaging::parse(v)?,
            "metrics.ks" => {
                self.ks = v
                    .split(',')
                    .map(|s| parse::<usize>(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "gen.rule" => self.gen.rule = Rule::parse(v)?,
            "gen.chains" => self.gen.num_chains = parse(key, v)?,
            "gen.verbs" => self.gen.verbs = parse(key, v)?,
            "gen.entities" => self.gen.entities = parse(key, v)?,
            "gen.min_len" => self.gen.min_len = parse(key, v)?,
            "gen.max_len" => self.gen.max_len = parse(key, v)?,
            "gen.noise_rate" => self.gen.noise_rate = parse(key, v)?,
            "gen.seed" => self.gen.seed = parse(key, v)?,
            "gen.feat_dim" => self.gen.feat_dim = parse(key, v)?,
            "gen.feat_jitter" => self.gen.feat_jitter = parse(key, v)?,
            "gen.args_dist" => self.gen.args_per_event = parse_args_dist(v)?,
            "vocab.verbs" => self.vocab_verbs = parse(key, v)?,
            "vocab.nouns" => self.vocab_nouns = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key: {key}"))),
        }
        self.provenance.insert(key.to_string(), source);
        Ok(())
    }
}

/// "2:0.5,3:0.5" -> [(2, 0.5), (3, 0.5)]
fn parse_args_dist(v: &str) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for part in v.split(',') {
        let (k, p) = part
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad args_dist entry \"{part}\" (want count:prob)")))?;
        out.push((parse("gen.args_dist", k.trim())?, parse("gen.args_dist", p.trim())?));
    }
    Ok(out)
}

/// Section and key from an env suffix: `TRAIN_MAX_STEPS` -> `train.max_steps`.
fn env_name_to_key(rest: &str) -> Option<String> {
    let (section, key) = rest.split_once('_')?;
    let candidate = format!("{}.{}", section.to_lowercase(), key.to_lowercase());
    KNOWN_KEYS.contains(&candidate.as_str()).then_some(candidate)
}

pub const KNOWN_KEYS: &[&str] = &[
    "model.d",
    "model.layers",
    "model.heads",
    "model.ffn_dim",
    "model.dropout",
    "model.mask_slots",
    "model.head_hidden",
    "model.ce_scale",
    "model.tau",
    "attention.shared_graph_attention",
    "gnn.kind",
    "gnn.layers",
    "gnn.heads",
    "gnn.hidden",
    "gnn.use_role_embeddings",
    "embedding.provider",
    "embedding.text_dim",
    "embedding.visual_dim",
    "embedding.seed",
    "train.lr",
    "train.weight_decay",
    "train.batch",
    "train.max_steps",
    "train.max_epochs",
    "train.dropout",
    "train.seed",
    "train.stage",
    "train.pretrain_mask_rate",
    "train.alpha",
    "train.beta",
    "train.gamma",
    "train.focal_g",
    "train.eval_every",
    "metrics.averaging",
    "metrics.ks",
    "gen.rule",
    "gen.chains",
    "gen.verbs",
    "gen.entities",
    "gen.min_len",
    "gen.max_len",
    "gen.noise_rate",
    "gen.seed",
    "gen.feat_dim",
    "gen.feat_jitter",
    "gen.args_dist",
    "vocab.verbs",
    "vocab.nouns",
];

/// Flatten a TOML (or JSON) config file to dotted string pairs.
fn flatten_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let value: toml::Value = if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value = serde_json::from_str(&text)?;
        let toml_text = toml::to_string(&json)
            .map_err(|e| Error::Config(format!("cannot interpret JSON config: {e}")))?;
        toml_text.parse().map_err(Error::Toml)?
    } else {
        text.parse().map_err(Error::Toml)?
    };
    let mut out = Vec::new();
    flatten_value("", &value, &mut out)?;
    Ok(out)
}

fn flatten_value(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) -> Result<()> {
    match v {
        toml::Value::Table(t) => {
            for (k, vv) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_value(&key, vv, out)?;
            }
            Ok(())
        }
        toml::Value::String(s) => {
            out.push((prefix.to_string(), s.clone()));
            Ok(())
        }
        toml::Value::Integer(i) => {
            out.push((prefix.to_string(), i.to_string()));
            Ok(())
        }
        toml::Value::Float(f) => {
            out.push((prefix.to_string(), format!("{f}")));
            Ok(())
        }
        toml::Value::Boolean(b) => {
            out.push((prefix.to_string(), b.to_string()));
            Ok(())
        }
        toml::Value::Array(items) => {
            // comma-joined scalar list (metrics.ks, gen.args_dist entries)
            let parts: Vec<String> = items
                .iter()
                .map(|i| match i {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(n) => Ok(n.to_string()),
                    toml::Value::Float(f) => Ok(format!("{f}")),
                    _ => Err(Error::Config(format!("unsupported array entry under {prefix}"))),
                })
                .collect::<Result<_>>()?;
            out.push((prefix.to_string(), parts.join(",")));
            Ok(())
        }
        _ => Err(Error::Config(format!("unsupported value type under {prefix}"))),
    }
}
