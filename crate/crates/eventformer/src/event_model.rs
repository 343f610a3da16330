//! Event graphs, chains, vocabularies, and corpus validation.
//!
//! An event graph holds exactly one trigger (verb) node plus 1..=8 argument
//! (noun) nodes, each connected to the trigger by a single role-labeled edge.
//! A chain is an ordered sequence of 3..=50 graphs with a designated
//! prediction target. Corpora are JSON-lines, one chain per line.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coreference index carried by trigger nodes, which do not participate in
/// coreference.
pub const COREF_SENTINEL: usize = usize::MAX;

/// Chains shorter than this are invalid.
pub const MIN_CHAIN_LEN: usize = 3;
/// Maximum sequence length.
pub const MAX_CHAIN_LEN: usize = 50;
/// Validation cap on arguments per event.
pub const MAX_ARGS: usize = 8;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Role of the edge connecting an argument to its trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgRole {
    Subj,
    Obj,
    Instrument,
    Location,
    Other,
}

impl ArgRole {
    pub const ALL: [ArgRole; 5] = [
        ArgRole::Subj,
        ArgRole::Obj,
        ArgRole::Instrument,
        ArgRole::Location,
        ArgRole::Other,
    ];

    pub fn index(self) -> usize {
        match self {
            ArgRole::Subj => 0,
            ArgRole::Obj => 1,
            ArgRole::Instrument => 2,
            ArgRole::Location => 3,
            ArgRole::Other => 4,
        }
    }
}

impl fmt::Display for ArgRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArgRole::Subj => "subj",
            ArgRole::Obj => "obj",
            ArgRole::Instrument => "instrument",
            ArgRole::Location => "location",
            ArgRole::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Trigger,
    Argument,
}

/// One node of an event graph: the trigger or an argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Unique within the whole chain.
    pub node_id: usize,
    pub kind: NodeKind,
    pub text: String,
    /// Index into the verb vocabulary for triggers, noun vocabulary for args.
    pub lexeme_id: usize,
    /// Entity identity shared by coreferent argument nodes; triggers carry
    /// [`COREF_SENTINEL`].
    pub coref_index: usize,
    /// Optional precomputed visual embedding.
    pub raw_feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub role: ArgRole,
}

/// One event: a trigger node plus role-edged argument nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EventGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl EventGraph {
    pub fn trigger(&self) -> Option<&Node> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Trigger)
    }

    pub fn arguments(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Argument)
    }

    /// Role of the edge between the trigger and the given argument node.
    pub fn role_of(&self, arg_id: usize) -> Option<ArgRole> {
        self.edges
            .iter()
            .find(|e| e.src == arg_id || e.dst == arg_id)
            .map(|e| e.role)
    }
}

/// Ordered sequence of event graphs with a designated prediction target.
#[derive(Debug, Clone, PartialEq)]
pub struct EventChain {
    pub chain_id: String,
    pub graphs: Vec<EventGraph>,
    pub target_index: usize,
}

impl EventChain {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.graphs.iter().map(|g| g.nodes.len()).sum()
    }
}

/// Index-stable verb and noun vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub verbs: Vec<String>,
    pub nouns: Vec<String>,
}

impl Vocabulary {
    pub fn new(verbs: Vec<String>, nouns: Vec<String>) -> Result<Self> {
        let v = Vocabulary { verbs, nouns };
        v.check_duplicates()?;
        Ok(v)
    }

    fn check_duplicates(&self) -> Result<()> {
        for (label, list) in [("verb", &self.verbs), ("noun", &self.nouns)] {
            let mut seen = HashSet::new();
            for w in list {
                if !seen.insert(w) {
                    return Err(Error::Data(format!("duplicate {label} in vocabulary: {w}")));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let v: Vocabulary = serde_json::from_str(&text)?;
        v.check_duplicates()?;
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Wire format (JSON-lines corpus)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TriggerRecord {
    text: String,
    verb_id: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArgRecord {
    text: String,
    noun_id: usize,
    role: ArgRole,
    coref: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    feat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    trigger: TriggerRecord,
    args: Vec<ArgRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainRecord {
    chain_id: String,
    graphs: Vec<GraphRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_index: Option<usize>,
}

impl From<&EventChain> for ChainRecord {
    fn from(chain: &EventChain) -> Self {
        ChainRecord {
            chain_id: chain.chain_id.clone(),
            graphs: chain
                .graphs
                .iter()
                .map(|g| GraphRecord {
                    trigger: g
                        .trigger()
                        .map(|t| TriggerRecord {
                            text: t.text.clone(),
                            verb_id: t.lexeme_id,
                        })
                        .unwrap_or(TriggerRecord {
                            text: String::new(),
                            verb_id: 0,
                        }),
                    args: g
                        .arguments()
                        .map(|a| ArgRecord {
                            text: a.text.clone(),
                            noun_id: a.lexeme_id,
                            role: g.role_of(a.node_id).unwrap_or(ArgRole::Other),
                            coref: a.coref_index,
                            feat: a.raw_feature.clone(),
                        })
                        .collect(),
                })
                .collect(),
            target_index: Some(chain.target_index),
        }
    }
}

impl ChainRecord {
    /// Node ids are assigned sequentially chain-wide; each graph becomes a
    /// star with trigger-argument role edges.
    fn into_chain(self) -> EventChain {
        let mut graphs = Vec::with_capacity(self.graphs.len());
        let mut next_id = 0usize;
        let n_graphs = self.graphs.len();
        for g in self.graphs {
            let trig_id = next_id;
            let mut nodes = vec![Node {
                node_id: trig_id,
                kind: NodeKind::Trigger,
                text: g.trigger.text,
                lexeme_id: g.trigger.verb_id,
                coref_index: COREF_SENTINEL,
                raw_feature: None,
            }];
            next_id += 1;
            let mut edges = Vec::with_capacity(g.args.len());
            for a in g.args {
                nodes.push(Node {
                    node_id: next_id,
                    kind: NodeKind::Argument,
                    text: a.text,
                    lexeme_id: a.noun_id,
                    coref_index: a.coref,
                    raw_feature: a.feat,
                });
                edges.push(Edge {
                    src: trig_id,
                    dst: next_id,
                    role: a.role,
                });
                next_id += 1;
            }
            graphs.push(EventGraph { nodes, edges });
        }
        EventChain {
            chain_id: self.chain_id,
            target_index: self.target_index.unwrap_or(n_graphs.saturating_sub(1)),
            graphs,
        }
    }
}

pub fn chain_to_json(chain: &EventChain) -> Result<String> {
    Ok(serde_json::to_string(&ChainRecord::from(chain))?)
}

pub fn chain_from_json(line: &str) -> Result<EventChain> {
    let rec: ChainRecord = serde_json::from_str(line)?;
    Ok(rec.into_chain())
}

/// Read a JSON-lines corpus, one chain per non-empty line.
pub fn read_corpus(path: &Path) -> Result<Vec<EventChain>> {
    let f = std::fs::File::open(path)?;
    let mut chains = Vec::new();
    for (lineno, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let chain = chain_from_json(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        chains.push(chain);
    }
    Ok(chains)
}

pub fn write_corpus(path: &Path, chains: &[EventChain]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for chain in chains {
        writeln!(f, "{}", chain_to_json(chain)?)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Check every type invariant; violations are data, not failures. Pure and
/// idempotent: the same chain always yields the same list.
pub fn validate_chain(chain: &EventChain) -> Vec<String> {
    let mut v = Vec::new();
    let n = chain.len();
    if n < MIN_CHAIN_LEN {
        v.push(format!("chain length {n} < {MIN_CHAIN_LEN}"));
    }
    if n > MAX_CHAIN_LEN {
        v.push(format!("chain length {n} > {MAX_CHAIN_LEN}"));
    }
    if chain.target_index >= n && n > 0 {
        v.push(format!(
            "target_index {} out of range for {n} graphs",
            chain.target_index
        ));
    }
    let mut seen_ids = HashSet::new();
    for node in chain.graphs.iter().flat_map(|g| &g.nodes) {
        if !seen_ids.insert(node.node_id) {
            v.push(format!("duplicate node_id {}", node.node_id));
        }
    }
    for (i, g) in chain.graphs.iter().enumerate() {
        let triggers: Vec<&Node> = g.nodes.iter().filter(|n| n.kind == NodeKind::Trigger).collect();
        if triggers.len() != 1 {
            v.push(format!("graph {i}: trigger count {}", triggers.len()));
        }
        let args: Vec<&Node> = g.arguments().collect();
        if args.is_empty() {
            v.push(format!("graph {i}: argument count 0 < 1"));
        }
        if args.len() > MAX_ARGS {
            v.push(format!("graph {i}: argument count {} > {MAX_ARGS}", args.len()));
        }
        for t in &triggers {
            if t.coref_index != COREF_SENTINEL {
                v.push(format!("graph {i}: trigger node {} has a coreference index", t.node_id));
            }
        }
        let ids: HashSet<usize> = g.nodes.iter().map(|n| n.node_id).collect();
        let trig_ids: HashSet<usize> = triggers.iter().map(|t| t.node_id).collect();
        for e in &g.edges {
            if e.src == e.dst {
                v.push(format!("graph {i}: self-loop on node {}", e.src));
            }
            for end in [e.src, e.dst] {
                if !ids.contains(&end) {
                    v.push(format!("graph {i}: edge references unknown node {end}"));
                }
            }
            let touches_trigger = trig_ids.contains(&e.src) || trig_ids.contains(&e.dst);
            if !touches_trigger && ids.contains(&e.src) && ids.contains(&e.dst) {
                v.push(format!(
                    "graph {i}: edge {}->{} does not connect trigger and argument",
                    e.src, e.dst
                ));
            }
        }
        for a in &args {
            let k = g
                .edges
                .iter()
                .filter(|e| e.src == a.node_id || e.dst == a.node_id)
                .count();
            if k != 1 {
                v.push(format!("graph {i}: argument node {} has {k} role edges", a.node_id));
            }
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CorpusStats {
    pub chains: usize,
    pub graphs: usize,
    pub nodes: usize,
    pub arguments: usize,
    pub mean_args_per_event: f64,
    /// Verb lexeme id -> occurrence count, descending by count then id.
    pub verb_freq: Vec<(usize, usize)>,
    pub noun_freq: Vec<(usize, usize)>,
}

pub fn chain_stats(corpus: &[EventChain]) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::Data("chain_stats requires a non-empty corpus".into()));
    }
    let mut graphs = 0usize;
    let mut nodes = 0usize;
    let mut arguments = 0usize;
    let mut verb_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut noun_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for chain in corpus {
        graphs += chain.len();
        for g in &chain.graphs {
            nodes += g.nodes.len();
            for node in &g.nodes {
                match node.kind {
                    NodeKind::Trigger => *verb_counts.entry(node.lexeme_id).or_default() += 1,
                    NodeKind::Argument => {
                        arguments += 1;
                        *noun_counts.entry(node.lexeme_id).or_default() += 1;
                    }
                }
            }
        }
    }
    let sorted = |m: BTreeMap<usize, usize>| {
        let mut v: Vec<(usize, usize)> = m.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    };
    Ok(CorpusStats {
        chains: corpus.len(),
        graphs,
        nodes,
        arguments,
        mean_args_per_event: arguments as f64 / graphs as f64,
        verb_freq: sorted(verb_counts),
        noun_freq: sorted(noun_counts),
    })
}
