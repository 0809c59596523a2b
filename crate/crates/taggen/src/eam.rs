//! Entity attention: rule-based entity recognition, co-occurrence graph,
//! GCN warm-up encoding, GAT refinement, and token-to-entity association.
//!
//! Recognition is capitalized-run + gazetteer matching behind a small
//! interface so a real NER system can be swapped in. Node surfaces are
//! lowercased punctuation-stripped token runs; entities co-occurring in one
//! tweet form a clique in the graph.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::corpus::{token_core, Tweet};
use crate::{Real, Tsr};
use numcore::tensor::BoolMat;
use numcore::{NumError, Var};

/// Placeholder tokens produced by normalization; all-caps, so they would
/// otherwise be recognized as capitalized runs.
const NORMALIZATION_PLACEHOLDERS: [&str; 3] = ["URL", "MENTION", "DIGIT"];

#[derive(Clone, Debug, Default)]
pub struct Gazetteer {
    entries: Vec<Vec<String>>,
}

impl Gazetteer {
    pub fn new(surfaces: &[&str]) -> Self {
        let entries = surfaces
            .iter()
            .map(|s| {
                s.split_whitespace()
                    .map(|t| token_core(t).to_lowercase())
                    .filter(|t| !t.is_empty())
                    .collect()
            })
            .filter(|e: &Vec<String>| !e.is_empty())
            .collect();
        Self { entries }
    }

    /// One entity per line; `#` lines are comments.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let body = std::fs::read_to_string(path)?;
        let lines: Vec<&str> = body
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Ok(Self::new(&lines))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A recognized mention: node surface plus the token span covering it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityMention {
    pub surface: String,
    pub start: usize,
    pub end: usize, // exclusive token index
}

fn is_capitalized(token: &str) -> bool {
    let core = token_core(token);
    if core.is_empty() || NORMALIZATION_PLACEHOLDERS.contains(&core) {
        return false;
    }
    core.chars()
        .next()
        .map(|c| c.is_uppercase())
        .unwrap_or(false)
}

/// Maximal runs of capitalized tokens plus gazetteer matches over the
/// original-cased whitespace tokens. Overlapping hits all survive; surfaces
/// are lowercased cores joined by single spaces.
pub fn recognize_entities(tokens: &[&str], gazetteer: &Gazetteer) -> Vec<EntityMention> {
    let mut mentions = Vec::new();
    let cores: Vec<String> = tokens
        .iter()
        .map(|t| token_core(t).to_lowercase())
        .collect();

    let mut i = 0;
    while i < tokens.len() {
        if is_capitalized(tokens[i]) {
            let start = i;
            while i < tokens.len() && is_capitalized(tokens[i]) {
                i += 1;
            }
            let surface = cores[start..i]
                .iter()
                .filter(|c| !c.is_empty())
                .cloned()
                .collect::<Vec<_>>()
                .join(" ");
            if !surface.is_empty() {
                mentions.push(EntityMention {
                    surface,
                    start,
                    end: i,
                });
            }
        } else {
            i += 1;
        }
    }

    for entry in &gazetteer.entries {
        let n = entry.len();
        if n == 0 || n > cores.len() {
            continue;
        }
        for start in 0..=(cores.len() - n) {
            if cores[start..start + n] == entry[..] {
                let mention = EntityMention {
                    surface: entry.join(" "),
                    start,
                    end: start + n,
                };
                if !mentions.contains(&mention) {
                    mentions.push(mention);
                }
            }
        }
    }
    mentions
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct EntitySpan {
    pub node: usize,
    pub start: usize,
    pub end: usize,
}

/// Entity co-occurrence graph over a corpus. Adjacency is symmetric 0/1 with
/// no stored self-loops; layers add them as needed.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EntityGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub tweet_entities: BTreeMap<String, Vec<EntitySpan>>,
    #[serde(skip)]
    node_index: HashMap<String, usize>,
    #[serde(skip)]
    edge_set: HashSet<(usize, usize)>,
}

impl EntityGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_id(&self, surface: &str) -> Option<usize> {
        self.node_index.get(surface).copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edge_set.contains(&key)
    }

    fn rebuild_indexes(&mut self) {
        self.node_index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        self.edge_set = self
            .edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
    }

    /// Dense 0/1 adjacency (no self-loops).
    pub fn adjacency(&self) -> Tsr {
        let n = self.node_count();
        let mut a = Tsr::zeros(&[n.max(1), n.max(1)]);
        for &(i, j) in &self.edges {
            *a.at_mut(i, j) = 1.0;
            *a.at_mut(j, i) = 1.0;
        }
        a
    }

    /// Neighborhood mask with self-loops: true at (i, j) iff j is i itself or
    /// a first-order neighbor.
    pub fn neighborhood_mask(&self) -> BoolMat {
        let n = self.node_count();
        let mut m = BoolMat::new(n, n, vec![false; n * n]).expect("square mask");
        for i in 0..n {
            m.set(i, i, true);
        }
        for &(i, j) in &self.edges {
            m.set(i, j, true);
            m.set(j, i, true);
        }
        m
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        std::fs::write(path, serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let mut graph: EntityGraph = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        graph.rebuild_indexes();
        Ok(graph)
    }
}

/// One node per unique entity; the entities of each tweet form a clique.
/// An entity-free corpus yields an empty graph.
pub fn build_graph(tweets: &[Tweet], gazetteer: &Gazetteer) -> EntityGraph {
    let mut graph = EntityGraph::default();
    for tweet in tweets {
        let tokens: Vec<&str> = tweet.processed.split_whitespace().collect();
        let mentions = recognize_entities(&tokens, gazetteer);
        let mut spans = Vec::new();
        let mut tweet_nodes: Vec<usize> = Vec::new();
        for m in &mentions {
            let id = match graph.node_index.get(&m.surface) {
                Some(&id) => id,
                None => {
                    let id = graph.nodes.len();
                    graph.nodes.push(m.surface.clone());
                    graph.node_index.insert(m.surface.clone(), id);
                    id
                }
            };
            spans.push(EntitySpan {
                node: id,
                start: m.start,
                end: m.end,
            });
            if !tweet_nodes.contains(&id) {
                tweet_nodes.push(id);
            }
        }
        for (a, &i) in tweet_nodes.iter().enumerate() {
            for &j in &tweet_nodes[a + 1..] {
                let key = (i.min(j), i.max(j));
                if graph.edge_set.insert(key) {
                    graph.edges.push(key);
                }
            }
        }
        if !spans.is_empty() {
            graph.tweet_entities.insert(tweet.id.clone(), spans);
        }
    }
    graph
}

/// Per-token sets of node indices: token i maps to node j iff i lies within a
/// recognized span of entity j in this tweet. Recognition runs on the tweet
/// itself, so unseen tweets map onto existing nodes by surface.
pub fn token_entity_map(
    processed: &str,
    graph: &EntityGraph,
    gazetteer: &Gazetteer,
) -> Vec<Vec<usize>> {
    let tokens: Vec<&str> = processed.split_whitespace().collect();
    let mut map = vec![Vec::new(); tokens.len()];
    if graph.is_empty() {
        return map;
    }
    for mention in recognize_entities(&tokens, gazetteer) {
        if let Some(node) = graph.node_id(&mention.surface) {
            for slot in map.iter_mut().take(mention.end).skip(mention.start) {
                if !slot.contains(&node) {
                    slot.push(node);
                }
            }
        }
    }
    map
}

/// Symmetric-normalized adjacency with self-loops:
/// `D^(-1/2) (A + I) D^(-1/2)` where `D` is the degree matrix of `A + I`.
pub fn normalized_adjacency(adj: &Tsr) -> Result<Tsr, NumError> {
    let (n, m) = adj.dims2("normalized_adjacency")?;
    if n != m {
        return Err(NumError::BadShape {
            op: "normalized_adjacency",
            expected: "square adjacency",
            shape: adj.shape().to_vec(),
        });
    }
    let mut hat = adj.clone();
    for i in 0..n {
        *hat.at_mut(i, i) += 1.0;
    }
    let inv_sqrt_deg: Vec<Real> = (0..n)
        .map(|i| {
            let deg: Real = (0..n).map(|j| hat.at(i, j)).sum();
            1.0 / deg.sqrt()
        })
        .collect();
    let mut out = Tsr::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            *out.at_mut(i, j) = inv_sqrt_deg[i] * hat.at(i, j) * inv_sqrt_deg[j];
        }
    }
    Ok(out)
}

/// One graph-convolution layer: `relu(D^(-1/2) (A+I) D^(-1/2) H W)`.
pub fn gcn_layer<'t>(h: Var<'t, Real>, adj: &Tsr, w: Var<'t, Real>) -> Result<Var<'t, Real>, NumError> {
    let norm = normalized_adjacency(adj)?;
    let s = h.tape().constant(norm);
    Ok(s.matmul(h)?.matmul(w)?.relu())
}

/// One graph-attention layer over neighborhoods `M_i = neighbors(i) + {i}`:
/// scores `(W_Q h_i) . (W_K h_j)`, softmax over `M_i`, then
/// `relu(sum_j alpha_ij W h_j)`.
pub fn gat_layer<'t>(
    h: Var<'t, Real>,
    neighborhood: &Rc<BoolMat>,
    wq: Var<'t, Real>,
    wk: Var<'t, Real>,
    w: Var<'t, Real>,
) -> Result<Var<'t, Real>, NumError> {
    let q = h.matmul(wq)?;
    let k = h.matmul(wk)?;
    let scores = q.matmul(k.transpose()?)?;
    let alpha = scores.masked_softmax(Rc::clone(neighborhood))?;
    Ok(alpha.matmul(h.matmul(w)?)?.relu())
}

/// Attention coefficients of a GAT layer, for inspection and invariants.
pub fn gat_attention<'t>(
    h: Var<'t, Real>,
    neighborhood: &Rc<BoolMat>,
    wq: Var<'t, Real>,
    wk: Var<'t, Real>,
) -> Result<Var<'t, Real>, NumError> {
    let q = h.matmul(wq)?;
    let k = h.matmul(wk)?;
    q.matmul(k.transpose()?)?.masked_softmax(Rc::clone(neighborhood))
}

/// Parameter names for the entity encoder.
pub fn eam_param_names(gcn_layers: usize, gat_layers: usize) -> Vec<String> {
    let mut names = vec!["eam.h0".to_string()];
    for l in 0..gcn_layers {
        names.push(format!("eam.gcn{l}.w"));
    }
    for l in 0..gat_layers {
        names.push(format!("eam.gat{l}.wq"));
        names.push(format!("eam.gat{l}.wk"));
        names.push(format!("eam.gat{l}.w"));
    }
    names
}

/// Register `eam.*` parameters for a graph with `n` nodes.
pub fn init_eam_params(
    store: &mut numcore::ParamStore<Real>,
    n_nodes: usize,
    d: usize,
    gcn_layers: usize,
    gat_layers: usize,
    rng: &mut impl rand::Rng,
) -> Result<(), NumError> {
    if n_nodes == 0 {
        return Ok(());
    }
    store.insert("eam.h0", numcore::init::xavier_uniform(n_nodes, d, rng))?;
    for l in 0..gcn_layers {
        store.insert(format!("eam.gcn{l}.w"), numcore::init::xavier_uniform(d, d, rng))?;
    }
    for l in 0..gat_layers {
        store.insert(format!("eam.gat{l}.wq"), numcore::init::xavier_uniform(d, d, rng))?;
        store.insert(format!("eam.gat{l}.wk"), numcore::init::xavier_uniform(d, d, rng))?;
        store.insert(format!("eam.gat{l}.w"), numcore::init::xavier_uniform(d, d, rng))?;
    }
    Ok(())
}

/// Full encoding pipeline: `H0` through the GCN layers, then the GAT layers.
/// Empty graphs yield `None` (no entity contribution downstream).
pub fn encode_graph<'t>(
    ctx: &numcore::Bind<'t, Real>,
    graph: &EntityGraph,
    gcn_layers: usize,
    gat_layers: usize,
) -> Result<Option<Var<'t, Real>>, NumError> {
    if graph.is_empty() {
        return Ok(None);
    }
    let adj = graph.adjacency();
    let neighborhood = Rc::new(graph.neighborhood_mask());
    let mut h = ctx.p("eam.h0");
    for l in 0..gcn_layers {
        h = gcn_layer(h, &adj, ctx.p(&format!("eam.gcn{l}.w")))?;
    }
    for l in 0..gat_layers {
        h = gat_layer(
            h,
            &neighborhood,
            ctx.p(&format!("eam.gat{l}.wq")),
            ctx.p(&format!("eam.gat{l}.wk")),
            ctx.p(&format!("eam.gat{l}.w")),
        )?;
    }
    Ok(Some(h))
}
