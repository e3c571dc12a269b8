//! Knowledge graphs and their token-level representations.
//!
//! A [`KnowledgeGraph`] is a directed labeled multigraph over entities. Splitting
//! every entity into one node per label token gives a [`TokenGraph`] (a directed
//! hypergraph whose arcs connect token sets), and turning every hyper-arc into a
//! node of its own gives the bipartite [`IncidenceGraph`] consumed by the encoder.
//!
//! Node order in the incidence graph is fixed: token nodes first, grouped by
//! entity in vertex order, then one fact node per arc in arc order.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{contract, Error, Result};

/// One arc of a knowledge graph: `subject --relation--> object`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub subject: usize,
    pub relation: String,
    pub object: usize,
}

/// Directed labeled multigraph. Vertex and arc ids are positions in the
/// `entities` and `facts` lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    facts: Vec<Fact>,
}

impl KnowledgeGraph {
    pub fn new(entities: Vec<String>, facts: Vec<Fact>) -> Result<Self> {
        for (i, f) in facts.iter().enumerate() {
            contract!(
                f.subject < entities.len() && f.object < entities.len(),
                "fact {i} ({} -> {}) refers to a missing entity; graph has {} entities",
                f.subject,
                f.object,
                entities.len()
            );
        }
        Ok(Self { entities, facts })
    }

    /// Convenience constructor from `(subject, relation, object)` triples.
    pub fn from_triples<S: Into<String>>(
        entities: impl IntoIterator<Item = S>,
        triples: &[(usize, &str, usize)],
    ) -> Result<Self> {
        let facts = triples
            .iter()
            .map(|&(s, r, o)| Fact {
                subject: s,
                relation: r.to_string(),
                object: o,
            })
            .collect();
        Self::new(entities.into_iter().map(Into::into).collect(), facts)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    /// Largest undirected diameter (in arcs) over the connected components
    /// of the entity-level graph.
    pub fn largest_diameter(&self) -> usize {
        let n = self.entities.len();
        let mut adj = vec![Vec::new(); n];
        for f in &self.facts {
            if f.subject != f.object {
                adj[f.subject].push(f.object);
                adj[f.object].push(f.subject);
            }
        }
        (0..n)
            .map(|s| bfs_distances(&adj, s).into_iter().flatten().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }
}

/// Splits entity names into tokens.
pub trait LabelTokenizer {
    fn tokenize_label(&self, label: &str) -> Vec<String>;
}

impl<F> LabelTokenizer for F
where
    F: Fn(&str) -> Vec<String>,
{
    fn tokenize_label(&self, label: &str) -> Vec<String> {
        self(label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenNode {
    pub label: String,
    /// Vertex of the knowledge graph this token was split from.
    pub entity: usize,
    /// 0-based token position inside the entity name.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperArc {
    pub relation: String,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
}

/// Directed hypergraph with one node per entity token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGraph {
    nodes: Vec<TokenNode>,
    arcs: Vec<HyperArc>,
    /// `same[n]` lists `(n', p)` for every other node `n'` of the same entity,
    /// where `p = position(n') - position(n)`.
    same: Vec<Vec<(usize, i64)>>,
    entity_count: usize,
}

impl TokenGraph {
    pub fn nodes(&self) -> &[TokenNode] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[HyperArc] {
        &self.arcs
    }

    pub fn same(&self, node: usize) -> &[(usize, i64)] {
        &self.same[node]
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }
}

/// Split every entity of `kg` into one node per token of its name.
pub fn build_token_graph(kg: &KnowledgeGraph, tok: &impl LabelTokenizer) -> Result<TokenGraph> {
    let mut nodes = Vec::new();
    let mut entity_nodes: Vec<Vec<usize>> = Vec::with_capacity(kg.entities.len());
    for (entity, name) in kg.entities.iter().enumerate() {
        let tokens = tok.tokenize_label(name);
        if tokens.is_empty() {
            return Err(Error::Ingest(format!(
                "entity {entity} ({name:?}) tokenizes to an empty sequence"
            )));
        }
        let start = nodes.len();
        for (position, label) in tokens.into_iter().enumerate() {
            nodes.push(TokenNode {
                label,
                entity,
                position,
            });
        }
        entity_nodes.push((start..nodes.len()).collect());
    }

    let mut same = vec![Vec::new(); nodes.len()];
    for cluster in &entity_nodes {
        for &a in cluster {
            for &b in cluster {
                if a != b {
                    let p = nodes[b].position as i64 - nodes[a].position as i64;
                    same[a].push((b, p));
                }
            }
        }
    }

    let arcs = kg
        .facts
        .iter()
        .map(|f| HyperArc {
            relation: f.relation.clone(),
            sources: entity_nodes[f.subject].clone(),
            targets: entity_nodes[f.object].clone(),
        })
        .collect();

    Ok(TokenGraph {
        nodes,
        arcs,
        same,
        entity_count: kg.entities.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Token { entity: usize, position: usize },
    Fact { arc: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub label: String,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_token(&self) -> bool {
        matches!(self.kind, NodeKind::Token { .. })
    }
}

/// Bipartite incidence graph of a token graph plus the `same_p` relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceGraph {
    nodes: Vec<Node>,
    /// Sorted, deduplicated directed edges.
    edges: Vec<(usize, usize)>,
    /// Sorted `(from, to, p)` triples.
    same_p: Vec<(usize, usize, i64)>,
    entity_count: usize,
}

impl IncidenceGraph {
    /// Assemble a graph from raw parts. Edges and `same_p` are sorted and
    /// deduplicated; indices are checked.
    pub fn from_parts(
        nodes: Vec<Node>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        same_p: impl IntoIterator<Item = (usize, usize, i64)>,
    ) -> Result<Self> {
        let n = nodes.len();
        let edges: BTreeSet<_> = edges.into_iter().collect();
        let same_p: BTreeSet<_> = same_p.into_iter().collect();
        for &(a, b) in &edges {
            contract!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
        }
        for &(a, b, _) in &same_p {
            contract!(a < n && b < n, "same_p ({a}, {b}) out of range for {n} nodes");
        }
        let entity_count = nodes
            .iter()
            .filter_map(|node| match node.kind {
                NodeKind::Token { entity, .. } => Some(entity + 1),
                NodeKind::Fact { .. } => None,
            })
            .max()
            .unwrap_or(0);
        Ok(Self {
            nodes,
            edges: edges.into_iter().collect(),
            same_p: same_p.into_iter().collect(),
            entity_count,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn same_p(&self) -> &[(usize, usize, i64)] {
        &self.same_p
    }

    /// Number of knowledge-graph entities the token nodes came from.
    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn token_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_token()).count()
    }

    pub fn fact_count(&self) -> usize {
        self.nodes.len() - self.token_count()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.label.as_str())
    }

    /// Outgoing adjacency lists over directed edges.
    pub fn out_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
        }
        adj
    }

    /// Adjacency of the undirected view: edges and `same_p` both count.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![BTreeSet::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        for &(a, b, _) in &self.same_p {
            sets[a].insert(b);
            sets[b].insert(a);
        }
        sets.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Deterministic text rendering: node list, edge list, same_p list.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {}", self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let _ = match node.kind {
                NodeKind::Token { entity, position } => {
                    writeln!(out, "{i} token {entity}:{position} {}", node.label)
                }
                NodeKind::Fact { arc } => writeln!(out, "{i} fact {arc} {}", node.label),
            };
        }
        let _ = writeln!(out, "edges {}", self.edges.len());
        for (a, b) in &self.edges {
            let _ = writeln!(out, "{a} {b}");
        }
        let _ = writeln!(out, "same_p {}", self.same_p.len());
        for (a, b, p) in &self.same_p {
            let _ = writeln!(out, "{a} {b} {p}");
        }
        out
    }

    /// Reorder nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.nodes.len();
        contract!(perm.len() == n, "permutation of length {} for {n} nodes", perm.len());
        let mut seen = vec![false; n];
        for &p in perm {
            contract!(p < n && !seen[p], "not a permutation: {perm:?}");
            seen[p] = true;
        }
        let mut nodes = vec![None; n];
        for (i, node) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = Some(node.clone());
        }
        Self::from_parts(
            nodes.into_iter().map(Option::unwrap).collect(),
            self.edges.iter().map(|&(a, b)| (perm[a], perm[b])),
            self.same_p.iter().map(|&(a, b, p)| (perm[a], perm[b], p)),
        )
    }
}

/// Turn every hyper-arc into a fact node linked from its source tokens and to
/// its target tokens.
pub fn build_incidence_graph(tg: &TokenGraph) -> IncidenceGraph {
    let mut nodes: Vec<Node> = tg
        .nodes
        .iter()
        .map(|t| Node {
            label: t.label.clone(),
            kind: NodeKind::Token {
                entity: t.entity,
                position: t.position,
            },
        })
        .collect();
    let mut edges = BTreeSet::new();
    for (arc, h) in tg.arcs.iter().enumerate() {
        let fact = nodes.len();
        nodes.push(Node {
            label: h.relation.clone(),
            kind: NodeKind::Fact { arc },
        });
        for &s in &h.sources {
            edges.insert((s, fact));
        }
        for &t in &h.targets {
            edges.insert((fact, t));
        }
    }
    let same_p: Vec<_> = tg
        .same
        .iter()
        .enumerate()
        .flat_map(|(a, others)| others.iter().map(move |&(b, p)| (a, b, p)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    IncidenceGraph {
        nodes,
        edges: edges.into_iter().collect(),
        same_p,
        entity_count: tg.entity_count,
    }
}

/// Connected components of the undirected view (edges and `same_p`). Each
/// component is sorted; components are ordered by their smallest node.
pub fn connected_components(g: &IncidenceGraph) -> Vec<Vec<usize>> {
    let adj = g.undirected_neighbors();
    let mut label = vec![usize::MAX; g.len()];
    let mut comps = Vec::new();
    for start in 0..g.len() {
        if label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if label[v] == usize::MAX {
                    label[v] = id;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentStats {
    pub component_count: usize,
    /// Mean number of distinct entities per component.
    pub avg_component_size_entities: f64,
    /// Mean number of incidence-graph nodes per component.
    pub avg_component_size_nodes: f64,
    /// Maximum over components of the largest finite undirected distance.
    pub largest_diameter: usize,
}

pub fn component_stats(g: &IncidenceGraph) -> ComponentStats {
    let comps = connected_components(g);
    let adj = g.undirected_neighbors();
    let count = comps.len();
    let mut entity_total = 0usize;
    let mut diameter = 0usize;
    for comp in &comps {
        let entities: BTreeSet<usize> = comp
            .iter()
            .filter_map(|&i| match g.nodes[i].kind {
                NodeKind::Token { entity, .. } => Some(entity),
                NodeKind::Fact { .. } => None,
            })
            .collect();
        entity_total += entities.len();
        for &s in comp {
            let far = bfs_distances(&adj, s).into_iter().flatten().max().unwrap_or(0);
            diameter = diameter.max(far);
        }
    }
    let avg = |total: usize| {
        if count == 0 {
            0.0
        } else {
            total as f64 / count as f64
        }
    };
    ComponentStats {
        component_count: count,
        avg_component_size_entities: avg(entity_total),
        avg_component_size_nodes: avg(g.len()),
        largest_diameter: diameter,
    }
}

/// Unweighted single-source distances; `None` where unreachable.
pub(crate) fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
