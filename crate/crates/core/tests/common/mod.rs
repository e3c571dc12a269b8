#![allow(dead_code)]

use graformer::data::{build_tokenizer, ingest, DatasetRecord, IngestOptions, Tokenizer};
use graformer::graph::{build_incidence_graph, build_token_graph, IncidenceGraph, KnowledgeGraph};
use graformer::model::ModelConfig;
use graformer::train::Example;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// The running example: SVD compared to word2vec, both used for
/// embedding learning.
pub fn fig1_kg() -> KnowledgeGraph {
    KnowledgeGraph::from_triples(
        ["SVD", "word2vec", "embedding learning"],
        &[(0, "compare", 1), (0, "used-for", 2), (1, "used-for", 2)],
    )
    .unwrap()
}

/// Token graph tokenizer for the running example: "SVD" is spelled out
/// letter by letter.
pub fn fig1_tokenize(label: &str) -> Vec<String> {
    if label == "SVD" {
        vec!["s".into(), "v".into(), "d".into()]
    } else {
        words(label)
    }
}

pub fn fig1_incidence() -> IncidenceGraph {
    build_incidence_graph(&build_token_graph(&fig1_kg(), &fig1_tokenize).unwrap())
}

const NAMES: [&str; 16] = [
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy", "mallory", "nia", "oscar",
    "peggy", "trent", "victor",
];
const RELATIONS: [&str; 3] = ["likes", "knows", "helps"];

/// Small synthetic corpus: 2-4 people, 1-3 facts, text "s r o and ...".
pub fn synthetic_records(n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<DatasetRecord> = Vec::new();
    while out.len() < n {
        let k = rng.gen_range(2..=4);
        let entities: Vec<String> = NAMES.choose_multiple(&mut rng, k).map(|s| s.to_string()).collect();
        let m = rng.gen_range(1..=3);
        let mut facts = Vec::new();
        for _ in 0..m {
            let s = rng.gen_range(0..k);
            let mut o = rng.gen_range(0..k);
            if o == s {
                o = (o + 1) % k;
            }
            facts.push((s, RELATIONS[rng.gen_range(0..3)].to_string(), o));
        }
        let text = facts
            .iter()
            .map(|(s, r, o)| format!("{} {} {}", entities[*s], r, entities[*o]))
            .collect::<Vec<_>>()
            .join(" and ");
        let rec = DatasetRecord {
            entities,
            types: None,
            facts,
            title: None,
            text,
        };
        if !out.iter().any(|r| r.entities == rec.entities && r.facts == rec.facts) {
            out.push(rec);
        }
    }
    out
}

pub fn synthetic_examples(records: &[DatasetRecord], config: &ModelConfig) -> (Tokenizer, Vec<Example>) {
    let opts = IngestOptions::default();
    let tok = build_tokenizer(records, &opts, None);
    let ex = ingest(records, &tok, &opts)
        .unwrap()
        .into_iter()
        .map(|(_, i)| i.example(config).unwrap())
        .collect();
    (tok, ex)
}

use graformer::graph::{Node, NodeKind};

/// Directed graph on `n` unlabeled nodes, each ordered pair an edge with
/// probability `density`.
pub fn random_digraph(rng: &mut impl Rng, n: usize, density: f64) -> IncidenceGraph {
    let nodes = (0..n)
        .map(|i| Node {
            label: format!("n{i}"),
            kind: NodeKind::Fact { arc: i },
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen_bool(density) {
                edges.push((a, b));
            }
        }
    }
    IncidenceGraph::from_parts(nodes, edges, []).unwrap()
}

/// All-pairs shortest directed path lengths by Floyd-Warshall.
pub fn floyd_warshall(g: &IncidenceGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.len();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(a, b) in g.edges() {
        if a != b {
            d[a][b] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].map_or(true, |c| x + y < c) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

/// Random knowledge graph with up to `max_entities` entities whose names
/// have up to `max_tokens` tokens, and up to `max_facts` facts.
pub fn random_kg(rng: &mut impl Rng, max_entities: usize, max_tokens: usize, max_facts: usize) -> KnowledgeGraph {
    let n = rng.gen_range(1..=max_entities);
    let entities: Vec<String> = (0..n)
        .map(|e| {
            let k = rng.gen_range(1..=max_tokens);
            (0..k).map(|t| format!("e{e}t{t}")).collect::<Vec<_>>().join(" ")
        })
        .collect();
    let m = rng.gen_range(0..=max_facts);
    let triples: Vec<(usize, String, usize)> = (0..m)
        .map(|f| (rng.gen_range(0..n), format!("r{}", f % 3), rng.gen_range(0..n)))
        .collect();
    let refs: Vec<(usize, &str, usize)> = triples.iter().map(|(s, r, o)| (*s, r.as_str(), *o)).collect();
    KnowledgeGraph::from_triples(entities, &refs).unwrap()
}

pub fn whitespace(label: &str) -> Vec<String> {
    words(label)
}

/// Connected components of an undirected edge list by union-find.
pub fn union_find_components(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

pub const FIG3_CSV: &str = include_str!("../data/fig3_r_matrix.csv");

/// Short names of the running example's nodes, in node order.
pub fn fig1_short_labels() -> Vec<String> {
    words("s v d w e l c u1 u2")
}

/// Relative positions straight from the definition, without clamping:
/// same-entity offsets first, then the shorter direction (forward on ties).
pub fn unclamped_relpos(g: &IncidenceGraph, d_max: i64) -> Vec<Vec<Option<i64>>> {
    let n = g.len();
    let delta = floyd_warshall(g);
    let mut out = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            let same = g.same_p().iter().find(|t| t.0 == i && t.1 == j).map(|t| t.2);
            out[i][j] = if i == j {
                Some(0)
            } else if let Some(p) = same {
                Some(p.signum() * d_max + p)
            } else {
                match (delta[i][j], delta[j][i]) {
                    (None, None) => None,
                    (Some(f), None) => Some(f as i64),
                    (None, Some(b)) => Some(-(b as i64)),
                    (Some(f), Some(b)) => Some(if f <= b { f as i64 } else { -(b as i64) }),
                }
            };
        }
    }
    out
}

/// Model whose parameters (including the zero-initialized bias tables) are
/// redrawn uniformly from `[-scale, scale]`, so every path carries signal.
pub fn scrambled_model<T: graformer::tensor::Element>(
    config: ModelConfig,
    seed: u64,
    scale: f64,
) -> graformer::model::Graformer<T> {
    let mut model = graformer::model::Graformer::<T>::new(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for v in model.params_mut().get_mut(id).values.iter_mut() {
            *v = T::lit(rng.gen_range(-scale..scale));
        }
    }
    model
}

/// Graph input for `g` with random non-special label ids.
pub fn random_graph_input(rng: &mut ChaCha8Rng, g: &IncidenceGraph, config: &ModelConfig) -> graformer::model::GraphInput {
    let r = graformer::relpos::build_r_matrix(g, config.relpos).unwrap();
    let labels = (0..g.len()).map(|_| rng.gen_range(6..config.vocab_size)).collect();
    graformer::model::GraphInput::new(labels, &r, config).unwrap()
}

/// Relative error with the denominator floored at 1e-3.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}
