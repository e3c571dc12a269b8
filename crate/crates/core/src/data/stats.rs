use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{contract, Result};
use crate::graph::{build_incidence_graph, build_token_graph, component_stats};

use super::ingest::{base_graph, ingest_record, IngestOptions, ENTITY_TAG};
use super::record::DatasetRecord;
use super::tokenizer::{Tokenizer, WORD_MARK};

/// Dataset statistics. The first group describes the records' own graphs
/// (entities and facts only), the second the ingested token graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub instances: usize,
    pub relation_types: usize,
    pub avg_entities: f64,
    pub pct_connected: f64,
    pub avg_components: f64,
    pub avg_component_size: f64,
    pub avg_largest_diameter: f64,
    pub avg_token_nodes: f64,
    pub avg_text_tokens: f64,
    pub avg_pct_text_tokens_in_graph: f64,
    pub avg_pct_graph_tokens_in_text: f64,
    pub vocab_size: usize,
    pub char_coverage_pct: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Component count, mean component size in entities and largest diameter
/// of the record's own graph.
pub fn base_graph_shape(record: &DatasetRecord) -> Result<(usize, f64, usize)> {
    let kg = base_graph(record)?;
    let one_node = |_: &str| vec![String::from("x")];
    let g = build_incidence_graph(&build_token_graph(&kg, &one_node)?);
    let s = component_stats(&g);
    Ok((s.component_count, s.avg_component_size_entities, kg.largest_diameter()))
}

pub fn dataset_stats(records: &[DatasetRecord], tokenizer: &Tokenizer, options: &IngestOptions) -> Result<DatasetStats> {
    contract!(!records.is_empty(), "no records");
    let mut relations = HashSet::new();
    let mut entities = Vec::new();
    let mut connected = 0usize;
    let mut components = Vec::new();
    let mut sizes = Vec::new();
    let mut diameters = Vec::new();
    let mut token_nodes = Vec::new();
    let mut text_tokens = Vec::new();
    let mut text_in_graph = Vec::new();
    let mut graph_in_text = Vec::new();

    let vocab_chars: HashSet<char> = tokenizer
        .vocab()
        .tokens()
        .iter()
        .flat_map(|t| t.chars())
        .filter(|&c| c != WORD_MARK)
        .collect();
    let mut chars_total = 0usize;
    let mut chars_covered = 0usize;
    let mut count_chars = |s: &str| {
        for c in s.chars().filter(|c| !c.is_whitespace()) {
            chars_total += 1;
            chars_covered += vocab_chars.contains(&c) as usize;
        }
    };

    for r in records {
        relations.extend(r.facts.iter().map(|f| f.1.as_str()));
        entities.push(r.entities.len() as f64);
        let (count, size, diameter) = base_graph_shape(r)?;
        connected += (count == 1) as usize;
        components.push(count as f64);
        if count > 0 {
            sizes.push(size);
        }
        diameters.push(diameter as f64);

        let opts = IngestOptions {
            require_text: false,
            ..*options
        };
        let inst = ingest_record(r, tokenizer, &opts)?;
        token_nodes.push(inst.graph.token_count() as f64);
        let text = options.text(&r.text);
        let pieces = tokenizer.segment(&text);
        text_tokens.push(pieces.len() as f64);
        let graph_labels: Vec<&str> = inst
            .graph
            .nodes()
            .iter()
            .filter(|n| n.is_token() && n.label != ENTITY_TAG)
            .map(|n| n.label.as_str())
            .collect();
        let graph_set: HashSet<&str> = graph_labels.iter().copied().collect();
        let text_set: HashSet<&str> = pieces.iter().map(String::as_str).collect();
        if !pieces.is_empty() {
            let hits = pieces.iter().filter(|p| graph_set.contains(p.as_str())).count();
            text_in_graph.push(100.0 * hits as f64 / pieces.len() as f64);
        }
        if !graph_labels.is_empty() {
            let hits = graph_labels.iter().filter(|l| text_set.contains(*l)).count();
            graph_in_text.push(100.0 * hits as f64 / graph_labels.len() as f64);
        }
        count_chars(&text);
        for l in &graph_labels {
            count_chars(l);
        }
    }

    Ok(DatasetStats {
        instances: records.len(),
        relation_types: relations.len(),
        avg_entities: mean(&entities),
        pct_connected: 100.0 * connected as f64 / records.len() as f64,
        avg_components: mean(&components),
        avg_component_size: mean(&sizes),
        avg_largest_diameter: mean(&diameters),
        avg_token_nodes: mean(&token_nodes),
        avg_text_tokens: mean(&text_tokens),
        avg_pct_text_tokens_in_graph: mean(&text_in_graph),
        avg_pct_graph_tokens_in_text: mean(&graph_in_text),
        vocab_size: tokenizer.vocab().len(),
        char_coverage_pct: if chars_total == 0 {
            100.0
        } else {
            100.0 * chars_covered as f64 / chars_total as f64
        },
    })
}

impl DatasetStats {
    /// `key=value` lines in a fixed order.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let rows: [(&str, String); 13] = [
            ("instances", self.instances.to_string()),
            ("relation_types", self.relation_types.to_string()),
            ("avg_entities", format!("{:.2}", self.avg_entities)),
            ("pct_connected", format!("{:.2}", self.pct_connected)),
            ("avg_components", format!("{:.2}", self.avg_components)),
            ("avg_component_size", format!("{:.2}", self.avg_component_size)),
            ("avg_largest_diameter", format!("{:.2}", self.avg_largest_diameter)),
            ("avg_token_nodes", format!("{:.2}", self.avg_token_nodes)),
            ("avg_text_tokens", format!("{:.2}", self.avg_text_tokens)),
            ("avg_pct_text_tokens_in_graph", format!("{:.2}", self.avg_pct_text_tokens_in_graph)),
            ("avg_pct_graph_tokens_in_text", format!("{:.2}", self.avg_pct_graph_tokens_in_text)),
            ("vocab_size", self.vocab_size.to_string()),
            ("char_coverage_pct", format!("{:.2}", self.char_coverage_pct)),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}
