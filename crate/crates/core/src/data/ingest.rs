use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_incidence_graph, build_token_graph, Fact, IncidenceGraph, KnowledgeGraph, LabelTokenizer};
use crate::model::{GraphInput, ModelConfig};
use crate::relpos::build_r_matrix;
use crate::train::Example;
use crate::vocab::SPECIALS;

use super::record::DatasetRecord;
use super::tokenizer::Tokenizer;

pub const HAS_TYPE: &str = "has-type";
pub const TITLE_TO_TEXT: &str = "title2txt";
pub const TEXT_TO_TITLE: &str = "txt2title";

pub const ENTITY_TAG: &str = SPECIALS[crate::vocab::ENTITY_TAG];
pub const RELATION_TAG: &str = SPECIALS[crate::vocab::RELATION_TAG];

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Lowercase entity names, types, titles, relations and text.
    #[serde(default = "yes")]
    pub lowercase: bool,
    /// Prefix entity token sequences with an entity tag node and relation
    /// labels with the relation tag.
    #[serde(default = "yes")]
    pub tag_labels: bool,
    /// Add the record title as an extra entity.
    #[serde(default = "yes")]
    pub include_title: bool,
    /// Connect the title to every other entity in both directions.
    #[serde(default)]
    pub link_title: bool,
    /// Abort on a malformed record instead of skipping it.
    #[serde(default = "yes")]
    pub strict: bool,
    /// Reject records whose text is empty.
    #[serde(default = "yes")]
    pub require_text: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            lowercase: true,
            tag_labels: true,
            include_title: true,
            link_title: false,
            strict: true,
            require_text: true,
        }
    }
}

impl IngestOptions {
    fn norm(&self, s: &str) -> String {
        if self.lowercase {
            s.to_lowercase()
        } else {
            s.to_string()
        }
    }

    /// Node label of a relation.
    pub fn relation_label(&self, relation: &str) -> String {
        let r = self.norm(relation);
        if self.tag_labels {
            format!("{RELATION_TAG}{r}")
        } else {
            r
        }
    }

    /// Normalized target text.
    pub fn text(&self, text: &str) -> String {
        self.norm(text)
    }
}

/// The record's own entities and facts, without type or title vertices.
pub fn base_graph(record: &DatasetRecord) -> Result<KnowledgeGraph> {
    let facts = record
        .facts
        .iter()
        .map(|(s, r, o)| Fact {
            subject: *s,
            relation: r.clone(),
            object: *o,
        })
        .collect();
    KnowledgeGraph::new(record.entities.clone(), facts)
}

/// Preprocessed graph: normalized labels, one vertex per distinct type with
/// has-type arcs, and the title vertex with optional links.
pub fn record_to_kg(record: &DatasetRecord, options: &IngestOptions) -> Result<KnowledgeGraph> {
    let base = base_graph(record)?;
    let mut entities: Vec<String> = base.entities().iter().map(|e| options.norm(e)).collect();
    let mut facts: Vec<Fact> = base
        .facts()
        .iter()
        .map(|f| Fact {
            relation: options.relation_label(&f.relation),
            ..f.clone()
        })
        .collect();
    let real = entities.len();

    if let Some(types) = &record.types {
        for name in types.keys() {
            if !record.entities.contains(name) {
                return Err(Error::Ingest(format!("type given for unknown entity {name:?}")));
            }
        }
        let mut type_vertex: Vec<(String, usize)> = Vec::new();
        for (e, name) in record.entities.iter().enumerate() {
            let Some(ty) = types.get(name) else { continue };
            let ty = options.norm(ty);
            let v = match type_vertex.iter().find(|(t, _)| *t == ty) {
                Some(&(_, v)) => v,
                None => {
                    entities.push(ty.clone());
                    type_vertex.push((ty, entities.len() - 1));
                    entities.len() - 1
                }
            };
            facts.push(Fact {
                subject: e,
                relation: options.relation_label(HAS_TYPE),
                object: v,
            });
        }
    }

    if let (Some(title), true) = (&record.title, options.include_title) {
        entities.push(options.norm(title));
        let t = entities.len() - 1;
        if options.link_title {
            for e in 0..real {
                facts.push(Fact {
                    subject: t,
                    relation: options.relation_label(TITLE_TO_TEXT),
                    object: e,
                });
                facts.push(Fact {
                    subject: e,
                    relation: options.relation_label(TEXT_TO_TITLE),
                    object: t,
                });
            }
        }
    }
    KnowledgeGraph::new(entities, facts)
}

struct Tagged<'a> {
    tokenizer: &'a Tokenizer,
    tag: bool,
}

impl LabelTokenizer for Tagged<'_> {
    fn tokenize_label(&self, label: &str) -> Vec<String> {
        let pieces = self.tokenizer.segment(label);
        if self.tag && !pieces.is_empty() {
            std::iter::once(ENTITY_TAG.to_string()).chain(pieces).collect()
        } else {
            pieces
        }
    }
}

/// An ingested record.
#[derive(Debug, Clone)]
pub struct Instance {
    pub kg: KnowledgeGraph,
    pub graph: IncidenceGraph,
    /// Node label ids in node order.
    pub labels: Vec<usize>,
    /// Target token ids without BOS/EOS.
    pub target: Vec<usize>,
}

impl Instance {
    /// Model input with relative positions for `config`.
    pub fn graph_input(&self, config: &ModelConfig) -> Result<GraphInput> {
        let r = build_r_matrix(&self.graph, config.relpos)?;
        GraphInput::new(self.labels.clone(), &r, config)
    }

    pub fn example(&self, config: &ModelConfig) -> Result<Example> {
        Ok(Example {
            graph: self.graph_input(config)?,
            target: self.target.clone(),
        })
    }
}

pub fn ingest_record(record: &DatasetRecord, tokenizer: &Tokenizer, options: &IngestOptions) -> Result<Instance> {
    if options.require_text && record.text.trim().is_empty() {
        return Err(Error::Ingest("record has empty text".into()));
    }
    let kg = record_to_kg(record, options)?;
    let tagged = Tagged {
        tokenizer,
        tag: options.tag_labels,
    };
    let graph = build_incidence_graph(&build_token_graph(&kg, &tagged)?);
    let vocab = tokenizer.vocab();
    let labels = graph.labels().map(|l| vocab.id(l)).collect();
    let target = tokenizer.encode(&options.text(&record.text));
    Ok(Instance {
        kg,
        graph,
        labels,
        target,
    })
}

/// Ingests records in order. With `strict` unset, malformed records are
/// logged and skipped; the returned pairs carry the source record index.
pub fn ingest(records: &[DatasetRecord], tokenizer: &Tokenizer, options: &IngestOptions) -> Result<Vec<(usize, Instance)>> {
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        match ingest_record(r, tokenizer, options) {
            Ok(inst) => out.push((i, inst)),
            Err(e @ (Error::Ingest(_) | Error::Contract(_))) => {
                if options.strict {
                    return Err(Error::Ingest(format!("record {i}: {e}")));
                }
                log::warn!("skipping record {i}: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Node labels and texts of `records`, normalized as during ingestion:
/// the material a vocabulary is built from. Relation labels are returned
/// separately since they are atomic vocabulary items.
pub fn vocabulary_material(records: &[DatasetRecord], options: &IngestOptions) -> (Vec<String>, Vec<String>) {
    let mut texts = Vec::new();
    let mut relations = Vec::new();
    let mut push_rel = |r: String| {
        if !relations.contains(&r) {
            relations.push(r);
        }
    };
    for r in records {
        texts.extend(r.entities.iter().map(|e| options.norm(e)));
        if let Some(types) = &r.types {
            texts.extend(types.values().map(|t| options.norm(t)));
            push_rel(options.relation_label(HAS_TYPE));
        }
        if let (Some(t), true) = (&r.title, options.include_title) {
            texts.push(options.norm(t));
            if options.link_title {
                push_rel(options.relation_label(TITLE_TO_TEXT));
                push_rel(options.relation_label(TEXT_TO_TITLE));
            }
        }
        for (_, rel, _) in &r.facts {
            push_rel(options.relation_label(rel));
        }
        texts.push(options.text(&r.text));
    }
    (texts, relations)
}

/// Whitespace tokenizer over `records`, or `base` extended with the
/// relation labels of `records`.
pub fn build_tokenizer(records: &[DatasetRecord], options: &IngestOptions, base: Option<Tokenizer>) -> Tokenizer {
    let (texts, relations) = vocabulary_material(records, options);
    let mut tok = base.unwrap_or_else(|| Tokenizer::build_whitespace(texts.iter().map(String::as_str)));
    for r in &relations {
        tok.add_token(r);
    }
    tok
}
