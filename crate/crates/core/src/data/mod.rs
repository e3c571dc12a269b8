//! Dataset records, tokenization, ingestion into incidence graphs, corpus
//! statistics, graph-property splits and attention-bias dumps.

mod gamma;
mod ingest;
mod record;
mod split;
mod stats;
mod tokenizer;

pub use gamma::{dump_attention_bias, GammaTable};
pub use ingest::{
    base_graph, build_tokenizer, ingest, ingest_record, record_to_kg, vocabulary_material, IngestOptions, Instance,
    ENTITY_TAG, HAS_TYPE, RELATION_TAG, TEXT_TO_TITLE, TITLE_TO_TEXT,
};
pub use record::{parse_jsonl, read_jsonl, write_jsonl, DatasetRecord};
pub use split::{graph_property, split_by_graph_property, split_by_values, GraphProperty, PropertyBin};
pub use stats::{base_graph_shape, dataset_stats, DatasetStats};
pub use tokenizer::{Tokenizer, TokenizerKind, TokenizerSpec, WORD_MARK};
