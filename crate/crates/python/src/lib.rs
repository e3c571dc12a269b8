use std::path::Path;

use graformer::config::RunConfig;
use graformer::data::{build_tokenizer, dataset_stats, dump_attention_bias, read_jsonl, DatasetRecord};
use graformer::graph::{build_incidence_graph, build_token_graph, KnowledgeGraph};
use graformer::pipeline::{max_path_length, train_from_dir, Bundle};
use graformer::relpos::{build_r_matrix, RelPos, RelPosConfig};
use graformer::Error;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyIOError::new_err(e.to_string()),
    }
}

fn whitespace(label: &str) -> Vec<String> {
    label.split_whitespace().map(String::from).collect()
}

/// Node labels and relative position matrix of a knowledge graph whose
/// labels are split on whitespace. Unreachable pairs are `None`.
#[pyfunction]
#[pyo3(signature = (entities, facts, n_delta=4, n_p=10, d_max=None))]
fn relative_positions(
    entities: Vec<String>,
    facts: Vec<(usize, String, usize)>,
    n_delta: i64,
    n_p: i64,
    d_max: Option<i64>,
) -> PyResult<(Vec<String>, Vec<Vec<Option<i64>>>)> {
    let triples: Vec<(usize, &str, usize)> = facts.iter().map(|(s, r, o)| (*s, r.as_str(), *o)).collect();
    let kg = KnowledgeGraph::from_triples(entities, &triples).map_err(to_py)?;
    let g = build_incidence_graph(&build_token_graph(&kg, &whitespace).map_err(to_py)?);
    let d_max = d_max.unwrap_or_else(|| (max_path_length(&g) as i64).max(n_delta));
    let r = build_r_matrix(&g, RelPosConfig::new(d_max, n_delta, n_p).map_err(to_py)?).map_err(to_py)?;
    let rows = r
        .rows()
        .map(|row| {
            row.iter()
                .map(|v| match v {
                    RelPos::Finite(x) => Some(*x),
                    RelPos::Unreachable => None,
                })
                .collect()
        })
        .collect();
    Ok((g.labels().map(String::from).collect(), rows))
}

/// Corpus BLEU; `refs[i]` holds the references of `hyps[i]`.
#[pyfunction]
fn bleu(hyps: Vec<String>, refs: Vec<Vec<String>>) -> PyResult<f64> {
    graformer::metrics::corpus_bleu(&hyps, &refs).map_err(to_py)
}

/// Corpus chrF++; `refs[i]` holds the references of `hyps[i]`.
#[pyfunction]
fn chrf(hyps: Vec<String>, refs: Vec<Vec<String>>) -> PyResult<f64> {
    graformer::metrics::corpus_chrf(&hyps, &refs).map_err(to_py)
}

/// Statistics report of a JSONL dataset, one `key=value` per line.
#[pyfunction]
fn stats(path: &str) -> PyResult<String> {
    let options = RunConfig::webnlg().data.ingest();
    let records = read_jsonl(Path::new(path)).map_err(to_py)?;
    let tokenizer = build_tokenizer(&records, &options, None);
    Ok(dataset_stats(&records, &tokenizer, &options).map_err(to_py)?.report())
}

/// Trains from `<data>/train.jsonl` and returns the best checkpoint path.
#[pyfunction]
fn train(py: Python<'_>, config: &str, data: &str, out: &str) -> PyResult<String> {
    let config = RunConfig::load(Path::new(config)).map_err(to_py)?;
    let summary = py
        .detach(|| train_from_dir(&config, Path::new(data), Path::new(out), |_| {}))
        .map_err(to_py)?;
    Ok(summary.best_checkpoint.display().to_string())
}

/// A trained model with its tokenizer and decoding defaults.
#[pyclass]
struct Checkpoint {
    bundle: Bundle,
    epoch: usize,
}

#[pymethods]
impl Checkpoint {
    #[new]
    fn new(path: &str) -> PyResult<Self> {
        let (bundle, meta) = Bundle::load(Path::new(path)).map_err(to_py)?;
        Ok(Self {
            bundle,
            epoch: meta.epoch,
        })
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.epoch
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.bundle.model.config().vocab_size
    }

    #[getter]
    fn heads(&self) -> usize {
        self.bundle.model.config().heads
    }

    /// Decodes one text per record; records are JSON strings in the dataset
    /// line format.
    #[pyo3(signature = (records, beams=None, length_penalty=None))]
    fn generate(
        &self,
        py: Python<'_>,
        records: Vec<String>,
        beams: Option<usize>,
        length_penalty: Option<f64>,
    ) -> PyResult<Vec<String>> {
        let records = records
            .iter()
            .map(|r| serde_json::from_str::<DatasetRecord>(r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let mut cfg = self.bundle.decode;
        if let Some(b) = beams {
            cfg.beams = b;
        }
        if let Some(a) = length_penalty {
            cfg.length_penalty = a;
        }
        py.detach(|| self.bundle.generate(&records, &cfg)).map_err(to_py)
    }

    /// Graph attention bias rows as `(position, per-head values)`.
    #[pyo3(signature = (include_same=false))]
    fn gamma(&self, include_same: bool) -> PyResult<Vec<(String, Vec<f64>)>> {
        let table = dump_attention_bias(&self.bundle.model, include_same).map_err(to_py)?;
        Ok(table.rows.into_iter().map(|(p, v)| (p.to_string(), v)).collect())
    }
}

#[pymodule]
fn graformer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(relative_positions, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(chrf, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<Checkpoint>()?;
    Ok(())
}
