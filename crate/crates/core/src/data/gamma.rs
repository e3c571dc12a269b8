use std::fmt::Write as _;

use crate::error::{contract, Error, Result};
use crate::model::Graformer;
use crate::relpos::{PositionVocabulary, RelPos};
use crate::tensor::Element;

/// Learned graph attention bias: one row per relative position, one column
/// per head.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    pub heads: usize,
    pub rows: Vec<(RelPos, Vec<f64>)>,
}

/// Reads the bias table of `model`. Same-entity offsets are left out
/// unless `include_same` is set.
pub fn dump_attention_bias<T: Element>(model: &Graformer<T>, include_same: bool) -> Result<GammaTable> {
    let vocab = PositionVocabulary::new(model.config().relpos)?;
    let p = model.params().get(model.graph_bias_id());
    let [heads, size] = p.shape();
    contract!(size == vocab.size(), "bias table has {size} columns, expected {}", vocab.size());
    let mut rows = Vec::new();
    for idx in 0..size {
        let pos = vocab.value_at(idx)?;
        if !include_same && vocab.is_same_entity_code(pos) {
            continue;
        }
        rows.push((pos, (0..heads).map(|h| p.values[h * size + idx].as_f64()).collect()));
    }
    Ok(GammaTable { heads, rows })
}

impl GammaTable {
    /// Header `position,h0,..`; values use the shortest exact decimal form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("position");
        for h in 0..self.heads {
            let _ = write!(s, ",h{h}");
        }
        s.push('\n');
        for (pos, vals) in &self.rows {
            let _ = write!(s, "{pos}");
            for v in vals {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty gamma table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"position") {
            return Err(Error::Format("gamma table header must start with 'position'".into()));
        }
        let heads = cols.len() - 1;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != heads + 1 {
                return Err(Error::Format(format!("gamma row {}: expected {} fields", i + 1, heads + 1)));
            }
            let bad = |_| Error::Format(format!("gamma row {}: bad value", i + 1));
            let pos: RelPos = fields[0].parse().map_err(|_| Error::Format(format!("gamma row {}: bad position", i + 1)))?;
            let vals = fields[1..].iter().map(|f| f.parse::<f64>().map_err(bad)).collect::<Result<Vec<_>>>()?;
            rows.push((pos, vals));
        }
        Ok(Self { heads, rows })
    }
}
