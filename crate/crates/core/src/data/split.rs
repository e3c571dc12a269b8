use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

use super::record::DatasetRecord;
use super::stats::base_graph_shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphProperty {
    /// Mean number of entities per connected component.
    AvgComponentSize,
    /// Largest undirected diameter over all components.
    LargestDiameter,
}

impl std::str::FromStr for GraphProperty {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg-component-size" => Ok(Self::AvgComponentSize),
            "largest-diameter" => Ok(Self::LargestDiameter),
            _ => Err(crate::Error::Contract(format!("unknown graph property {s:?}"))),
        }
    }
}

/// Property of the record's own graph (entities and facts only).
pub fn graph_property(record: &DatasetRecord, property: GraphProperty) -> Result<f64> {
    let (_, size, diameter) = base_graph_shape(record)?;
    Ok(match property {
        GraphProperty::AvgComponentSize => size,
        GraphProperty::LargestDiameter => diameter as f64,
    })
}

/// Half-open interval `[lower, upper)` of a property and the instances in it.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyBin {
    pub label: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub members: Vec<usize>,
}

/// Partitions instances by `values[i]` at the ascending `thresholds`:
/// `< t1`, `< t2`, ..., `>= tk`. Bins are returned even when empty.
pub fn split_by_values(values: &[f64], thresholds: &[f64]) -> Result<Vec<PropertyBin>> {
    contract!(
        thresholds.windows(2).all(|w| w[0] < w[1]) && thresholds.iter().all(|t| t.is_finite()),
        "thresholds must be finite and strictly ascending: {thresholds:?}"
    );
    let mut bins: Vec<PropertyBin> = (0..=thresholds.len())
        .map(|k| {
            let lower = k.checked_sub(1).map(|i| thresholds[i]);
            let upper = thresholds.get(k).copied();
            let label = match upper {
                Some(u) => format!("<{u}"),
                None => format!(">={}", lower.map_or(f64::NEG_INFINITY, |l| l)),
            };
            PropertyBin {
                label,
                lower,
                upper,
                members: Vec::new(),
            }
        })
        .collect();
    for (i, &v) in values.iter().enumerate() {
        let k = thresholds.iter().take_while(|&&t| v >= t).count();
        bins[k].members.push(i);
    }
    Ok(bins)
}

pub fn split_by_graph_property(records: &[DatasetRecord], property: GraphProperty, thresholds: &[f64]) -> Result<Vec<PropertyBin>> {
    let values = records
        .iter()
        .map(|r| graph_property(r, property))
        .collect::<Result<Vec<_>>>()?;
    split_by_values(&values, thresholds)
}
