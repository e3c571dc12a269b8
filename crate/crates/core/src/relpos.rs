//! Signed shortest-path relative positions between incidence-graph nodes.
//!
//! For nodes `i != j` the relative position is
//!
//! * `encode(p) = sgn(p) * d_max + p` when `j` is the token at offset `p` from
//!   `i` inside the same entity (`p` clamped to `±n_p` first),
//! * `+min(δ(i,j), n_delta)` when `δ(i,j) <= δ(j,i)`,
//! * `-min(δ(j,i), n_delta)` when `δ(i,j) > δ(j,i)`,
//! * `∞` when neither direction has a directed path.
//!
//! `δ` is the directed shortest path length over edges only; `same_p` pairs
//! are not traversable. Unreachable compares greater than any finite length.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::graph::{bfs_distances, IncidenceGraph};

/// One entry of the relative position matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelPos {
    Finite(i64),
    Unreachable,
}

impl fmt::Display for RelPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelPos::Finite(v) => write!(f, "{v}"),
            RelPos::Unreachable => f.write_str("inf"),
        }
    }
}

impl FromStr for RelPos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "∞" => Ok(RelPos::Unreachable),
            t => t
                .parse()
                .map(RelPos::Finite)
                .map_err(|_| Error::Format(format!("bad relative position {s:?}"))),
        }
    }
}

/// Clamping thresholds and the `encode` offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelPosConfig {
    /// Offset used by `encode`; must be at least `n_delta`.
    pub d_max: i64,
    /// Path lengths above this are clamped to it.
    pub n_delta: i64,
    /// Same-entity offsets are clamped to `±n_p`.
    pub n_p: i64,
}

impl RelPosConfig {
    pub fn new(d_max: i64, n_delta: i64, n_p: i64) -> Result<Self> {
        let cfg = Self {
            d_max,
            n_delta,
            n_p,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        contract!(
            self.n_delta >= 1 && self.n_p >= 1,
            "n_delta and n_p must be >= 1 (got n_delta={}, n_p={})",
            self.n_delta,
            self.n_p
        );
        contract!(
            self.d_max >= self.n_delta,
            "d_max ({}) must be >= n_delta ({}) so same-entity codes cannot collide with path lengths",
            self.d_max,
            self.n_delta
        );
        Ok(())
    }

    /// `sgn(p) * d_max + p` after clamping `p` to `±n_p`.
    pub fn encode_same(&self, p: i64) -> i64 {
        let p = p.clamp(-self.n_p, self.n_p);
        p.signum() * self.d_max + p
    }
}

/// Directed shortest path lengths over edges; `None` where unreachable.
pub fn shortest_path_lengths(g: &IncidenceGraph) -> Vec<Vec<Option<usize>>> {
    let adj = g.out_neighbors();
    (0..g.len()).map(|s| bfs_distances(&adj, s)).collect()
}

/// `|N| x |N|` matrix of relative positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelPosMatrix {
    size: usize,
    entries: Vec<RelPos>,
    config: RelPosConfig,
}

impl RelPosMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn config(&self) -> RelPosConfig {
        self.config
    }

    pub fn get(&self, i: usize, j: usize) -> RelPos {
        self.entries[i * self.size + j]
    }

    pub fn entries(&self) -> &[RelPos] {
        &self.entries
    }

    pub fn rows(&self) -> impl Iterator<Item = &[RelPos]> {
        self.entries.chunks(self.size.max(1)).take(self.size)
    }

    /// Row-major vocabulary indices, as used for the bias table lookup.
    pub fn indices(&self, vocab: &PositionVocabulary) -> Result<Vec<usize>> {
        self.entries.iter().map(|&r| vocab.index_of(r)).collect()
    }

    /// Same matrix with nodes relabeled: old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.size;
        let mut entries = vec![RelPos::Finite(0); n * n];
        for i in 0..n {
            for j in 0..n {
                entries[perm[i] * n + perm[j]] = self.get(i, j);
            }
        }
        Self {
            size: n,
            entries,
            config: self.config,
        }
    }

    /// CSV with a header row of node labels and one labeled row per node;
    /// unreachable pairs are written as `inf`.
    pub fn to_csv(&self, labels: &[String]) -> Result<String> {
        contract!(
            labels.len() == self.size,
            "{} labels for a {}x{} matrix",
            labels.len(),
            self.size,
            self.size
        );
        let mut out = String::new();
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (label, row) in labels.iter().zip(self.rows()) {
            out.push_str(label);
            for r in row {
                out.push(',');
                out.push_str(&r.to_string());
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Parse the layout written by [`RelPosMatrix::to_csv`].
    pub fn from_csv(text: &str, config: RelPosConfig) -> Result<(Vec<String>, Self)> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty relative position CSV".into()))?;
        let labels: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let n = labels.len();
        let mut entries = Vec::with_capacity(n * n);
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n + 1 {
                return Err(Error::Format(format!("row {line:?} has {} cells", cells.len())));
            }
            for c in &cells[1..] {
                entries.push(c.parse()?);
            }
        }
        if entries.len() != n * n {
            return Err(Error::Format(format!("expected {n} rows")));
        }
        Ok((
            labels,
            Self {
                size: n,
                entries,
                config,
            },
        ))
    }
}

/// Relative position matrix of `g` under `config`.
pub fn build_r_matrix(g: &IncidenceGraph, config: RelPosConfig) -> Result<RelPosMatrix> {
    config.validate()?;
    let n = g.len();
    let delta = shortest_path_lengths(g);
    let mut same: Vec<Option<i64>> = vec![None; n * n];
    for &(a, b, p) in g.same_p() {
        same[a * n + b] = Some(p);
    }
    let clamp = |d: usize| (d as i64).min(config.n_delta);
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let r = if i == j {
                RelPos::Finite(0)
            } else if let Some(p) = same[i * n + j] {
                RelPos::Finite(config.encode_same(p))
            } else {
                match (delta[i][j], delta[j][i]) {
                    (None, None) => RelPos::Unreachable,
                    (Some(fwd), None) => RelPos::Finite(clamp(fwd)),
                    (None, Some(bwd)) => RelPos::Finite(-clamp(bwd)),
                    (Some(fwd), Some(bwd)) if fwd <= bwd => RelPos::Finite(clamp(fwd)),
                    (Some(_), Some(bwd)) => RelPos::Finite(-clamp(bwd)),
                }
            };
            entries.push(r);
        }
    }
    Ok(RelPosMatrix {
        size: n,
        entries,
        config,
    })
}

/// Contiguous index space over every value a relative position can take.
///
/// Order: `-n_delta..=n_delta`, then the negative same-entity codes
/// `-(d_max+n_p)..=-(d_max+1)`, then the positive ones
/// `d_max+1..=d_max+n_p`, then `∞` last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionVocabulary {
    config: RelPosConfig,
}

impl PositionVocabulary {
    pub fn new(config: RelPosConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> RelPosConfig {
        self.config
    }

    pub fn size(&self) -> usize {
        (2 * self.config.n_delta + 2 + 2 * self.config.n_p) as usize
    }

    /// Number of leading entries that are path lengths or `∞`
    /// (everything except same-entity codes).
    pub fn path_bucket_count(&self) -> usize {
        (2 * self.config.n_delta + 2) as usize
    }

    pub fn index_of(&self, r: RelPos) -> Result<usize> {
        let RelPosConfig { d_max, n_delta, n_p } = self.config;
        let idx = match r {
            RelPos::Unreachable => return Ok(self.size() - 1),
            RelPos::Finite(v) if (-n_delta..=n_delta).contains(&v) => v + n_delta,
            RelPos::Finite(v) if (-(d_max + n_p)..=-(d_max + 1)).contains(&v) => {
                2 * n_delta + 1 + (v + d_max + n_p)
            }
            RelPos::Finite(v) if (d_max + 1..=d_max + n_p).contains(&v) => {
                2 * n_delta + 1 + n_p + (v - d_max - 1)
            }
            RelPos::Finite(v) => {
                return Err(Error::Contract(format!(
                    "relative position {v} outside the vocabulary (d_max={d_max}, n_delta={n_delta}, n_p={n_p})"
                )))
            }
        };
        Ok(idx as usize)
    }

    pub fn value_at(&self, index: usize) -> Result<RelPos> {
        let RelPosConfig { d_max, n_delta, n_p } = self.config;
        let i = index as i64;
        contract!(index < self.size(), "position index {index} >= {}", self.size());
        Ok(if index == self.size() - 1 {
            RelPos::Unreachable
        } else if i <= 2 * n_delta {
            RelPos::Finite(i - n_delta)
        } else if i <= 2 * n_delta + n_p {
            RelPos::Finite(i - 2 * n_delta - 1 - d_max - n_p)
        } else {
            RelPos::Finite(i - 2 * n_delta - 1 - n_p + d_max + 1)
        })
    }

    /// All values in index order.
    pub fn values(&self) -> Vec<RelPos> {
        (0..self.size()).map(|i| self.value_at(i).unwrap()).collect()
    }

    pub fn is_same_entity_code(&self, r: RelPos) -> bool {
        matches!(r, RelPos::Finite(v) if v.abs() > self.config.d_max)
    }
}
