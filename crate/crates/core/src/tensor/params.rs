use crate::error::{contract, Result};

use super::Element;

/// Handle to a tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
}

impl<T> Param<T> {
    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, values: Vec<T>) -> Result<ParamId> {
        let name = name.into();
        contract!(
            values.len() == rows * cols,
            "parameter {name}: {} values for shape [{rows}, {cols}]",
            values.len()
        );
        contract!(self.id_of(&name).is_none(), "duplicate parameter name {name}");
        self.params.push(Param {
            name,
            rows,
            cols,
            values,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.id_of(name).map(|id| self.get(id))
    }

    /// Overwrite the values of the named parameter.
    pub fn set(&mut self, name: &str, values: &[T]) -> Result<()> {
        let id = self
            .id_of(name)
            .ok_or_else(|| crate::Error::Contract(format!("no parameter named {name}")))?;
        let p = self.get_mut(id);
        contract!(
            p.values.len() == values.len(),
            "parameter {name} has {} values, got {}",
            p.values.len(),
            values.len()
        );
        p.values.copy_from_slice(values);
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn element_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    /// Convert every value to another precision.
    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    rows: p.rows,
                    cols: p.cols,
                    values: p.values.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Euclidean norm over all parameters.
    pub fn global_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.values.iter())
            .map(|v| v.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
