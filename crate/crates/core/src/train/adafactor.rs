use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::tensor::{Element, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdafactorConfig {
    /// Fixed step size; `None` uses the relative step `min(1e-2, 1/sqrt(t))`.
    pub learning_rate: Option<f64>,
    /// Scale the step by `max(eps2, RMS(param))`.
    pub scale_parameter: bool,
    /// Added to squared gradients.
    pub eps1: f64,
    /// Lower bound on the parameter scale.
    pub eps2: f64,
    /// Updates are rescaled so that their RMS is at most this.
    pub clip_threshold: f64,
    /// Second-moment decay `1 - t^decay_rate`.
    pub decay_rate: f64,
    /// Decoupled weight decay coefficient, multiplied by the step size.
    pub weight_decay: f64,
}

impl Default for AdafactorConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            scale_parameter: true,
            eps1: 1e-30,
            eps2: 1e-3,
            clip_threshold: 1.0,
            decay_rate: -0.8,
            weight_decay: 0.0,
        }
    }
}

impl AdafactorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(lr) = self.learning_rate {
            contract!(lr > 0.0 && lr.is_finite(), "learning rate {lr} must be positive");
        }
        contract!(self.eps1 > 0.0 && self.eps2 >= 0.0, "epsilons must be non-negative");
        contract!(self.clip_threshold > 0.0, "clip threshold must be positive");
        contract!(self.decay_rate < 0.0, "decay rate must be negative");
        contract!(self.weight_decay >= 0.0, "weight decay must be >= 0");
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Moment {
    Factored { row: Vec<f64>, col: Vec<f64> },
    Full(Vec<f64>),
}

/// Adafactor with factored second moments for matrices and no first moment.
#[derive(Debug, Clone)]
pub struct Adafactor {
    config: AdafactorConfig,
    step: u64,
    moments: Vec<Moment>,
}

fn rms(x: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = x.len().max(1) as f64;
    (x.map(|v| v * v).sum::<f64>() / n).sqrt()
}

impl Adafactor {
    pub fn new<T: Element>(config: AdafactorConfig, params: &ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let moments = params
            .iter()
            .map(|(_, p)| {
                let [r, c] = p.shape();
                if r >= 2 && c >= 2 {
                    Moment::Factored {
                        row: vec![0.0; r],
                        col: vec![0.0; c],
                    }
                } else {
                    Moment::Full(vec![0.0; r * c])
                }
            })
            .collect();
        Ok(Self {
            config,
            step: 0,
            moments,
        })
    }

    pub fn config(&self) -> &AdafactorConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads[k]` belongs to the k-th parameter; `None`
    /// is treated as a zero gradient.
    pub fn step<T: Element>(&mut self, params: &mut ParamStore<T>, grads: &[Option<Vec<T>>]) -> Result<()> {
        contract!(
            grads.len() == params.len() && self.moments.len() == params.len(),
            "optimizer state for {} parameters, got {} gradients for {}",
            self.moments.len(),
            grads.len(),
            params.len()
        );
        self.step += 1;
        let cfg = self.config;
        let t = self.step as f64;
        let beta2 = 1.0 - t.powf(cfg.decay_rate);
        let rho = cfg.learning_rate.unwrap_or_else(|| (1.0 / t.sqrt()).min(1e-2));

        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let p = params.get_mut(id);
            let [rows, cols] = p.shape();
            let g: Vec<f64> = match &grads[k] {
                Some(g) => {
                    contract!(g.len() == rows * cols, "gradient size mismatch for {}", p.name);
                    g.iter().map(|v| v.as_f64()).collect()
                }
                None => vec![0.0; rows * cols],
            };
            let alpha = if cfg.scale_parameter {
                rho * cfg.eps2.max(rms(p.values.iter().map(|v| v.as_f64())))
            } else {
                rho
            };

            let mut update = vec![0.0; rows * cols];
            match &mut self.moments[k] {
                Moment::Factored { row, col } => {
                    for (i, r) in row.iter_mut().enumerate() {
                        let mean = g[i * cols..(i + 1) * cols].iter().map(|v| v * v + cfg.eps1).sum::<f64>() / cols as f64;
                        *r = beta2 * *r + (1.0 - beta2) * mean;
                    }
                    for (j, c) in col.iter_mut().enumerate() {
                        let mean = (0..rows).map(|i| g[i * cols + j].powi(2) + cfg.eps1).sum::<f64>() / rows as f64;
                        *c = beta2 * *c + (1.0 - beta2) * mean;
                    }
                    let row_mean = row.iter().sum::<f64>() / rows as f64;
                    for i in 0..rows {
                        for j in 0..cols {
                            let v = row[i] * col[j] / row_mean;
                            update[i * cols + j] = g[i * cols + j] / v.sqrt();
                        }
                    }
                }
                Moment::Full(v) => {
                    for ((u, vi), gi) in update.iter_mut().zip(v.iter_mut()).zip(&g) {
                        *vi = beta2 * *vi + (1.0 - beta2) * (gi * gi + cfg.eps1);
                        *u = gi / vi.sqrt();
                    }
                }
            }
            let denom = (rms(update.iter().copied()) / cfg.clip_threshold).max(1.0);
            let decay = cfg.weight_decay * alpha;
            for (w, u) in p.values.iter_mut().zip(&update) {
                let x = w.as_f64();
                *w = T::lit(x - decay * x - alpha * u / denom);
            }
        }
        Ok(())
    }
}

/// Rescales gradients in place so their global L2 norm is at most
/// `max_norm`; returns the norm before clipping.
pub fn clip_global_norm<T: Element>(grads: &mut [Option<Vec<T>>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .flat_map(|g| g.iter())
        .map(|v| v.as_f64().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::lit(max_norm / norm);
        for v in grads.iter_mut().flatten().flat_map(|g| g.iter_mut()) {
            *v *= s;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("m", 2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7]).unwrap();
        s.add("b", 1, 3, vec![0.2, 0.0, -0.4]).unwrap();
        s
    }

    #[test]
    fn descends_on_quadratic() {
        let mut p = store();
        let mut opt = Adafactor::new(AdafactorConfig::default(), &p).unwrap();
        let before = p.global_norm();
        for _ in 0..20 {
            let grads: Vec<Option<Vec<f64>>> = p.iter().map(|(_, q)| Some(q.values.clone())).collect();
            opt.step(&mut p, &grads).unwrap();
        }
        assert!(p.global_norm() < before);
    }

    #[test]
    fn weight_decay_shrinks_without_gradient() {
        let mut p = store();
        let cfg = AdafactorConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = Adafactor::new(cfg, &p).unwrap();
        let before = p.global_norm();
        opt.step(&mut p, &[None, None]).unwrap();
        assert!(p.global_norm() < before);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![Some(vec![3.0f64, 4.0]), None, Some(vec![12.0])];
        let n = clip_global_norm(&mut g, 1.0);
        assert!((n - 13.0).abs() < 1e-12);
        let after = clip_global_norm(&mut g, f64::INFINITY);
        assert!((after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = AdafactorConfig {
            learning_rate: Some(-1.0),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
