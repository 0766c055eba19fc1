use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Gradients, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the gradient so its global L2 norm is at most this value.
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

impl OptimConfig {
    pub const DEFAULT_CLIP: f64 = 5.0;

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings: {self:?}")))
        }
    }
}

/// First-order optimizer over a [`ParamStore`]. Adam keeps one moment pair
/// per tensor id, so a tensor shared by several languages has exactly one.
#[derive(Clone, Debug)]
pub struct Optimizer<S> {
    config: OptimConfig,
    steps: u64,
    moments: Vec<Option<(Vec<S>, Vec<S>)>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(config: OptimConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            steps: 0,
            moments: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Number of tensors with Adam state.
    pub fn moment_pairs(&self) -> usize {
        self.moments.iter().filter(|m| m.is_some()).count()
    }

    pub fn has_moments(&self, id: ParamId) -> bool {
        matches!(self.moments.get(id.index()), Some(Some(_)))
    }

    /// Applies one update to every tensor that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &Gradients<S>) -> Result<StepStats> {
        let ids: Vec<ParamId> = store.ids().filter(|&id| grads.get(id).is_some()).collect();
        let mut sq = 0.0;
        for &id in &ids {
            for g in grads.get(id).unwrap_or(&[]) {
                let g = g.as_f64();
                sq += g * g;
            }
        }
        let grad_norm = sq.sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite(format!("gradient norm {grad_norm}")));
        }
        let scale = match self.config.clip_norm {
            Some(c) if grad_norm > c => c / grad_norm,
            _ => 1.0,
        };
        let clipped = scale != 1.0;
        let scale = S::of(scale);

        self.steps += 1;
        let lr = S::of(self.config.lr);
        match self.config.kind {
            OptimizerKind::Sgd => {
                for &id in &ids {
                    let g = grads.get(id).unwrap_or(&[]);
                    for (p, &g) in store.get_mut(id).data_mut().iter_mut().zip(g) {
                        *p -= lr * (g * scale);
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.moments.len() < store.len() {
                    self.moments.resize(store.len(), None);
                }
                let b1 = S::of(self.config.beta1);
                let b2 = S::of(self.config.beta2);
                let eps = S::of(self.config.eps);
                let t = self.steps as i32;
                let c1 = S::one() - b1.powi(t);
                let c2 = S::one() - b2.powi(t);
                for &id in &ids {
                    let g = grads.get(id).unwrap_or(&[]);
                    let p = store.get_mut(id).data_mut();
                    let (m, v) = self.moments[id.index()]
                        .get_or_insert_with(|| (vec![S::zero(); p.len()], vec![S::zero(); p.len()]));
                    for i in 0..p.len() {
                        let g = g[i] * scale;
                        m[i] = b1 * m[i] + (S::one() - b1) * g;
                        v[i] = b2 * v[i] + (S::one() - b2) * g * g;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(StepStats { grad_norm, clipped })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::tensor::Tensor;

    fn quadratic_grads(store: &ParamStore<f64>) -> Gradients<f64> {
        // loss = sum(x * x)
        let mut g = Graph::new(store);
        let id = store.lookup("x").unwrap();
        let x = g.param(id);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss).unwrap()
    }

    fn store(values: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("x", Tensor::vector(values).unwrap()).unwrap();
        s
    }

    #[test]
    fn sgd_step() {
        let mut s = store(vec![1.0, -2.0]);
        let grads = quadratic_grads(&s);
        let mut opt = Optimizer::new(OptimConfig {
            kind: OptimizerKind::Sgd,
            lr: 0.1,
            ..OptimConfig::default()
        })
        .unwrap();
        let stats = opt.step(&mut s, &grads).unwrap();
        assert_eq!(s.get(s.lookup("x").unwrap()).data(), &[0.8, -1.6]);
        assert!((stats.grad_norm - 20f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = store(vec![1.0, -2.0]);
        let grads = quadratic_grads(&s);
        let mut opt = Optimizer::new(OptimConfig::default()).unwrap();
        opt.step(&mut s, &grads).unwrap();
        let x = s.get(s.lookup("x").unwrap()).data();
        assert!((x[0] - (1.0 - 1e-3)).abs() < 1e-10);
        assert!((x[1] - (-2.0 + 1e-3)).abs() < 1e-10);
        assert_eq!(opt.moment_pairs(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut s = store(vec![0.0, 0.0]);
            let before = s.get(ParamId(0)).clone();
            let grads = quadratic_grads(&s);
            let mut opt = Optimizer::new(OptimConfig {
                kind,
                ..OptimConfig::default()
            })
            .unwrap();
            opt.step(&mut s, &grads).unwrap();
            assert_eq!(s.get(ParamId(0)), &before);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut s = store(vec![0.3, -0.7]);
            let before = s.get(ParamId(0)).clone();
            let mut opt = Optimizer::new(OptimConfig {
                kind,
                lr: 0.0,
                ..OptimConfig::default()
            })
            .unwrap();
            for _ in 0..5 {
                let grads = quadratic_grads(&s);
                opt.step(&mut s, &grads).unwrap();
            }
            assert_eq!(s.get(ParamId(0)), &before);
        }
    }

    #[test]
    fn clipping_bounds_the_update() {
        let mut s = store(vec![30.0, 40.0]);
        let grads = quadratic_grads(&s);
        let mut opt = Optimizer::new(OptimConfig {
            kind: OptimizerKind::Sgd,
            lr: 1.0,
            clip_norm: Some(5.0),
            ..OptimConfig::default()
        })
        .unwrap();
        let stats = opt.step(&mut s, &grads).unwrap();
        assert!(stats.clipped);
        assert_eq!(stats.grad_norm, 100.0);
        let x = s.get(ParamId(0)).data();
        assert!((x[0] - 27.0).abs() < 1e-12 && (x[1] - 36.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_settings_rejected() {
        let bad = OptimConfig {
            beta1: 1.0,
            ..OptimConfig::default()
        };
        assert!(Optimizer::<f64>::new(bad).is_err());
        assert!(Optimizer::<f64>::new(OptimConfig {
            lr: -1.0,
            ..OptimConfig::default()
        })
        .is_err());
    }
}
