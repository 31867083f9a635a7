//! Bias-corrected Adam.

use std::collections::BTreeMap;

use super::OptimConfig;
use crate::error::{Error, Result};
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::Tensor;

/// Moment estimates of one parameter block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One Adam update of `param` with gradient `grad`.
pub fn adam_step(param: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &OptimConfig) -> Result<()> {
    if grad.len() != param.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} gradients for {} parameters",
            grad.len(),
            param.len()
        )));
    }
    if state.t == 0 {
        state.m = vec![0.0; param.len()];
        state.v = vec![0.0; param.len()];
    } else if state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::ShapeMismatch("adam: moment estimates do not match parameter".into()));
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam states for a set of named parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Adam {
    states: BTreeMap<String, AdamState>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&mut self, name: &str, param: &mut Tensor, grad: &[f64], cfg: &OptimConfig) -> Result<()> {
        let state = self.states.entry(name.to_owned()).or_default();
        adam_step(param.data_mut(), grad, state, cfg)
    }

    pub fn state(&self, name: &str) -> Option<&AdamState> {
        self.states.get(name)
    }

    /// Stores states as `adam.<name>.{t,m,v}` blocks.
    pub fn save_into(&self, ck: &mut Checkpoint) {
        for (name, s) in &self.states {
            let n = s.m.len();
            ck.insert(format!("adam.{name}.t"), Tensor::scalar(s.t as f64));
            ck.insert(format!("adam.{name}.m"), Tensor::new([n], s.m.clone()).expect("len"));
            ck.insert(format!("adam.{name}.v"), Tensor::new([n], s.v.clone()).expect("len"));
        }
    }

    pub fn load_from(ck: &Checkpoint) -> Result<Self> {
        let mut states = BTreeMap::new();
        for (block, t) in ck.blocks() {
            let Some(name) = block.strip_prefix("adam.").and_then(|b| b.strip_suffix(".t")) else {
                continue;
            };
            let m = ck.require(&format!("adam.{name}.m"))?.data().to_vec();
            let v = ck.require(&format!("adam.{name}.v"))?.data().to_vec();
            if m.len() != v.len() || t.len() != 1 {
                return Err(Error::Parse(format!("malformed optimizer state for {name}")));
            }
            states.insert(name.to_owned(), AdamState { t: t.item() as u64, m, v });
        }
        Ok(Self { states })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = OptimConfig::default();
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::default();
        adam_step(&mut p, &[3.0, -0.5], &mut s, &cfg).unwrap();
        let d0 = (1.0 - p[0]).abs();
        let d1 = (-2.0 - p[1]).abs();
        for d in [d0, d1] {
            assert!(d >= 0.9 * cfg.lr && d <= cfg.lr, "{d}");
        }
    }

    #[test]
    fn zero_gradient_is_noop() {
        let cfg = OptimConfig::default();
        let mut p = vec![0.25];
        let mut s = AdamState::default();
        adam_step(&mut p, &[0.0], &mut s, &cfg).unwrap();
        assert_eq!(p, vec![0.25]);
    }
}
