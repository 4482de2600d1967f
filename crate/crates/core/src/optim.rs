//! Adam, the L2 penalty and the step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter Adam moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamState, lr: f64) -> Result<()> {
    if param.shape() != grad.shape()
        || param.shape() != state.m.shape()
        || param.shape() != state.v.shape()
    {
        return Err(Error::contract(format!(
            "adam shapes disagree: param {:?}, grad {:?}, moments {:?}",
            param.shape(),
            grad.shape(),
            state.m.shape()
        )));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (k, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
        m[k] = b1 * m[k] + (1.0 - b1) * g;
        v[k] = b2 * v[k] + (1.0 - b2) * g * g;
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Adam over every tensor of a [`ParamStore`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        Adam {
            states: params
                .ids()
                .map(|id| AdamState::new(params.get(id).shape()))
                .collect(),
        }
    }

    /// Updates every parameter. Parameters absent from `grads` are
    /// treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        assert_eq!(self.states.len(), params.len(), "optimizer/parameter count");
        for id in params.ids().collect::<Vec<_>>() {
            let state = &mut self.states[id.0];
            let param = params.get_mut(id);
            match grads.get(id) {
                Some(g) => adam_step(param, g, state, lr)?,
                None => {
                    let zero = Tensor::zeros(param.shape());
                    adam_step(param, &zero, state, lr)?;
                }
            }
        }
        Ok(())
    }

    pub fn state(&self, index: usize) -> &AdamState {
        &self.states[index]
    }
}

/// `(λ/2) Σ ‖θ‖²` over `params`, recorded on the graph.
pub fn l2_penalty(graph: &mut Graph<'_>, params: &[NodeId], lambda: f64) -> NodeId {
    assert!(lambda >= 0.0, "negative L2 coefficient");
    let mut total = graph.constant(Tensor::scalar(0.0));
    for &p in params {
        let sq = graph.sum_squares(p);
        total = graph.add(total, sq);
    }
    graph.scale(total, lambda / 2.0)
}

/// Value of `(λ/2) Σ ‖θ‖²` for a whole store.
pub fn l2_penalty_value(params: &ParamStore, lambda: f64) -> f64 {
    let total: f64 = params.ids().map(|id| params.get(id).sum_squares()).sum();
    0.5 * lambda * total
}

/// Learning rate for 1-based `epoch`: `base` for the first `hold` epochs,
/// then halved at the start of every `period`-epoch block.
pub fn step_decay_lr(base: f64, epoch: usize, hold: usize, period: usize) -> f64 {
    assert!(epoch >= 1, "epochs are 1-based");
    if epoch <= hold {
        return base;
    }
    let halvings = (epoch - hold).div_ceil(period);
    base * 0.5f64.powi(halvings as i32)
}
