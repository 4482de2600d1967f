//! Stacked LSTMs with alternating directions.
//!
//! Layer 1 runs left to right, layer 2 right to left, and so on. Between
//! layers the input and output of a layer are concatenated and projected:
//! `x⁽ˡ⁺¹⁾_t = ReLU(W⁽ˡ⁾ · [x⁽ˡ⁾_t ; h⁽ˡ⁾_t])`. The projection after the last
//! layer gives the base features `h_t`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::init::{glorot_uniform, orthonormal_with};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

impl Direction {
    /// Direction of the 0-based layer `index`.
    pub fn for_layer(index: usize) -> Self {
        if index.is_multiple_of(2) {
            Direction::LeftToRight
        } else {
            Direction::RightToLeft
        }
    }
}

/// Gate rows are stacked as input, forget, output, candidate.
#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub input_weights: ParamId,
    pub recurrent_weights: ParamId,
    pub bias: ParamId,
    pub direction: Direction,
    pub input_dim: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct EncoderStack {
    pub layers: Vec<LstmLayer>,
    pub projections: Vec<ParamId>,
    pub hidden: usize,
}

/// Orthonormal blocks, one per gate, stacked into `[4h, cols]`.
fn gate_blocks<R: Rng + ?Sized>(hidden: usize, cols: usize, rng: &mut R) -> Tensor {
    let mut data = Vec::with_capacity(4 * hidden * cols);
    for _ in 0..4 {
        data.extend(orthonormal_with(hidden, cols, rng).into_data());
    }
    Tensor::matrix(4 * hidden, cols, data)
}

impl EncoderStack {
    /// Registers `num_layers` LSTM layers and their projections in `params`.
    pub fn init<R: Rng + ?Sized>(
        params: &mut ParamStore,
        input_dim: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_layers == 0 || hidden == 0 || input_dim == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        let mut layers = Vec::with_capacity(num_layers);
        let mut projections = Vec::with_capacity(num_layers);
        let mut width = input_dim;
        for k in 0..num_layers {
            let layer = LstmLayer {
                input_weights: params.add(format!("lstm{k}.input"), gate_blocks(hidden, width, rng)),
                recurrent_weights: params
                    .add(format!("lstm{k}.recurrent"), gate_blocks(hidden, hidden, rng)),
                bias: params.add(format!("lstm{k}.bias"), Tensor::zeros(&[4 * hidden])),
                direction: Direction::for_layer(k),
                input_dim: width,
                hidden,
            };
            let proj = glorot_uniform(hidden, width + hidden, rng);
            projections.push(params.add(format!("proj{k}"), proj));
            layers.push(layer);
            width = hidden;
        }
        Ok(EncoderStack {
            layers,
            projections,
            hidden,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }
}

/// One LSTM step. Returns `(h_t, c_t)`.
pub fn lstm_cell(
    g: &mut Graph<'_>,
    bound: &Bound,
    layer: &LstmLayer,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> (NodeId, NodeId) {
    let h = layer.hidden;
    let wx = g.matmul(bound.get(layer.input_weights), x);
    let wh = g.matmul(bound.get(layer.recurrent_weights), h_prev);
    let pre = g.add(wx, wh);
    let pre = g.add(pre, bound.get(layer.bias));

    let i = g.slice(pre, 0, h);
    let i = g.sigmoid(i);
    let f = g.slice(pre, h, h);
    let f = g.sigmoid(f);
    let o = g.slice(pre, 2 * h, h);
    let o = g.sigmoid(o);
    let cand = g.slice(pre, 3 * h, h);
    let cand = g.tanh(cand);

    let keep = g.mul(f, c_prev);
    let write = g.mul(i, cand);
    let c = g.add(keep, write);
    let squashed = g.tanh(c);
    let h_t = g.mul(o, squashed);
    (h_t, c)
}

/// Per-layer LSTM states plus the final projected features.
pub struct Encoded {
    /// `layer_states[k][t]` is `h⁽ᵏ⁺¹⁾_{t+1}`.
    pub layer_states: Vec<Vec<NodeId>>,
    /// Base features `h_1 … h_T`.
    pub outputs: Vec<NodeId>,
}

/// Runs the stack over `inputs` (one vector node per token). In training,
/// `dropout` is `Some((ratio, rng))` and is applied to every LSTM input.
pub fn encode<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    bound: &Bound,
    stack: &EncoderStack,
    inputs: &[NodeId],
    mut dropout: Option<(f64, &mut R)>,
) -> Result<Encoded> {
    if inputs.is_empty() {
        return Err(Error::contract("cannot encode an empty sequence"));
    }
    let len = inputs.len();
    let zeros = g.constant(Tensor::zeros(&[stack.hidden]));
    let mut xs = inputs.to_vec();
    let mut layer_states = Vec::with_capacity(stack.layers.len());

    for (layer, &proj) in stack.layers.iter().zip(&stack.projections) {
        let lstm_in: Vec<NodeId> = match dropout.as_mut() {
            Some((ratio, rng)) => xs.iter().map(|&x| g.dropout(x, *ratio, &mut **rng)).collect(),
            None => xs.clone(),
        };
        let order: Vec<usize> = match layer.direction {
            Direction::LeftToRight => (0..len).collect(),
            Direction::RightToLeft => (0..len).rev().collect(),
        };
        let mut states = vec![zeros; len];
        let (mut h, mut c) = (zeros, zeros);
        for t in order {
            (h, c) = lstm_cell(g, bound, layer, lstm_in[t], h, c);
            states[t] = h;
        }
        let w = bound.get(proj);
        xs = xs
            .iter()
            .zip(&states)
            .map(|(&x, &h)| {
                let joined = g.concat(&[x, h]);
                let pre = g.matmul(w, joined);
                g.relu(pre)
            })
            .collect();
        layer_states.push(states);
    }
    Ok(Encoded {
        layer_states,
        outputs: xs,
    })
}
