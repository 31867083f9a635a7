//! Peephole LSTM cell built from graph primitives.

use super::{Graph, Tensor, Var};
use crate::error::{shape_err, Result};

/// Gate order used by every per-gate array below.
pub const GATES: [&str; 4] = ["i", "f", "o", "c"];

/// Weights of one peephole LSTM layer with input width `K` and hidden
/// size `D`.
///
/// `input[g]` is `K × D`, `recurrent[g]` is `D × D`, `bias[g]` has `D`
/// entries, for gates in [`GATES`] order. Peepholes are diagonal and exist
/// for the input, forget and output gates only.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: [Tensor; 4],
    pub recurrent: [Tensor; 4],
    pub peephole: [Tensor; 3],
    pub bias: [Tensor; 4],
}

impl LstmParams {
    pub fn zeros(input_width: usize, hidden: usize) -> Self {
        Self {
            input: std::array::from_fn(|_| Tensor::zeros([input_width, hidden])),
            recurrent: std::array::from_fn(|_| Tensor::zeros([hidden, hidden])),
            peephole: std::array::from_fn(|_| Tensor::zeros([hidden])),
            bias: std::array::from_fn(|_| Tensor::zeros([hidden])),
        }
    }

    pub fn input_width(&self) -> usize {
        self.input[0].shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.input[0].shape()[1]
    }

    pub fn to_graph(&self, g: &mut Graph, trainable: bool) -> LstmVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        LstmVars {
            input: std::array::from_fn(|i| leaf(&self.input[i])),
            recurrent: std::array::from_fn(|i| leaf(&self.recurrent[i])),
            peephole: std::array::from_fn(|i| leaf(&self.peephole[i])),
            bias: std::array::from_fn(|i| leaf(&self.bias[i])),
        }
    }
}

/// Graph handles for an [`LstmParams`] set.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub input: [Var; 4],
    pub recurrent: [Var; 4],
    pub peephole: [Var; 3],
    pub bias: [Var; 4],
}

impl LstmVars {
    pub fn all(&self) -> Vec<Var> {
        self.input
            .iter()
            .chain(&self.recurrent)
            .chain(&self.peephole)
            .chain(&self.bias)
            .copied()
            .collect()
    }
}

/// One step over a batch: `a` is `N × K`, `h_prev` and `c_prev` are
/// `N × D`. Returns `(h, c)`.
///
/// ```text
/// i = σ(a·Π_i + h'·U_i + Ψ_i⊙c' + b_i)
/// f = σ(a·Π_f + h'·U_f + Ψ_f⊙c' + b_f)
/// o = σ(a·Π_o + h'·U_o + Ψ_o⊙c' + b_o)
/// c̃ = tanh(a·Π_c + h'·U_c + b_c)
/// c = f⊙c' + i⊙c̃
/// h = o⊙tanh(c)
/// ```
///
/// The output gate peeks at the previous cell state `c'`, not the updated
/// one.
pub fn lstm_step(g: &mut Graph, a: Var, h_prev: Var, c_prev: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let n = g.value(a).shape().first().copied().unwrap_or(0);
    let d = g.value(p.bias[0]).len();
    for (v, name) in [(h_prev, "h_prev"), (c_prev, "c_prev")] {
        if g.value(v).shape() != [n, d] {
            return Err(shape_err(format!(
                "lstm_step: {name} has shape {:?}, expected [{n}, {d}]",
                g.value(v).shape()
            )));
        }
    }
    let pre = |g: &mut Graph, gate: usize| -> Result<Var> {
        let x = g.matmul(a, p.input[gate])?;
        let r = g.matmul(h_prev, p.recurrent[gate])?;
        let mut s = g.add(x, r)?;
        if gate < 3 {
            let peep = g.mul_row(c_prev, p.peephole[gate])?;
            s = g.add(s, peep)?;
        }
        g.add_row_bias(s, p.bias[gate])
    };
    let i_pre = pre(g, 0)?;
    let f_pre = pre(g, 1)?;
    let o_pre = pre(g, 2)?;
    let c_pre = pre(g, 3)?;
    let i = g.sigmoid(i_pre);
    let f = g.sigmoid(f_pre);
    let o = g.sigmoid(o_pre);
    let cand = g.tanh(c_pre);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_fixed_form() {
        let p = LstmParams::zeros(3, 2);
        let mut g = Graph::new();
        let vars = p.to_graph(&mut g, false);
        let a = g.constant(Tensor::new([1, 3], vec![0.3, -1.0, 2.0]).unwrap());
        let h0 = g.constant(Tensor::new([1, 2], vec![0.7, -0.2]).unwrap());
        let c0 = g.constant(Tensor::new([1, 2], vec![1.5, -4.0]).unwrap());
        let (h, c) = lstm_step(&mut g, a, h0, c0, &vars).unwrap();
        let c = g.value(c).data().to_vec();
        assert_eq!(c, vec![0.75, -2.0]);
        let h = g.value(h).data().to_vec();
        assert_eq!(h, vec![0.5 * 0.75f64.tanh(), 0.5 * (-2.0f64).tanh()]);
    }

    #[test]
    fn zero_everything_gives_zero_hidden() {
        let p = LstmParams::zeros(4, 3);
        let mut g = Graph::new();
        let vars = p.to_graph(&mut g, false);
        let a = g.constant(Tensor::zeros([2, 4]));
        let h0 = g.constant(Tensor::zeros([2, 3]));
        let c0 = g.constant(Tensor::zeros([2, 3]));
        let (h, _) = lstm_step(&mut g, a, h0, c0, &vars).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let p = LstmParams::zeros(4, 3);
        let mut g = Graph::new();
        let vars = p.to_graph(&mut g, false);
        let a = g.constant(Tensor::zeros([1, 5]));
        let h0 = g.constant(Tensor::zeros([1, 3]));
        let c0 = g.constant(Tensor::zeros([1, 3]));
        assert!(lstm_step(&mut g, a, h0, c0, &vars).is_err());
        let a = g.constant(Tensor::zeros([1, 4]));
        let h0 = g.constant(Tensor::zeros([1, 2]));
        assert!(lstm_step(&mut g, a, h0, c0, &vars).is_err());
    }
}
