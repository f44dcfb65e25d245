use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Weights of one LSTM direction. Gate rows are stacked as input, forget,
/// candidate, output; each block is `hidden` rows of `input + hidden` columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Weights uniform in ±1/√fan_in, forget-gate bias 1.
    pub fn init<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = input + hidden;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = store.add_uniform(&format!("{prefix}.weight"), 4 * hidden, fan_in, bound, rng);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let bias = store.add(&format!("{prefix}.bias"), 4 * hidden, 1, b);
        LstmParams {
            weight,
            bias,
            input,
            hidden,
        }
    }
}

/// Tape nodes for a direction's weights, loaded once per tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub weight: NodeId,
    pub bias: NodeId,
    pub hidden: usize,
}

impl LstmWeights {
    pub fn load(tape: &mut Tape, store: &ParamStore, p: &LstmParams) -> Self {
        LstmWeights {
            weight: tape.param(store, p.weight),
            bias: tape.param(store, p.bias),
            hidden: p.hidden,
        }
    }
}

/// One recurrence step:
/// `i, f, o = σ(W·[x; h] + b)`, `g = tanh(W·[x; h] + b)`,
/// `c = f ⊙ c_prev + i ⊙ g`, `h = o ⊙ tanh(c)`.
pub fn lstm_step(
    tape: &mut Tape,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    w: &LstmWeights,
) -> Result<(NodeId, NodeId)> {
    let hsz = w.hidden;
    if tape.shape(h_prev).0 != hsz || tape.shape(c_prev).0 != hsz {
        return Err(Error::Shape {
            op: "lstm_step",
            detail: format!(
                "state sizes {} / {} with hidden size {hsz}",
                tape.shape(h_prev).0,
                tape.shape(c_prev).0
            ),
        });
    }
    let xh = tape.concat(&[x, h_prev])?;
    let pre = tape.matvec(w.weight, xh)?;
    let pre = tape.add(pre, w.bias)?;
    let i = tape.slice(pre, 0, hsz)?;
    let f = tape.slice(pre, hsz, hsz)?;
    let g = tape.slice(pre, 2 * hsz, hsz)?;
    let o = tape.slice(pre, 3 * hsz, hsz)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Runs a direction over `inputs` from zero state; returns hidden states
/// aligned with the inputs (for a reversed run, `out[t]` is still the state
/// at position `t`).
pub fn lstm_sequence(tape: &mut Tape, inputs: &[NodeId], w: &LstmWeights, reverse: bool) -> Result<Vec<NodeId>> {
    let mut h = tape.constant(vec![0.0; w.hidden]);
    let mut c = tape.constant(vec![0.0; w.hidden]);
    let mut out = vec![h; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        let (nh, nc) = lstm_step(tape, inputs[t], h, c, w)?;
        h = nh;
        c = nc;
        out[t] = h;
    }
    Ok(out)
}
