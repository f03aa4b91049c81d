//! LSTM cell built from tape primitives.
//!
//! Weights are packed side by side as `[input | forget | candidate | output]`
//! in one `(d_in + d_h) × 4·d_h` matrix plus a `1 × 4·d_h` bias, so a step is
//! one matmul, four slices and the gate arithmetic.

use crate::error::Result;
use crate::numcore::array::Array;
use crate::numcore::tape::{Tape, Var};
use rand::Rng;

/// Tape handles for one cell's packed weights.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w: Var,
    pub b: Var,
    pub hidden: usize,
}

/// One step of the standard LSTM recurrence:
/// gates from `[x; h_prev] × W + b`, then `c = f⊙c_prev + i⊙g`,
/// `h = o⊙tanh(c)`.
pub fn lstm_step(
    tape: &mut Tape,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    weights: &LstmWeights,
) -> Result<(Var, Var)> {
    let d = weights.hidden;
    let xh = tape.concat(&[x, h_prev])?;
    let lin = tape.matmul(xh, weights.w)?;
    let z = tape.add(lin, weights.b)?;

    let i_lin = tape.slice_cols(z, 0, d)?;
    let f_lin = tape.slice_cols(z, d, d)?;
    let g_lin = tape.slice_cols(z, 2 * d, d)?;
    let o_lin = tape.slice_cols(z, 3 * d, d)?;

    let i = tape.sigmoid(i_lin);
    let f = tape.sigmoid(f_lin);
    let g = tape.tanh(g_lin);
    let o = tape.sigmoid(o_lin);

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c);
    let h = tape.mul(o, c_act)?;
    Ok((h, c))
}

/// Fresh packed weights: uniform in `[-scale, scale)` with the forget-gate
/// bias block set to 1.0 (standard LSTM, no peepholes).
pub fn lstm_init<R: Rng>(d_in: usize, d_h: usize, scale: f64, rng: &mut R) -> (Array, Array) {
    let w = Array::uniform(vec![d_in + d_h, 4 * d_h], -scale, scale, rng);
    let mut b = Array::uniform(vec![1, 4 * d_h], -scale, scale, rng);
    for j in d_h..2 * d_h {
        b.values_mut()[j] = 1.0;
    }
    (w, b)
}
