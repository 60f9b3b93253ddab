//! Recurrent cells (GRU, LSTM) and the parameter-matched FC replacement.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use super::init_uniform;
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gated recurrent unit: update gate z, reset gate r, candidate h.
///
/// h_t = z_t * h_{t-1} + (1 - z_t) * tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_z: Array2<f64>,
    pub u_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_r: Array2<f64>,
    pub u_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_h: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_h: Array1<f64>,
}

/// Intermediate activations of one GRU step, kept for backprop.
pub(crate) struct GruStep {
    pub z: Array1<f64>,
    pub r: Array1<f64>,
    pub hbar: Array1<f64>,
    pub h: Array1<f64>,
}

impl GruCell {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GruCell {
            w_z: Array2::zeros((hidden, input)),
            u_z: Array2::zeros((hidden, hidden)),
            b_z: Array1::zeros(hidden),
            w_r: Array2::zeros((hidden, input)),
            u_r: Array2::zeros((hidden, hidden)),
            b_r: Array1::zeros(hidden),
            w_h: Array2::zeros((hidden, input)),
            u_h: Array2::zeros((hidden, hidden)),
            b_h: Array1::zeros(hidden),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        for (w, u, _) in self.gates_mut() {
            init_uniform(w, rng);
            init_uniform(u, rng);
        }
    }

    /// (w, u, b) triples in gate order z, r, h.
    pub fn gates(&self) -> [(&Array2<f64>, &Array2<f64>, &Array1<f64>); 3] {
        [
            (&self.w_z, &self.u_z, &self.b_z),
            (&self.w_r, &self.u_r, &self.b_r),
            (&self.w_h, &self.u_h, &self.b_h),
        ]
    }

    pub fn gates_mut(&mut self) -> [(&mut Array2<f64>, &mut Array2<f64>, &mut Array1<f64>); 3] {
        [
            (&mut self.w_z, &mut self.u_z, &mut self.b_z),
            (&mut self.w_r, &mut self.u_r, &mut self.b_r),
            (&mut self.w_h, &mut self.u_h, &mut self.b_h),
        ]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn param_count(&self) -> usize {
        3 * (self.w_z.len() + self.u_z.len() + self.b_z.len())
    }

    pub(crate) fn step(&self, x: ArrayView1<f64>, h_prev: ArrayView1<f64>) -> GruStep {
        let z = (self.w_z.dot(&x) + self.u_z.dot(&h_prev) + &self.b_z).mapv(sigmoid);
        let r = (self.w_r.dot(&x) + self.u_r.dot(&h_prev) + &self.b_r).mapv(sigmoid);
        let rh = &r * &h_prev;
        let hbar = (self.w_h.dot(&x) + self.u_h.dot(&rh) + &self.b_h).mapv(f64::tanh);
        let h = &z * &h_prev + (1.0 - &z) * &hbar;
        GruStep { z, r, hbar, h }
    }
}

/// LSTM: forget/input/output gates plus a memory cell.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_f: Array2<f64>,
    pub u_f: Array2<f64>,
    pub b_f: Array1<f64>,
    pub w_i: Array2<f64>,
    pub u_i: Array2<f64>,
    pub b_i: Array1<f64>,
    pub w_o: Array2<f64>,
    pub u_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub w_c: Array2<f64>,
    pub u_c: Array2<f64>,
    pub b_c: Array1<f64>,
}

pub(crate) struct LstmStep {
    pub f: Array1<f64>,
    pub i: Array1<f64>,
    pub o: Array1<f64>,
    /// Candidate tanh(W_c x + U_c h_prev + b_c).
    pub g: Array1<f64>,
    pub c: Array1<f64>,
    pub h: Array1<f64>,
}

impl LstmCell {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmCell {
            w_f: Array2::zeros((hidden, input)),
            u_f: Array2::zeros((hidden, hidden)),
            b_f: Array1::zeros(hidden),
            w_i: Array2::zeros((hidden, input)),
            u_i: Array2::zeros((hidden, hidden)),
            b_i: Array1::zeros(hidden),
            w_o: Array2::zeros((hidden, input)),
            u_o: Array2::zeros((hidden, hidden)),
            b_o: Array1::zeros(hidden),
            w_c: Array2::zeros((hidden, input)),
            u_c: Array2::zeros((hidden, hidden)),
            b_c: Array1::zeros(hidden),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        for (w, u, _) in self.gates_mut() {
            init_uniform(w, rng);
            init_uniform(u, rng);
        }
    }

    /// (w, u, b) triples in gate order f, i, o, c.
    pub fn gates(&self) -> [(&Array2<f64>, &Array2<f64>, &Array1<f64>); 4] {
        [
            (&self.w_f, &self.u_f, &self.b_f),
            (&self.w_i, &self.u_i, &self.b_i),
            (&self.w_o, &self.u_o, &self.b_o),
            (&self.w_c, &self.u_c, &self.b_c),
        ]
    }

    pub fn gates_mut(&mut self) -> [(&mut Array2<f64>, &mut Array2<f64>, &mut Array1<f64>); 4] {
        [
            (&mut self.w_f, &mut self.u_f, &mut self.b_f),
            (&mut self.w_i, &mut self.u_i, &mut self.b_i),
            (&mut self.w_o, &mut self.u_o, &mut self.b_o),
            (&mut self.w_c, &mut self.u_c, &mut self.b_c),
        ]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_f.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.ncols()
    }

    pub fn param_count(&self) -> usize {
        4 * (self.w_f.len() + self.u_f.len() + self.b_f.len())
    }

    pub(crate) fn step(
        &self,
        x: ArrayView1<f64>,
        h_prev: ArrayView1<f64>,
        c_prev: ArrayView1<f64>,
    ) -> LstmStep {
        let f = (self.w_f.dot(&x) + self.u_f.dot(&h_prev) + &self.b_f).mapv(sigmoid);
        let i = (self.w_i.dot(&x) + self.u_i.dot(&h_prev) + &self.b_i).mapv(sigmoid);
        let o = (self.w_o.dot(&x) + self.u_o.dot(&h_prev) + &self.b_o).mapv(sigmoid);
        let g = (self.w_c.dot(&x) + self.u_c.dot(&h_prev) + &self.b_c).mapv(f64::tanh);
        let c = &f * &c_prev + &i * &g;
        let h = &o * &c.mapv(f64::tanh);
        LstmStep { f, i, o, g, c, h }
    }
}

/// Per-frame replacement for a recurrent cell: two tanh layers sized for
/// exact parameter parity with a GRU of the same dimensions. The widening
/// to 3H and the bias-free second layer give
/// (3H*D + 3H) + (H*3H) = 3(H*D + H*H + H) parameters.
#[derive(Debug, Clone)]
pub struct FcCell {
    /// 3H x D.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// H x 3H, no bias.
    pub w2: Array2<f64>,
}

pub(crate) struct FcStep {
    pub a1: Array1<f64>,
    pub h: Array1<f64>,
}

impl FcCell {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        FcCell {
            w1: Array2::zeros((3 * hidden, input)),
            b1: Array1::zeros(3 * hidden),
            w2: Array2::zeros((hidden, 3 * hidden)),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        init_uniform(&mut self.w1, rng);
        init_uniform(&mut self.w2, rng);
    }

    pub fn hidden_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len()
    }

    pub(crate) fn step(&self, x: ArrayView1<f64>) -> FcStep {
        let a1 = (self.w1.dot(&x) + &self.b1).mapv(f64::tanh);
        let h = self.w2.dot(&a1).mapv(f64::tanh);
        FcStep { a1, h }
    }
}

/// Parameter count of the FC replacement for a (hidden, input) cell;
/// equals the GRU count by construction.
pub fn fc_cell_param_count(hidden: usize, input: usize) -> usize {
    (3 * hidden * input + 3 * hidden) + hidden * 3 * hidden
}

/// One GRU step. Validates shapes; see [`GruCell`] for the recurrence.
pub fn gru_step(cell: &GruCell, x: &Array1<f64>, h_prev: &Array1<f64>) -> Result<Array1<f64>> {
    if x.len() != cell.input_dim() || h_prev.len() != cell.hidden_dim() {
        return Err(Error::data(format!(
            "gru_step shape mismatch: x has {} (cell wants {}), h_prev has {} (cell wants {})",
            x.len(),
            cell.input_dim(),
            h_prev.len(),
            cell.hidden_dim()
        )));
    }
    Ok(cell.step(x.view(), h_prev.view()).h)
}

/// One LSTM step; returns (h_t, c_t).
pub fn lstm_step(
    cell: &LstmCell,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if x.len() != cell.input_dim()
        || h_prev.len() != cell.hidden_dim()
        || c_prev.len() != cell.hidden_dim()
    {
        return Err(Error::data(format!(
            "lstm_step shape mismatch: x has {} (cell wants {}), state has {}/{} (cell wants {})",
            x.len(),
            cell.input_dim(),
            h_prev.len(),
            c_prev.len(),
            cell.hidden_dim()
        )));
    }
    let s = cell.step(x.view(), h_prev.view(), c_prev.view());
    Ok((s.h, s.c))
}
