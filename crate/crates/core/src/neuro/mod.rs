//! Recurrent policy network built from scratch: one LSTM layer feeding a
//! sigmoid output layer, trained through backpropagation through time and
//! Adam. Everything is `f64`.

mod adam;
mod checkpoint;
mod gradcheck;
mod lstm;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use lstm::{episode_backward, head_forward, lstm_forward, policy_step, LstmCache, StepCache};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl NetDims {
    pub const fn new(input: usize, hidden: usize, output: usize) -> Self {
        NetDims {
            input,
            hidden,
            output,
        }
    }

    /// `n` sizes in, 64 hidden units, `n` scores out.
    pub const fn for_sizes(n: usize) -> Self {
        NetDims::new(n, 64, n)
    }

    fn gate_len(&self) -> usize {
        self.hidden * self.input + self.hidden * self.hidden + self.hidden
    }

    /// `4·(h·in + h·h + h) + out·h + out`.
    pub fn param_count(&self) -> usize {
        4 * self.gate_len() + self.output * self.hidden + self.output
    }
}

/// LSTM gates, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    /// Candidate cell input.
    Cell,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Output => "o",
            Gate::Cell => "c",
        }
    }
}

/// All trainable weights in one flat buffer.
///
/// Per gate, in [`Gate::ALL`] order: `W` (hidden × input), `U` (hidden ×
/// hidden), `b` (hidden); then the output layer `W_out` (output × hidden) and
/// `b_out` (output). Matrices are row-major. The same type doubles as a
/// gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    dims: NetDims,
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(dims: NetDims) -> Self {
        let data = vec![0.0; dims.param_count()];
        PolicyParams { dims, data }
    }

    /// Glorot-uniform matrices, zero biases except a forget-gate bias of 1.
    pub fn init<R: Rng + ?Sized>(dims: NetDims, rng: &mut R) -> Self {
        let mut p = PolicyParams::zeros(dims);
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let (x_lim, h_lim) = (
            glorot(dims.input, dims.hidden),
            glorot(dims.hidden, dims.hidden),
        );
        for gate in Gate::ALL {
            p.w_mut(gate)
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-x_lim..x_lim));
            p.u_mut(gate)
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-h_lim..h_lim));
        }
        p.b_mut(Gate::Forget).fill(1.0);
        let out_lim = glorot(dims.hidden, dims.output);
        p.w_out_mut()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-out_lim..out_lim));
        p
    }

    pub fn from_vec(dims: NetDims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.param_count() {
            return Err(Error::dim("parameter vector", dims.param_count(), data.len()));
        }
        Ok(PolicyParams { dims, data })
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn gate_offset(&self, gate: Gate) -> usize {
        gate.index() * self.dims.gate_len()
    }

    fn w_range(&self, gate: Gate) -> std::ops::Range<usize> {
        let start = self.gate_offset(gate);
        start..start + self.dims.hidden * self.dims.input
    }

    fn u_range(&self, gate: Gate) -> std::ops::Range<usize> {
        let start = self.w_range(gate).end;
        start..start + self.dims.hidden * self.dims.hidden
    }

    fn b_range(&self, gate: Gate) -> std::ops::Range<usize> {
        let start = self.u_range(gate).end;
        start..start + self.dims.hidden
    }

    fn w_out_range(&self) -> std::ops::Range<usize> {
        let start = 4 * self.dims.gate_len();
        start..start + self.dims.output * self.dims.hidden
    }

    fn b_out_range(&self) -> std::ops::Range<usize> {
        let start = self.w_out_range().end;
        start..start + self.dims.output
    }

    pub fn w(&self, gate: Gate) -> &[f64] {
        &self.data[self.w_range(gate)]
    }

    pub fn u(&self, gate: Gate) -> &[f64] {
        &self.data[self.u_range(gate)]
    }

    pub fn b(&self, gate: Gate) -> &[f64] {
        &self.data[self.b_range(gate)]
    }

    pub fn w_out(&self) -> &[f64] {
        &self.data[self.w_out_range()]
    }

    pub fn b_out(&self) -> &[f64] {
        &self.data[self.b_out_range()]
    }

    pub fn w_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.w_range(gate);
        &mut self.data[r]
    }

    pub fn u_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.u_range(gate);
        &mut self.data[r]
    }

    pub fn b_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.b_range(gate);
        &mut self.data[r]
    }

    pub fn w_out_mut(&mut self) -> &mut [f64] {
        let r = self.w_out_range();
        &mut self.data[r]
    }

    pub fn b_out_mut(&mut self) -> &mut [f64] {
        let r = self.b_out_range();
        &mut self.data[r]
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        assert_eq!(self.dims, other.dims, "parameter shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

/// Recurrent carry between steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl NetState {
    pub fn zeros(hidden: usize) -> Self {
        NetState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}
