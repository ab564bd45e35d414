//! Single-layer LSTM with a dense output head, trained by backpropagation
//! through time.
//!
//! Gate equations for one step, with `σ` the logistic function:
//!
//! ```text
//! i  = σ(W_i x + U_i h + b_i)
//! f  = σ(W_f x + U_f h + b_f)
//! o  = σ(W_o x + U_o h + b_o)
//! g  = tanh(W_g x + U_g h + b_g)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```
//!
//! The head is affine on the final hidden state: a scalar for regression, or
//! four logits followed by a softmax for application classification.

mod cell;
mod gradcheck;
mod persist;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use cell::{backward, backward_into, cell_forward, forward, CellState, ForwardCache, StepCache};
pub use gradcheck::{grad_check, relative_error};
pub use persist::{load_model, read_model, save_model, write_model, MODEL_FORMAT};
pub use train::{
    loss_and_grad, predict, predict_proba, train, LstmModel, TrainConfig, TrainOutcome,
};

pub const DEFAULT_HIDDEN: usize = 100;
pub const NUM_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    /// Input weights per gate, `hidden × input`, indexed by [`Gate`].
    pub w: [Matrix; 4],
    /// Recurrent weights per gate, `hidden × hidden`.
    pub u: [Matrix; 4],
    pub b: [Vec<f64>; 4],
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            w: std::array::from_fn(|_| Matrix::zeros(hidden_size, input_size)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden_size, hidden_size)),
            b: std::array::from_fn(|_| vec![0.0; hidden_size]),
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (h, n) = (self.hidden_size, self.input_size);
        for g in 0..4 {
            if self.w[g].shape() != (h, n) || self.u[g].shape() != (h, h) || self.b[g].len() != h {
                return Err(Error::Shape {
                    what: "LSTM parameters",
                    expected: format!("hidden {h}, input {n}"),
                    actual: format!(
                        "W {:?}, U {:?}, b {}",
                        self.w[g].shape(),
                        self.u[g].shape(),
                        self.b[g].len()
                    ),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Regression,
    Softmax4,
}

impl HeadKind {
    pub fn output_dim(self) -> usize {
        match self {
            HeadKind::Regression => 1,
            HeadKind::Softmax4 => NUM_CLASSES,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Regression => "regression",
            HeadKind::Softmax4 => "softmax",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(HeadKind::Regression),
            "softmax" | "softmax4" => Ok(HeadKind::Softmax4),
            other => Err(Error::unknown("head", other, &["regression", "softmax"])),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub kind: HeadKind,
    /// `output_dim × hidden`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(kind: HeadKind, hidden_size: usize) -> Self {
        Self {
            kind,
            weights: Matrix::zeros(kind.output_dim(), hidden_size),
            bias: vec![0.0; kind.output_dim()],
        }
    }
}

/// LSTM layer plus output head. Gradients share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub lstm: LstmParams,
    pub head: HeadParams,
}

impl Network {
    pub fn zeros(input_size: usize, hidden_size: usize, kind: HeadKind) -> Self {
        Self {
            lstm: LstmParams::zeros(input_size, hidden_size),
            head: HeadParams::zeros(kind, hidden_size),
        }
    }

    /// Every parameter drawn uniformly from `[-1/√hidden, 1/√hidden]`.
    pub fn init_uniform<R: Rng + ?Sized>(
        input_size: usize,
        hidden_size: usize,
        kind: HeadKind,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(input_size, hidden_size, kind);
        let bound = 1.0 / (hidden_size as f64).sqrt();
        for slice in net.slices_mut() {
            for v in slice {
                *v = rng.random_range(-bound..=bound);
            }
        }
        net
    }

    pub fn input_size(&self) -> usize {
        self.lstm.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size
    }

    pub fn kind(&self) -> HeadKind {
        self.head.kind
    }

    /// Parameter blocks in a fixed order: per gate W, U, b; then head weights and bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(14);
        for g in 0..4 {
            out.push(self.lstm.w[g].as_slice());
            out.push(self.lstm.u[g].as_slice());
            out.push(&self.lstm.b[g]);
        }
        out.push(self.head.weights.as_slice());
        out.push(&self.head.bias);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(14);
        let LstmParams { w, u, b, .. } = &mut self.lstm;
        for ((w, u), b) in w.iter_mut().zip(u.iter_mut()).zip(b.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(u.as_mut_slice());
            out.push(b);
        }
        out.push(self.head.weights.as_mut_slice());
        out.push(&mut self.head.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for s in self.slices_mut() {
            s.fill(value);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &Network, factor: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += factor * s;
            }
        }
    }

    pub fn same_shape(&self, other: &Network) -> bool {
        self.kind() == other.kind()
            && self.input_size() == other.input_size()
            && self.hidden_size() == other.hidden_size()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn init_within_bounds_and_seeded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let net = Network::init_uniform(5, 16, HeadKind::Regression, &mut rng);
        let bound = 0.25;
        assert!(net.slices().iter().flat_map(|s| s.iter()).all(|v| v.abs() <= bound));
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        assert_eq!(net, Network::init_uniform(5, 16, HeadKind::Regression, &mut rng2));
        assert_eq!(net.num_params(), 4 * (16 * 5 + 16 * 16 + 16) + 16 + 1);
    }

    #[test]
    fn head_names() {
        assert_eq!("softmax".parse::<HeadKind>().unwrap(), HeadKind::Softmax4);
        assert!("svm".parse::<HeadKind>().is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_ignores_shift(
            logits in prop::collection::vec(-30.0f64..30.0, 4),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
