use super::{sigmoid, softmax, Gate, HeadKind, LstmParams, Network};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            h: vec![0.0; hidden_size],
            c: vec![0.0; hidden_size],
        }
    }
}

/// Everything one step's backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Gate activations indexed by [`Gate`].
    pub gates: [Vec<f64>; 4],
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl StepCache {
    pub fn gate(&self, g: Gate) -> &[f64] {
        &self.gates[g as usize]
    }
}

fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

pub fn cell_forward(x: &[f64], state: &CellState, p: &LstmParams) -> Result<(CellState, StepCache)> {
    let hs = p.hidden_size;
    if x.len() != p.input_size {
        return Err(Error::Shape {
            what: "cell input",
            expected: p.input_size.to_string(),
            actual: x.len().to_string(),
        });
    }
    if state.h.len() != hs || state.c.len() != hs {
        return Err(Error::Shape {
            what: "cell state",
            expected: hs.to_string(),
            actual: format!("h {}, c {}", state.h.len(), state.c.len()),
        });
    }

    let gates: [Vec<f64>; 4] = std::array::from_fn(|g| {
        let mut a = p.b[g].clone();
        p.w[g].mul_vec_acc(x, &mut a);
        p.u[g].mul_vec_acc(&state.h, &mut a);
        let act: fn(f64) -> f64 = if g == Gate::Candidate as usize { f64::tanh } else { sigmoid };
        a.iter_mut().for_each(|v| *v = act(*v));
        a
    });

    let [i, f, o, g] = [&gates[0], &gates[1], &gates[2], &gates[3]];
    let c: Vec<f64> = (0..hs).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hs).map(|k| o[k] * tanh_c[k]).collect();

    if let Some(index) = first_non_finite(&c) {
        return Err(Error::NonFinite { what: "cell state c", index });
    }
    if let Some(index) = first_non_finite(&h) {
        return Err(Error::NonFinite { what: "hidden state h", index });
    }

    let cache = StepCache {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gates,
        c: c.clone(),
        tanh_c,
    };
    Ok((CellState { h, c }, cache))
}

/// Activations of a full forward pass over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub steps: Vec<StepCache>,
    pub final_state: CellState,
    /// Head output before any softmax: the prediction for regression, logits otherwise.
    pub raw_output: Vec<f64>,
    input_size: usize,
    hidden_size: usize,
    kind: HeadKind,
}

/// Runs the window's rows through the LSTM from a zero state and applies the
/// head to the last hidden state. Returns the regression value or the class
/// probabilities.
pub fn forward(window: &Matrix, net: &Network) -> Result<(Vec<f64>, ForwardCache)> {
    if window.rows() == 0 {
        return Err(Error::Empty("window"));
    }
    let p = &net.lstm;
    let mut state = CellState::zeros(p.hidden_size);
    let mut steps = Vec::with_capacity(window.rows());
    for row in window.iter_rows() {
        let (next, cache) = cell_forward(row, &state, p)?;
        steps.push(cache);
        state = next;
    }

    let mut raw = net.head.bias.clone();
    net.head.weights.mul_vec_acc(&state.h, &mut raw);
    if let Some(index) = first_non_finite(&raw) {
        return Err(Error::NonFinite { what: "head output", index });
    }
    let output = match net.head.kind {
        HeadKind::Regression => raw.clone(),
        HeadKind::Softmax4 => softmax(&raw),
    };
    Ok((
        output,
        ForwardCache {
            steps,
            final_state: state,
            raw_output: raw,
            input_size: p.input_size,
            hidden_size: p.hidden_size,
            kind: net.head.kind,
        },
    ))
}

/// Gradients of every parameter given `d_raw`, the loss gradient with respect
/// to the head's raw output (the prediction, or the logits for softmax).
pub fn backward(cache: &ForwardCache, net: &Network, d_raw: &[f64]) -> Result<Network> {
    let mut grads = Network::zeros(net.input_size(), net.hidden_size(), net.kind());
    backward_into(cache, net, d_raw, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`], accumulating into `grads`.
pub fn backward_into(cache: &ForwardCache, net: &Network, d_raw: &[f64], grads: &mut Network) -> Result<()> {
    if cache.input_size != net.input_size()
        || cache.hidden_size != net.hidden_size()
        || cache.kind != net.kind()
        || !grads.same_shape(net)
    {
        return Err(Error::Shape {
            what: "forward cache",
            expected: format!("{} input, {} hidden, {}", net.input_size(), net.hidden_size(), net.kind()),
            actual: format!("{} input, {} hidden, {}", cache.input_size, cache.hidden_size, cache.kind),
        });
    }
    if d_raw.len() != net.kind().output_dim() {
        return Err(Error::Shape {
            what: "output gradient",
            expected: net.kind().output_dim().to_string(),
            actual: d_raw.len().to_string(),
        });
    }

    let hs = net.hidden_size();
    let p = &net.lstm;

    grads.head.weights.add_outer(d_raw, &cache.final_state.h);
    for (gb, d) in grads.head.bias.iter_mut().zip(d_raw) {
        *gb += d;
    }

    let mut dh = vec![0.0; hs];
    net.head.weights.mul_t_vec_acc(d_raw, &mut dh);
    let mut dc = vec![0.0; hs];
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hs]);

    for step in cache.steps.iter().rev() {
        let [i, f, o, g] = [&step.gates[0], &step.gates[1], &step.gates[2], &step.gates[3]];
        for k in 0..hs {
            let dck = dc[k] + dh[k] * o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
            let d_o = dh[k] * step.tanh_c[k];
            let d_i = dck * g[k];
            let d_f = dck * step.c_prev[k];
            let d_g = dck * i[k];
            da[Gate::Input as usize][k] = d_i * i[k] * (1.0 - i[k]);
            da[Gate::Forget as usize][k] = d_f * f[k] * (1.0 - f[k]);
            da[Gate::Output as usize][k] = d_o * o[k] * (1.0 - o[k]);
            da[Gate::Candidate as usize][k] = d_g * (1.0 - g[k] * g[k]);
            dc[k] = dck * f[k];
        }

        dh.fill(0.0);
        for (gate, d_gate) in da.iter().enumerate() {
            grads.lstm.w[gate].add_outer(d_gate, &step.x);
            grads.lstm.u[gate].add_outer(d_gate, &step.h_prev);
            for (gb, d) in grads.lstm.b[gate].iter_mut().zip(d_gate) {
                *gb += d;
            }
            p.u[gate].mul_t_vec_acc(d_gate, &mut dh);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{HeadParams, LstmParams};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn scalar_params(w: f64) -> LstmParams {
        let mut p = LstmParams::zeros(1, 1);
        for g in 0..4 {
            p.w[g].as_mut_slice()[0] = w;
        }
        p
    }

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (next, cache) = cell_forward(&[1.0, -2.0, 0.5], &CellState::zeros(2), &p).unwrap();
        for g in [Gate::Input, Gate::Forget, Gate::Output] {
            assert_eq!(cache.gate(g), &[0.5, 0.5]);
        }
        assert_eq!(cache.gate(Gate::Candidate), &[0.0, 0.0]);
        assert_eq!(next, CellState::zeros(2));
    }

    #[test]
    fn scalar_hand_computation() {
        let s = 1.0 / (1.0 + (-0.5f64).exp());
        let t = 0.5f64.tanh();
        assert!((s - 0.62246).abs() < 1e-5 && (t - 0.46212).abs() < 1e-5);
        let c_expected = s * t;
        let h_expected = s * c_expected.tanh();

        let (next, _) = cell_forward(&[1.0], &CellState::zeros(1), &scalar_params(0.5)).unwrap();
        assert!((next.c[0] - c_expected).abs() < 1e-15);
        assert!((next.h[0] - h_expected).abs() < 1e-15);
        // Five-digit reference values, rounded from the products above.
        assert!((next.c[0] - 0.28767).abs() < 5e-5);
        assert!((next.h[0] - 0.17430).abs() < 5e-5);
    }

    #[test]
    fn saturated_gates_carry_cell() {
        let mut p = LstmParams::zeros(1, 1);
        p.b[Gate::Forget as usize][0] = 50.0;
        p.b[Gate::Input as usize][0] = -50.0;
        let state = CellState { h: vec![0.0], c: vec![1.0] };
        let (next, _) = cell_forward(&[3.0], &state, &p).unwrap();
        assert!((next.c[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let p = LstmParams::zeros(2, 3);
        assert!(cell_forward(&[1.0], &CellState::zeros(3), &p).is_err());
        assert!(cell_forward(&[1.0, 2.0], &CellState::zeros(2), &p).is_err());

        let mut p = LstmParams::zeros(1, 2);
        p.b[Gate::Candidate as usize][1] = f64::NAN;
        match cell_forward(&[1.0], &CellState::zeros(2), &p) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn zero_network_outputs() {
        let window = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let mut net = Network::zeros(2, 3, HeadKind::Regression);
        net.head.bias[0] = 0.7;
        assert_eq!(forward(&window, &net).unwrap().0, vec![0.7]);

        let net = Network::zeros(2, 3, HeadKind::Softmax4);
        assert_eq!(forward(&window, &net).unwrap().0, vec![0.25; 4]);

        assert!(forward(&Matrix::zeros(0, 2), &net).is_err());
    }

    #[test]
    fn single_row_is_one_cell_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let net = Network::init_uniform(3, 4, HeadKind::Regression, &mut rng);
        let x = [0.3, -0.2, 0.9];
        let (state, _) = cell_forward(&x, &CellState::zeros(4), &net.lstm).unwrap();
        let mut y = net.head.bias.clone();
        net.head.weights.mul_vec_acc(&state.h, &mut y);
        let (out, _) = forward(&Matrix::from_rows(&[x.to_vec()]).unwrap(), &net).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let net = Network::init_uniform(3, 4, HeadKind::Regression, &mut rng);
        let window = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6]]).unwrap();
        let (_, cache) = forward(&window, &net).unwrap();
        let grads = backward(&cache, &net, &[0.0]).unwrap();
        assert!(grads.slices().iter().flat_map(|s| s.iter()).all(|g| g.abs() <= 1e-12));
    }

    #[test]
    fn scalar_chain_rule() {
        // One step, hidden 1, input 1, loss = y (so d_raw = 1), h_prev = c_prev = 0.
        let (wi, wf, wo, wg, v) = (0.3, -0.4, 0.8, 0.6, 1.5);
        let mut net = Network::zeros(1, 1, HeadKind::Regression);
        for (g, w) in [wi, wf, wo, wg].into_iter().enumerate() {
            net.lstm.w[g].as_mut_slice()[0] = w;
        }
        net.head.weights.as_mut_slice()[0] = v;
        let x = 2.0;

        let (i, o, g) = (sigmoid(wi * x), sigmoid(wo * x), (wg * x).tanh());
        let c = i * g;
        let h = o * c.tanh();
        // y = v h + b
        let dh = v;
        let dc = dh * o * (1.0 - c.tanh().powi(2));
        let expected_w_i = dc * g * i * (1.0 - i) * x;
        let expected_w_o = dh * c.tanh() * o * (1.0 - o) * x;
        let expected_w_g = dc * i * (1.0 - g * g) * x;

        let (_, cache) = forward(&Matrix::from_rows(&[vec![x]]).unwrap(), &net).unwrap();
        let grads = backward(&cache, &net, &[1.0]).unwrap();
        assert!((grads.head.weights.as_slice()[0] - h).abs() < 1e-15);
        assert_eq!(grads.head.bias[0], 1.0);
        assert!((grads.lstm.w[Gate::Input as usize].as_slice()[0] - expected_w_i).abs() < 1e-15);
        assert!((grads.lstm.w[Gate::Output as usize].as_slice()[0] - expected_w_o).abs() < 1e-15);
        assert!((grads.lstm.w[Gate::Candidate as usize].as_slice()[0] - expected_w_g).abs() < 1e-15);
        // c_prev = 0 and h_prev = 0: forget weights and all recurrent weights get nothing.
        assert_eq!(grads.lstm.w[Gate::Forget as usize].as_slice()[0], 0.0);
        for g in 0..4 {
            assert_eq!(grads.lstm.u[g].as_slice()[0], 0.0);
        }
    }

    #[test]
    fn mismatched_cache_rejected() {
        let small = Network::zeros(2, 3, HeadKind::Regression);
        let big = Network::zeros(2, 4, HeadKind::Regression);
        let (_, cache) = forward(&Matrix::zeros(1, 2), &small).unwrap();
        assert!(backward(&cache, &big, &[1.0]).is_err());
        assert!(backward(&cache, &small, &[1.0, 2.0]).is_err());
        let other_head = Network {
            lstm: small.lstm.clone(),
            head: HeadParams::zeros(HeadKind::Softmax4, 3),
        };
        assert!(backward(&cache, &other_head, &[0.0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn activations_stay_in_range(seed in any::<u64>(), rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..8)) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let net = Network::init_uniform(3, 5, HeadKind::Regression, &mut rng);
            let (_, cache) = forward(&Matrix::from_rows(&rows).unwrap(), &net).unwrap();
            for step in &cache.steps {
                for g in [Gate::Input, Gate::Forget, Gate::Output] {
                    prop_assert!(step.gate(g).iter().all(|&v| v > 0.0 && v < 1.0));
                }
                prop_assert!(step.gate(Gate::Candidate).iter().all(|&v| v > -1.0 && v < 1.0));
            }
            prop_assert!(cache.final_state.h.iter().all(|&v| v > -1.0 && v < 1.0));
        }

        #[test]
        fn closed_input_gate_ignores_input(seed in any::<u64>(), x1 in -5.0f64..5.0, x2 in -5.0f64..5.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut net = Network::init_uniform(1, 3, HeadKind::Regression, &mut rng);
            // σ(-800) underflows to exactly 0.
            net.lstm.w[Gate::Input as usize].as_mut_slice().fill(0.0);
            net.lstm.u[Gate::Input as usize].as_mut_slice().fill(0.0);
            net.lstm.b[Gate::Input as usize].fill(-800.0);
            // x also reaches c' through the forget gate unless its input weights are zero.
            net.lstm.w[Gate::Forget as usize].as_mut_slice().fill(0.0);
            let state = CellState { h: vec![0.1, -0.2, 0.3], c: vec![0.5, -1.0, 2.0] };
            let (a, _) = cell_forward(&[x1], &state, &net.lstm).unwrap();
            let (b, cache) = cell_forward(&[x2], &state, &net.lstm).unwrap();
            let f = cache.gate(Gate::Forget);
            for ((bc, fk), sc) in b.c.iter().zip(f).zip(&state.c) {
                prop_assert_eq!(*bc, fk * sc);
            }
            prop_assert_eq!(a.c, b.c);
        }
    }
}
