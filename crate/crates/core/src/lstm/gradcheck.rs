use super::{backward, forward, loss_and_grad, Network};
use crate::dataset::Target;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `|a − n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn loss(net: &Network, window: &Matrix, target: Target) -> Result<f64> {
    let (out, _) = forward(window, net)?;
    Ok(loss_and_grad(net.kind(), &out, target)?.0)
}

/// Compares backpropagated gradients against central finite differences for
/// every parameter and returns the largest relative error.
pub fn grad_check(net: &Network, window: &Matrix, target: Target, epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let (out, cache) = forward(window, net)?;
    let (_, d_raw) = loss_and_grad(net.kind(), &out, target)?;
    let analytic = backward(&cache, net, &d_raw)?;

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (block, grad_block) in analytic.slices().iter().enumerate() {
        for (k, &a) in grad_block.iter().enumerate() {
            let original = probe.slices()[block][k];
            probe.slices_mut()[block][k] = original + epsilon;
            let up = loss(&probe, window, target)?;
            probe.slices_mut()[block][k] = original - epsilon;
            let down = loss(&probe, window, target)?;
            probe.slices_mut()[block][k] = original;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::HeadKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_window(rng: &mut ChaCha8Rng, steps: usize, input: usize) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..input).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn regression_head_seed_42() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = Network::init_uniform(3, 4, HeadKind::Regression, &mut rng);
        let window = random_window(&mut rng, 5, 3);
        let err = grad_check(&net, &window, Target::Value(0.7), 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn softmax_head_seed_42() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = Network::init_uniform(3, 4, HeadKind::Softmax4, &mut rng);
        let window = random_window(&mut rng, 5, 3);
        let err = grad_check(&net, &window, Target::Class(2), 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5), 0.5);
        assert_eq!(relative_error(1e-13, 0.0), 0.1);
    }
}
