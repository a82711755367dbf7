#![allow(dead_code)]

use nalgebra::DMatrix;
use vspair::models::{LossWeights, PairedModel};
use vspair::rng::Rng;
use vspair::tensor::Tensor;

/// Gauss–Hermite nodes and weights for `∫ e^{−t²} f(t) dt` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = off;
        j[(k - 1, k)] = off;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `KL(N(μ, σ²) ‖ N(0, 1))` as `E_q[log q − log p]` by quadrature.
pub fn slab_kl_quadrature(mu: f64, log_var: f64, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let sigma = (0.5 * log_var).exp();
    let (t, w) = nodes;
    let mut acc = 0.0;
    for (t, w) in t.iter().zip(w) {
        let z = mu + std::f64::consts::SQRT_2 * sigma * t;
        let log_q = -0.5 * log_var - (z - mu).powi(2) / (2.0 * sigma * sigma);
        let log_p = -0.5 * z * z;
        acc += w * (log_q - log_p);
    }
    acc / std::f64::consts::PI.sqrt()
}

pub fn bernoulli_kl_exact(omega: f64, rho: f64) -> f64 {
    let a = if omega > 0.0 { omega * (omega / rho).ln() } else { 0.0 };
    let b = if omega < 1.0 {
        (1.0 - omega) * ((1.0 - omega) / (1.0 - rho)).ln()
    } else {
        0.0
    };
    a + b
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Worst `|analytic − numeric| / max(|analytic|, 1)` over every parameter
/// scalar. Each loss evaluation uses a fresh `Rng::new(seed)`.
pub fn model_fd_error(model: &PairedModel, x: &Tensor, y: &Tensor, w: &LossWeights, seed: u64, eps: f64) -> f64 {
    let (_, grads) = model.loss_and_grads(x, y, w, &mut Rng::new(seed)).unwrap();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (p, g) in grads.iter().enumerate() {
        for i in 0..g.numel() {
            let orig = probe.params().tensors()[p].data()[i];
            probe.params_mut().tensors_mut()[p].data_mut()[i] = orig + eps;
            let up = probe.loss(x, y, w, &mut Rng::new(seed)).unwrap().total;
            probe.params_mut().tensors_mut()[p].data_mut()[i] = orig - eps;
            let down = probe.loss(x, y, w, &mut Rng::new(seed)).unwrap().total;
            probe.params_mut().tensors_mut()[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = g.data()[i];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    worst
}

use vspair::distributions::GateMode;
use vspair::models::{ModelConfig, Variant};

/// Random small paired model with a batch and positive loss weights.
/// Sparse variants use the relaxed gate so the objective is smooth.
pub fn tiny_problem(variant: Variant, rng: &mut Rng) -> (PairedModel, Tensor, Tensor, LossWeights) {
    let dx = 2 + rng.below(5);
    let dy = 2 + rng.below(5);
    let lx = 1 + rng.below(8);
    let ly = 1 + rng.below(8);
    let mut c = ModelConfig::new(variant, dx, dy, lx, ly);
    c.hidden = vec![2 + rng.below(15)];
    c.map_hidden = vec![2 + rng.below(15)];
    c.gate.mode = GateMode::Relaxed;
    c.alpha0 = 0.5 + 3.0 * rng.uniform();
    c.beta0 = 0.5 + 30.0 * rng.uniform();
    c.seed = rng.next_u64();
    let mut model = PairedModel::new(c).unwrap();
    if let Some(id) = model.rho_id() {
        model
            .params_mut()
            .set(id, Tensor::scalar(2.0 * rng.uniform() - 1.0))
            .unwrap();
    }
    let b = 1 + rng.below(4);
    let x = rng.gaussian_tensor(&[b, dx]);
    let y = rng.gaussian_tensor(&[b, dy]);
    let mut u = || 0.1 + rng.uniform();
    let w = LossWeights {
        lambda1: u(),
        lambda2: u(),
        lambda3: u(),
        lambda_rho: u(),
        lambda_b: u(),
        gamma_x: u(),
        gamma_y: u(),
    };
    (model, x, y, w)
}
