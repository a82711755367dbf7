mod common;

use common::{model_fd_error, tiny_problem};
use vspair::autodiff::{grad_check, Graph};
use vspair::distributions::{spike_slab_sample_with_noise, GateConfig};
use vspair::models::{
    map_param_loss, pair_losses, svae_elbo_loss, vae_elbo_loss, vspair_total_loss, Head, LatentVars, LossWeights,
    ModelConfig, PairedModel, Term, Variant,
};
use vspair::rng::Rng;
use vspair::tensor::Tensor;

const TOL: f64 = 1e-5;

#[test]
fn vae_elbo_finite_differences() {
    let mut rng = Rng::new(11);
    for _ in 0..20 {
        let (b, l, d) = (1 + rng.below(3), 1 + rng.below(8), 1 + rng.below(8));
        let x = rng.gaussian_tensor(&[b, d]);
        let packed = rng.gaussian_tensor(&[b, 2 * l + d]);
        let gamma = rng.uniform() + 0.1;
        let err = grad_check(
            |g, p| {
                let post = LatentVars::from_output(p.slice_cols(0, 2 * l)?, Head::Gaussian, l)?;
                let rec = p.slice_cols(2 * l, 2 * l + d)?;
                vae_elbo_loss(&post, g.constant(x.clone()), rec, gamma)
            },
            &packed,
            1e-6,
        )
        .unwrap();
        assert!(err < TOL, "{err}");
    }
}

#[test]
fn svae_elbo_finite_differences() {
    let mut rng = Rng::new(12);
    for _ in 0..20 {
        let (b, l, d) = (1 + rng.below(3), 1 + rng.below(8), 1 + rng.below(8));
        let x = rng.gaussian_tensor(&[b, d]);
        let packed = rng.gaussian_tensor(&[b, 3 * l + d]);
        let rho = Tensor::scalar(2.0 * rng.uniform() - 1.0);
        let (a0, b0) = (0.5 + 3.0 * rng.uniform(), 0.5 + 50.0 * rng.uniform());
        let (gamma, lr) = (rng.uniform() + 0.1, rng.uniform() + 0.1);
        let params_err = grad_check(
            |g, p| {
                let post = LatentVars::from_output(p.slice_cols(0, 3 * l)?, Head::SpikeSlab, l)?;
                let rec = p.slice_cols(3 * l, 3 * l + d)?;
                svae_elbo_loss(&post, g.constant(x.clone()), rec, g.constant(rho.clone()), (a0, b0), gamma, lr)
            },
            &packed,
            1e-6,
        )
        .unwrap();
        let rho_err = grad_check(
            |g, r| {
                let p = g.constant(packed.clone());
                let post = LatentVars::from_output(p.slice_cols(0, 3 * l)?, Head::SpikeSlab, l)?;
                let rec = p.slice_cols(3 * l, 3 * l + d)?;
                svae_elbo_loss(&post, g.constant(x.clone()), rec, r, (a0, b0), gamma, lr)
            },
            &rho,
            1e-6,
        )
        .unwrap();
        assert!(params_err < TOL && rho_err < TOL, "{params_err} {rho_err}");
    }
}

#[test]
fn map_param_loss_finite_differences_reach_targets() {
    let mut rng = Rng::new(13);
    for _ in 0..20 {
        let (b, l) = (1 + rng.below(3), 1 + rng.below(8));
        let head = if rng.below(2) == 0 { Head::Gaussian } else { Head::SpikeSlab };
        let k = head.count() * l;
        let packed = rng.gaussian_tensor(&[b, 2 * k]);
        let lambda_b = rng.uniform();
        let err = grad_check(
            |_, p| {
                let pred = LatentVars::from_output(p.slice_cols(0, k)?, head, l)?;
                let target = LatentVars::from_output(p.slice_cols(k, 2 * k)?, head, l)?;
                map_param_loss(&pred, &target, lambda_b)
            },
            &packed,
            1e-6,
        )
        .unwrap();
        assert!(err < TOL, "{err}");
    }
}

#[test]
fn model_objectives_finite_differences() {
    let mut rng = Rng::new(14);
    for variant in Variant::ALL {
        for _ in 0..4 {
            let (model, x, y, w) = tiny_problem(variant, &mut rng);
            let seed = rng.next_u64();
            let err = model_fd_error(&model, &x, &y, &w, seed, 1e-6);
            assert!(err < TOL, "{variant}: {err}");
        }
    }
}

#[test]
fn vspair_total_loss_is_the_objective_total() {
    let (model, x, y, w) = tiny_problem(Variant::VsPair, &mut Rng::new(3));
    let (total, br) = vspair_total_loss(&model, &x, &y, &w, &mut Rng::new(9)).unwrap();
    let sum: f64 = br.terms.iter().map(|(_, v)| v).sum();
    assert!((total - sum).abs() < 1e-12 * sum.abs().max(1.0));
    let (pair, ..) = tiny_problem(Variant::Pair, &mut Rng::new(3));
    assert!(vspair_total_loss(&pair, &x, &y, &w, &mut Rng::new(9)).is_err());
}

#[test]
fn straight_through_gradient_contract() {
    let mut rng = Rng::new(21);
    let cfg = GateConfig::default();
    for _ in 0..20 {
        let (b, l) = (1 + rng.below(3), 1 + rng.below(8));
        let mu = rng.gaussian_tensor(&[b, l]);
        let lv = rng.gaussian_tensor(&[b, l]).map(|v| 0.5 * v);
        let omega = rng.uniform_tensor(&[b, l]).map(|v| 0.05 + 0.9 * v);
        let eta = rng.uniform_tensor(&[b, l]);
        let eps = rng.gaussian_tensor(&[b, l]);
        let v = rng.gaussian_tensor(&[b, l]);

        let g = Graph::new();
        let (m, s, o) = (g.leaf(mu.clone()), g.leaf(lv.clone()), g.leaf(omega.clone()));
        let draw = spike_slab_sample_with_noise(m, s, o, &cfg, eta.clone(), eps.clone()).unwrap();
        let loss = draw.z.mul(g.constant(v.clone())).unwrap().sum();
        let grads = g.backward(loss).unwrap();
        let (gm, gs, go) = (grads.wrt(m), grads.wrt(s), grads.wrt(o));

        for i in 0..b * l {
            let sigma = (0.5 * lv.data()[i]).exp();
            let slab = mu.data()[i] + sigma * eps.data()[i];
            let relaxed = 1.0 / (1.0 + (-cfg.temperature * (eta.data()[i] - 1.0 + omega.data()[i])).exp());
            let hard = if relaxed > 0.5 { 1.0 } else { 0.0 };
            assert_eq!(draw.z.value().data()[i], hard * slab);
            let dmu = hard * v.data()[i];
            let dlv = hard * v.data()[i] * 0.5 * sigma * eps.data()[i];
            let domega = v.data()[i] * slab * cfg.temperature * relaxed * (1.0 - relaxed);
            assert!((gm.data()[i] - dmu).abs() < 1e-12);
            assert!((gs.data()[i] - dlv).abs() < 1e-12);
            assert!((go.data()[i] - domega).abs() < 1e-9 * domega.abs().max(1.0));
        }
    }
}

fn grads_by_name(model: &PairedModel, x: &Tensor, y: &Tensor, w: &LossWeights) -> Vec<(String, Tensor)> {
    let (_, grads) = model.loss_and_grads(x, y, w, &mut Rng::new(5)).unwrap();
    model
        .params()
        .iter()
        .map(|(n, _)| n.to_string())
        .zip(grads)
        .collect()
}

#[test]
fn zero_map_weight_gives_zero_map_gradients() {
    let mut rng = Rng::new(31);
    for variant in [Variant::Pair, Variant::VPair, Variant::VsPair] {
        let (model, x, y, mut w) = tiny_problem(variant, &mut rng);
        w.lambda3 = 0.0;
        for (name, g) in grads_by_name(&model, &x, &y, &w) {
            if name.starts_with("map.") {
                assert!(g.data().iter().all(|v| *v == 0.0), "{variant} {name}");
            }
        }
    }
}

#[test]
fn zero_observation_weights_give_zero_observation_decoder_gradients() {
    let mut rng = Rng::new(32);
    for variant in [Variant::VPair, Variant::VsPair] {
        let (model, x, y, mut w) = tiny_problem(variant, &mut rng);
        w.lambda2 = 0.0;
        w.gamma_y = 0.0;
        let grads = grads_by_name(&model, &x, &y, &w);
        for (name, g) in &grads {
            if name.starts_with("dec_y.") {
                assert!(g.data().iter().all(|v| *v == 0.0), "{variant} {name}");
            }
        }
        assert!(grads.iter().any(|(n, g)| n.starts_with("enc_y.") && g.norm_sq() > 0.0));
    }
}

/// Copy `src` into the leading columns of `dst` and pin the trailing `ω`
/// logits at 1 so every gate is open.
fn widen_with_open_gates(dst: &mut PairedModel, src: &PairedModel, prefix: &str, layer: usize, latent: usize) {
    let w_name = format!("{prefix}.{layer}.w");
    let b_name = format!("{prefix}.{layer}.b");
    let (sw, sb) = (src.params().by_name(&w_name).unwrap(), src.params().by_name(&b_name).unwrap());
    let rows = sw.rows();
    let cols = 3 * latent;
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        w[r * cols..r * cols + 2 * latent].copy_from_slice(sw.row(r));
    }
    let mut b: Vec<f64> = sb.data().to_vec();
    b.extend(std::iter::repeat_n(1.0, latent));
    let id = dst.params().id(&w_name).unwrap();
    dst.params_mut().set(id, Tensor::matrix(rows, cols, w).unwrap()).unwrap();
    let id = dst.params().id(&b_name).unwrap();
    let shape = dst.params().get(id).shape().to_vec();
    dst.params_mut().set(id, Tensor::new(shape, b).unwrap()).unwrap();
}

#[test]
fn vspair_with_open_gates_reduces_to_vpair() {
    let mut c = ModelConfig::new(Variant::VPair, 5, 4, 3, 2);
    c.hidden = vec![6];
    c.map_hidden = vec![7];
    let vpair = PairedModel::new(c.clone()).unwrap();
    c.variant = Variant::VsPair;
    let mut vspair = PairedModel::new(c).unwrap();
    for (name, t) in vpair.params().iter() {
        if let Some(id) = vspair.params().id(name) {
            if vspair.params().get(id).shape() == t.shape() {
                vspair.params_mut().set(id, t.clone()).unwrap();
            }
        }
    }
    widen_with_open_gates(&mut vspair, &vpair, "enc_x", 1, 3);
    widen_with_open_gates(&mut vspair, &vpair, "map", 1, 3);

    let mut rng = Rng::new(40);
    let x = rng.gaussian_tensor(&[4, 5]);
    let y = rng.gaussian_tensor(&[4, 4]);
    let w = LossWeights {
        lambda_rho: 0.0,
        lambda_b: 0.3,
        ..LossWeights::default()
    };
    let a = vpair.loss(&x, &y, &w, &mut Rng::new(8)).unwrap();
    let s = vspair.loss(&x, &y, &w, &mut Rng::new(8)).unwrap();
    for t in [Term::ReconX, Term::ReconY, Term::KlY, Term::Map] {
        let (av, sv) = (a.get(t).unwrap(), s.get(t).unwrap());
        assert!((av - sv).abs() < 1e-12 * av.abs().max(1.0), "{t:?}: {av} vs {sv}");
    }
    // Open gates add the spike KL −log ρ per coordinate, ρ = ½ at init.
    let spike = w.lambda1 * w.gamma_x * 3.0 * std::f64::consts::LN_2;
    let (ak, sk) = (a.get(Term::KlX).unwrap(), s.get(Term::KlX).unwrap());
    assert!((sk - ak - spike).abs() < 1e-12, "{sk} {ak}");
    assert_eq!(s.get(Term::Hyperprior), Some(0.0));
    assert_eq!(s.mean_nnz, 3.0);
}

fn dense_forward(model: &PairedModel, prefix: &str, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut layer = 0;
    while let Some(w) = model.params().by_name(&format!("{prefix}.{layer}.w")) {
        let b = model.params().by_name(&format!("{prefix}.{layer}.b")).unwrap();
        let mut out = b.data().to_vec();
        for (i, hi) in h.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += hi * w.row(i)[j];
            }
        }
        layer += 1;
        if model.params().by_name(&format!("{prefix}.{layer}.w")).is_some() {
            for o in &mut out {
                *o /= 1.0 + (-*o).exp();
            }
        }
        h = out;
    }
    h
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

#[test]
fn pair_losses_match_independent_forward() {
    let mut c = ModelConfig::new(Variant::Pair, 6, 5, 3, 4);
    c.hidden = vec![7, 5];
    c.map_hidden = vec![4];
    c.seed = 2;
    let model = PairedModel::new(c).unwrap();
    let mut rng = Rng::new(1);
    let x = rng.gaussian_tensor(&[3, 6]);
    let y = rng.gaussian_tensor(&[3, 5]);
    let got = pair_losses(&model, &x, &y).unwrap();
    let (mut rx, mut ry, mut inv) = (0.0, 0.0, 0.0);
    for i in 0..3 {
        let (xi, yi) = (x.row(i), y.row(i));
        let cx = dense_forward(&model, "enc_x", xi);
        let cy = dense_forward(&model, "enc_y", yi);
        rx += sq(&dense_forward(&model, "dec_x", &cx), xi);
        ry += sq(&dense_forward(&model, "dec_y", &cy), yi);
        let mapped = dense_forward(&model, "map", &cy);
        inv += sq(&dense_forward(&model, "dec_x", &mapped), xi);
    }
    for (a, b) in [(got.recon_x, rx / 3.0), (got.recon_y, ry / 3.0), (got.inverse, inv / 3.0)] {
        assert!((a - b).abs() < 1e-12 * b.max(1.0), "{a} vs {b}");
    }
}
