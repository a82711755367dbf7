use vspair::distributions::{GateConfig, SpikeSlabParams};
use vspair::rng::Rng;
use vspair::tensor::Tensor;
use vspair::theory::nalgebra::{DMatrix, DVector};
use vspair::theory::{
    posterior_x_given_y, sample_latent_given_y, sample_moments, theorem1_closed_form, theorem2_gaussianity_check,
    verify_theorems, LinearGaussianProblem,
};

fn random_y(p: &LinearGaussianProblem, rng: &mut Rng) -> DVector<f64> {
    DVector::from_fn(p.dim_y(), |_, _| 2.0 * rng.gaussian())
}

#[test]
fn covariance_is_constant_and_spd_over_y() {
    let mut rng = Rng::new(2);
    for _ in 0..5 {
        let p = LinearGaussianProblem::random(1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(6), &mut rng);
        let (_, c0) = theorem1_closed_form(&p, &random_y(&p, &mut rng)).unwrap();
        for _ in 0..10 {
            let (_, c) = theorem1_closed_form(&p, &random_y(&p, &mut rng)).unwrap();
            assert!((&c - &c0).norm() < 1e-12 * c0.norm());
            assert!(c.clone().cholesky().is_some());
        }
    }
}

#[test]
fn mean_is_affine_in_y_for_random_problems() {
    let mut rng = Rng::new(3);
    let p = LinearGaussianProblem::random(3, 2, 4, &mut rng);
    let (y0, y1) = (random_y(&p, &mut rng), random_y(&p, &mut rng));
    let m = |y: &DVector<f64>| theorem1_closed_form(&p, y).unwrap().0;
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let y = &y0 * (1.0 - t) + &y1 * t;
        let secant = m(&y0) * (1.0 - t) + m(&y1) * t;
        assert!((m(&y) - secant).amax() < 1e-10);
    }
}

#[test]
fn law_of_total_covariance_closed_form() {
    let mut rng = Rng::new(4);
    for _ in 0..5 {
        let p = LinearGaussianProblem::random(1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(6), &mut rng);
        let y = random_y(&p, &mut rng);
        let (_, cov_x) = posterior_x_given_y(&p, &y).unwrap();
        let gain = &cov_x * p.a.transpose() * p.noise_cov.clone().try_inverse().unwrap();
        let cov_y = &p.a * &p.prior_cov * p.a.transpose() + &p.noise_cov;
        let (_, cov_z) = theorem1_closed_form(&p, &y).unwrap();
        let total = &cov_z + &p.b * &gain * cov_y * gain.transpose() * p.b.transpose();
        let direct = &p.b * &p.prior_cov * p.b.transpose() + &p.latent_cov;
        assert!((&total - &direct).norm() < 1e-9 * direct.norm());
    }
}

#[test]
fn law_of_total_covariance_monte_carlo() {
    let mut rng = Rng::new(5);
    let p = LinearGaussianProblem::random(2, 2, 3, &mut rng);
    let lx = p.prior_cov.clone().cholesky().unwrap().l();
    let lg = p.noise_cov.clone().cholesky().unwrap().l();
    let n = 40_000;
    let mut joint = DMatrix::zeros(n, p.dim_z());
    for i in 0..n {
        let x = &p.prior_mean + &lx * DVector::from_fn(2, |_, _| rng.gaussian());
        let y = &p.a * x + &lg * DVector::from_fn(2, |_, _| rng.gaussian());
        let z = sample_latent_given_y(&p, &y, 1, &mut rng).unwrap();
        joint.set_row(i, &z.row(0));
    }
    let (_, empirical) = sample_moments(&joint);
    let direct = &p.b * &p.prior_cov * p.b.transpose() + &p.latent_cov;
    let rel = (&empirical - &direct).norm() / direct.norm();
    assert!(rel < 0.03, "{rel}");
}

#[test]
fn canonical_problem_verifies() {
    let ys: Vec<_> = [-2.0, 0.0, 1.0, 2.0].iter().map(|v| DVector::from_element(1, *v)).collect();
    let r = verify_theorems(&LinearGaussianProblem::canonical_1d(), &ys, 200_000, 1).unwrap();
    assert!(r.pass, "{:?}", r.checks.iter().map(|c| (c.max_mean_z, c.cov_rel_err)).collect::<Vec<_>>());
}

#[test]
fn verification_is_seed_deterministic() {
    let ys = vec![DVector::from_element(1, 0.5), DVector::from_element(1, -1.0)];
    let p = LinearGaussianProblem::canonical_1d();
    assert_eq!(verify_theorems(&p, &ys, 20_000, 9).unwrap(), verify_theorems(&p, &ys, 20_000, 9).unwrap());
    assert!(verify_theorems(&p, &[], 20_000, 9).is_err());
}

#[test]
fn gaussian_samples_pass_shape_test() {
    let mut rng = Rng::new(6);
    let s = DMatrix::from_fn(200_000, 3, |_, _| rng.gaussian());
    assert!(theorem2_gaussianity_check(&s, 1).unwrap().pass);
    assert!(theorem2_gaussianity_check(&DMatrix::zeros(100, 1), 1).is_err());
}

/// Skewness and excess kurtosis of `m·(μ + σε)` with `m ~ Bernoulli(ω)`.
fn spike_slab_shape(mu: f64, sigma: f64, omega: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let raw = [
        omega * mu,
        omega * (mu * mu + s2),
        omega * (mu.powi(3) + 3.0 * mu * s2),
        omega * (mu.powi(4) + 6.0 * mu * mu * s2 + 3.0 * s2 * s2),
    ];
    let m = raw[0];
    let var = raw[1] - m * m;
    let c3 = raw[2] - 3.0 * m * raw[1] + 2.0 * m.powi(3);
    let c4 = raw[3] - 4.0 * m * raw[2] + 6.0 * m * m * raw[1] - 3.0 * m.powi(4);
    (c3 / var.powf(1.5), c4 / (var * var) - 3.0)
}

#[test]
fn spike_slab_control_matches_mixture_moments_and_fails() {
    let n = 400_000;
    let (mu, sigma): (f64, f64) = (0.7, 1.3);
    let params = SpikeSlabParams::new(
        Tensor::full(&[n, 1], mu),
        Tensor::full(&[n, 1], 2.0 * sigma.ln()),
        Tensor::full(&[n, 1], 0.5),
    )
    .unwrap();
    let (z, _) = params.sample(&GateConfig::default(), &mut Rng::new(7)).unwrap();
    let s = DMatrix::from_column_slice(n, 1, z.data());
    let r = theorem2_gaussianity_check(&s, 3).unwrap();
    let (skew, kurt) = spike_slab_shape(mu, sigma, 0.5);
    let c = r.coordinates[0];
    assert!((c.skewness - skew).abs() < 0.03, "{} vs {skew}", c.skewness);
    assert!((c.excess_kurtosis - kurt).abs() < 0.1, "{} vs {kurt}", c.excess_kurtosis);
    assert!(!r.pass);
}

#[test]
fn posterior_matches_importance_sampling() {
    let p = LinearGaussianProblem {
        a: DMatrix::from_element(1, 1, 2.0),
        noise_cov: DMatrix::from_element(1, 1, 1.0),
        prior_mean: DVector::zeros(1),
        prior_cov: DMatrix::from_element(1, 1, 4.0),
        b: DMatrix::from_element(1, 1, 1.0),
        c: DVector::zeros(1),
        latent_cov: DMatrix::zeros(1, 1),
    };
    let (m, c) = posterior_x_given_y(&p, &DVector::from_element(1, 1.0)).unwrap();
    assert!((c[(0, 0)] - 1.0 / 4.25).abs() < 1e-15);
    assert!((m[0] - 2.0 / 4.25).abs() < 1e-15);
    assert!((c[(0, 0)] - 0.235294).abs() < 1e-6 && (m[0] - 0.470588).abs() < 1e-6);

    // Prior draws weighted by the likelihood N(1; 2x, 1).
    let mut rng = Rng::new(15);
    let (mut sw, mut sx, mut sxx) = (0.0, 0.0, 0.0);
    for _ in 0..1_000_000 {
        let x = 2.0 * rng.gaussian();
        let w = (-0.5 * (1.0 - 2.0 * x) * (1.0 - 2.0 * x)).exp();
        sw += w;
        sx += w * x;
        sxx += w * x * x;
    }
    let mean = sx / sw;
    let var = sxx / sw - mean * mean;
    assert!((mean - m[0]).abs() < 5e-3, "{mean}");
    assert!((var - c[(0, 0)]).abs() < 5e-3, "{var}");
}
