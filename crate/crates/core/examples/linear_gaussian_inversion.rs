//! vPAIR on a linear-Gaussian inverse problem, against the exact posterior
//! mean of x given y.
//!
//! cargo run --release --example linear_gaussian_inversion

use vspair::data::{synth_dataset, LinearGaussianSpec, SynthKind};
use vspair::models::Variant;
use vspair::rng::Rng;
use vspair::tensor::Tensor;
use vspair::theory::nalgebra::{DMatrix, DVector};
use vspair::theory::{posterior_x_given_y, LinearGaussianProblem};
use vspair::training::{train, TrainConfig};

fn dm(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn main() -> vspair::Result<()> {
    let data = synth_dataset(SynthKind::LinearGaussian, 4000, &mut Rng::new(1))?;
    let (train_set, test_set) = data.split(3900)?;
    let mut cfg = TrainConfig {
        variant: Variant::VPair,
        latent_x: 4,
        latent_y: 3,
        hidden: vec![32],
        map_hidden: vec![32],
        lr: 1e-3,
        epochs: 40,
        ..TrainConfig::default()
    };
    cfg.weights.gamma_x = 0.01;
    cfg.weights.gamma_y = 0.01;
    let mut model = cfg.build_model(&train_set)?;
    train(&mut model, &train_set, &cfg)?;

    let spec = LinearGaussianSpec::standard();
    let problem = LinearGaussianProblem {
        a: dm(&spec.a),
        noise_cov: dm(&spec.noise_cov),
        prior_mean: DVector::from_row_slice(spec.prior_mean.data()),
        prior_cov: dm(&spec.prior_cov),
        b: DMatrix::identity(4, 4),
        c: DVector::zeros(4),
        latent_cov: DMatrix::zeros(4, 4),
    };
    let mut err = 0.0;
    for i in 0..test_set.len() {
        let y = Tensor::vector(test_set.y.row(i).to_vec());
        let inv = model.invert(&y, 200, &mut Rng::new(i as u64))?;
        let (exact, _) = posterior_x_given_y(&problem, &DVector::from_row_slice(y.data()))?;
        let est = vspair::uq::sample_mean_variance(&inv.x_samples)?.0;
        err += est.data().iter().zip(exact.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 4.0;
        if i < 3 {
            let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:7.3}")).collect::<Vec<_>>().join(" ");
            println!("y {}\n  exact {}\n  model {}", fmt(y.data()), fmt(exact.as_slice()), fmt(est.data()));
        }
    }
    println!("mean squared gap to the exact posterior mean: {:.4}", err / test_set.len() as f64);
    Ok(())
}
