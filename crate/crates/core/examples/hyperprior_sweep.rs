//! Effect of the Beta(α₀, β₀) hyperprior on latent sparsity.
//!
//! cargo run --release --example hyperprior_sweep

use vspair::data::toy_digits;
use vspair::models::Variant;
use vspair::rng::Rng;
use vspair::training::{evaluate, train, TrainConfig};

fn main() -> vspair::Result<()> {
    let train_set = toy_digits(1000, &mut Rng::new(21))?;
    let test_set = toy_digits(100, &mut Rng::new(22))?;
    println!("{:>6} {:>6} {:>8} {:>8} {:>10}", "alpha0", "beta0", "rho", "avg nnz", "MSE_30");
    for (a, b) in [(1.0, 127.0), (1.0, 64.0), (1.0, 1.0), (64.0, 1.0)] {
        let cfg = TrainConfig {
            alpha0: a,
            beta0: b,
            epochs: 15,
            seed: 5,
            ..TrainConfig::toy(Variant::VsPair)
        };
        let mut model = cfg.build_model(&train_set)?;
        train(&mut model, &train_set, &cfg)?;
        let m = evaluate(&model, &test_set, 30, 0)?;
        let rho = model.sparsity_prior().map_or(f64::NAN, |p| p.rho());
        println!("{a:>6} {b:>6} {rho:>8.4} {:>8.1} {:>10.4e}", m.avg_nnz, m.mse_n);
    }
    Ok(())
}
