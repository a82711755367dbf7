//! Train vsPAIR on procedurally drawn 16×16 glyphs and report test metrics.
//!
//! cargo run --release --example train_toy_vspair

use std::time::Instant;

use vspair::data::toy_digits;
use vspair::models::Variant;
use vspair::rng::Rng;
use vspair::training::{evaluate, train_with, TrainConfig};

fn main() -> vspair::Result<()> {
    let data = toy_digits(2200, &mut Rng::new(11))?;
    let (train_set, test_set) = data.split(2000)?;

    let cfg = TrainConfig {
        seed: 3,
        ..TrainConfig::toy(Variant::VsPair)
    };
    let mut model = cfg.build_model(&train_set)?;
    let start = Instant::now();
    train_with(&mut model, &train_set, &cfg, |e| {
        println!(
            "epoch {:>3}  loss {:>9.3}  nnz {:>6.1}  rho {:.4}  ({:.1}s)",
            e.epoch,
            e.total,
            e.mean_nnz,
            e.rho.unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
    })?;

    let m = evaluate(&model, &test_set, 30, 0)?;
    println!("MSE     {:.4e}", m.mse);
    println!("MSE_30  {:.4e}", m.mse_n);
    println!("avg nnz {:.1} of {}", m.avg_nnz, cfg.latent_x);
    println!("sparsity {:.1}%", 100.0 * m.sparsity);
    println!("PSNR    {:.2} dB", m.psnr);
    Ok(())
}
