//! Variance maps, region ratios and latent localization on toy glyphs.
//!
//! cargo run --release --example uq_analysis

use vspair::data::toy_digits;
use vspair::io::write_pgm;
use vspair::models::Variant;
use vspair::rng::Rng;
use vspair::training::{train, TrainConfig};
use vspair::uq::{uq_suite, UqOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train_set = toy_digits(1000, &mut Rng::new(1))?;
    let test_set = toy_digits(20, &mut Rng::new(2))?;
    let cfg = TrainConfig {
        epochs: 15,
        ..TrainConfig::toy(Variant::VsPair)
    };
    let mut model = cfg.build_model(&train_set)?;
    train(&mut model, &train_set, &cfg)?;

    let report = uq_suite(&model, &test_set, &UqOptions::default(), 3)?;
    println!("pearson r(MSE, mean variance) {:.3}", report.pearson_r);
    println!("region variance ratio: median {:.3}, mean {:.3}", report.median_ratio, report.mean_ratio);
    if let Some(m) = report.median_localization {
        println!("max localization ratio: median {m:.3}");
    }
    for (i, img) in report.images.iter().take(5).enumerate() {
        println!(
            "image {i}: mse {:.4}  var {:.5}  ratio {:.2}  best dim {:?}  active dims {:?}",
            img.mse, img.mean_variance, img.region_ratio, img.best_dim, img.n_always_active
        );
    }

    let out = std::env::temp_dir().join("vspair_uq_example");
    std::fs::create_dir_all(&out)?;
    let (h, w) = test_set.image_shape.expect("glyph shape");
    write_pgm(out.join("mean.pgm"), &report.images[0].mean_x.reshape(&[h, w])?)?;
    let v = &report.images[0].variance;
    let peak = v.data().iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    write_pgm(out.join("variance.pgm"), &v.map(|x| x / peak).reshape(&[h, w])?)?;
    println!("wrote {}", out.display());
    Ok(())
}
