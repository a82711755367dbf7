//! Monte-Carlo check of the latent conditional law in a linear-Gaussian
//! problem: mean, covariance, and Gaussian shape.
//!
//! cargo run --release --example verify_theorems

use vspair::rng::Rng;
use vspair::theory::nalgebra::DVector;
use vspair::theory::{theorem1_closed_form, verify_theorems, LinearGaussianProblem};

fn main() -> vspair::Result<()> {
    let p = LinearGaussianProblem::canonical_1d();
    let y = DVector::from_element(1, 2.0);
    let (mean, cov) = theorem1_closed_form(&p, &y)?;
    println!("canonical problem at y = 2: mean {:.3}  cov {:.3}", mean[0], cov[(0, 0)]);

    let random = LinearGaussianProblem::random(3, 2, 4, &mut Rng::new(8));
    let ys: Vec<_> = [-1.0, 0.0, 1.5].iter().map(|&v| DVector::from_element(2, v)).collect();
    let report = verify_theorems(&random, &ys, 200_000, 9)?;
    for c in &report.checks {
        println!(
            "y = {:?}: max mean z {:.2}  cov rel err {:.4}  gaussian {}  pass {}",
            c.y.as_slice(),
            c.max_mean_z,
            c.cov_rel_err,
            c.gaussianity.pass,
            c.pass
        );
    }
    println!("all pass: {}", report.pass);
    Ok(())
}
