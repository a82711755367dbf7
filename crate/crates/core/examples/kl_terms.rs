//! Spike-and-slab KL, its two parts, and the Beta hyperprior on ρ.
//!
//! cargo run --example kl_terms

use vspair::autodiff::Graph;
use vspair::distributions::{spike_slab_kl_terms, SparsityPrior, SpikeSlabParams};
use vspair::tensor::Tensor;

fn main() -> vspair::Result<()> {
    let prior = SparsityPrior::new(0.2, 1.0, 127.0)?;
    println!("rho {:.3}  hyperprior mean {:.4}  hyperprior loss {:.4}", prior.rho(), prior.hyperprior_mean(), prior.hyperprior_loss());

    let post = SpikeSlabParams::new(
        Tensor::matrix(1, 3, vec![0.0, 1.0, -2.0])?,
        Tensor::matrix(1, 3, vec![0.0, -1.0, 0.5])?,
        Tensor::matrix(1, 3, vec![0.2, 0.9, 0.5])?,
    )?;
    println!("KL total {:.6}", post.kl(&prior)?);

    let g = Graph::new();
    let (slab, gate) = spike_slab_kl_terms(
        g.constant(post.mu.clone()),
        g.constant(post.log_var.clone()),
        g.constant(post.omega.clone()),
        g.scalar(0.2f64.ln() - 0.8f64.ln()),
    )?;
    println!("  ω-weighted slab part {:.6}", slab.item());
    println!("  Bernoulli gate part  {:.6}", gate.item());

    // ω = ρ, μ = 0, σ² = 1 matches the prior exactly
    let at_prior = SpikeSlabParams::new(Tensor::zeros(&[1, 3]), Tensor::zeros(&[1, 3]), Tensor::full(&[1, 3], 0.2))?;
    println!("KL at the prior {:.1e}", at_prior.kl(&prior)?);
    Ok(())
}
