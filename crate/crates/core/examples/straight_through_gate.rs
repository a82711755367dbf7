//! Hard 0/1 gates forward, relaxed-gate gradients backward.
//!
//! cargo run --example straight_through_gate

use vspair::autodiff::Graph;
use vspair::distributions::{spike_slab_sample, GateConfig};
use vspair::rng::Rng;
use vspair::tensor::Tensor;

fn main() -> vspair::Result<()> {
    let cfg = GateConfig::default();
    let g = Graph::new();
    let mu = g.leaf(Tensor::matrix(1, 6, vec![1.0, -0.5, 2.0, 0.3, -1.2, 0.8])?);
    let log_var = g.leaf(Tensor::full(&[1, 6], -2.0));
    let omega = g.leaf(Tensor::matrix(1, 6, vec![0.05, 0.3, 0.5, 0.5, 0.7, 0.95])?);
    let draw = spike_slab_sample(mu, log_var, omega, &cfg, &mut Rng::new(4))?;

    let grads = g.backward(draw.z.sum())?;
    println!("temperature {}  threshold {}", cfg.temperature, cfg.threshold);
    println!("{:>6} {:>6} {:>9} {:>9} {:>9} {:>10}", "omega", "mask", "relaxed", "z", "dz/dmu", "dz/domega");
    for j in 0..6 {
        println!(
            "{:>6.2} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>10.4}",
            omega.value().data()[j],
            draw.mask.value().data()[j],
            draw.relaxed.value().data()[j],
            draw.z.value().data()[j],
            grads.wrt(mu).data()[j],
            grads.wrt(omega).data()[j]
        );
    }

    let mut hits = 0usize;
    let n = 100_000;
    let mut rng = Rng::new(5);
    for _ in 0..n {
        let g = Graph::new();
        let d = spike_slab_sample(g.leaf(Tensor::zeros(&[1, 1])), g.leaf(Tensor::zeros(&[1, 1])), g.leaf(Tensor::full(&[1, 1], 0.3)), &cfg, &mut rng)?;
        hits += d.mask.value().data()[0] as usize;
    }
    println!("gate frequency at omega = 0.3 over {n} draws: {:.4}", hits as f64 / n as f64);
    Ok(())
}
