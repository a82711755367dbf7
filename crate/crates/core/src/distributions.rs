//! Variational posteriors over latent codes.
//!
//! Two families are supported: a diagonal Gaussian and a spike-and-slab
//! mixture `ω·N(μ, σ²) + (1−ω)·δ₀` per coordinate. The spike-and-slab prior
//! shares a single activation probability `ρ` across all coordinates, stored
//! as a logit and regularized by a `Beta(α₀, β₀)` hyperprior.
//!
//! Functions taking [`Var`] build differentiable graph nodes and are what the
//! training objectives use. The parameter structs wrap them for plain tensor
//! evaluation.
//!
//! Sampling from the spike-and-slab posterior uses a relaxed Bernoulli gate
//! `s = sigmoid(c·(η − 1 + ω))`, `η ~ U[0,1)`, thresholded at 0.5 to give
//! exact zeros. In [`GateMode::StraightThrough`] the backward pass treats the
//! threshold as the identity on `s`.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_finite(what: &str, vars: &[Var<'_>]) -> Result<()> {
    if vars.iter().all(|v| v.value().is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Lift a 1-D tensor to a 1×n row so it can flow through matrix ops.
pub(crate) fn as_row(t: &Tensor) -> Tensor {
    if t.rank() == 1 {
        t.reshape(&[1, t.numel()]).expect("same element count")
    } else {
        t.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussianParams {
    pub mu: Tensor,
    /// log σ²
    pub log_var: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpikeSlabParams {
    pub mu: Tensor,
    pub log_var: Tensor,
    /// Activation probabilities in (0, 1].
    pub omega: Tensor,
}

/// Shared prior activation probability `ρ = sigmoid(rho_logit)` with its
/// Beta hyperprior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparsityPrior {
    pub rho_logit: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GateMode {
    /// Hard 0/1 mask forward, relaxed-gate gradient backward.
    #[default]
    StraightThrough,
    /// Use the relaxed gate value itself as the mask. Fully differentiable,
    /// never exactly zero.
    Relaxed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateConfig {
    /// Sigmoid temperature `c`.
    pub temperature: f64,
    pub threshold: f64,
    pub mode: GateMode,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            temperature: 50.0,
            threshold: 0.5,
            mode: GateMode::StraightThrough,
        }
    }
}

impl GateConfig {
    pub fn with_temperature(temperature: f64) -> Result<Self> {
        let cfg = GateConfig {
            temperature,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "gate temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "gate threshold must lie in (0,1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

impl DiagGaussianParams {
    pub fn new(mu: Tensor, log_var: Tensor) -> Result<Self> {
        check_same_shape("DiagGaussianParams", &mu, &log_var)?;
        Ok(DiagGaussianParams { mu, log_var })
    }

    /// Closed-form `KL(N(μ, σ²) ‖ N(0, I))`.
    pub fn kl(&self) -> Result<f64> {
        let g = Graph::new();
        let kl = gaussian_kl(g.leaf(self.mu.clone()), g.leaf(self.log_var.clone()))?;
        Ok(kl.item())
    }

    /// Reparameterized draw `μ + σ⊙ε`.
    pub fn sample(&self, rng: &mut Rng) -> Result<Tensor> {
        let g = Graph::new();
        let z = gaussian_reparam_sample(g.leaf(self.mu.clone()), g.leaf(self.log_var.clone()), rng)?;
        Ok(z.value().as_ref().clone())
    }
}

impl SpikeSlabParams {
    pub fn new(mu: Tensor, log_var: Tensor, omega: Tensor) -> Result<Self> {
        check_same_shape("SpikeSlabParams", &mu, &log_var)?;
        check_same_shape("SpikeSlabParams", &mu, &omega)?;
        if let Some(bad) = omega.data().iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return Err(Error::invalid(format!("omega {bad} outside (0, 1]")));
        }
        Ok(SpikeSlabParams { mu, log_var, omega })
    }

    /// Closed-form spike-and-slab KL against `prior`.
    pub fn kl(&self, prior: &SparsityPrior) -> Result<f64> {
        let g = Graph::new();
        let kl = spike_slab_kl(
            g.leaf(self.mu.clone()),
            g.leaf(self.log_var.clone()),
            g.leaf(self.omega.clone()),
            g.scalar(prior.rho_logit),
        )?;
        Ok(kl.item())
    }

    /// Draw `(z, mask)`.
    pub fn sample(&self, cfg: &GateConfig, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
        let g = Graph::new();
        let draw = spike_slab_sample(
            g.leaf(self.mu.clone()),
            g.leaf(self.log_var.clone()),
            g.leaf(self.omega.clone()),
            cfg,
            rng,
        )?;
        Ok((draw.z.value().as_ref().clone(), draw.mask.value().as_ref().clone()))
    }
}

impl SparsityPrior {
    pub fn new(rho: f64, alpha0: f64, beta0: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Degenerate(format!("prior activation rho = {rho}")));
        }
        if !(alpha0 > 0.0 && beta0 > 0.0) {
            return Err(Error::invalid(format!(
                "Beta hyperprior needs positive parameters, got ({alpha0}, {beta0})"
            )));
        }
        Ok(SparsityPrior {
            rho_logit: (rho / (1.0 - rho)).ln(),
            alpha0,
            beta0,
        })
    }

    pub fn rho(&self) -> f64 {
        crate::autodiff::sigmoid(self.rho_logit)
    }

    /// Mean of the Beta hyperprior, `α₀ / (α₀ + β₀)`.
    pub fn hyperprior_mean(&self) -> f64 {
        self.alpha0 / (self.alpha0 + self.beta0)
    }

    pub fn hyperprior_loss(&self) -> f64 {
        let g = Graph::new();
        beta_hyperprior_loss(g.scalar(self.rho_logit), self.alpha0, self.beta0).item()
    }
}

/// `½ Σ (σ² + μ² − 1 − log σ²)` over every element.
pub fn gaussian_kl<'g>(mu: Var<'g>, log_var: Var<'g>) -> Result<Var<'g>> {
    check_finite("gaussian_kl parameters", &[mu, log_var])?;
    let terms = log_var
        .exp()
        .add(mu.square())?
        .sub(log_var)?
        .add_scalar(-1.0);
    Ok(terms.sum().scale(0.5))
}

/// `log ρ` and `log(1−ρ)` computed stably from the logit.
fn log_rho_pair<'g>(rho_logit: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
    let t = rho_logit.item();
    let rho = crate::autodiff::sigmoid(t);
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Degenerate(format!(
            "prior activation rho = {rho} (logit {t})"
        )));
    }
    Ok((rho_logit.neg().softplus().neg(), rho_logit.softplus().neg()))
}

/// `Σ [(1−ω) log((1−ω)/(1−ρ)) + ω log(ω/ρ)]` with `0·log 0 = 0`.
pub fn bernoulli_kl<'g>(omega: Var<'g>, rho_logit: Var<'g>) -> Result<Var<'g>> {
    let (log_rho, log_one_minus_rho) = log_rho_pair(rho_logit)?;
    let off = omega.neg().add_scalar(1.0);
    let on_term = omega.mul(omega.clamp_min(LOG_FLOOR).ln()?.sub(log_rho)?)?;
    let off_term = off.mul(off.clamp_min(LOG_FLOOR).ln()?.sub(log_one_minus_rho)?)?;
    Ok(on_term.add(off_term)?.sum())
}

/// Slab and Bernoulli parts of the spike-and-slab KL, returned separately.
pub fn spike_slab_kl_terms<'g>(
    mu: Var<'g>,
    log_var: Var<'g>,
    omega: Var<'g>,
    rho_logit: Var<'g>,
) -> Result<(Var<'g>, Var<'g>)> {
    check_finite("spike_slab_kl parameters", &[mu, log_var, omega])?;
    let per_dim = log_var
        .exp()
        .add(mu.square())?
        .sub(log_var)?
        .add_scalar(-1.0);
    let slab = omega.mul(per_dim)?.sum().scale(0.5);
    let spike = bernoulli_kl(omega, rho_logit)?;
    Ok((slab, spike))
}

/// `Σ_j [ (ω_j/2)(σ_j² + μ_j² − 1 − log σ_j²) ] + bernoulli_kl(ω, ρ)`.
pub fn spike_slab_kl<'g>(
    mu: Var<'g>,
    log_var: Var<'g>,
    omega: Var<'g>,
    rho_logit: Var<'g>,
) -> Result<Var<'g>> {
    let (slab, spike) = spike_slab_kl_terms(mu, log_var, omega, rho_logit)?;
    slab.add(spike)
}

/// `ω = exp(−relu(−t))`, in (0, 1] and exactly 1 for `t ≥ 0`.
pub fn omega_from_logits(t: Var<'_>) -> Var<'_> {
    t.neg().relu().neg().exp()
}

/// Negative log-density of `Beta(α₀, β₀)` at `ρ = sigmoid(rho_logit)`, up to
/// a constant: `−(α₀−1) log ρ − (β₀−1) log(1−ρ)`.
pub fn beta_hyperprior_loss(rho_logit: Var<'_>, alpha0: f64, beta0: f64) -> Var<'_> {
    let neg_log_rho = rho_logit.neg().softplus();
    let neg_log_one_minus = rho_logit.softplus();
    let a = neg_log_rho.scale(alpha0 - 1.0);
    let b = neg_log_one_minus.scale(beta0 - 1.0);
    a.add(b).expect("scalar terms")
}

/// `z = μ + exp(½ log σ²) ⊙ ε` with `ε ~ N(0, I)` drawn from `rng`.
pub fn gaussian_reparam_sample<'g>(mu: Var<'g>, log_var: Var<'g>, rng: &mut Rng) -> Result<Var<'g>> {
    let eps = rng.gaussian_tensor(&mu.shape());
    reparam_with_noise(mu, log_var, eps)
}

pub(crate) fn reparam_with_noise<'g>(mu: Var<'g>, log_var: Var<'g>, eps: Tensor) -> Result<Var<'g>> {
    let g = mu.graph();
    let sigma = log_var.scale(0.5).exp();
    mu.add(sigma.mul(g.constant(eps))?)
}

/// `s = sigmoid(c·(η − 1 + ω))`.
pub fn relaxed_gate<'g>(eta: Var<'g>, omega: Var<'g>, cfg: &GateConfig) -> Result<Var<'g>> {
    Ok(eta.add(omega)?.add_scalar(-1.0).scale(cfg.temperature).sigmoid())
}

/// One spike-and-slab draw with the intermediate gate nodes exposed.
#[derive(Clone, Copy, Debug)]
pub struct SpikeSlabDraw<'g> {
    /// Masked latent sample.
    pub z: Var<'g>,
    /// Forward mask (0/1 in straight-through mode).
    pub mask: Var<'g>,
    /// Relaxed gate `s`; receives the mask's gradient.
    pub relaxed: Var<'g>,
    /// Unmasked slab sample `μ + σ⊙ε`.
    pub slab: Var<'g>,
}

/// Draw `η ~ U[0,1)` then `ε ~ N(0, I)` from `rng` and sample.
pub fn spike_slab_sample<'g>(
    mu: Var<'g>,
    log_var: Var<'g>,
    omega: Var<'g>,
    cfg: &GateConfig,
    rng: &mut Rng,
) -> Result<SpikeSlabDraw<'g>> {
    let shape = mu.shape();
    let eta = rng.uniform_tensor(&shape);
    let eps = rng.gaussian_tensor(&shape);
    spike_slab_sample_with_noise(mu, log_var, omega, cfg, eta, eps)
}

/// Spike-and-slab draw from explicit noise tensors.
pub fn spike_slab_sample_with_noise<'g>(
    mu: Var<'g>,
    log_var: Var<'g>,
    omega: Var<'g>,
    cfg: &GateConfig,
    eta: Tensor,
    eps: Tensor,
) -> Result<SpikeSlabDraw<'g>> {
    let g: &'g Graph = mu.graph();
    let relaxed = relaxed_gate(g.constant(eta), omega, cfg)?;
    let mask = match cfg.mode {
        GateMode::StraightThrough => {
            let hard = relaxed
                .value()
                .map(|s| if s > cfg.threshold { 1.0 } else { 0.0 });
            g.custom_gradient(hard, relaxed)?
        }
        GateMode::Relaxed => relaxed,
    };
    let slab = reparam_with_noise(mu, log_var, eps)?;
    let z = g.gate(mask, slab)?;
    Ok(SpikeSlabDraw {
        z,
        mask,
        relaxed,
        slab,
    })
}
