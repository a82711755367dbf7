//! Encoders, decoders, the latent map and the four paired model variants.
//!
//! | variant | QoI posterior  | observation posterior | map                  |
//! |---------|----------------|-----------------------|----------------------|
//! | PAIR    | code           | code                  | code → code          |
//! | vPAIR   | Gaussian       | Gaussian              | (μ_y, log σ²_y) → 2ℓx |
//! | sVAE    | spike-and-slab | (none)                | (none)               |
//! | vsPAIR  | spike-and-slab | Gaussian              | (μ_y, log σ²_y) → 3ℓx |
//!
//! sVAE has a single encoder that reads the observation `y` and emits
//! spike-and-slab parameters in the QoI latent space; its decoder produces `x`.
//!
//! All losses are sums over the rows of a batch. The model objective divides
//! by the batch size so weights act per sample; the hyperprior term is added
//! once per step.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Gradients, Graph, Var};
use crate::distributions::{
    self, as_row, beta_hyperprior_loss, gaussian_kl, omega_from_logits, spike_slab_kl, DiagGaussianParams,
    GateConfig, SpikeSlabParams, SparsityPrior,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named trainable tensors, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Replace a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let old = &self.values[id.0];
        if old.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "ParamStore::set",
                left: old.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.values
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Leaf nodes for every parameter.
    pub fn bind<'g>(&self, g: &'g Graph) -> Bound<'g> {
        Bound {
            graph: g,
            vars: self.values.iter().map(|t| g.leaf(t.clone())).collect(),
        }
    }
}

/// Parameters of a [`ParamStore`] placed on a graph.
pub struct Bound<'g> {
    graph: &'g Graph,
    vars: Vec<Var<'g>>,
}

impl<'g> Bound<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn var(&self, id: ParamId) -> Var<'g> {
        self.vars[id.0]
    }

    /// Gradient for every parameter, zeros where the loss does not depend on it.
    pub fn grads(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|v| grads.wrt(*v)).collect()
    }
}

/// Fully connected network with silu hidden activations and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Weights and biases uniform in `±√(1/fan_in)`.
    pub fn new(store: &mut ParamStore, name: &str, widths: &[usize], rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("{name}: bad layer widths {widths:?}")));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            let w = rng.uniform_tensor(&[fan_in, fan_out]).map(|u| (2.0 * u - 1.0) * bound);
            let b = rng.uniform_tensor(&[fan_out]).map(|u| (2.0 * u - 1.0) * bound);
            let w = store.add(format!("{name}.{i}.w"), w)?;
            let b = store.add(format!("{name}.{i}.b"), b)?;
            layers.push((w, b));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            layers,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    /// `(weight, bias)` ids per layer.
    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn forward<'g>(&self, params: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.input_width() {
            return Err(Error::ShapeMismatch {
                op: "Mlp::forward",
                left: shape,
                right: vec![self.input_width()],
            });
        }
        let mut h = x;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.matmul(params.var(*w))?.add_bias(params.var(*b))?;
            if i + 1 < self.layers.len() {
                h = h.silu();
            }
        }
        Ok(h)
    }
}

/// What an encoder (or the latent map) emits per latent coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Deterministic code.
    Code,
    /// `(μ, log σ²)`.
    Gaussian,
    /// `(μ, log σ², ω-logits)`.
    SpikeSlab,
}

impl Head {
    pub fn count(self) -> usize {
        match self {
            Head::Code => 1,
            Head::Gaussian => 2,
            Head::SpikeSlab => 3,
        }
    }
}

/// Latent posterior parameters as graph nodes, one row per batch item.
#[derive(Clone, Copy, Debug)]
pub struct LatentVars<'g> {
    pub mu: Var<'g>,
    pub log_var: Option<Var<'g>>,
    pub omega: Option<Var<'g>>,
}

impl<'g> LatentVars<'g> {
    /// Slice a `b × (heads·ℓ)` network output into its heads.
    pub fn from_output(out: Var<'g>, head: Head, latent: usize) -> Result<Self> {
        let cols = out.shape()[1];
        if cols != head.count() * latent {
            return Err(Error::ShapeMismatch {
                op: "LatentVars::from_output",
                left: out.shape(),
                right: vec![head.count() * latent],
            });
        }
        let mu = out.slice_cols(0, latent)?;
        let log_var = match head {
            Head::Code => None,
            _ => Some(out.slice_cols(latent, 2 * latent)?),
        };
        let omega = match head {
            Head::SpikeSlab => Some(omega_from_logits(out.slice_cols(2 * latent, 3 * latent)?)),
            _ => None,
        };
        Ok(LatentVars { mu, log_var, omega })
    }

    pub fn head(&self) -> Head {
        match (self.log_var, self.omega) {
            (None, _) => Head::Code,
            (Some(_), None) => Head::Gaussian,
            (Some(_), Some(_)) => Head::SpikeSlab,
        }
    }

    fn stacked(&self) -> Vec<Var<'g>> {
        [Some(self.mu), self.log_var, self.omega].into_iter().flatten().collect()
    }

    pub fn to_params(&self) -> LatentParams {
        let v = |x: Var<'_>| x.value().as_ref().clone();
        match (self.log_var, self.omega) {
            (None, _) => LatentParams::Code(v(self.mu)),
            (Some(lv), None) => LatentParams::Gaussian(DiagGaussianParams {
                mu: v(self.mu),
                log_var: v(lv),
            }),
            (Some(lv), Some(w)) => LatentParams::SpikeSlab(SpikeSlabParams {
                mu: v(self.mu),
                log_var: v(lv),
                omega: v(w),
            }),
        }
    }
}

/// Latent posterior parameters as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub enum LatentParams {
    Code(Tensor),
    Gaussian(DiagGaussianParams),
    SpikeSlab(SpikeSlabParams),
}

impl LatentParams {
    pub fn mu(&self) -> &Tensor {
        match self {
            LatentParams::Code(mu) => mu,
            LatentParams::Gaussian(p) => &p.mu,
            LatentParams::SpikeSlab(p) => &p.mu,
        }
    }

    pub fn log_var(&self) -> Option<&Tensor> {
        match self {
            LatentParams::Code(_) => None,
            LatentParams::Gaussian(p) => Some(&p.log_var),
            LatentParams::SpikeSlab(p) => Some(&p.log_var),
        }
    }

    pub fn omega(&self) -> Option<&Tensor> {
        match self {
            LatentParams::SpikeSlab(p) => Some(&p.omega),
            _ => None,
        }
    }

    pub fn head(&self) -> Head {
        match self {
            LatentParams::Code(_) => Head::Code,
            LatentParams::Gaussian(_) => Head::Gaussian,
            LatentParams::SpikeSlab(_) => Head::SpikeSlab,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Pair,
    VPair,
    SVae,
    VsPair,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Pair, Variant::VPair, Variant::SVae, Variant::VsPair];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pair => "pair",
            Variant::VPair => "vpair",
            Variant::SVae => "svae",
            Variant::VsPair => "vspair",
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Variant::SVae | Variant::VsPair)
    }

    /// Posterior family of the QoI latent.
    pub fn x_head(self) -> Head {
        match self {
            Variant::Pair => Head::Code,
            Variant::VPair => Head::Gaussian,
            Variant::SVae | Variant::VsPair => Head::SpikeSlab,
        }
    }

    /// Posterior family of the observation latent, if there is one.
    pub fn y_head(self) -> Option<Head> {
        match self {
            Variant::Pair => Some(Head::Code),
            Variant::VPair | Variant::VsPair => Some(Head::Gaussian),
            Variant::SVae => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?} (expected pair|vpair|svae|vspair)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapMode {
    /// Affine map between codes.
    LinearCode,
    /// MLP from `(μ_y, log σ²_y)` to QoI posterior parameters.
    ParamMlp,
    /// MLP between latent samples, fit by squared error.
    SampleMatch,
}

impl MapMode {
    pub fn name(self) -> &'static str {
        match self {
            MapMode::LinearCode => "linear_code",
            MapMode::ParamMlp => "param_mlp",
            MapMode::SampleMatch => "sample_match",
        }
    }
}

impl FromStr for MapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [MapMode::LinearCode, MapMode::ParamMlp, MapMode::SampleMatch]
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown map mode {s:?}")))
    }
}

/// The amortized inverse map from observation latents to QoI latents.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMap {
    mode: MapMode,
    net: Mlp,
    out_head: Head,
    latent_x: usize,
}

impl LatentMap {
    /// `hidden` is ignored in [`MapMode::LinearCode`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        mode: MapMode,
        latent_y: usize,
        latent_x: usize,
        out_head: Head,
        hidden: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        let (input, out_head) = match mode {
            MapMode::LinearCode | MapMode::SampleMatch => (latent_y, Head::Code),
            MapMode::ParamMlp => {
                if out_head == Head::Code {
                    return Err(Error::invalid("param_mlp map needs a Gaussian or spike-and-slab output"));
                }
                (2 * latent_y, out_head)
            }
        };
        let mut widths = vec![input];
        if mode != MapMode::LinearCode {
            widths.extend_from_slice(hidden);
        }
        widths.push(out_head.count() * latent_x);
        let net = Mlp::new(store, name, &widths, rng)?;
        Ok(LatentMap {
            mode,
            net,
            out_head,
            latent_x,
        })
    }

    pub fn mode(&self) -> MapMode {
        self.mode
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn out_head(&self) -> Head {
        self.out_head
    }

    /// Map a batch of observation latents. Code modes read `y.mu` only.
    pub fn forward<'g>(&self, params: &Bound<'g>, y: &LatentVars<'g>) -> Result<LatentVars<'g>> {
        let input = match self.mode {
            MapMode::LinearCode | MapMode::SampleMatch => y.mu,
            MapMode::ParamMlp => {
                let lv = y
                    .log_var
                    .ok_or_else(|| Error::invalid("param_mlp map needs (mu, log_var) input"))?;
                y.mu.graph().concat_cols(&[y.mu, lv])?
            }
        };
        let out = self.net.forward(params, input)?;
        LatentVars::from_output(out, self.out_head, self.latent_x)
    }

    /// Apply a code map to a batch of latent codes.
    pub fn forward_codes<'g>(&self, params: &Bound<'g>, z: Var<'g>) -> Result<Var<'g>> {
        if self.mode == MapMode::ParamMlp {
            return Err(Error::invalid("forward_codes on a param_mlp map"));
        }
        self.net.forward(params, z)
    }
}

/// Loss weights. All must be non-negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda_rho: f64,
    pub lambda_b: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 0.5,
            lambda3: 1.0,
            lambda_rho: 1.4,
            lambda_b: 0.0,
            gamma_x: 1.0,
            gamma_y: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda_rho", self.lambda_rho),
            ("lambda_b", self.lambda_b),
            ("gamma_x", self.gamma_x),
            ("gamma_y", self.gamma_y),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }

    /// Every weight zero except `lambda1`.
    pub fn only_x(&self) -> Self {
        LossWeights {
            lambda2: 0.0,
            lambda3: 0.0,
            lambda_rho: 0.0,
            ..*self
        }
    }
}

/// `Σ (a − b)²`.
pub fn squared_error<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    Ok(a.sub(b)?.square().sum())
}

/// `½‖x − x̃‖² + γ·KL(N(μ, σ²) ‖ N(0, I))`, summed over the batch.
pub fn vae_elbo_loss<'g>(posterior: &LatentVars<'g>, x: Var<'g>, x_rec: Var<'g>, gamma: f64) -> Result<Var<'g>> {
    let lv = posterior
        .log_var
        .ok_or_else(|| Error::invalid("vae_elbo_loss needs a Gaussian posterior"))?;
    let rec = squared_error(x, x_rec)?.scale(0.5);
    rec.add(gaussian_kl(posterior.mu, lv)?.scale(gamma))
}

/// `½‖x − x̃‖² + γ·KL_spike-slab + λ_ρ·L_ρ`, summed over the batch.
///
/// `beta` holds the hyperprior `(α₀, β₀)`.
pub fn svae_elbo_loss<'g>(
    posterior: &LatentVars<'g>,
    x: Var<'g>,
    x_rec: Var<'g>,
    rho_logit: Var<'g>,
    beta: (f64, f64),
    gamma: f64,
    lambda_rho: f64,
) -> Result<Var<'g>> {
    let (Some(lv), Some(omega)) = (posterior.log_var, posterior.omega) else {
        return Err(Error::invalid("svae_elbo_loss needs a spike-and-slab posterior"));
    };
    let rec = squared_error(x, x_rec)?.scale(0.5);
    let kl = spike_slab_kl(posterior.mu, lv, omega, rho_logit)?;
    let hyper = beta_hyperprior_loss(rho_logit, beta.0, beta.1);
    rec.add(kl.scale(gamma))?.add(hyper.scale(lambda_rho))
}

/// `‖[μ̂; log σ̂²; ω̂] − [μ; log σ²; ω]‖² + λ_b Σ ω̂(1 − ω̂)`.
pub fn map_param_loss<'g>(pred: &LatentVars<'g>, target: &LatentVars<'g>, lambda_b: f64) -> Result<Var<'g>> {
    if pred.head() != target.head() {
        return Err(Error::invalid(format!(
            "map_param_loss: predicted {:?} parameters against {:?} target",
            pred.head(),
            target.head()
        )));
    }
    let mut total: Option<Var<'g>> = None;
    for (p, t) in pred.stacked().into_iter().zip(target.stacked()) {
        let e = squared_error(p, t)?;
        total = Some(match total {
            Some(acc) => acc.add(e)?,
            None => e,
        });
    }
    let mut total = total.expect("at least the mean head");
    if let Some(w) = pred.omega {
        let entropy = w.mul(w.neg().add_scalar(1.0))?.sum();
        total = total.add(entropy.scale(lambda_b))?;
    }
    Ok(total)
}

/// `‖M(z_y) − z_x‖²`.
pub fn map_sample_loss<'g>(mapped: Var<'g>, z_x: Var<'g>) -> Result<Var<'g>> {
    squared_error(mapped, z_x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    ReconX,
    KlX,
    ReconY,
    KlY,
    Map,
    Inverse,
    Hyperprior,
}

impl Term {
    pub fn name(self) -> &'static str {
        match self {
            Term::ReconX => "recon_x",
            Term::KlX => "kl_x",
            Term::ReconY => "recon_y",
            Term::KlY => "kl_y",
            Term::Map => "map",
            Term::Inverse => "inverse",
            Term::Hyperprior => "hyperprior",
        }
    }
}

/// Weighted loss terms as graph nodes. `total` is their sum in order.
pub struct Objective<'g> {
    pub total: Var<'g>,
    pub terms: Vec<(Term, Var<'g>)>,
    /// Mean count of nonzero QoI latent coordinates per row.
    pub mean_nnz: f64,
}

impl Objective<'_> {
    pub fn breakdown(&self) -> LossBreakdown {
        LossBreakdown {
            total: self.total.item(),
            terms: self.terms.iter().map(|(t, v)| (*t, v.item())).collect(),
            mean_nnz: self.mean_nnz,
        }
    }
}

/// Weighted loss terms as numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub terms: Vec<(Term, f64)>,
    pub mean_nnz: f64,
}

impl LossBreakdown {
    pub fn get(&self, term: Term) -> Option<f64> {
        self.terms.iter().find(|(t, _)| *t == term).map(|(_, v)| *v)
    }
}

/// Unweighted deterministic PAIR losses, batch means of per-row squared norms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairLosses {
    pub recon_x: f64,
    pub recon_y: f64,
    pub inverse: f64,
}

/// Architecture and prior settings of a [`PairedModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub dim_x: usize,
    pub dim_y: usize,
    pub latent_x: usize,
    pub latent_y: usize,
    pub hidden: Vec<usize>,
    pub map_hidden: Vec<usize>,
    pub map_mode: MapMode,
    pub gate: GateConfig,
    pub alpha0: f64,
    pub beta0: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant, dim_x: usize, dim_y: usize, latent_x: usize, latent_y: usize) -> Self {
        ModelConfig {
            variant,
            dim_x,
            dim_y,
            latent_x,
            latent_y,
            hidden: vec![256],
            map_hidden: vec![256],
            map_mode: Self::default_map_mode(variant),
            gate: GateConfig::default(),
            alpha0: 1.0,
            beta0: 127.0,
            seed: 0,
        }
    }

    /// 28×28 inputs with the latent sizes used for MNIST.
    pub fn mnist(variant: Variant) -> Self {
        let (lx, ly) = match variant {
            Variant::Pair | Variant::VPair => (32, 32),
            Variant::SVae => (784, 784),
            Variant::VsPair => (784, 32),
        };
        Self::new(variant, 784, 784, lx, ly)
    }

    pub fn default_map_mode(variant: Variant) -> MapMode {
        match variant {
            Variant::Pair => MapMode::SampleMatch,
            _ => MapMode::ParamMlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dim_x", self.dim_x),
            ("dim_y", self.dim_y),
            ("latent_x", self.latent_x),
            ("latent_y", self.latent_y),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.hidden.contains(&0) || self.map_hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        let ok = match self.variant {
            Variant::Pair => matches!(self.map_mode, MapMode::LinearCode | MapMode::SampleMatch),
            Variant::VPair | Variant::VsPair => self.map_mode == MapMode::ParamMlp,
            Variant::SVae => true,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "map mode {} is not available for {}",
                self.map_mode.name(),
                self.variant
            )));
        }
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) {
            return Err(Error::invalid("alpha0 and beta0 must be positive"));
        }
        self.gate.validate()
    }
}

/// Draws from the QoI posterior of one inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    /// `n × dim_x` decoded samples.
    pub x_samples: Tensor,
    /// `n × ℓx` latent samples.
    pub z_samples: Tensor,
    /// `n × ℓx` gate masks for sparse variants.
    pub masks: Option<Tensor>,
    /// Predicted QoI posterior parameters, one row.
    pub params: LatentParams,
}

impl Inversion {
    /// Pixel-wise mean of the decoded samples.
    pub fn mean_x(&self) -> Tensor {
        column_mean(&self.x_samples)
    }

    /// Mean count of nonzero latent coordinates per sample.
    pub fn mean_nnz(&self) -> f64 {
        nnz_per_row(&self.z_samples)
    }
}

pub(crate) fn column_mean(t: &Tensor) -> Tensor {
    let (n, d) = (t.rows(), t.cols());
    let mut out = vec![0.0; d];
    for i in 0..n {
        for (o, v) in out.iter_mut().zip(t.row(i)) {
            *o += v;
        }
    }
    Tensor::vector(out.into_iter().map(|s| s / n as f64).collect())
}

fn nnz_per_row(z: &Tensor) -> f64 {
    let nonzero = z.data().iter().filter(|v| **v != 0.0).count();
    nonzero as f64 / z.rows() as f64
}

/// Encoders, decoders, latent map and sparsity prior of one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedModel {
    config: ModelConfig,
    params: ParamStore,
    enc_x: Option<Mlp>,
    dec_x: Mlp,
    enc_y: Option<Mlp>,
    dec_y: Option<Mlp>,
    map: Option<LatentMap>,
    rho: Option<ParamId>,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl PairedModel {
    /// Fresh model with seeded initialization. `ρ` starts at 0.5.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = Rng::new(c.seed);
        let mut params = ParamStore::new();
        let x_head = c.variant.x_head();
        let (enc_x, enc_y, dec_y, map) = match c.variant.y_head() {
            Some(y_head) => {
                let enc_x = Mlp::new(
                    &mut params,
                    "enc_x",
                    &widths(c.dim_x, &c.hidden, x_head.count() * c.latent_x),
                    &mut rng.split(),
                )?;
                let enc_y = Mlp::new(
                    &mut params,
                    "enc_y",
                    &widths(c.dim_y, &c.hidden, y_head.count() * c.latent_y),
                    &mut rng.split(),
                )?;
                let dec_y = Mlp::new(&mut params, "dec_y", &widths(c.latent_y, &c.hidden, c.dim_y), &mut rng.split())?;
                let map = LatentMap::new(
                    &mut params,
                    "map",
                    c.map_mode,
                    c.latent_y,
                    c.latent_x,
                    x_head,
                    &c.map_hidden,
                    &mut rng.split(),
                )?;
                (Some(enc_x), Some(enc_y), Some(dec_y), Some(map))
            }
            None => {
                let enc_y = Mlp::new(
                    &mut params,
                    "enc_y",
                    &widths(c.dim_y, &c.hidden, x_head.count() * c.latent_x),
                    &mut rng.split(),
                )?;
                (None, Some(enc_y), None, None)
            }
        };
        let dec_x = Mlp::new(&mut params, "dec_x", &widths(c.latent_x, &c.hidden, c.dim_x), &mut rng.split())?;
        let rho = if c.variant.is_sparse() {
            Some(params.add("rho_logit", Tensor::scalar(0.0))?)
        } else {
            None
        };
        Ok(PairedModel {
            config,
            params,
            enc_x,
            dec_x,
            enc_y,
            dec_y,
            map,
            rho,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn gate(&self) -> &GateConfig {
        &self.config.gate
    }

    /// Replace the Beta hyperprior parameters.
    pub fn set_prior(&mut self, alpha0: f64, beta0: f64) -> Result<()> {
        if !(alpha0 > 0.0 && beta0 > 0.0) {
            return Err(Error::invalid("alpha0 and beta0 must be positive"));
        }
        self.config.alpha0 = alpha0;
        self.config.beta0 = beta0;
        Ok(())
    }

    pub fn set_gate(&mut self, gate: GateConfig) -> Result<()> {
        gate.validate()?;
        self.config.gate = gate;
        Ok(())
    }

    pub fn enc_x(&self) -> Option<&Mlp> {
        self.enc_x.as_ref()
    }

    pub fn dec_x(&self) -> &Mlp {
        &self.dec_x
    }

    pub fn enc_y(&self) -> Option<&Mlp> {
        self.enc_y.as_ref()
    }

    pub fn dec_y(&self) -> Option<&Mlp> {
        self.dec_y.as_ref()
    }

    pub fn map(&self) -> Option<&LatentMap> {
        self.map.as_ref()
    }

    pub fn rho_id(&self) -> Option<ParamId> {
        self.rho
    }

    /// Current sparsity prior for sparse variants.
    pub fn sparsity_prior(&self) -> Option<SparsityPrior> {
        self.rho.map(|id| SparsityPrior {
            rho_logit: self.params.get(id).data()[0],
            alpha0: self.config.alpha0,
            beta0: self.config.beta0,
        })
    }

    fn wrong_variant(&self, expected: &str) -> Error {
        Error::WrongVariant {
            expected: expected.to_string(),
            got: self.variant().to_string(),
        }
    }

    fn check_input(&self, op: &'static str, t: &Tensor, width: usize) -> Result<Tensor> {
        let t = as_row(t);
        if t.rank() != 2 || t.cols() != width {
            return Err(Error::ShapeMismatch {
                op,
                left: t.shape().to_vec(),
                right: vec![width],
            });
        }
        Ok(t)
    }

    /// QoI posterior parameters. Not available for sVAE, which has no QoI
    /// encoder.
    pub fn encode_x_vars<'g>(&self, b: &Bound<'g>, x: Var<'g>) -> Result<LatentVars<'g>> {
        let enc = self.enc_x.as_ref().ok_or_else(|| self.wrong_variant("pair|vpair|vspair"))?;
        LatentVars::from_output(enc.forward(b, x)?, self.variant().x_head(), self.config.latent_x)
    }

    /// Observation posterior parameters. For sVAE these live in the QoI
    /// latent space.
    pub fn encode_y_vars<'g>(&self, b: &Bound<'g>, y: Var<'g>) -> Result<LatentVars<'g>> {
        let enc = self.enc_y.as_ref().expect("every variant has an observation encoder");
        match self.variant().y_head() {
            Some(head) => LatentVars::from_output(enc.forward(b, y)?, head, self.config.latent_y),
            None => LatentVars::from_output(enc.forward(b, y)?, Head::SpikeSlab, self.config.latent_x),
        }
    }

    pub fn decode_x_vars<'g>(&self, b: &Bound<'g>, z: Var<'g>) -> Result<Var<'g>> {
        self.dec_x.forward(b, z)
    }

    pub fn decode_y_vars<'g>(&self, b: &Bound<'g>, z: Var<'g>) -> Result<Var<'g>> {
        let dec = self.dec_y.as_ref().ok_or_else(|| self.wrong_variant("pair|vpair|vspair"))?;
        dec.forward(b, z)
    }

    /// Predicted QoI posterior parameters for a batch of observations.
    pub fn predict_x_vars<'g>(&self, b: &Bound<'g>, y: Var<'g>) -> Result<LatentVars<'g>> {
        let ly = self.encode_y_vars(b, y)?;
        match &self.map {
            Some(map) => map.forward(b, &ly),
            None => Ok(ly),
        }
    }

    fn run<T>(&self, f: impl for<'g> FnOnce(&'g Graph, &Bound<'g>) -> Result<T>) -> Result<T> {
        let g = Graph::new();
        let b = self.params.bind(&g);
        f(&g, &b)
    }

    pub fn encode_x(&self, x: &Tensor) -> Result<LatentParams> {
        let x = self.check_input("encode_x", x, self.config.dim_x)?;
        self.run(|g, b| Ok(self.encode_x_vars(b, g.constant(x))?.to_params()))
    }

    pub fn encode_y(&self, y: &Tensor) -> Result<LatentParams> {
        let y = self.check_input("encode_y", y, self.config.dim_y)?;
        self.run(|g, b| Ok(self.encode_y_vars(b, g.constant(y))?.to_params()))
    }

    pub fn decode_x(&self, z: &Tensor) -> Result<Tensor> {
        let z = self.check_input("decode_x", z, self.config.latent_x)?;
        self.run(|g, b| Ok(self.decode_x_vars(b, g.constant(z))?.value().as_ref().clone()))
    }

    pub fn decode_y(&self, z: &Tensor) -> Result<Tensor> {
        let z = self.check_input("decode_y", z, self.config.latent_y)?;
        self.run(|g, b| Ok(self.decode_y_vars(b, g.constant(z))?.value().as_ref().clone()))
    }

    /// QoI posterior parameters predicted from observations.
    pub fn predict_params(&self, y: &Tensor) -> Result<LatentParams> {
        let y = self.check_input("predict_params", y, self.config.dim_y)?;
        self.run(|g, b| Ok(self.predict_x_vars(b, g.constant(y))?.to_params()))
    }

    /// Weighted training objective on a paired batch (rows of `x`, `y`).
    ///
    /// Noise streams are split from `rng` in a fixed order (QoI slab noise,
    /// QoI gate noise, observation noise) for every variant.
    pub fn objective<'g>(
        &self,
        b: &Bound<'g>,
        x: &Tensor,
        y: &Tensor,
        w: &LossWeights,
        rng: &mut Rng,
    ) -> Result<Objective<'g>> {
        w.validate()?;
        let x = self.check_input("objective x", x, self.config.dim_x)?;
        let y = self.check_input("objective y", y, self.config.dim_y)?;
        if x.rows() != y.rows() || x.rows() == 0 {
            return Err(Error::invalid(format!(
                "batch needs matching nonzero row counts, got {} and {}",
                x.rows(),
                y.rows()
            )));
        }
        let inv_b = 1.0 / x.rows() as f64;
        let mut x_eps = rng.split();
        let mut x_gate = rng.split();
        let mut y_eps = rng.split();

        let g = b.graph();
        let xv = g.constant(x);
        let yv = g.constant(y);
        let mut terms: Vec<(Term, Var<'g>)> = Vec::new();

        let z_x = match self.variant() {
            Variant::Pair => {
                let cx = self.encode_x_vars(b, xv)?.mu;
                let cy = self.encode_y_vars(b, yv)?.mu;
                let rec_x = squared_error(self.decode_x_vars(b, cx)?, xv)?;
                let rec_y = squared_error(self.decode_y_vars(b, cy)?, yv)?;
                let mapped = self.map.as_ref().expect("paired").forward_codes(b, cy)?;
                let inverse = squared_error(self.decode_x_vars(b, mapped)?, xv)?;
                terms.push((Term::ReconX, rec_x.scale(w.lambda1 * inv_b)));
                terms.push((Term::ReconY, rec_y.scale(w.lambda2 * inv_b)));
                terms.push((Term::Inverse, inverse.scale(w.lambda3 * inv_b)));
                cx
            }
            Variant::SVae => {
                let post = self.encode_y_vars(b, yv)?;
                let (rec, kl, z) = self.spike_slab_branch(b, &post, xv, &mut x_gate, &mut x_eps)?;
                terms.push((Term::ReconX, rec.scale(w.lambda1 * inv_b)));
                terms.push((Term::KlX, kl.scale(w.lambda1 * w.gamma_x * inv_b)));
                terms.push((Term::Hyperprior, self.hyperprior(b)?.scale(w.lambda_rho)));
                z
            }
            Variant::VPair | Variant::VsPair => {
                let post_x = self.encode_x_vars(b, xv)?;
                let (rec_x, kl_x, z) = if self.variant() == Variant::VsPair {
                    self.spike_slab_branch(b, &post_x, xv, &mut x_gate, &mut x_eps)?
                } else {
                    self.gaussian_branch(b, &post_x, xv, &mut x_eps, true)?
                };
                let post_y = self.encode_y_vars(b, yv)?;
                let (rec_y, kl_y, _) = self.gaussian_branch(b, &post_y, yv, &mut y_eps, false)?;
                let pred = self.map.as_ref().expect("paired").forward(b, &post_y)?;
                let map = map_param_loss(&pred, &post_x, w.lambda_b)?;
                terms.push((Term::ReconX, rec_x.scale(w.lambda1 * inv_b)));
                terms.push((Term::KlX, kl_x.scale(w.lambda1 * w.gamma_x * inv_b)));
                terms.push((Term::ReconY, rec_y.scale(w.lambda2 * inv_b)));
                terms.push((Term::KlY, kl_y.scale(w.lambda2 * w.gamma_y * inv_b)));
                terms.push((Term::Map, map.scale(w.lambda3 * inv_b)));
                if self.variant() == Variant::VsPair {
                    terms.push((Term::Hyperprior, self.hyperprior(b)?.scale(w.lambda_rho)));
                }
                z
            }
        };

        let mut total = terms[0].1;
        for (_, v) in &terms[1..] {
            total = total.add(*v)?;
        }
        Ok(Objective {
            total,
            terms,
            mean_nnz: nnz_per_row(&z_x.value()),
        })
    }

    fn hyperprior<'g>(&self, b: &Bound<'g>) -> Result<Var<'g>> {
        let rho = b.var(self.rho.expect("sparse variant"));
        Ok(beta_hyperprior_loss(rho, self.config.alpha0, self.config.beta0))
    }

    /// `(½‖x − x̃‖², KL, z)` for a Gaussian posterior.
    fn gaussian_branch<'g>(
        &self,
        b: &Bound<'g>,
        post: &LatentVars<'g>,
        target: Var<'g>,
        eps: &mut Rng,
        qoi: bool,
    ) -> Result<(Var<'g>, Var<'g>, Var<'g>)> {
        let lv = post.log_var.expect("gaussian head");
        let z = distributions::gaussian_reparam_sample(post.mu, lv, eps)?;
        let rec = if qoi {
            self.decode_x_vars(b, z)?
        } else {
            self.decode_y_vars(b, z)?
        };
        let rec = squared_error(target, rec)?.scale(0.5);
        Ok((rec, gaussian_kl(post.mu, lv)?, z))
    }

    /// `(½‖x − x̃‖², spike-and-slab KL, z)`.
    fn spike_slab_branch<'g>(
        &self,
        b: &Bound<'g>,
        post: &LatentVars<'g>,
        target: Var<'g>,
        gate: &mut Rng,
        eps: &mut Rng,
    ) -> Result<(Var<'g>, Var<'g>, Var<'g>)> {
        let (lv, omega) = (post.log_var.expect("slab head"), post.omega.expect("slab head"));
        let shape = post.mu.shape();
        let draw = distributions::spike_slab_sample_with_noise(
            post.mu,
            lv,
            omega,
            &self.config.gate,
            gate.uniform_tensor(&shape),
            eps.gaussian_tensor(&shape),
        )?;
        let rho = b.var(self.rho.expect("sparse variant"));
        let rec = squared_error(target, self.decode_x_vars(b, draw.z)?)?.scale(0.5);
        Ok((rec, spike_slab_kl(post.mu, lv, omega, rho)?, draw.z))
    }

    /// Loss terms without gradients.
    pub fn loss(&self, x: &Tensor, y: &Tensor, w: &LossWeights, rng: &mut Rng) -> Result<LossBreakdown> {
        self.run(|_, b| Ok(self.objective(b, x, y, w, rng)?.breakdown()))
    }

    /// Loss terms and the gradient for every parameter, in store order.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        y: &Tensor,
        w: &LossWeights,
        rng: &mut Rng,
    ) -> Result<(LossBreakdown, Vec<Tensor>)> {
        self.run(|g, b| {
            let obj = self.objective(b, x, y, w, rng)?;
            let grads = g.backward(obj.total)?;
            Ok((obj.breakdown(), b.grads(&grads)))
        })
    }

    /// Draw `n` QoI latents from predicted parameters (one row).
    pub fn sample_latents(&self, params: &LatentParams, n: usize, rng: &mut Rng) -> Result<(Tensor, Option<Tensor>)> {
        if n == 0 {
            return Err(Error::invalid("need at least one sample"));
        }
        let repeat = |t: &Tensor| as_row(t).select_rows(&vec![0; n]);
        let g = Graph::new();
        match params {
            LatentParams::Code(mu) => Ok((repeat(mu), None)),
            LatentParams::Gaussian(p) => {
                let z = distributions::gaussian_reparam_sample(
                    g.constant(repeat(&p.mu)),
                    g.constant(repeat(&p.log_var)),
                    rng,
                )?;
                Ok((z.value().as_ref().clone(), None))
            }
            LatentParams::SpikeSlab(p) => {
                let draw = distributions::spike_slab_sample(
                    g.constant(repeat(&p.mu)),
                    g.constant(repeat(&p.log_var)),
                    g.constant(repeat(&p.omega)),
                    &self.config.gate,
                    rng,
                )?;
                Ok((draw.z.value().as_ref().clone(), Some(draw.mask.value().as_ref().clone())))
            }
        }
    }

    /// Encode `y`, map to QoI posterior parameters, draw `n` latents and
    /// decode each.
    pub fn invert(&self, y: &Tensor, n: usize, rng: &mut Rng) -> Result<Inversion> {
        let y = self.check_input("invert", y, self.config.dim_y)?;
        if y.rows() != 1 {
            return Err(Error::invalid("invert takes a single observation"));
        }
        let params = self.predict_params(&y)?;
        let (z_samples, masks) = self.sample_latents(&params, n, rng)?;
        let x_samples = self.decode_x(&z_samples)?;
        Ok(Inversion {
            x_samples,
            z_samples,
            masks,
            params,
        })
    }
}

/// Weighted objective of a vPAIR or vsPAIR model.
pub fn vspair_total_loss(
    model: &PairedModel,
    x: &Tensor,
    y: &Tensor,
    w: &LossWeights,
    rng: &mut Rng,
) -> Result<(f64, LossBreakdown)> {
    if !matches!(model.variant(), Variant::VPair | Variant::VsPair) {
        return Err(model.wrong_variant("vpair|vspair"));
    }
    let br = model.loss(x, y, w, rng)?;
    Ok((br.total, br))
}

/// Reconstruction and inverse losses of a PAIR model.
pub fn pair_losses(model: &PairedModel, x: &Tensor, y: &Tensor) -> Result<PairLosses> {
    if model.variant() != Variant::Pair {
        return Err(model.wrong_variant("pair"));
    }
    let w = LossWeights {
        lambda1: 1.0,
        lambda2: 1.0,
        lambda3: 1.0,
        ..LossWeights::default()
    };
    let br = model.loss(x, y, &w, &mut Rng::new(0))?;
    let get = |t| br.get(t).expect("pair term");
    Ok(PairLosses {
        recon_x: get(Term::ReconX),
        recon_y: get(Term::ReconY),
        inverse: get(Term::Inverse),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(variant: Variant) -> PairedModel {
        let mut c = ModelConfig::new(variant, 6, 5, 3, 2);
        c.hidden = vec![4];
        c.map_hidden = vec![4];
        c.seed = 3;
        PairedModel::new(c).unwrap()
    }

    #[test]
    fn variant_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }

    #[test]
    fn init_within_fan_in_bound() {
        let m = tiny(Variant::VsPair);
        for (name, t) in m.params().iter() {
            if name == "rho_logit" {
                assert_eq!(t.data(), &[0.0]);
                continue;
            }
            let layer = name.rsplit_once('.').unwrap().0;
            let fan_in = m.params().by_name(&format!("{layer}.w")).unwrap().shape()[0];
            let bound = (1.0 / fan_in as f64).sqrt();
            assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
        }
    }

    #[test]
    fn head_shapes_per_variant() {
        let x = Tensor::full(&[1, 6], 0.5);
        let y = Tensor::full(&[1, 5], 0.5);
        let m = tiny(Variant::Pair);
        assert_eq!(m.encode_x(&x).unwrap().head(), Head::Code);
        assert_eq!(m.predict_params(&y).unwrap().mu().shape(), &[1, 3]);
        let m = tiny(Variant::VPair);
        assert_eq!(m.predict_params(&y).unwrap().head(), Head::Gaussian);
        let m = tiny(Variant::SVae);
        assert!(matches!(m.encode_x(&x), Err(Error::WrongVariant { .. })));
        let p = m.predict_params(&y).unwrap();
        assert_eq!(p.head(), Head::SpikeSlab);
        assert_eq!(p.mu().shape(), &[1, 3]);
        let m = tiny(Variant::VsPair);
        let p = m.predict_params(&y).unwrap();
        assert_eq!(p.omega().unwrap().shape(), &[1, 3]);
        assert!(p.omega().unwrap().data().iter().all(|w| *w > 0.0 && *w <= 1.0));
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let m = tiny(Variant::VPair);
        assert!(matches!(m.encode_x(&Tensor::zeros(&[1, 5])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn map_mode_must_fit_variant() {
        let mut c = ModelConfig::new(Variant::VsPair, 4, 4, 2, 2);
        c.map_mode = MapMode::LinearCode;
        assert!(PairedModel::new(c).is_err());
        let mut c = ModelConfig::new(Variant::Pair, 4, 4, 2, 2);
        c.map_mode = MapMode::ParamMlp;
        assert!(PairedModel::new(c).is_err());
    }

    #[test]
    fn zero_weight_encoder_emits_bias() {
        let mut m = tiny(Variant::VPair);
        let (w, b) = *m.enc_x().unwrap().layers().last().unwrap();
        let shape = m.params().get(w).shape().to_vec();
        m.params_mut().set(w, Tensor::zeros(&shape)).unwrap();
        let bias = m.params().get(b).clone();
        for seed in 0..3 {
            let x = Rng::new(seed).uniform_tensor(&[1, 6]);
            let p = m.encode_x(&x).unwrap();
            assert_eq!(p.mu().data(), &bias.data()[..3]);
        }
    }

    #[test]
    fn objective_terms_sum_to_total() {
        let mut rng = Rng::new(5);
        let x = rng.uniform_tensor(&[4, 6]);
        let y = rng.uniform_tensor(&[4, 5]);
        for v in Variant::ALL {
            let m = tiny(v);
            let br = m.loss(&x, &y, &LossWeights::default(), &mut Rng::new(1)).unwrap();
            let sum: f64 = br.terms.iter().map(|(_, t)| t).sum();
            assert!((sum - br.total).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn wrong_variant_errors() {
        let x = Tensor::zeros(&[1, 6]);
        let y = Tensor::zeros(&[1, 5]);
        let w = LossWeights::default();
        assert!(matches!(
            vspair_total_loss(&tiny(Variant::Pair), &x, &y, &w, &mut Rng::new(0)),
            Err(Error::WrongVariant { .. })
        ));
        assert!(matches!(pair_losses(&tiny(Variant::VsPair), &x, &y), Err(Error::WrongVariant { .. })));
    }

    #[test]
    fn negative_weight_rejected() {
        let w = LossWeights {
            gamma_x: -1.0,
            ..LossWeights::default()
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn invert_shapes_and_masked_zeros() {
        let m = tiny(Variant::VsPair);
        let y = Rng::new(2).uniform_tensor(&[5]);
        let inv = m.invert(&y, 50, &mut Rng::new(7)).unwrap();
        assert_eq!(inv.x_samples.shape(), &[50, 6]);
        assert_eq!(inv.z_samples.shape(), &[50, 3]);
        let masks = inv.masks.unwrap();
        for (z, mk) in inv.z_samples.data().iter().zip(masks.data()) {
            if *mk == 0.0 {
                assert_eq!(z.to_bits(), 0);
            }
        }
    }

    #[test]
    fn invert_is_deterministic_given_seed() {
        let m = tiny(Variant::VPair);
        let y = Rng::new(2).uniform_tensor(&[5]);
        let a = m.invert(&y, 10, &mut Rng::new(7)).unwrap();
        let b = m.invert(&y, 10, &mut Rng::new(7)).unwrap();
        assert_eq!(a, b);
    }
}
