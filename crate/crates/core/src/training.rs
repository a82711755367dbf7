//! Adam, the seeded training loop and reconstruction metrics.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{LossWeights, ModelConfig, PairedModel, ParamStore, Term, Variant};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Bias-corrected Adam moments for every tensor of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Every gradient is checked before any parameter changes.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::invalid(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            let p = params.get(id);
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", params.name(id))));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (k, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Optimization and architecture settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub weights: LossWeights,
    pub alpha0: f64,
    pub beta0: f64,
    pub gate_temperature: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub latent_x: usize,
    pub latent_y: usize,
    pub hidden: Vec<usize>,
    pub map_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    /// vsPAIR settings of the MNIST experiment.
    fn default() -> Self {
        TrainConfig {
            variant: Variant::VsPair,
            weights: LossWeights {
                lambda_b: 0.05,
                ..LossWeights::default()
            },
            alpha0: 1.0,
            beta0: 127.0,
            gate_temperature: 50.0,
            lr: 1e-4,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            latent_x: 784,
            latent_y: 32,
            hidden: vec![256],
            map_hidden: vec![256],
        }
    }
}

impl TrainConfig {
    /// Defaults with the latent sizes used for `variant` on MNIST.
    pub fn for_variant(variant: Variant) -> Self {
        let mc = ModelConfig::mnist(variant);
        TrainConfig {
            variant,
            latent_x: mc.latent_x,
            latent_y: mc.latent_y,
            ..Self::default()
        }
    }

    /// Settings for the 16×16 toy glyphs: `ℓx = 128`, 30 epochs, lr 1e-3.
    pub fn toy(variant: Variant) -> Self {
        TrainConfig {
            variant,
            lr: 1e-3,
            epochs: 30,
            latent_x: 128,
            latent_y: 32,
            hidden: vec![128],
            map_hidden: vec![128],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) {
            return Err(Error::invalid("alpha0 and beta0 must be positive"));
        }
        if !(self.gate_temperature > 0.0) {
            return Err(Error::invalid("gate_temperature must be positive"));
        }
        Ok(())
    }

    pub fn model_config(&self, dim_x: usize, dim_y: usize) -> ModelConfig {
        let mut c = ModelConfig::new(self.variant, dim_x, dim_y, self.latent_x, self.latent_y);
        c.hidden = self.hidden.clone();
        c.map_hidden = self.map_hidden.clone();
        c.gate.temperature = self.gate_temperature;
        c.alpha0 = self.alpha0;
        c.beta0 = self.beta0;
        c.seed = self.seed;
        c
    }

    /// Fresh model sized for `data`.
    pub fn build_model(&self, data: &Dataset) -> Result<PairedModel> {
        self.validate()?;
        PairedModel::new(self.model_config(data.dim_x(), data.dim_y()))
    }
}

/// Mean loss terms over one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub terms: Vec<(Term, f64)>,
    pub mean_nnz: f64,
    pub rho: Option<f64>,
}

impl EpochStats {
    pub fn term(&self, t: Term) -> Option<f64> {
        self.terms.iter().find(|(k, _)| *k == t).map(|(_, v)| *v)
    }
}

pub type History = Vec<EpochStats>;

/// Train `model` on `data` in place. The model's prior and gate temperature
/// are set from `cfg` first.
pub fn train(model: &mut PairedModel, data: &Dataset, cfg: &TrainConfig) -> Result<History> {
    train_with(model, data, cfg, |_| {})
}

/// [`train`] with a callback after each epoch.
pub fn train_with(
    model: &mut PairedModel,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if model.variant() != cfg.variant {
        return Err(Error::WrongVariant {
            expected: cfg.variant.to_string(),
            got: model.variant().to_string(),
        });
    }
    model.set_prior(cfg.alpha0, cfg.beta0)?;
    let mut gate = *model.gate();
    gate.temperature = cfg.gate_temperature;
    model.set_gate(gate)?;

    let mut rng = Rng::substream(cfg.seed, 1);
    let mut adam = AdamState::new(model.params(), cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut terms: Vec<(Term, f64)> = Vec::new();
        let mut nnz = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.x.select_rows(batch);
            let y = data.y.select_rows(batch);
            let (br, grads) = model.loss_and_grads(&x, &y, &cfg.weights, &mut rng)?;
            adam.step(model.params_mut(), &grads)?;
            let share = batch.len() as f64 / data.len() as f64;
            total += share * br.total;
            nnz += share * br.mean_nnz;
            if terms.is_empty() {
                terms = br.terms.iter().map(|(t, _)| (*t, 0.0)).collect();
            }
            for ((_, acc), (_, v)) in terms.iter_mut().zip(&br.terms) {
                *acc += share * v;
            }
        }
        let stats = EpochStats {
            epoch,
            total,
            terms,
            mean_nnz: nnz,
            rho: model.sparsity_prior().map(|p| p.rho()),
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Reconstruction metrics over a test set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Per-pixel MSE of a single posterior sample.
    pub mse: f64,
    /// Per-pixel MSE of the mean of `n` samples.
    pub mse_n: f64,
    /// Per-pixel MSE averaged over all `n` samples.
    pub mean_sample_mse: f64,
    pub avg_nnz: f64,
    /// `1 − avg_nnz / ℓx`, in [0, 1].
    pub sparsity: f64,
    /// From `mse`, with a data range of 1.
    pub psnr: f64,
    pub n_samples: usize,
}

/// Per-item metrics from [`evaluate_items`].
#[derive(Clone, Debug, PartialEq)]
pub struct ItemMetrics {
    pub mse: f64,
    pub mse_n: f64,
    pub mean_sample_mse: f64,
    pub nnz: f64,
    /// Pixel-wise mean of the samples.
    pub mean_x: Tensor,
}

pub const PSNR_CAP: f64 = 99.0;

/// `10·log10(1/mse)` capped at 99 dB.
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
}

/// Invert every test item with its own substream `(seed, i)`.
pub fn evaluate_items(model: &PairedModel, data: &Dataset, n_samples: usize, seed: u64) -> Result<Vec<ItemMetrics>> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::substream(seed, i as u64);
            let inv = model.invert(&Tensor::vector(data.y.row(i).to_vec()), n_samples, &mut rng)?;
            let target = data.x.row(i);
            let mean_x = inv.mean_x();
            let per_sample: Vec<f64> = (0..n_samples).map(|s| mse(inv.x_samples.row(s), target)).collect();
            Ok(ItemMetrics {
                mse: per_sample[0],
                mse_n: mse(mean_x.data(), target),
                mean_sample_mse: per_sample.iter().sum::<f64>() / n_samples as f64,
                nnz: inv.mean_nnz(),
                mean_x,
            })
        })
        .collect()
}

/// Aggregate metrics. Pure given `seed`.
pub fn evaluate(model: &PairedModel, data: &Dataset, n_samples: usize, seed: u64) -> Result<Metrics> {
    let items = evaluate_items(model, data, n_samples, seed)?;
    let n = items.len() as f64;
    let mean = |f: fn(&ItemMetrics) -> f64| items.iter().map(f).sum::<f64>() / n;
    let mse = mean(|m| m.mse);
    let avg_nnz = mean(|m| m.nnz);
    Ok(Metrics {
        mse,
        mse_n: mean(|m| m.mse_n),
        mean_sample_mse: mean(|m| m.mean_sample_mse),
        avg_nnz,
        sparsity: 1.0 - avg_nnz / model.config().latent_x as f64,
        psnr: psnr(mse),
        n_samples,
    })
}
