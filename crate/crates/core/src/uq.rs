//! Uncertainty metrics over posterior samples.
//!
//! Everything here reads an immutable model. Per-image work in [`uq_suite`]
//! runs in parallel with one Rng substream per image, and aggregation order
//! is fixed.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{column_mean, LatentParams, PairedModel};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Added to ratio denominators.
pub const RATIO_EPS: f64 = 1e-12;

/// Pixel-wise mean and unbiased variance over the rows of `samples`.
pub fn sample_mean_variance(samples: &Tensor) -> Result<(Tensor, Tensor)> {
    let n = samples.rows();
    if n < 2 {
        return Err(Error::invalid(format!("variance needs at least 2 samples, got {n}")));
    }
    // Deviations from the first row, so identical rows give exactly zero.
    let shift = samples.row(0);
    let d = samples.cols();
    let mut offset = vec![0.0; d];
    for i in 0..n {
        for ((o, x), s) in offset.iter_mut().zip(samples.row(i)).zip(shift) {
            *o += x - s;
        }
    }
    for o in &mut offset {
        *o /= n as f64;
    }
    let mut var = vec![0.0; d];
    for i in 0..n {
        for (((v, x), s), o) in var.iter_mut().zip(samples.row(i)).zip(shift).zip(&offset) {
            let dev = (x - s) - o;
            *v += dev * dev;
        }
    }
    let mean = Tensor::vector(shift.iter().zip(&offset).map(|(s, o)| s + o).collect());
    let var = Tensor::vector(var.into_iter().map(|s| s / (n - 1) as f64).collect());
    Ok((mean, var))
}

/// Mean and unbiased pixel-wise variance of `n` decoded posterior samples.
pub fn variance_map(model: &PairedModel, y: &Tensor, n: usize, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
    if n < 2 {
        return Err(Error::invalid(format!("variance needs at least 2 samples, got {n}")));
    }
    let inv = model.invert(y, n, rng)?;
    sample_mean_variance(&inv.x_samples)
}

/// Pearson correlation coefficient.
pub fn pearson_r(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!("pearson_r: lengths {} and {}", u.len(), v.len())));
    }
    if u.len() < 2 {
        return Err(Error::invalid("pearson_r needs at least two points"));
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu == 0.0 || svv == 0.0 {
        return Err(Error::Degenerate("pearson_r of a constant sequence".into()));
    }
    Ok((suv / (suu.sqrt() * svv.sqrt())).clamp(-1.0, 1.0))
}

/// Means of `values` over the corrupted (mask ≠ 0) and clean pixels.
fn region_means(values: &[f64], mask: &[f64]) -> Result<(f64, f64)> {
    if values.len() != mask.len() {
        return Err(Error::ShapeMismatch {
            op: "region_means",
            left: vec![values.len()],
            right: vec![mask.len()],
        });
    }
    let (mut sc, mut nc, mut su, mut nu) = (0.0, 0usize, 0.0, 0usize);
    for (v, m) in values.iter().zip(mask) {
        if *m != 0.0 {
            sc += v;
            nc += 1;
        } else {
            su += v;
            nu += 1;
        }
    }
    if nc == 0 || nu == 0 {
        return Err(Error::Degenerate(format!(
            "mask needs both regions ({nc} corrupted, {nu} clean)"
        )));
    }
    Ok((sc / nc as f64, su / nu as f64))
}

/// `mean(var | corrupted) / (mean(var | clean) + 1e-12)`.
pub fn region_variance_ratio(variance: &[f64], mask: &[f64]) -> Result<f64> {
    let (c, u) = region_means(variance, mask)?;
    Ok(c / (u + RATIO_EPS))
}

/// How a perturbation scale modifies the chosen latent mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PerturbMode {
    /// `μ̂ ← scale·μ̂`.
    #[default]
    Relative,
    /// `μ̂ ← μ̂ + scale·σ̂`.
    Std,
}

impl PerturbMode {
    /// The scale that leaves `μ̂` unchanged.
    pub fn identity_scale(self) -> f64 {
        match self {
            PerturbMode::Relative => 1.0,
            PerturbMode::Std => 0.0,
        }
    }
}

impl std::str::FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "relative" => Ok(PerturbMode::Relative),
            "std" => Ok(PerturbMode::Std),
            other => Err(Error::invalid(format!("unknown perturbation mode {other:?}"))),
        }
    }
}

/// Nine points from −400% to +400%.
pub fn default_scales() -> Vec<f64> {
    (-4..=4).map(f64::from).collect()
}

fn perturbed(params: &LatentParams, dim: usize, scale: f64, mode: PerturbMode) -> Result<LatentParams> {
    let width = params.mu().cols();
    if dim >= width {
        return Err(Error::invalid(format!("dimension {dim} out of range for {width} latents")));
    }
    let mut p = params.clone();
    let sigma = params.log_var().map(|lv| (0.5 * lv.data()[dim]).exp());
    let new_mu = |mu: f64| -> Result<f64> {
        match mode {
            PerturbMode::Relative => Ok(scale * mu),
            PerturbMode::Std => sigma
                .map(|s| mu + scale * s)
                .ok_or_else(|| Error::invalid("std mode needs a posterior variance")),
        }
    };
    match &mut p {
        LatentParams::Code(mu) => mu.data_mut()[dim] = new_mu(mu.data()[dim])?,
        LatentParams::Gaussian(g) => g.mu.data_mut()[dim] = new_mu(g.mu.data()[dim])?,
        LatentParams::SpikeSlab(s) => {
            s.mu.data_mut()[dim] = new_mu(s.mu.data()[dim])?;
            s.omega.data_mut()[dim] = 1.0;
        }
    }
    Ok(p)
}

/// Mean reconstructions of `y` with latent `dim` perturbed by each scale.
///
/// The gate of `dim` is held active and every scale reuses the same noise,
/// so differences between scales come from the perturbation alone.
pub fn perturbation_sweep(
    model: &PairedModel,
    y: &Tensor,
    dim: usize,
    scales: &[f64],
    mode: PerturbMode,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Tensor>> {
    let params = model.predict_params(y)?;
    sweep_params(model, &params, dim, scales, mode, n, rng)
}

fn sweep_params(
    model: &PairedModel,
    params: &LatentParams,
    dim: usize,
    scales: &[f64],
    mode: PerturbMode,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Tensor>> {
    if scales.is_empty() {
        return Err(Error::invalid("no perturbation scales"));
    }
    let base = rng.split();
    let mut latents = Vec::with_capacity(scales.len() * n);
    for &scale in scales {
        let p = perturbed(params, dim, scale, mode)?;
        let (z, _) = model.sample_latents(&p, n, &mut base.clone())?;
        latents.extend_from_slice(z.data());
    }
    let z = Tensor::matrix(scales.len() * n, params.mu().cols(), latents)?;
    let x = model.decode_x(&z)?;
    let d = x.cols();
    Ok((0..scales.len())
        .map(|k| {
            let rows: Vec<usize> = (k * n..(k + 1) * n).collect();
            column_mean(&x.select_rows(&rows).reshape(&[n, d]).expect("n rows"))
        })
        .collect())
}

/// `(ΔMSE_corrupted / (ΔMSE_clean + 1e-12), ΔMSE_corrupted)` where ΔMSE is
/// the squared change against the unperturbed mean reconstruction,
/// averaged over scales.
fn localization_from_sweep(baseline: &Tensor, recons: &[Tensor], mask: &[f64]) -> Result<(f64, f64)> {
    let d = baseline.numel();
    let mut change = vec![0.0; d];
    for r in recons {
        for ((c, a), b) in change.iter_mut().zip(r.data()).zip(baseline.data()) {
            *c += (a - b) * (a - b);
        }
    }
    for c in &mut change {
        *c /= recons.len() as f64;
    }
    let (corr, clean) = region_means(&change, mask)?;
    Ok((corr / (clean + RATIO_EPS), corr))
}

/// Localization ratio of latent `dim` for observation `y`.
#[allow(clippy::too_many_arguments)]
pub fn localization_ratio(
    model: &PairedModel,
    y: &Tensor,
    mask: &[f64],
    dim: usize,
    scales: &[f64],
    mode: PerturbMode,
    n: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let params = model.predict_params(y)?;
    let (ratio, _) = localization_for_params(model, &params, mask, dim, scales, mode, n, rng)?;
    Ok(ratio)
}

#[allow(clippy::too_many_arguments)]
fn localization_for_params(
    model: &PairedModel,
    params: &LatentParams,
    mask: &[f64],
    dim: usize,
    scales: &[f64],
    mode: PerturbMode,
    n: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let mut all = Vec::with_capacity(scales.len() + 1);
    all.push(mode.identity_scale());
    all.extend_from_slice(scales);
    let recons = sweep_params(model, params, dim, &all, mode, n, rng)?;
    localization_from_sweep(&recons[0], &recons[1..], mask)
}

/// Columns of `masks` that are 1 in every row.
pub fn always_active(masks: &Tensor) -> Vec<usize> {
    (0..masks.cols())
        .filter(|&j| (0..masks.rows()).all(|i| masks.row(i)[j] != 0.0))
        .collect()
}

/// Latent dimensions whose gate is on in all `n` draws for `y`.
pub fn consistently_active_dims(model: &PairedModel, y: &Tensor, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if !model.variant().is_sparse() {
        return Err(Error::WrongVariant {
            expected: "svae|vspair".into(),
            got: model.variant().to_string(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let params = model.predict_params(y)?;
    let (_, masks) = model.sample_latents(&params, n, rng)?;
    Ok(always_active(&masks.expect("sparse variant")))
}

/// Which latent dimensions the localization search visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LocalizationSearch {
    None,
    /// Dimensions active in every posterior draw.
    #[default]
    ActiveDims,
    AllDims,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UqOptions {
    pub n_samples: usize,
    pub scales: Vec<f64>,
    pub mode: PerturbMode,
    pub search: LocalizationSearch,
    pub histogram_bins: usize,
}

impl Default for UqOptions {
    fn default() -> Self {
        UqOptions {
            n_samples: 30,
            scales: default_scales(),
            mode: PerturbMode::Relative,
            search: LocalizationSearch::ActiveDims,
            histogram_bins: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageUq {
    /// Per-pixel MSE of the sample-mean reconstruction.
    pub mse: f64,
    pub mean_variance: f64,
    pub region_ratio: f64,
    pub max_localization_ratio: Option<f64>,
    pub best_dim: Option<usize>,
    pub corrupted_mse_change: Option<f64>,
    pub n_always_active: Option<usize>,
    pub mean_x: Tensor,
    pub variance: Tensor,
}

/// Equal-width histogram over `[lo, hi]`; values outside land in the end bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for v in values {
            let k = if width > 0.0 && v.is_finite() {
                (((v - lo) / width) as isize).clamp(0, bins as isize - 1) as usize
            } else if *v == f64::INFINITY {
                bins - 1
            } else {
                0
            };
            counts[k] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UqReport {
    pub images: Vec<ImageUq>,
    /// Correlation of per-image MSE with per-image mean variance.
    pub pearson_r: f64,
    pub median_ratio: f64,
    pub mean_ratio: f64,
    /// Fraction of images whose region ratio exceeds 1.
    pub fraction_ratio_above_one: f64,
    pub ratio_histogram: Histogram,
    pub median_localization: Option<f64>,
    pub mean_localization: Option<f64>,
    pub localization_histogram: Option<Histogram>,
}

fn image_uq(model: &PairedModel, data: &Dataset, i: usize, opts: &UqOptions, rng: &mut Rng) -> Result<ImageUq> {
    let mask = data
        .mask(i)
        .ok_or_else(|| Error::invalid("uq_suite needs corruption masks"))?;
    if mask.len() != data.dim_x() {
        return Err(Error::invalid("corruption masks must match the QoI size"));
    }
    let y = Tensor::vector(data.y.row(i).to_vec());
    let inv = model.invert(&y, opts.n_samples, rng)?;
    let (mean_x, variance) = sample_mean_variance(&inv.x_samples)?;
    let target = data.x.row(i);
    let mse = mean_x
        .data()
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / target.len() as f64;
    let region_ratio = region_variance_ratio(variance.data(), mask)?;
    let active = inv.masks.as_ref().map(always_active);
    let candidates: Vec<usize> = match opts.search {
        LocalizationSearch::None => Vec::new(),
        LocalizationSearch::ActiveDims => active.clone().unwrap_or_default(),
        LocalizationSearch::AllDims => (0..model.config().latent_x).collect(),
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for &dim in &candidates {
        let (ratio, change) =
            localization_for_params(model, &inv.params, mask, dim, &opts.scales, opts.mode, opts.n_samples, rng)?;
        if best.is_none_or(|(r, _, _)| ratio > r) {
            best = Some((ratio, dim, change));
        }
    }
    Ok(ImageUq {
        mse,
        mean_variance: variance.mean(),
        region_ratio,
        max_localization_ratio: best.map(|b| b.0),
        best_dim: best.map(|b| b.1),
        corrupted_mse_change: best.map(|b| b.2),
        n_always_active: active.map(|a| a.len()),
        mean_x,
        variance,
    })
}

/// Run the metric suite over every item of `data`, which must carry masks.
/// Image `i` uses substream `(seed, i)`.
pub fn uq_suite(model: &PairedModel, data: &Dataset, opts: &UqOptions, seed: u64) -> Result<UqReport> {
    if data.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if opts.n_samples < 2 {
        return Err(Error::invalid("uq_suite needs at least 2 samples per image"));
    }
    let images: Vec<ImageUq> = (0..data.len())
        .into_par_iter()
        .map(|i| image_uq(model, data, i, opts, &mut Rng::substream(seed, i as u64)))
        .collect::<Result<_>>()?;
    let mses: Vec<f64> = images.iter().map(|m| m.mse).collect();
    let vars: Vec<f64> = images.iter().map(|m| m.mean_variance).collect();
    let pearson = if images.len() == 1 {
        if vars[0] == 0.0 {
            return Err(Error::Degenerate("all posterior variances are zero".into()));
        }
        f64::NAN
    } else {
        pearson_r(&mses, &vars)?
    };
    let ratios: Vec<f64> = images.iter().map(|m| m.region_ratio).collect();
    let locs: Vec<f64> = images.iter().filter_map(|m| m.max_localization_ratio).collect();
    let n = images.len() as f64;
    Ok(UqReport {
        pearson_r: pearson,
        median_ratio: median(&ratios),
        mean_ratio: ratios.iter().sum::<f64>() / n,
        fraction_ratio_above_one: ratios.iter().filter(|r| **r > 1.0).count() as f64 / n,
        ratio_histogram: Histogram::new(&ratios, opts.histogram_bins),
        median_localization: (!locs.is_empty()).then(|| median(&locs)),
        mean_localization: (!locs.is_empty()).then(|| locs.iter().sum::<f64>() / locs.len() as f64),
        localization_histogram: (!locs.is_empty()).then(|| Histogram::new(&locs, opts.histogram_bins)),
        images,
    })
}
