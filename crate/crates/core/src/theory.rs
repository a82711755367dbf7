//! Linear-Gaussian checks of the latent conditional-moment results.
//!
//! Setting: `X ~ N(m₀, Σ₀)`, `Y = AX + ε` with `ε ~ N(0, Γ)`, and an encoder
//! with affine mean `Bx + c` and constant covariance `Σ_Z`. Then
//! `Z_x | Y=y` is Gaussian with
//!
//! ```text
//! E[Z_x | y]   = B·E[X | y] + c
//! Cov[Z_x | y] = Σ_Z + B·Cov(X | y)·Bᵀ
//! ```
//!
//! The closed forms are checked against exact-conditioning Monte Carlo, and
//! the samples are tested for Gaussianity through skewness and excess
//! kurtosis of coordinates and random projections.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use nalgebra;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianProblem {
    /// Forward map, `dim_y × dim_x`.
    pub a: DMatrix<f64>,
    /// Observation noise covariance Γ.
    pub noise_cov: DMatrix<f64>,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    /// Encoder mean slope, `dim_z × dim_x`.
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Encoder covariance Σ_Z. May be all zeros.
    pub latent_cov: DMatrix<f64>,
}

fn lower_factor(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m - m.transpose()).abs().max();
    if sym > 1e-10 * m.abs().max().max(1.0) {
        return Err(Error::NotPositiveDefinite(format!("{name} is not symmetric")));
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite(name.to_string()))
}

/// Cholesky factor, or zeros for the zero matrix.
fn psd_factor(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().all(|v| *v == 0.0) {
        Ok(m.clone())
    } else {
        lower_factor(name, m)
    }
}

fn spd_inverse(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    lower_factor(name, m)?;
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotPositiveDefinite(name.to_string()))
}

/// Symmetrize to remove round-off asymmetry.
fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl LinearGaussianProblem {
    pub fn dim_x(&self) -> usize {
        self.a.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim_z(&self) -> usize {
        self.b.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (dx, dy, dz) = (self.dim_x(), self.dim_y(), self.dim_z());
        let ok = self.noise_cov.shape() == (dy, dy)
            && self.prior_mean.len() == dx
            && self.prior_cov.shape() == (dx, dx)
            && self.b.ncols() == dx
            && self.c.len() == dz
            && self.latent_cov.shape() == (dz, dz);
        if !ok {
            return Err(Error::invalid("inconsistent linear-Gaussian problem dimensions"));
        }
        lower_factor("noise covariance", &self.noise_cov)?;
        lower_factor("prior covariance", &self.prior_cov)?;
        psd_factor("latent covariance", &self.latent_cov)?;
        Ok(())
    }

    /// `X ~ N(0, 1)`, `Y = X + ε`, `Γ = 1`, encoder `3x + 1` with `Σ_Z = 2`.
    pub fn canonical_1d() -> Self {
        let one = DMatrix::from_element(1, 1, 1.0);
        LinearGaussianProblem {
            a: one.clone(),
            noise_cov: one.clone(),
            prior_mean: DVector::zeros(1),
            prior_cov: one,
            b: DMatrix::from_element(1, 1, 3.0),
            c: DVector::from_element(1, 1.0),
            latent_cov: DMatrix::from_element(1, 1, 2.0),
        }
    }

    /// Random problem with covariances `QQᵀ/d + ½I`.
    pub fn random(dim_x: usize, dim_y: usize, dim_z: usize, rng: &mut Rng) -> Self {
        let mut gauss = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gaussian());
        let a = gauss(dim_y, dim_x);
        let b = gauss(dim_z, dim_x);
        let q0 = gauss(dim_x, dim_x);
        let q1 = gauss(dim_y, dim_y);
        let q2 = gauss(dim_z, dim_z);
        let m0 = gauss(dim_x, 1);
        let c = gauss(dim_z, 1);
        let spd = |q: DMatrix<f64>| {
            let d = q.nrows();
            sym(&q * q.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5)
        };
        LinearGaussianProblem {
            a,
            noise_cov: spd(q1),
            prior_mean: m0.column(0).into_owned(),
            prior_cov: spd(q0),
            b,
            c: c.column(0).into_owned(),
            latent_cov: spd(q2),
        }
    }
}

/// `Cov(X|y) = (Σ₀⁻¹ + AᵀΓ⁻¹A)⁻¹`, `E[X|y] = Cov·(Σ₀⁻¹m₀ + AᵀΓ⁻¹y)`.
pub fn posterior_x_given_y(p: &LinearGaussianProblem, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    p.validate()?;
    if y.len() != p.dim_y() {
        return Err(Error::invalid(format!("y has length {}, expected {}", y.len(), p.dim_y())));
    }
    let prior_prec = spd_inverse("prior covariance", &p.prior_cov)?;
    let noise_prec = spd_inverse("noise covariance", &p.noise_cov)?;
    let at_gi = p.a.transpose() * &noise_prec;
    let precision = sym(&prior_prec + &at_gi * &p.a);
    let cov = sym(spd_inverse("posterior precision", &precision)?);
    let mean = &cov * (&prior_prec * &p.prior_mean + at_gi * y);
    lower_factor("posterior covariance", &cov)?;
    Ok((mean, cov))
}

/// `(B·E[X|y] + c, Σ_Z + B·Cov(X|y)·Bᵀ)`.
pub fn theorem1_closed_form(p: &LinearGaussianProblem, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (mx, cx) = posterior_x_given_y(p, y)?;
    let mean = &p.b * mx + &p.c;
    let cov = sym(&p.latent_cov + &p.b * cx * p.b.transpose());
    Ok((mean, cov))
}

/// `N × dim_z` draws of `Z_x | Y=y`: `X` from the exact posterior, then
/// `Z ~ N(BX + c, Σ_Z)`.
pub fn sample_latent_given_y(
    p: &LinearGaussianProblem,
    y: &DVector<f64>,
    n: usize,
    rng: &mut Rng,
) -> Result<DMatrix<f64>> {
    let (mx, cx) = posterior_x_given_y(p, y)?;
    let lx = lower_factor("posterior covariance", &cx)?;
    let lz = psd_factor("latent covariance", &p.latent_cov)?;
    let (dx, dz) = (p.dim_x(), p.dim_z());
    let mut out = DMatrix::zeros(n, dz);
    for i in 0..n {
        let ex = DVector::from_fn(dx, |_, _| rng.gaussian());
        let x = &mx + &lx * ex;
        let ez = DVector::from_fn(dz, |_, _| rng.gaussian());
        let z = &p.b * x + &p.c + &lz * ez;
        out.set_row(i, &z.transpose());
    }
    Ok(out)
}

/// Sample mean and unbiased sample covariance of the rows.
pub fn sample_moments(samples: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.nrows();
    let mean = samples.row_mean().transpose();
    let centered = DMatrix::from_fn(n, samples.ncols(), |i, j| samples[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

pub fn theorem1_monte_carlo(
    p: &LinearGaussianProblem,
    y: &DVector<f64>,
    n: usize,
    rng: &mut Rng,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if n < 1000 {
        return Err(Error::invalid(format!("Monte Carlo needs N >= 1000, got {n}")));
    }
    Ok(sample_moments(&sample_latent_given_y(p, y, n, rng)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentCheck {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianityReport {
    pub n: usize,
    pub skew_threshold: f64,
    pub kurtosis_threshold: f64,
    pub coordinates: Vec<MomentCheck>,
    pub projections: Vec<MomentCheck>,
    pub pass: bool,
}

pub const N_PROJECTIONS: usize = 10;

fn moment_check(values: impl Iterator<Item = f64> + Clone, n: usize, skew_tol: f64, kurt_tol: f64) -> MomentCheck {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (f64::NAN, f64::NAN)
    };
    MomentCheck {
        skewness,
        excess_kurtosis,
        pass: skewness.abs() < skew_tol && excess_kurtosis.abs() < kurt_tol,
    }
}

/// Skewness and excess kurtosis of every column and of 10 random unit
/// projections (seeded by `seed`). Passes when all are within
/// `5·√(6/N)` and `5·√(24/N)`.
pub fn theorem2_gaussianity_check(samples: &DMatrix<f64>, seed: u64) -> Result<GaussianityReport> {
    let n = samples.nrows();
    if n < 10_000 {
        return Err(Error::invalid(format!("Gaussianity check needs N >= 10000, got {n}")));
    }
    let d = samples.ncols();
    let skew_tol = 5.0 * (6.0 / n as f64).sqrt();
    let kurt_tol = 5.0 * (24.0 / n as f64).sqrt();
    let coordinates: Vec<MomentCheck> = (0..d)
        .map(|j| moment_check(samples.column(j).iter().copied(), n, skew_tol, kurt_tol))
        .collect();
    let mut rng = Rng::new(seed);
    let projections: Vec<MomentCheck> = (0..N_PROJECTIONS)
        .map(|_| {
            let mut u = DVector::from_fn(d, |_, _| rng.gaussian());
            u /= u.norm();
            let proj = samples * &u;
            moment_check(proj.iter().copied(), n, skew_tol, kurt_tol)
        })
        .collect();
    let pass = coordinates.iter().chain(&projections).all(|c| c.pass);
    Ok(GaussianityReport {
        n,
        skew_threshold: skew_tol,
        kurtosis_threshold: kurt_tol,
        coordinates,
        projections,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct YCheck {
    pub y: DVector<f64>,
    pub closed_mean: DVector<f64>,
    pub closed_cov: DMatrix<f64>,
    pub mc_mean: DVector<f64>,
    pub mc_cov: DMatrix<f64>,
    /// Largest `|mc − closed| / √(diag(cov)/N)` over coordinates.
    pub max_mean_z: f64,
    /// `‖mc_cov − closed_cov‖_F / ‖closed_cov‖_F`.
    pub cov_rel_err: f64,
    pub mean_ok: bool,
    pub cov_ok: bool,
    pub gaussianity: GaussianityReport,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryReport {
    pub n: usize,
    pub checks: Vec<YCheck>,
    pub pass: bool,
}

pub const MEAN_Z_TOL: f64 = 6.0;
pub const COV_REL_TOL: f64 = 0.02;

/// Compare one set of Monte Carlo draws against the closed form.
pub fn check_y(p: &LinearGaussianProblem, y: &DVector<f64>, n: usize, rng: &mut Rng) -> Result<YCheck> {
    let (closed_mean, closed_cov) = theorem1_closed_form(p, y)?;
    let samples = sample_latent_given_y(p, y, n, rng)?;
    let (mc_mean, mc_cov) = sample_moments(&samples);
    let max_mean_z = (0..p.dim_z())
        .map(|j| {
            let se = (closed_cov[(j, j)] / n as f64).sqrt();
            let diff = (mc_mean[j] - closed_mean[j]).abs();
            if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let denom = closed_cov.norm();
    let cov_rel_err = if denom > 0.0 {
        (&mc_cov - &closed_cov).norm() / denom
    } else {
        mc_cov.norm()
    };
    let mean_ok = max_mean_z < MEAN_Z_TOL;
    let cov_ok = cov_rel_err < COV_REL_TOL;
    // Degenerate Z (no spread at all) has nothing to test for shape.
    let gaussianity = if denom > 0.0 {
        theorem2_gaussianity_check(&samples, rng.next_u64())?
    } else {
        GaussianityReport {
            n,
            skew_threshold: 0.0,
            kurtosis_threshold: 0.0,
            coordinates: Vec::new(),
            projections: Vec::new(),
            pass: true,
        }
    };
    let pass = mean_ok && cov_ok && gaussianity.pass;
    Ok(YCheck {
        y: y.clone(),
        closed_mean,
        closed_cov,
        mc_mean,
        mc_cov,
        max_mean_z,
        cov_rel_err,
        mean_ok,
        cov_ok,
        gaussianity,
        pass,
    })
}

/// Run [`check_y`] at every grid point; point `k` uses substream `(seed, k)`.
pub fn verify_theorems(
    p: &LinearGaussianProblem,
    ys: &[DVector<f64>],
    n: usize,
    seed: u64,
) -> Result<TheoryReport> {
    if ys.is_empty() {
        return Err(Error::invalid("empty y grid"));
    }
    p.validate()?;
    let checks: Vec<YCheck> = ys
        .par_iter()
        .enumerate()
        .map(|(k, y)| check_y(p, y, n, &mut Rng::substream(seed, k as u64)))
        .collect::<Result<_>>()?;
    let pass = checks.iter().all(|c| c.pass);
    Ok(TheoryReport { n, checks, pass })
}
