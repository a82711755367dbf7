//! Paired datasets, patch corruption and synthetic generators.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Paired samples, one row per item. `masks` marks corrupted pixels of `y`
/// with 1.0.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Tensor,
    pub masks: Option<Tensor>,
    /// `(height, width)` when rows are images.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(x: Tensor, y: Tensor) -> Result<Self> {
        if x.rank() != 2 || y.rank() != 2 {
            return Err(Error::invalid("dataset tensors must be matrices"));
        }
        if x.rows() != y.rows() {
            return Err(Error::invalid(format!(
                "x has {} rows but y has {}",
                x.rows(),
                y.rows()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        Ok(Dataset {
            x,
            y,
            masks: None,
            image_shape: None,
        })
    }

    pub fn with_masks(mut self, masks: Tensor) -> Result<Self> {
        if masks.shape() != self.y.shape() {
            return Err(Error::ShapeMismatch {
                op: "Dataset::with_masks",
                left: masks.shape().to_vec(),
                right: self.y.shape().to_vec(),
            });
        }
        self.masks = Some(masks);
        Ok(self)
    }

    pub fn with_image_shape(mut self, height: usize, width: usize) -> Result<Self> {
        if height * width != self.x.cols() {
            return Err(Error::invalid(format!(
                "image shape {height}x{width} does not match {} columns",
                self.x.cols()
            )));
        }
        self.image_shape = Some((height, width));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim_x(&self) -> usize {
        self.x.cols()
    }

    pub fn dim_y(&self) -> usize {
        self.y.cols()
    }

    pub fn mask(&self, i: usize) -> Option<&[f64]> {
        self.masks.as_ref().map(|m| m.row(i))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("index {bad} out of range for {} items", self.len())));
        }
        let mut out = Dataset::new(self.x.select_rows(indices), self.y.select_rows(indices))?;
        out.masks = self.masks.as_ref().map(|m| m.select_rows(indices));
        out.image_shape = self.image_shape;
        Ok(out)
    }

    /// First `n` items and the rest.
    pub fn split(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::invalid(format!("cannot split {} items at {n}", self.len())));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.subset(&head)?, self.subset(&tail)?))
    }
}

/// Square patches stamped at uniformly drawn positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Corruption {
    pub patches: usize,
    pub size: usize,
}

impl Default for Corruption {
    fn default() -> Self {
        Corruption { patches: 10, size: 5 }
    }
}

impl Corruption {
    /// Top-left corners, rows then columns, drawn from `[0, h−size]×[0, w−size]`.
    pub fn corners(&self, height: usize, width: usize, rng: &mut Rng) -> Result<Vec<(usize, usize)>> {
        if height < self.size || width < self.size {
            return Err(Error::invalid(format!(
                "image {height}x{width} smaller than {0}x{0} patch",
                self.size
            )));
        }
        Ok((0..self.patches)
            .map(|_| {
                let r = rng.below(height - self.size + 1);
                let c = rng.below(width - self.size + 1);
                (r, c)
            })
            .collect())
    }

    /// Fill the patches with the image minimum. Returns the corrupted image
    /// and the 0/1 mask.
    pub fn apply(&self, image: &Tensor, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
        if image.rank() != 2 {
            return Err(Error::invalid(format!("corrupt needs an h×w image, got {:?}", image.shape())));
        }
        let (h, w) = (image.shape()[0], image.shape()[1]);
        let corners = self.corners(h, w, rng)?;
        let fill = image.min();
        let mut out = image.clone();
        let mut mask = Tensor::zeros(&[h, w]);
        for (r0, c0) in corners {
            for r in r0..r0 + self.size {
                for c in c0..c0 + self.size {
                    out.data_mut()[r * w + c] = fill;
                    mask.data_mut()[r * w + c] = 1.0;
                }
            }
        }
        Ok((out, mask))
    }
}

/// Ten 5×5 patches filled with the image minimum.
pub fn corrupt(image: &Tensor, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
    Corruption::default().apply(image, rng)
}

/// Jointly Gaussian `X ~ N(m₀, Σ₀)`, `Y = AX + ε`, `ε ~ N(0, Γ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianSpec {
    pub a: Tensor,
    /// May be all zeros for noiseless observations.
    pub noise_cov: Tensor,
    pub prior_mean: Tensor,
    pub prior_cov: Tensor,
}

pub(crate) fn to_dmatrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

/// Lower Cholesky factor, or `None` for the zero matrix.
fn factor(name: &str, cov: &Tensor) -> Result<Option<DMatrix<f64>>> {
    if cov.data().iter().all(|v| *v == 0.0) {
        return Ok(None);
    }
    let m = to_dmatrix(cov);
    m.cholesky()
        .map(|c| Some(c.l()))
        .ok_or_else(|| Error::NotPositiveDefinite(name.to_string()))
}

impl LinearGaussianSpec {
    pub fn validate(&self) -> Result<()> {
        let (dy, dx) = (self.a.rows(), self.a.cols());
        let ok = self.a.rank() == 2
            && self.noise_cov.shape() == [dy, dy]
            && self.prior_cov.shape() == [dx, dx]
            && self.prior_mean.numel() == dx;
        if !ok {
            return Err(Error::invalid("inconsistent linear-Gaussian dimensions"));
        }
        Ok(())
    }

    pub fn sample(&self, size: usize, rng: &mut Rng) -> Result<Dataset> {
        if size == 0 {
            return Err(Error::invalid("dataset size must be at least 1"));
        }
        self.validate()?;
        let (dy, dx) = (self.a.rows(), self.a.cols());
        let l0 = factor("prior covariance", &self.prior_cov)?;
        let lg = factor("noise covariance", &self.noise_cov)?;
        let a = to_dmatrix(&self.a);
        let m0 = nalgebra::DVector::from_column_slice(self.prior_mean.data());
        let mut xs = Vec::with_capacity(size * dx);
        let mut ys = Vec::with_capacity(size * dy);
        for _ in 0..size {
            let e0 = nalgebra::DVector::from_fn(dx, |_, _| rng.gaussian());
            let x = match &l0 {
                Some(l) => &m0 + l * e0,
                None => m0.clone(),
            };
            let e1 = nalgebra::DVector::from_fn(dy, |_, _| rng.gaussian());
            let y = match &lg {
                Some(l) => &a * &x + l * e1,
                None => &a * &x,
            };
            xs.extend(x.iter());
            ys.extend(y.iter());
        }
        Dataset::new(Tensor::matrix(size, dx, xs)?, Tensor::matrix(size, dy, ys)?)
    }
}

pub const GLYPH_SIDE: usize = 16;

/// Segments of a seven-segment display on a unit box, `(x0, y0, x1, y1)`,
/// y pointing down.
const SEGMENTS: [(f64, f64, f64, f64); 7] = [
    (0.0, 0.0, 1.0, 0.0), // top
    (1.0, 0.0, 1.0, 0.5), // upper right
    (1.0, 0.5, 1.0, 1.0), // lower right
    (0.0, 1.0, 1.0, 1.0), // bottom
    (0.0, 0.5, 0.0, 1.0), // lower left
    (0.0, 0.0, 0.0, 0.5), // upper left
    (0.0, 0.5, 1.0, 0.5), // middle
];

const DIGIT_SEGMENTS: [u8; 10] = [
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110, 0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
];

fn segment_distance(px: f64, py: f64, (x0, y0, x1, y1): (f64, f64, f64, f64)) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len_sq = dx * dx + dy * dy;
    let t = (((px - x0) * dx + (py - y0) * dy) / len_sq).clamp(0.0, 1.0);
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// One 16×16 digit-like glyph with random placement, size, slant and
/// stroke width, values in [0, 1].
pub fn draw_glyph(digit: usize, rng: &mut Rng) -> Tensor {
    let side = GLYPH_SIDE as f64;
    let width = 6.0 + 2.0 * rng.uniform();
    let height = 9.0 + 2.5 * rng.uniform();
    let slant = 0.25 * (rng.uniform() - 0.5) * height;
    let x_off = (side - width) / 2.0 + 2.0 * (rng.uniform() - 0.5);
    let y_off = (side - height) / 2.0 + 2.0 * (rng.uniform() - 0.5);
    let stroke = 0.7 + 0.5 * rng.uniform();
    let ink = 0.75 + 0.25 * rng.uniform();
    let bits = DIGIT_SEGMENTS[digit % 10];
    let segs: Vec<_> = SEGMENTS
        .iter()
        .enumerate()
        .filter(|(i, _)| bits & (1 << i) != 0)
        .map(|(_, &(x0, y0, x1, y1))| {
            let place = |x: f64, y: f64| (x_off + x * width + slant * (0.5 - y), y_off + y * height);
            let (a, b) = place(x0, y0);
            let (c, d) = place(x1, y1);
            (a, b, c, d)
        })
        .collect();
    let mut img = Tensor::zeros(&[GLYPH_SIDE, GLYPH_SIDE]);
    for r in 0..GLYPH_SIDE {
        for c in 0..GLYPH_SIDE {
            let (px, py) = (c as f64 + 0.5, r as f64 + 0.5);
            let d = segs
                .iter()
                .map(|s| segment_distance(px, py, *s))
                .fold(f64::INFINITY, f64::min);
            img.data_mut()[r * GLYPH_SIDE + c] = ink * (1.0 - (d - stroke).max(0.0)).clamp(0.0, 1.0);
        }
    }
    img
}

/// Corruption used for 16×16 glyphs: three 5×5 patches, about the same
/// covered fraction as ten patches on a 28×28 image.
pub const GLYPH_CORRUPTION: Corruption = Corruption { patches: 3, size: 5 };

/// Glyphs as `x`, their corrupted copies as `y`, with masks.
pub fn toy_digits(size: usize, rng: &mut Rng) -> Result<Dataset> {
    toy_digits_with(size, GLYPH_CORRUPTION, rng)
}

pub fn toy_digits_with(size: usize, corruption: Corruption, rng: &mut Rng) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let d = GLYPH_SIDE * GLYPH_SIDE;
    let mut xs = Vec::with_capacity(size * d);
    let mut ys = Vec::with_capacity(size * d);
    let mut ms = Vec::with_capacity(size * d);
    for _ in 0..size {
        let digit = rng.below(10);
        let img = draw_glyph(digit, rng);
        let (obs, mask) = corruption.apply(&img, rng)?;
        xs.extend_from_slice(img.data());
        ys.extend_from_slice(obs.data());
        ms.extend_from_slice(mask.data());
    }
    Dataset::new(Tensor::matrix(size, d, xs)?, Tensor::matrix(size, d, ys)?)?
        .with_masks(Tensor::matrix(size, d, ms)?)?
        .with_image_shape(GLYPH_SIDE, GLYPH_SIDE)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    LinearGaussian,
    ToyDigits,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear_gaussian" | "linear-gaussian" => Ok(SynthKind::LinearGaussian),
            "toy_digits" | "toy-digits" => Ok(SynthKind::ToyDigits),
            other => Err(Error::invalid(format!("unknown dataset kind {other:?}"))),
        }
    }
}

impl LinearGaussianSpec {
    /// 4-dimensional QoI observed through a fixed 3×4 map with noise 0.1·I.
    pub fn standard() -> Self {
        let a = Tensor::matrix(
            3,
            4,
            vec![1.0, 0.5, 0.0, -0.3, 0.0, 1.0, 0.4, 0.2, 0.3, 0.0, -0.6, 1.0],
        )
        .expect("3x4");
        LinearGaussianSpec {
            a,
            noise_cov: Tensor::identity(3).map(|v| 0.1 * v),
            prior_mean: Tensor::vector(vec![0.0; 4]),
            prior_cov: Tensor::identity(4),
        }
    }
}

/// Generate a dataset of the given kind. Linear-Gaussian data uses
/// [`LinearGaussianSpec::standard`].
pub fn synth_dataset(kind: SynthKind, size: usize, rng: &mut Rng) -> Result<Dataset> {
    match kind {
        SynthKind::LinearGaussian => LinearGaussianSpec::standard().sample(size, rng),
        SynthKind::ToyDigits => toy_digits(size, rng),
    }
}
