//! File formats: IDX arrays, checkpoints, run configs, PGM images and CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::distributions::{GateConfig, GateMode};
use crate::error::{Error, Result};
use crate::models::{LossWeights, MapMode, ModelConfig, PairedModel, Variant};
use crate::tensor::Tensor;
use crate::theory::LinearGaussianProblem;
use crate::training::TrainConfig;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

/// Bounds-checked little helper for reading binary headers.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let left = self.bytes.len() - self.pos;
        if n > left {
            return Err(format_err(
                self.pos,
                format!("truncated {what}: expected {n} bytes, found {left}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16_le(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u32_be(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }
}

// ---------------------------------------------------------------- IDX

pub const IDX_U8: u8 = 0x08;
pub const IDX_F64: u8 = 0x0E;

/// Parse an IDX array. Unsigned-byte data is scaled to `[0, 1]`; 64-bit
/// float data is read as is.
pub fn parse_idx(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.take(4, "IDX magic")?;
    if magic[0] != 0 || magic[1] != 0 {
        return Err(format_err(0, format!("bad IDX magic {magic:02x?}")));
    }
    let dtype = magic[2];
    let rank = magic[3] as usize;
    let width = match dtype {
        IDX_U8 => 1,
        IDX_F64 => 8,
        other => return Err(format_err(2, format!("unsupported IDX data type 0x{other:02x}"))),
    };
    if rank == 0 {
        return Err(format_err(3, "IDX rank must be at least 1"));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(cur.u32_be("IDX dimensions")? as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| format_err(4, format!("IDX dimensions {dims:?} overflow")))?;
    let header = cur.pos;
    let payload = cur.rest();
    if payload.len() != count {
        return Err(format_err(
            header,
            format!("IDX payload has {} bytes, expected {count}", payload.len()),
        ));
    }
    let data: Vec<f64> = match dtype {
        IDX_U8 => payload.iter().map(|b| *b as f64 / 255.0).collect(),
        _ => payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Tensor::new(dims, data)
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<Tensor> {
    parse_idx(&read_bytes(path.as_ref())?)
}

fn idx_header(dtype: u8, shape: &[usize]) -> Result<Vec<u8>> {
    if shape.is_empty() || shape.len() > 255 {
        return Err(Error::invalid(format!("IDX cannot hold rank {}", shape.len())));
    }
    let mut out = vec![0, 0, dtype, shape.len() as u8];
    for d in shape {
        let d = u32::try_from(*d).map_err(|_| Error::invalid(format!("IDX dimension {d} too large")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    Ok(out)
}

/// Big-endian f64 IDX; lossless.
pub fn encode_idx_f64(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = idx_header(IDX_F64, t.shape())?;
    for v in t.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

/// Unsigned-byte IDX of values clamped to `[0, 1]`.
pub fn encode_idx_u8(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = idx_header(IDX_U8, t.shape())?;
    out.extend(t.data().iter().map(|v| quantize(*v)));
    Ok(out)
}

pub fn write_idx(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_bytes(path.as_ref(), &encode_idx_f64(t)?)
}

/// Rank-3 `n×h×w` arrays become `n × hw` rows with an image shape.
fn as_rows(t: Tensor) -> Result<(Tensor, Option<(usize, usize)>)> {
    match *t.shape() {
        [n, d] => Ok((t.reshape(&[n, d])?, None)),
        [n, h, w] => Ok((t.reshape(&[n, h * w])?, Some((h, w)))),
        [n] => Ok((t.reshape(&[n, 1])?, None)),
        _ => Err(Error::invalid(format!("dataset arrays must have rank 1-3, got {:?}", t.shape()))),
    }
}

pub const DATA_X: &str = "x.idx";
pub const DATA_Y: &str = "y.idx";
pub const DATA_MASK: &str = "mask.idx";

/// Store `x.idx`, `y.idx` and, if present, `mask.idx` in `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shaped = |t: &Tensor| -> Result<Tensor> {
        match data.image_shape {
            Some((h, w)) if t.cols() == h * w => t.reshape(&[t.rows(), h, w]),
            _ => Ok(t.clone()),
        }
    };
    write_idx(dir.join(DATA_X), &shaped(&data.x)?)?;
    write_idx(dir.join(DATA_Y), &shaped(&data.y)?)?;
    if let Some(m) = &data.masks {
        write_idx(dir.join(DATA_MASK), &shaped(m)?)?;
    }
    Ok(())
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let (x, shape) = as_rows(read_idx(dir.join(DATA_X))?)?;
    let (y, _) = as_rows(read_idx(dir.join(DATA_Y))?)?;
    let mut data = Dataset::new(x, y)?;
    let mask_path = dir.join(DATA_MASK);
    if mask_path.exists() {
        data = data.with_masks(as_rows(read_idx(&mask_path)?)?.0)?;
    }
    if let Some((h, w)) = shape {
        data = data.with_image_shape(h, w)?;
    }
    Ok(data)
}

// ---------------------------------------------------------------- checkpoint

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VSPR";
pub const CHECKPOINT_VERSION: u32 = 1;

fn join_widths(w: &[usize]) -> String {
    w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_widths(s: &str) -> std::result::Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad width {p:?}: {e}")))
        .collect()
}

fn gate_mode_name(m: GateMode) -> &'static str {
    match m {
        GateMode::StraightThrough => "straight_through",
        GateMode::Relaxed => "relaxed",
    }
}

fn parse_gate_mode(s: &str) -> std::result::Result<GateMode, String> {
    match s {
        "straight_through" => Ok(GateMode::StraightThrough),
        "relaxed" => Ok(GateMode::Relaxed),
        other => Err(format!("unknown gate mode {other:?}")),
    }
}

fn model_metadata(c: &ModelConfig) -> String {
    let mut s = String::new();
    let lines: [(&str, String); 14] = [
        ("variant", c.variant.name().to_string()),
        ("dim_x", c.dim_x.to_string()),
        ("dim_y", c.dim_y.to_string()),
        ("latent_x", c.latent_x.to_string()),
        ("latent_y", c.latent_y.to_string()),
        ("hidden", join_widths(&c.hidden)),
        ("map_hidden", join_widths(&c.map_hidden)),
        ("map_mode", c.map_mode.name().to_string()),
        ("gate_temperature", c.gate.temperature.to_string()),
        ("gate_threshold", c.gate.threshold.to_string()),
        ("gate_mode", gate_mode_name(c.gate.mode).to_string()),
        ("alpha0", c.alpha0.to_string()),
        ("beta0", c.beta0.to_string()),
        ("seed", c.seed.to_string()),
    ];
    for (k, v) in lines {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

/// Hex SHA-256 of the metadata lines that precede the hash.
pub fn config_hash(metadata: &str) -> String {
    let digest = Sha256::digest(metadata.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn encode_checkpoint(model: &PairedModel) -> Result<Vec<u8>> {
    let params = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        let n = u16::try_from(name.len()).map_err(|_| Error::invalid(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for d in t.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = model_metadata(model.config());
    let hash = config_hash(&meta);
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(format!("config_hash={hash}\n").as_bytes());
    Ok(out)
}

fn parse_metadata(text: &str, offset: usize) -> Result<ModelConfig> {
    let bad = |m: String| format_err(offset, m);
    let (body, hash_line) = match text.rfind("config_hash=") {
        Some(i) => (&text[..i], text[i..].trim_end()),
        None => return Err(bad("checkpoint metadata lacks config_hash".into())),
    };
    let expected = &hash_line["config_hash=".len()..];
    if config_hash(body) != expected {
        return Err(bad("checkpoint metadata does not match its config_hash".into()));
    }
    let mut kv = std::collections::HashMap::new();
    for line in body.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed metadata line {line:?}")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("metadata lacks {k}")));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<T, String> {
        v.parse().map_err(|_| format!("bad value for {k}: {v:?}"))
    }
    let build = || -> std::result::Result<ModelConfig, String> {
        let variant: Variant = get("variant").map_err(|e| e.to_string())?.parse().map_err(|e: Error| e.to_string())?;
        let field = |k: &str| get(k).map_err(|e| e.to_string());
        let mut c = ModelConfig::new(
            variant,
            num("dim_x", field("dim_x")?)?,
            num("dim_y", field("dim_y")?)?,
            num("latent_x", field("latent_x")?)?,
            num("latent_y", field("latent_y")?)?,
        );
        c.hidden = parse_widths(field("hidden")?)?;
        c.map_hidden = parse_widths(field("map_hidden")?)?;
        c.map_mode = field("map_mode")?.parse::<MapMode>().map_err(|e| e.to_string())?;
        c.gate = GateConfig {
            temperature: num("gate_temperature", field("gate_temperature")?)?,
            threshold: num("gate_threshold", field("gate_threshold")?)?,
            mode: parse_gate_mode(field("gate_mode")?)?,
        };
        c.alpha0 = num("alpha0", field("alpha0")?)?;
        c.beta0 = num("beta0", field("beta0")?)?;
        c.seed = num("seed", field("seed")?)?;
        Ok(c)
    };
    build().map_err(bad)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PairedModel> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.take(4, "checkpoint magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(format_err(0, format!("bad checkpoint magic {magic:02x?}")));
    }
    let version = cur.u32_le("checkpoint version")?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err(4, format!("unsupported checkpoint version {version}")));
    }
    let count = cur.u32_le("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let at = cur.pos;
        let len = cur.u16_le("tensor name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "tensor name")?)
            .map_err(|_| format_err(at + 2, "tensor name is not UTF-8"))?
            .to_string();
        let rank = cur.u8("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32_le("tensor dimensions")? as usize);
        }
        let n = dims
            .iter()
            .try_fold(8usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| format_err(cur.pos, format!("tensor {name} dimensions overflow")))?;
        let raw = cur.take(n, "tensor values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((name, Tensor::new(dims, data)?, at));
    }
    let meta_at = cur.pos;
    let meta = std::str::from_utf8(cur.rest()).map_err(|_| format_err(meta_at, "metadata is not UTF-8"))?;
    let config = parse_metadata(meta, meta_at)?;
    let mut model = PairedModel::new(config)?;
    if tensors.len() != model.params().len() {
        return Err(format_err(
            8,
            format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                model.params().len()
            ),
        ));
    }
    for (name, t, at) in tensors {
        let id = model
            .params()
            .id(&name)
            .ok_or_else(|| format_err(at, format!("unexpected tensor {name}")))?;
        model
            .params_mut()
            .set(id, t)
            .map_err(|e| format_err(at, format!("tensor {name}: {e}")))?;
    }
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &PairedModel) -> Result<()> {
    write_bytes(path.as_ref(), &encode_checkpoint(model)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PairedModel> {
    decode_checkpoint(&read_bytes(path.as_ref())?)
}

// ---------------------------------------------------------------- key = value text

/// Non-empty `key = value` lines with their 1-based line numbers.
fn key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: i + 1,
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        line,
        message: format!("bad value for {key}: {v:?}"),
    })
}

pub const RUN_CONFIG_KEYS: [&str; 19] = [
    "variant",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda_rho",
    "lambda_b",
    "gamma_x",
    "gamma_y",
    "alpha0",
    "beta0",
    "gate_temperature",
    "lr",
    "epochs",
    "batch_size",
    "seed",
    "latent_x",
    "latent_y",
    "hidden",
    "map_hidden",
];

/// Parse a run config on top of [`TrainConfig::default`].
pub fn parse_run_config(text: &str) -> Result<TrainConfig> {
    parse_run_config_onto(text, TrainConfig::default())
}

/// Parse a run config, overriding fields of `base`.
pub fn parse_run_config_onto(text: &str, base: TrainConfig) -> Result<TrainConfig> {
    let mut c = base;
    for (line, k, v) in key_values(text)? {
        let w: &mut LossWeights = &mut c.weights;
        match k.as_str() {
            "variant" => c.variant = parse_value(line, &k, &v)?,
            "lambda1" => w.lambda1 = parse_value(line, &k, &v)?,
            "lambda2" => w.lambda2 = parse_value(line, &k, &v)?,
            "lambda3" => w.lambda3 = parse_value(line, &k, &v)?,
            "lambda_rho" => w.lambda_rho = parse_value(line, &k, &v)?,
            "lambda_b" => w.lambda_b = parse_value(line, &k, &v)?,
            "gamma_x" => w.gamma_x = parse_value(line, &k, &v)?,
            "gamma_y" => w.gamma_y = parse_value(line, &k, &v)?,
            "alpha0" => c.alpha0 = parse_value(line, &k, &v)?,
            "beta0" => c.beta0 = parse_value(line, &k, &v)?,
            "gate_temperature" => c.gate_temperature = parse_value(line, &k, &v)?,
            "lr" => c.lr = parse_value(line, &k, &v)?,
            "epochs" => c.epochs = parse_value(line, &k, &v)?,
            "batch_size" => c.batch_size = parse_value(line, &k, &v)?,
            "seed" => c.seed = parse_value(line, &k, &v)?,
            "latent_x" => c.latent_x = parse_value(line, &k, &v)?,
            "latent_y" => c.latent_y = parse_value(line, &k, &v)?,
            "hidden" | "map_hidden" => {
                let widths = parse_widths(&v).map_err(|message| Error::Config { line, message })?;
                if k == "hidden" {
                    c.hidden = widths;
                } else {
                    c.map_hidden = widths;
                }
            }
            _ => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key {k:?}"),
                })
            }
        }
    }
    Ok(c)
}

pub fn serialize_run_config(c: &TrainConfig) -> String {
    let w = &c.weights;
    let values: [String; 19] = [
        c.variant.name().to_string(),
        w.lambda1.to_string(),
        w.lambda2.to_string(),
        w.lambda3.to_string(),
        w.lambda_rho.to_string(),
        w.lambda_b.to_string(),
        w.gamma_x.to_string(),
        w.gamma_y.to_string(),
        c.alpha0.to_string(),
        c.beta0.to_string(),
        c.gate_temperature.to_string(),
        c.lr.to_string(),
        c.epochs.to_string(),
        c.batch_size.to_string(),
        c.seed.to_string(),
        c.latent_x.to_string(),
        c.latent_y.to_string(),
        join_widths(&c.hidden),
        join_widths(&c.map_hidden),
    ];
    RUN_CONFIG_KEYS
        .iter()
        .zip(values)
        .fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
}

pub fn read_run_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    parse_run_config(&read_text(path.as_ref())?)
}

/// Problem, y grid and Monte Carlo settings for `verify-theory`.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryConfig {
    pub problem: LinearGaussianProblem,
    pub ys: Vec<DVector<f64>>,
    pub n: usize,
    pub seed: u64,
}

impl Default for TheoryConfig {
    /// The canonical 1-D problem at `y ∈ {−2, 0, 2}`.
    fn default() -> Self {
        TheoryConfig {
            problem: LinearGaussianProblem::canonical_1d(),
            ys: [-2.0, 0.0, 2.0].iter().map(|v| DVector::from_element(1, *v)).collect(),
            n: 200_000,
            seed: 0,
        }
    }
}

/// Rows separated by `;`, entries by `,`.
fn parse_matrix(line: usize, key: &str, v: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = v
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|x| parse_value::<f64>(line, key, x.trim()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config {
            line,
            message: format!("{key}: ragged matrix rows"),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn parse_vector(line: usize, key: &str, v: &str) -> Result<DVector<f64>> {
    let xs = v
        .split(',')
        .map(|x| parse_value::<f64>(line, key, x.trim()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(xs))
}

/// Keys `a`, `noise_cov`, `prior_mean`, `prior_cov`, `b`, `c`, `latent_cov`
/// override the canonical problem; each `y` line adds a grid point
/// (replacing the default grid); `n` and `seed` set the sampler.
pub fn parse_theory_config(text: &str) -> Result<TheoryConfig> {
    let mut cfg = TheoryConfig::default();
    let mut ys = Vec::new();
    let p = &mut cfg.problem;
    for (line, k, v) in key_values(text)? {
        match k.as_str() {
            "a" => p.a = parse_matrix(line, &k, &v)?,
            "noise_cov" => p.noise_cov = parse_matrix(line, &k, &v)?,
            "prior_mean" => p.prior_mean = parse_vector(line, &k, &v)?,
            "prior_cov" => p.prior_cov = parse_matrix(line, &k, &v)?,
            "b" => p.b = parse_matrix(line, &k, &v)?,
            "c" => p.c = parse_vector(line, &k, &v)?,
            "latent_cov" => p.latent_cov = parse_matrix(line, &k, &v)?,
            "y" => ys.push(parse_vector(line, &k, &v)?),
            "n" => cfg.n = parse_value(line, &k, &v)?,
            "seed" => cfg.seed = parse_value(line, &k, &v)?,
            _ => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key {k:?}"),
                })
            }
        }
    }
    if !ys.is_empty() {
        cfg.ys = ys;
    }
    cfg.problem.validate()?;
    if let Some(y) = cfg.ys.iter().find(|y| y.len() != cfg.problem.dim_y()) {
        return Err(Error::invalid(format!(
            "y grid point has length {}, problem expects {}",
            y.len(),
            cfg.problem.dim_y()
        )));
    }
    Ok(cfg)
}

pub fn read_theory_config(path: impl AsRef<Path>) -> Result<TheoryConfig> {
    parse_theory_config(&read_text(path.as_ref())?)
}

// ---------------------------------------------------------------- PGM, CSV

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary P5 with maxval 255 of an `h×w` image clamped to `[0, 1]`.
pub fn encode_pgm(image: &Tensor) -> Result<Vec<u8>> {
    if image.rank() != 2 {
        return Err(Error::invalid(format!("PGM needs an h×w image, got {:?}", image.shape())));
    }
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|v| quantize(*v)));
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(pos, "truncated PGM header"));
        }
        fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if fields[0].1 != "P5" {
        return Err(format_err(0, format!("not a binary PGM: {:?}", fields[0].1)));
    }
    let num = |i: usize| -> Result<usize> {
        fields[i]
            .1
            .parse()
            .map_err(|_| format_err(fields[i].0, format!("bad PGM header field {:?}", fields[i].1)))
    };
    let (w, h, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval == 0 || maxval > 255 {
        return Err(format_err(fields[3].0, format!("unsupported PGM maxval {maxval}")));
    }
    pos += 1;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != w * h {
        return Err(format_err(
            pos,
            format!("PGM payload has {} bytes, expected {}", payload.len(), w * h),
        ));
    }
    Tensor::matrix(h, w, payload.iter().map(|b| *b as f64 / maxval as f64).collect())
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(image)?)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_pgm(&read_bytes(path.as_ref())?)
}

/// CSV with a header row.
pub fn write_csv<R, S>(path: impl AsRef<Path>, header: &[&str], rows: R) -> Result<()>
where
    R: IntoIterator,
    R::Item: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let path = path.as_ref();
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header and rows of a CSV file.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header = r.headers().map_err(io)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()).map_err(io))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn idx_u8_images() {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        b.extend((0..1568).map(|i| (i % 256) as u8));
        let t = parse_idx(&b).unwrap();
        assert_eq!(t.shape(), &[2, 28, 28]);
        assert_eq!(t.data()[255], 1.0);
        assert_eq!(t.data()[0], 0.0);
    }

    #[test]
    fn idx_labels() {
        let b = [0, 0, 8, 1, 0, 0, 0, 5, 1, 2, 3, 4, 5];
        assert_eq!(parse_idx(&b).unwrap().shape(), &[5]);
    }

    #[test]
    fn idx_truncated_names_counts() {
        let b = [0, 0, 8, 1, 0, 0, 0, 5, 1, 2];
        let e = parse_idx(&b).unwrap_err().to_string();
        assert!(e.contains("2 bytes") && e.contains("expected 5"), "{e}");
        assert!(matches!(parse_idx(&b), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn idx_bad_magic() {
        assert!(matches!(parse_idx(&[1, 0, 8, 1, 0, 0, 0, 0]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse_idx(&[0, 0, 9, 1, 0, 0, 0, 0]), Err(Error::Format { offset: 2, .. })));
    }

    #[test]
    fn idx_f64_lossless() {
        let t = Rng::new(1).gaussian_tensor(&[3, 2, 5]);
        assert_eq!(parse_idx(&encode_idx_f64(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn pgm_bytes() {
        let one = encode_pgm(&Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(one, b"P5\n1 1\n255\n\xff");
        let zero = encode_pgm(&Tensor::matrix(1, 1, vec![0.0]).unwrap()).unwrap();
        assert_eq!(*zero.last().unwrap(), 0);
    }

    #[test]
    fn pgm_round_trip_quantization() {
        let img = Rng::new(5).uniform_tensor(&[7, 4]);
        let back = decode_pgm(&encode_pgm(&img).unwrap()).unwrap();
        assert_eq!(back.shape(), &[7, 4]);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn empty_run_config_is_default() {
        assert_eq!(parse_run_config("").unwrap(), TrainConfig::default());
        assert_eq!(parse_run_config("# nothing\n\n").unwrap(), TrainConfig::default());
    }

    #[test]
    fn run_config_unknown_key_line() {
        let e = parse_run_config("lr = 0.1\n# c\nlambda9 = 2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
    }

    #[test]
    fn run_config_values() {
        let c = parse_run_config("lambda1 = 2.5\nalpha0 = 1\nbeta0 = 127 # prior\nseed = 7\nhidden = 64,32\nvariant = svae").unwrap();
        assert_eq!(c.weights.lambda1, 2.5);
        assert_eq!(c.beta0, 127.0);
        assert_eq!(c.seed, 7);
        assert_eq!(c.hidden, vec![64, 32]);
        assert_eq!(c.variant, Variant::SVae);
    }

    #[test]
    fn theory_config_matrices() {
        let c = parse_theory_config("a = 1,0;0,2\nnoise_cov = 1,0;0,1\nprior_mean = 0,0\nprior_cov = 2,0;0,2\nb = 1,1\nc = 0\nlatent_cov = 1\ny = 1,2\ny = 0,0\n").unwrap();
        assert_eq!(c.problem.a[(1, 1)], 2.0);
        assert_eq!(c.ys.len(), 2);
        assert!(parse_theory_config("a = 1,2\n").is_err());
    }
}
