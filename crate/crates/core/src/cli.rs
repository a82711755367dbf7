//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 1 usage error, 2 data or format error, 3 failed verification.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::data::{synth_dataset, SynthKind};
use crate::error::{Error, Result};
use crate::io;
use crate::models::Variant;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::theory::verify_theorems;
use crate::training::{evaluate, train_with, TrainConfig};
use crate::uq::{perturbation_sweep, uq_suite, LocalizationSearch, PerturbMode, UqOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "vspair", version, about = "Paired autoencoders for inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    LinearGaussian,
    ToyDigits,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Pair,
    Vpair,
    Svae,
    Vspair,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Pair => Variant::Pair,
            VariantArg::Vpair => Variant::VPair,
            VariantArg::Svae => Variant::SVae,
            VariantArg::Vspair => Variant::VsPair,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Mnist,
    Toy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Relative,
    Std,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SearchArg {
    None,
    Active,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic paired dataset as IDX files.
    GenData {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        size: usize,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults the config starts from.
        #[arg(long, value_enum, default_value = "mnist")]
        preset: Preset,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-epoch loss terms as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Reconstruction metrics of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        samples: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Uncertainty metrics per image with optional image dumps.
    Uq {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        samples: usize,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "active")]
        search: SearchArg,
        #[arg(long, value_enum, default_value = "relative")]
        mode: ModeArg,
        /// Only the first N items.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep one latent dimension of one observation.
    Perturb {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        image_index: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, value_enum, default_value = "relative")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        samples: usize,
        /// Comma-separated scales; defaults to −4..4.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        scales: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo check of the linear-Gaussian latent moments.
    VerifyTheory {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Error(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Run with process arguments, printing to stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Error(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
        Err(Failure::Verification(msg)) => {
            let _ = writeln!(err, "verification failed: {msg}");
            EXIT_VERIFY
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::GenData { kind, out: dir, seed, size } => gen_data(kind, &dir, seed, size, out),
        Command::Train {
            config,
            data,
            variant,
            out: ckpt,
            preset,
            epochs,
            seed,
            history,
        } => {
            let variant = variant.map(Variant::from);
            let base = {
                let v = variant.unwrap_or(Variant::VsPair);
                match preset {
                    Preset::Mnist => TrainConfig::for_variant(v),
                    Preset::Toy => TrainConfig::toy(v),
                }
            };
            let mut cfg = match &config {
                Some(p) => io::parse_run_config_onto(&read_text(p)?, base)?,
                None => base,
            };
            if let Some(v) = variant {
                cfg.variant = v;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            train_cmd(&cfg, &data, &ckpt, history.as_deref(), out)
        }
        Command::Eval {
            ckpt,
            data,
            samples,
            csv,
            seed,
        } => eval_cmd(&ckpt, &data, samples, csv.as_deref(), seed, out),
        Command::Uq {
            ckpt,
            data,
            samples,
            report,
            images,
            search,
            mode,
            limit,
            seed,
        } => {
            let opts = UqOptions {
                n_samples: samples,
                mode: perturb_mode(mode),
                search: match search {
                    SearchArg::None => LocalizationSearch::None,
                    SearchArg::Active => LocalizationSearch::ActiveDims,
                    SearchArg::All => LocalizationSearch::AllDims,
                },
                ..UqOptions::default()
            };
            uq_cmd(&ckpt, &data, &opts, report.as_deref(), images.as_deref(), limit, seed, out)
        }
        Command::Perturb {
            ckpt,
            data,
            image_index,
            dim,
            mode,
            out: dir,
            samples,
            scales,
            seed,
        } => {
            let scales = scales.unwrap_or_else(crate::uq::default_scales);
            perturb_cmd(&ckpt, &data, image_index, dim, perturb_mode(mode), &dir, samples, &scales, seed, out)
        }
        Command::VerifyTheory { config, n, csv, seed } => theory_cmd(config.as_deref(), n, csv.as_deref(), seed, out),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn perturb_mode(m: ModeArg) -> PerturbMode {
    match m {
        ModeArg::Relative => PerturbMode::Relative,
        ModeArg::Std => PerturbMode::Std,
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments) {
    let _ = writeln!(out, "{line}");
}

fn gen_data(kind: Kind, dir: &Path, seed: u64, size: usize, out: &mut dyn Write) -> CmdResult {
    let kind = match kind {
        Kind::LinearGaussian => SynthKind::LinearGaussian,
        Kind::ToyDigits => SynthKind::ToyDigits,
    };
    let data = synth_dataset(kind, size, &mut Rng::new(seed))?;
    io::write_dataset(dir, &data)?;
    say(
        out,
        format_args!("wrote {} pairs ({} -> {}) to {}", data.len(), data.dim_y(), data.dim_x(), dir.display()),
    );
    Ok(())
}

fn train_cmd(cfg: &TrainConfig, data: &Path, ckpt: &Path, history: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let data = io::read_dataset(data)?;
    let mut model = cfg.build_model(&data)?;
    let hist = train_with(&mut model, &data, cfg, |s| {
        let rho = s.rho.map(|r| format!(" rho {r:.4}")).unwrap_or_default();
        say(
            out,
            format_args!("epoch {:3} loss {:.5e} nnz {:.1}{rho}", s.epoch, s.total, s.mean_nnz),
        );
    })?;
    io::save_checkpoint(ckpt, &model)?;
    if let (Some(path), Some(first)) = (history, hist.first()) {
        let mut header = vec!["epoch".to_string(), "total".to_string()];
        header.extend(first.terms.iter().map(|(t, _)| t.name().to_string()));
        header.extend(["mean_nnz".to_string(), "rho".to_string()]);
        let rows = hist.iter().map(|s| {
            let mut r = vec![s.epoch.to_string(), s.total.to_string()];
            r.extend(s.terms.iter().map(|(_, v)| v.to_string()));
            r.push(s.mean_nnz.to_string());
            r.push(s.rho.map(|v| v.to_string()).unwrap_or_default());
            r
        });
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        io::write_csv(path, &header, rows)?;
    }
    say(out, format_args!("saved {}", ckpt.display()));
    Ok(())
}

pub const EVAL_COLUMNS: [&str; 7] = ["variant", "samples", "mse", "mse_n", "avg_nnz", "sparsity", "psnr"];

fn eval_cmd(ckpt: &Path, data: &Path, samples: usize, csv: Option<&Path>, seed: u64, out: &mut dyn Write) -> CmdResult {
    let model = io::load_checkpoint(ckpt)?;
    let data = io::read_dataset(data)?;
    let m = evaluate(&model, &data, samples, seed)?;
    say(
        out,
        format_args!(
            "{}: MSE {:.4e}  MSE_{} {:.4e}  nnz {:.1}  sparsity {:.3}  PSNR {:.2} dB",
            model.variant(),
            m.mse,
            samples,
            m.mse_n,
            m.avg_nnz,
            m.sparsity,
            m.psnr
        ),
    );
    if let Some(path) = csv {
        let row = vec![
            model.variant().name().to_string(),
            samples.to_string(),
            m.mse.to_string(),
            m.mse_n.to_string(),
            m.avg_nnz.to_string(),
            m.sparsity.to_string(),
            m.psnr.to_string(),
        ];
        io::write_csv(path, &EVAL_COLUMNS, [row])?;
    }
    Ok(())
}

fn image(t: &Tensor, shape: (usize, usize)) -> Result<Tensor> {
    t.reshape(&[shape.0, shape.1])
}

fn normalized(t: &Tensor) -> Tensor {
    let hi = t.max();
    if hi > 0.0 {
        t.map(|v| v / hi)
    } else {
        t.clone()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const UQ_COLUMNS: [&str; 8] = [
    "index",
    "mse",
    "mean_variance",
    "region_ratio",
    "max_localization_ratio",
    "best_dim",
    "corrupted_mse_change",
    "n_always_active",
];

#[allow(clippy::too_many_arguments)]
fn uq_cmd(
    ckpt: &Path,
    data: &Path,
    opts: &UqOptions,
    report: Option<&Path>,
    images: Option<&Path>,
    limit: Option<usize>,
    seed: u64,
    out: &mut dyn Write,
) -> CmdResult {
    let model = io::load_checkpoint(ckpt)?;
    let mut data = io::read_dataset(data)?;
    if let Some(n) = limit {
        data = data.subset(&(0..n.min(data.len())).collect::<Vec<_>>())?;
    }
    let r = uq_suite(&model, &data, opts, seed)?;
    say(
        out,
        format_args!(
            "images {}  pearson r {:.3}  median ratio {:.3}  mean ratio {:.3}  ratio>1 {:.1}%",
            r.images.len(),
            r.pearson_r,
            r.median_ratio,
            r.mean_ratio,
            100.0 * r.fraction_ratio_above_one
        ),
    );
    if let (Some(med), Some(mean)) = (r.median_localization, r.mean_localization) {
        say(out, format_args!("localization median {med:.3}  mean {mean:.3}"));
    }
    if let Some(path) = report {
        let rows = r.images.iter().enumerate().map(|(i, m)| {
            vec![
                i.to_string(),
                m.mse.to_string(),
                m.mean_variance.to_string(),
                m.region_ratio.to_string(),
                opt(m.max_localization_ratio),
                m.best_dim.map(|d| d.to_string()).unwrap_or_default(),
                opt(m.corrupted_mse_change),
                m.n_always_active.map(|d| d.to_string()).unwrap_or_default(),
            ]
        });
        io::write_csv(path, &UQ_COLUMNS, rows)?;
    }
    if let Some(dir) = images {
        let shape = data
            .image_shape
            .ok_or_else(|| Error::invalid("dataset has no image shape"))?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, m) in r.images.iter().enumerate() {
            let truth = Tensor::vector(data.x.row(i).to_vec());
            let obs = Tensor::vector(data.y.row(i).to_vec());
            for (tag, t) in [
                ("truth", truth),
                ("observed", obs),
                ("mean", m.mean_x.clone()),
                ("variance", normalized(&m.variance)),
            ] {
                if t.numel() == shape.0 * shape.1 {
                    io::write_pgm(dir.join(format!("{i:04}_{tag}.pgm")), &image(&t, shape)?)?;
                }
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn perturb_cmd(
    ckpt: &Path,
    data: &Path,
    index: usize,
    dim: usize,
    mode: PerturbMode,
    dir: &Path,
    samples: usize,
    scales: &[f64],
    seed: u64,
    out: &mut dyn Write,
) -> CmdResult {
    let model = io::load_checkpoint(ckpt)?;
    let data = io::read_dataset(data)?;
    if index >= data.len() {
        return Err(Error::invalid(format!("image index {index} out of range for {} items", data.len())).into());
    }
    let y = Tensor::vector(data.y.row(index).to_vec());
    let mut all = vec![mode.identity_scale()];
    all.extend_from_slice(scales);
    let recons = perturbation_sweep(&model, &y, dim, &all, mode, samples, &mut Rng::new(seed))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let base = &recons[0];
    let mut rows = Vec::with_capacity(scales.len());
    for (k, (scale, r)) in scales.iter().zip(&recons[1..]).enumerate() {
        let change: f64 = r.data().iter().zip(base.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / r.numel() as f64;
        rows.push(vec![scale.to_string(), change.to_string()]);
        if let Some(shape) = data.image_shape.filter(|s| s.0 * s.1 == r.numel()) {
            io::write_pgm(dir.join(format!("scale_{k:02}.pgm")), &image(r, shape)?)?;
        }
    }
    io::write_csv(dir.join("sweep.csv"), &["scale", "mse_change"], rows)?;
    say(
        out,
        format_args!("swept dim {dim} of item {index} over {} scales into {}", scales.len(), dir.display()),
    );
    Ok(())
}

pub const THEORY_COLUMNS: [&str; 6] = ["y", "max_mean_z", "cov_rel_err", "gaussian", "n", "pass"];

fn theory_cmd(config: Option<&Path>, n: Option<usize>, csv: Option<&Path>, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let mut cfg = match config {
        Some(p) => io::read_theory_config(p)?,
        None => io::TheoryConfig::default(),
    };
    if let Some(n) = n {
        cfg.n = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = verify_theorems(&cfg.problem, &cfg.ys, cfg.n, cfg.seed)?;
    let fmt_y = |y: &nalgebra::DVector<f64>| y.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    for c in &report.checks {
        say(
            out,
            format_args!(
                "y=[{}]  mean z {:.2}  cov err {:.2e}  gaussian {}  {}",
                fmt_y(&c.y),
                c.max_mean_z,
                c.cov_rel_err,
                c.gaussianity.pass,
                if c.pass { "PASS" } else { "FAIL" }
            ),
        );
    }
    if let Some(path) = csv {
        let rows = report.checks.iter().map(|c| {
            vec![
                fmt_y(&c.y),
                c.max_mean_z.to_string(),
                c.cov_rel_err.to_string(),
                c.gaussianity.pass.to_string(),
                report.n.to_string(),
                c.pass.to_string(),
            ]
        });
        io::write_csv(path, &THEORY_COLUMNS, rows)?;
    }
    if report.pass {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.pass).count();
        Err(Failure::Verification(format!("{failed} of {} grid points failed", report.checks.len())))
    }
}
