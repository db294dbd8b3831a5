//! Command line front end: simulate ensembles, detect and estimate buried
//! low-rank signals, predict outlier locations/overlaps from a noise
//! spectrum, sweep signal strengths, and reproduce the standard figures.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use spectral_inform::detect::{self, DetectConfig};
use spectral_inform::figures::{self, FigureId, FigureOptions};
use spectral_inform::measure::{SpectralMeasure, SupportConfig};
use spectral_inform::predict::{self, PredictionSet, SignalModel};
use spectral_inform::sim::{self, ExperimentSpec, NoiseKind, NoiseSpec, RecordSpec};
use spectral_inform::transform::AspectRatio;
use spectral_inform::{matio, Geometry};

/// Thread-count override honored by the experiment harness.
const THREADS_ENV: &str = "SPECTRAL_INFORM_THREADS";

#[derive(Parser)]
#[command(
    name = "spectral-inform",
    about = "Low-rank signal detection via principal and middle spectral components",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
    Bin,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryArg {
    Eigen,
    Svd,
}

impl From<GeometryArg> for Geometry {
    fn from(g: GeometryArg) -> Geometry {
        match g {
            GeometryArg::Eigen => Geometry::SymmetricEigen,
            GeometryArg::Svd => Geometry::RectangularSVD,
        }
    }
}

/// Noise model flags shared by several subcommands. Default is iid
/// Gaussian; repeated `--sigma-spec value:fraction` pairs select the
/// covariance mixture; `--wigner` selects the symmetric ensemble.
#[derive(Args, Clone)]
struct NoiseArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    m: Option<usize>,
    /// Mixture component `variance:fraction`; repeat to add components.
    #[arg(long = "sigma-spec", value_name = "VALUE:FRACTION")]
    sigma_spec: Vec<String>,
    /// Symmetric (Wigner-type) noise instead of rectangular Gaussian.
    #[arg(long, default_value_t = false)]
    wigner: bool,
}

impl NoiseArgs {
    fn kind(&self) -> anyhow::Result<NoiseKind> {
        if self.wigner {
            if !self.sigma_spec.is_empty() {
                bail!("--wigner and --sigma-spec are mutually exclusive");
            }
            return Ok(NoiseKind::SymmetricWigner);
        }
        if self.sigma_spec.is_empty() {
            return Ok(NoiseKind::IidGaussian);
        }
        let mut spectrum = Vec::with_capacity(self.sigma_spec.len());
        for s in &self.sigma_spec {
            let (v, f) = s
                .split_once(':')
                .with_context(|| format!("--sigma-spec {s:?}: expected VALUE:FRACTION"))?;
            spectrum.push((
                v.trim().parse::<f64>().with_context(|| format!("bad variance in {s:?}"))?,
                f.trim().parse::<f64>().with_context(|| format!("bad fraction in {s:?}"))?,
            ));
        }
        Ok(NoiseKind::CovarianceMixture { spectrum })
    }

    fn spec(&self, seed: u64) -> anyhow::Result<NoiseSpec> {
        let m = self.m.unwrap_or(self.n);
        let spec = NoiseSpec { kind: self.kind()?, n: self.n, m, seed };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a noise matrix, optionally plant a low-rank signal, write it out.
    Simulate {
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Signal strengths; repeat for higher rank. No flag = noise only.
        #[arg(long)]
        theta: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Bin)]
        format: OutputFormat,
    },
    /// Detect separated components in a matrix file against a null model.
    Detect {
        /// Matrix file (native binary or CSV).
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = spectral_inform::measure::DEFAULT_KAPPA)]
        kappa: f64,
        /// Calibration draws for the Monte Carlo null.
        #[arg(long, default_value_t = 100)]
        ncal: usize,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect, then reconstruct the signal from the informative components.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = spectral_inform::measure::DEFAULT_KAPPA)]
        kappa: f64,
        #[arg(long, default_value_t = 100)]
        ncal: usize,
        /// Where the reconstruction goes.
        #[arg(long)]
        out: PathBuf,
        /// Where the detection report goes; stdout when omitted.
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Bin)]
        format: OutputFormat,
    },
    /// Predict outlier locations and overlaps from a noise spectrum.
    Predict {
        /// Serialized spectral measure (JSON). Mutually exclusive with
        /// --input / noise flags.
        #[arg(long)]
        measure: Option<PathBuf>,
        /// Matrix file whose singular spectrum serves as the noise measure.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        ncal: usize,
        #[arg(long, required = true)]
        theta: Vec<f64>,
        #[arg(long, value_enum, default_value_t = GeometryArg::Svd)]
        geometry: GeometryArg,
        #[arg(long, default_value_t = spectral_inform::measure::DEFAULT_KAPPA)]
        kappa: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep over signal strengths.
    Sweep {
        /// Experiment spec as JSON; overrides all other flags.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 250)]
        trials: usize,
        #[arg(long, default_value_t = 0.5)]
        theta_min: f64,
        #[arg(long, default_value_t = 4.0)]
        theta_max: f64,
        #[arg(long, default_value_t = 15)]
        theta_steps: usize,
        /// Explicit grid points; overrides the min/max/steps grid.
        #[arg(long)]
        theta: Vec<f64>,
        #[arg(long, value_enum, default_value_t = GeometryArg::Svd)]
        geometry: GeometryArg,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = spectral_inform::measure::DEFAULT_KAPPA)]
        kappa: f64,
        #[arg(long, default_value_t = 100)]
        ncal: usize,
        /// Run the detector on every trial.
        #[arg(long, default_value_t = false)]
        detect: bool,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Reproduce a standard figure into a directory.
    ReproduceFigure {
        #[arg(long)]
        id: String,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 20260801)]
        seed: u64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        theta: Vec<f64>,
    },
}

fn write_or_print(out: Option<&Path>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, content).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{content}"),
    }
    Ok(())
}

fn write_matrix_as(path: &Path, a: &Array2<f64>, format: OutputFormat) -> anyhow::Result<()> {
    match format {
        OutputFormat::Csv => matio::write_csv(path, a)?,
        _ => matio::write_matrix(path, a)?,
    }
    Ok(())
}

fn setup_threads() {
    // BLAS threading is pinned to one so outputs do not depend on core
    // count; our own parallelism over independent trials is configured via
    // SPECTRAL_INFORM_THREADS and cannot affect results either.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    if let Some(threads) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn detect_report(
    input: &Path,
    noise: &NoiseArgs,
    seed: u64,
    alpha: f64,
    kappa: f64,
    ncal: usize,
) -> anyhow::Result<(Array2<f64>, detect::DetectionReport)> {
    let data = matio::read_auto(input)?;
    let mut args = noise.clone();
    args.n = data.nrows();
    args.m = Some(data.ncols());
    let spec = args.spec(seed)?;
    let null = sim::null_sampler(spec, seed, ncal);
    let cfg = DetectConfig { alpha, support: SupportConfig::with_kappa(kappa), ..Default::default() };
    let report = detect::detect_components(&data, &null, &cfg)?;
    Ok((data, report))
}

fn run() -> anyhow::Result<()> {
    setup_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { noise, seed, theta, out, format } => {
            let spec = noise.spec(seed)?;
            let x = sim::sample_noise(&spec)?;
            let data = if theta.is_empty() {
                x
            } else {
                let geometry = if matches!(spec.kind, NoiseKind::SymmetricWigner) {
                    Geometry::SymmetricEigen
                } else {
                    Geometry::RectangularSVD
                };
                let mut thetas = theta;
                thetas.sort_by(|a, b| b.total_cmp(a));
                let sig = SignalModel::new(thetas, geometry)?;
                let (data, _) = sim::plant_signal(&x, &sig, seed)?;
                data
            };
            write_matrix_as(&out, &data, format)?;
        }
        Command::Detect { input, noise, seed, alpha, kappa, ncal, out } => {
            let (_, report) = detect_report(&input, &noise, seed, alpha, kappa, ncal)?;
            write_or_print(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Estimate { input, noise, seed, alpha, kappa, ncal, out, report_out, format } => {
            let (data, report) = detect_report(&input, &noise, seed, alpha, kappa, ncal)?;
            let estimate = detect::estimate_signal(&data, &report)?;
            write_matrix_as(&out, &estimate.reconstruction, format)?;
            write_or_print(report_out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Predict { measure, input, noise, seed, ncal, theta, geometry, kappa, out } => {
            let geometry: Geometry = geometry.into();
            let mut support_cfg = SupportConfig::with_kappa(kappa);
            let (m, c, count): (SpectralMeasure, AspectRatio, usize) = match (&measure, &input) {
                (Some(path), None) => {
                    let m: SpectralMeasure =
                        serde_json::from_str(&std::fs::read_to_string(path)?)?;
                    let c = AspectRatio::new(noise.n as f64 / noise.m.unwrap_or(noise.n) as f64)?;
                    (m, c, noise.n)
                }
                (None, Some(path)) => {
                    let data = matio::read_auto(path)?;
                    let values = match geometry {
                        Geometry::RectangularSVD => {
                            spectral_inform::spectrum_of(&data)?
                        }
                        Geometry::SymmetricEigen => spectral_inform::eigen_spectrum_of(&data)?,
                    };
                    let k = values.len();
                    let c = AspectRatio::new(
                        data.nrows().min(data.ncols()) as f64
                            / data.nrows().max(data.ncols()) as f64,
                    )?;
                    (SpectralMeasure::empirical(&values, None)?, c, k)
                }
                (None, None) => {
                    let spec = noise.spec(seed)?;
                    let c = spec.aspect_ratio()?;
                    let (m, _) = sim::pooled_null_measure(&spec, seed, ncal)?;
                    let k = spec.n.min(spec.m);
                    support_cfg = support_cfg.pooled(k);
                    (m, c, k)
                }
                (Some(_), Some(_)) => bail!("--measure and --input are mutually exclusive"),
            };
            let profile = m.detect_support(&support_cfg)?;
            let mut thetas = theta;
            thetas.sort_by(|a, b| b.total_cmp(a));
            let sig = SignalModel::new(thetas, geometry)?;
            let preds = match geometry {
                Geometry::SymmetricEigen => {
                    predict::predict_eigen_outliers(&m, &profile, &sig, count)?
                }
                Geometry::RectangularSVD => {
                    predict::predict_sv_outliers(&m, &profile, c, &sig, count)?
                }
            };
            let set = PredictionSet::new(preds);
            write_or_print(out.as_deref(), &serde_json::to_string_pretty(&set)?)?;
        }
        Command::Sweep {
            spec,
            noise,
            seed,
            trials,
            theta_min,
            theta_max,
            theta_steps,
            theta,
            geometry,
            alpha,
            kappa,
            ncal,
            detect,
            outdir,
        } => {
            let spec: ExperimentSpec = match spec {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?,
                None => {
                    let thetas = if theta.is_empty() {
                        (0..theta_steps)
                            .map(|k| {
                                theta_min
                                    + (theta_max - theta_min) * k as f64
                                        / (theta_steps.max(2) - 1) as f64
                            })
                            .collect()
                    } else {
                        theta
                    };
                    ExperimentSpec {
                        noise: noise.spec(seed)?,
                        geometry: geometry.into(),
                        thetas,
                        trials,
                        calibration_draws: ncal,
                        alpha,
                        kappa,
                        record: RecordSpec { detect, ..Default::default() },
                    }
                }
            };
            std::fs::create_dir_all(&outdir)?;
            let (trials_out, summary) = sim::run_experiment(&spec)?;
            let mut jsonl = String::new();
            for t in &trials_out {
                jsonl.push_str(&serde_json::to_string(t)?);
                jsonl.push('\n');
            }
            std::fs::write(outdir.join("trials.jsonl"), jsonl)?;
            std::fs::write(
                outdir.join("summary.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            let mut csv = String::from("theta");
            for pos in &summary.watched_positions {
                csv.push_str(&format!(",value_{pos},inform_{pos}"));
            }
            csv.push('\n');
            for g in &summary.per_grid {
                csv.push_str(&format!("{}", g.theta));
                for w in &g.watched {
                    csv.push_str(&format!(
                        ",{},{}",
                        w.mean_value,
                        w.mean_informativeness.unwrap_or(f64::NAN)
                    ));
                }
                csv.push('\n');
            }
            std::fs::write(outdir.join("summary.csv"), csv)?;
            std::fs::write(
                outdir.join("spec.json"),
                serde_json::to_string_pretty(&spec)?,
            )?;
        }
        Command::ReproduceFigure { id, outdir, seed, n, m, trials, theta } => {
            let fig: FigureId = id.parse()?;
            let opts = FigureOptions { seed, n, m, trials, thetas: theta };
            let files = figures::reproduce(fig, &outdir, &opts)?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
