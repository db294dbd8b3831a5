//! Seeded noise/signal ensembles and the Monte Carlo experiment harness.
//!
//! Noise models:
//!
//! - `IidGaussian`: `n x m` entries `N(0, 1/m)`; square case gives the
//!   quarter-circle singular value bulk on `[0, 2]`.
//! - `CovarianceMixture`: `Z Sigma^{1/2} / sqrt(m)` with diagonal `Sigma`
//!   built from a `(variance, fraction)` spectrum over the columns. A
//!   well-separated spectrum such as `{20: 0.1, 1: 0.9}` splits the
//!   singular value bulk in two.
//! - `SymmetricWigner`: symmetric `n x n` with the scaling that puts the
//!   eigenvalue bulk edge at 2.
//!
//! Everything is reproducible from `(spec, seed)` alone; trials run on
//! independent derived streams, so results are independent of worker count
//! and schedule.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{self, DetectConfig, NullModel};
use crate::measure::{SpectralMeasure, SupportProfile};
use crate::predict::{self, Geometry, OutlierPrediction, SignalModel};
use crate::seed::{self, Domain, GENERATOR_ID};
use crate::transform::AspectRatio;
use crate::{linalg, Error, Result};

/// Guard against accidentally launching week-long experiments.
const RESOURCE_GUARD: u128 = 200_000_000_000;

/// Noise ensemble family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    IidGaussian,
    CovarianceMixture {
        /// `(variance, fraction)` pairs; fractions must sum to one.
        spectrum: Vec<(f64, f64)>,
    },
    SymmetricWigner,
}

/// A fully specified noise draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::BadNoiseSpec("zero dimension".into()));
        }
        if self.n > self.m {
            return Err(Error::BadNoiseSpec(format!(
                "n = {} exceeds m = {}",
                self.n, self.m
            )));
        }
        match &self.kind {
            NoiseKind::SymmetricWigner if self.n != self.m => {
                Err(Error::BadNoiseSpec("symmetric noise must be square".into()))
            }
            NoiseKind::CovarianceMixture { spectrum } => {
                if spectrum.is_empty() {
                    return Err(Error::BadNoiseSpec("empty mixture spectrum".into()));
                }
                if spectrum.iter().any(|&(v, f)| !(v > 0.0) || !(f > 0.0)) {
                    return Err(Error::BadNoiseSpec(
                        "mixture variances and fractions must be positive".into(),
                    ));
                }
                let total: f64 = spectrum.iter().map(|s| s.1).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::BadNoiseSpec(format!(
                        "mixture fractions sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn aspect_ratio(&self) -> Result<AspectRatio> {
        AspectRatio::new(self.n as f64 / self.m as f64)
    }

    /// Column variances of the mixture, materialized as block sizes over the
    /// `m` columns. Cumulative rounding keeps the partition exact.
    fn column_variances(&self) -> Option<Vec<(f64, usize)>> {
        match &self.kind {
            NoiseKind::CovarianceMixture { spectrum } => {
                let m = self.m;
                let mut blocks = Vec::with_capacity(spectrum.len());
                let mut cum = 0.0;
                let mut used = 0usize;
                for (i, &(var, frac)) in spectrum.iter().enumerate() {
                    cum += frac;
                    let upto =
                        if i + 1 == spectrum.len() { m } else { (cum * m as f64).round() as usize };
                    blocks.push((var, upto.saturating_sub(used)));
                    used = upto.min(m);
                }
                Some(blocks)
            }
            _ => None,
        }
    }
}

fn fill_gaussian(rng: &mut impl Rng, n: usize, m: usize, sd: f64) -> Array2<f64> {
    let mut a = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let g: f64 = rng.sample(StandardNormal);
            a[[i, j]] = sd * g;
        }
    }
    a
}

/// Draw one noise matrix. Deterministic in `(spec, spec.seed)`.
pub fn sample_noise(spec: &NoiseSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, Domain::Noise, 0);
    let sd = 1.0 / (spec.m as f64).sqrt();
    match &spec.kind {
        NoiseKind::IidGaussian => Ok(fill_gaussian(&mut rng, spec.n, spec.m, sd)),
        NoiseKind::CovarianceMixture { .. } => {
            let mut x = fill_gaussian(&mut rng, spec.n, spec.m, sd);
            let blocks = spec.column_variances().expect("mixture spec");
            let mut col = 0usize;
            for (var, count) in blocks {
                let scale = var.sqrt();
                for _ in 0..count {
                    x.column_mut(col).mapv_inplace(|v| v * scale);
                    col += 1;
                }
            }
            Ok(x)
        }
        NoiseKind::SymmetricWigner => {
            let n = spec.n;
            let sd = 1.0 / (n as f64).sqrt();
            let mut a = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let g: f64 = rng.sample(StandardNormal);
                    let v = if i == j { sd * std::f64::consts::SQRT_2 * g } else { sd * g };
                    a[[i, j]] = v;
                    a[[j, i]] = v;
                }
            }
            Ok(a)
        }
    }
}

/// Plant a low-rank signal on top of `noise`.
///
/// Missing planted vectors are drawn isotropically on the derived `seed`
/// stream and orthonormalized exactly (Gram-Schmidt). Returns the data
/// matrix together with the realized model (vectors filled in).
pub fn plant_signal(
    noise: &Array2<f64>,
    sig: &SignalModel,
    seed: u64,
) -> Result<(Array2<f64>, SignalModel)> {
    let (n, m) = noise.dim();
    let r = sig.rank();
    if (r as f64) >= n.min(m) as f64 / 2.0 {
        return Err(Error::RankTooLarge { r, n, m });
    }
    if sig.geometry() == Geometry::SymmetricEigen && n != m {
        return Err(Error::GeometryMismatch { expected: "symmetric-eigen (square)" });
    }

    let mut rng = seed::rng(seed, Domain::Signal, 0);
    let left = match sig.left_vectors() {
        Some(v) => {
            if v.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "left vectors have {} rows, noise has {n}",
                    v.nrows()
                )));
            }
            v.clone()
        }
        None => {
            let mut v = fill_gaussian(&mut rng, n, r, 1.0);
            linalg::orthonormalize_columns(&mut v)?;
            v
        }
    };
    let right = match sig.geometry() {
        Geometry::SymmetricEigen => None,
        Geometry::RectangularSVD => Some(match sig.right_vectors() {
            Some(v) => {
                if v.nrows() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "right vectors have {} rows, noise has {m} columns",
                        v.nrows()
                    )));
                }
                v.clone()
            }
            None => {
                let mut v = fill_gaussian(&mut rng, m, r, 1.0);
                linalg::orthonormalize_columns(&mut v)?;
                v
            }
        }),
    };

    let mut data = noise.clone();
    for (k, &theta) in sig.thetas().iter().enumerate() {
        let u = left.column(k);
        match &right {
            Some(rv) => linalg::add_rank_one(&mut data, theta, &u, &rv.column(k)),
            None => linalg::add_rank_one(&mut data, theta, &u, &left.column(k)),
        }
    }
    let realized =
        SignalModel::new(sig.thetas().to_vec(), sig.geometry())?.with_vectors(left, right)?;
    Ok((data, realized))
}

/// What each trial records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordSpec {
    /// Record per-component informativeness against the planted vectors.
    pub informativeness: bool,
    /// Extra 1-based component positions to watch, on top of the first
    /// candidate at each gap.
    pub extra_positions: Vec<usize>,
    /// Run the detector on every trial.
    pub detect: bool,
    /// Keep the full singular value vector per trial (figures only; heavy).
    pub full_values: bool,
}

impl Default for RecordSpec {
    fn default() -> Self {
        Self { informativeness: true, extra_positions: Vec::new(), detect: false, full_values: false }
    }
}

/// A seeded Monte Carlo experiment: a noise family, a grid of signal
/// strengths, and a trial count per grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub noise: NoiseSpec,
    pub geometry: Geometry,
    /// Signal strength grid; one watched sweep point per entry.
    pub thetas: Vec<f64>,
    pub trials: usize,
    /// Calibration draws used for the shared null profile (and detection
    /// thresholds when `record.detect`).
    pub calibration_draws: usize,
    pub alpha: f64,
    pub kappa: f64,
    pub record: RecordSpec,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.trials == 0 {
            return Err(Error::BadNoiseSpec("trials must be >= 1".into()));
        }
        let cost = self.noise.n as u128
            * self.noise.m as u128
            * self.trials as u128
            * self.thetas.len().max(1) as u128;
        if cost > RESOURCE_GUARD {
            return Err(Error::ResourceGuard(cost));
        }
        Ok(())
    }
}

/// One component observed in one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WatchedComponent {
    /// 1-based position among descending singular values.
    pub position: usize,
    pub value: f64,
    /// Squared projection onto the planted left span, when recorded.
    pub informativeness: Option<f64>,
}

/// Compact detection outcome stored per trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialDetection {
    pub estimated_rank: usize,
    pub informative_indices: Vec<usize>,
    pub ambiguous_indices: Vec<usize>,
    /// Smallest descending bulk index among informative components, when
    /// any (2 or more means a middle component fired).
    pub informative_bulks: Vec<usize>,
    pub prefix_rule_rank: usize,
}

/// Result of a single trial; bit-reproducible from `(spec, seed)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub grid_index: usize,
    pub trial_index: usize,
    pub seed: u64,
    pub theta: f64,
    pub watched: Vec<WatchedComponent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<TrialDetection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

/// Mean/sd statistics for one watched component at one grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WatchedStats {
    pub position: usize,
    pub mean_value: f64,
    pub sd_value: f64,
    pub mean_informativeness: Option<f64>,
    pub sd_informativeness: Option<f64>,
}

/// Detection rates at one grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectStats {
    /// Fraction of trials with estimated rank >= 1.
    pub detect_rate: f64,
    /// Fraction of trials flagging a middle component (bulk index >= 2).
    pub middle_rate: f64,
    /// Fraction of trials where the prefix rule detects (rank >= 1).
    pub prefix_detect_rate: f64,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSummary {
    pub grid_index: usize,
    pub theta: f64,
    pub watched: Vec<WatchedStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detect: Option<DetectStats>,
}

/// Experiment output: null spectrum info, per-grid statistics and the
/// matching asymptotic predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub generator: String,
    pub master_seed: u64,
    pub trials: usize,
    pub support: SupportProfile,
    pub watched_positions: Vec<usize>,
    pub per_grid: Vec<GridSummary>,
    /// Predictions per grid point, from the pooled null measure.
    pub predictions: Vec<Vec<OutlierPrediction>>,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Pool singular spectra of `draws` noise-only samples into one empirical
/// measure, on the calibration stream of `master_seed`.
pub fn pooled_null_measure(
    noise: &NoiseSpec,
    master_seed: u64,
    draws: usize,
) -> Result<(SpectralMeasure, Vec<Vec<f64>>)> {
    let mut spectra = Vec::with_capacity(draws);
    for d in 0..draws {
        let spec = noise.with_seed(seed::derive(master_seed, Domain::Calibration, d as u64));
        let x = sample_noise(&spec)?;
        let mut vals = linalg::singular_values(&x)?;
        vals.sort_by(|a, b| b.total_cmp(a));
        spectra.push(vals);
    }
    let pooled: Vec<f64> = spectra.iter().flatten().copied().collect();
    Ok((SpectralMeasure::empirical(&pooled, None)?, spectra))
}

/// Run a seeded experiment over the theta grid.
///
/// Trials execute in parallel on independent derived streams and are
/// gathered in (grid, trial) order, so the output is identical for any
/// worker count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Vec<TrialResult>, ExperimentSummary)> {
    spec.validate()?;
    let master = spec.noise.seed;
    let k = spec.noise.n.min(spec.noise.m);

    let support_cfg = crate::measure::SupportConfig::with_kappa(spec.kappa).pooled(k);
    let (null_measure, null_spectra) =
        pooled_null_measure(&spec.noise, master, spec.calibration_draws)?;
    let profile = null_measure.detect_support(&support_cfg)?;

    let mut watched_positions: Vec<usize> = (1..=profile.len())
        .map(|j| profile.component_index(k, j, 1))
        .collect();
    watched_positions.extend(spec.record.extra_positions.iter().copied());
    watched_positions.sort_unstable();
    watched_positions.dedup();
    watched_positions.retain(|&p| p >= 1 && p <= k);

    // Per-grid predictions from the pooled null measure.
    let c = spec.noise.aspect_ratio()?;
    let mut predictions = Vec::with_capacity(spec.thetas.len());
    for &theta in &spec.thetas {
        let sig = SignalModel::rank_one(theta, spec.geometry)?;
        let preds = match spec.geometry {
            Geometry::SymmetricEigen => {
                predict::predict_eigen_outliers(&null_measure, &profile, &sig, k)?
            }
            Geometry::RectangularSVD => {
                predict::predict_sv_outliers(&null_measure, &profile, c, &sig, k)?
            }
        };
        predictions.push(preds);
    }

    let detect_cfg = DetectConfig {
        alpha: spec.alpha,
        support: support_cfg.clone(),
        ..DetectConfig::default()
    };

    let jobs: Vec<(usize, usize)> = (0..spec.thetas.len())
        .flat_map(|g| (0..spec.trials).map(move |t| (g, t)))
        .collect();

    let mut results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(g, t)| -> Result<TrialResult> {
            let theta = spec.thetas[g];
            let trial_seed =
                seed::derive(master, Domain::Trial, (g as u64) << 32 | t as u64);
            run_single_trial(
                spec,
                theta,
                trial_seed,
                g,
                t,
                &watched_positions,
                &profile,
                &null_spectra,
                &detect_cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|r| (r.grid_index, r.trial_index));

    let per_grid = (0..spec.thetas.len())
        .map(|g| {
            let rows: Vec<&TrialResult> =
                results.iter().filter(|r| r.grid_index == g).collect();
            let watched = watched_positions
                .iter()
                .enumerate()
                .map(|(wi, &pos)| {
                    let (mv, sv) = mean_sd(rows.iter().map(|r| r.watched[wi].value));
                    let informs: Vec<f64> =
                        rows.iter().filter_map(|r| r.watched[wi].informativeness).collect();
                    let (mi, si) = if informs.is_empty() {
                        (None, None)
                    } else {
                        let (a, b) = mean_sd(informs.iter().copied());
                        (Some(a), Some(b))
                    };
                    WatchedStats {
                        position: pos,
                        mean_value: mv,
                        sd_value: sv,
                        mean_informativeness: mi,
                        sd_informativeness: si,
                    }
                })
                .collect();
            let detect = if spec.record.detect {
                let n = rows.len().max(1) as f64;
                let dr = rows
                    .iter()
                    .filter(|r| r.detection.as_ref().is_some_and(|d| d.estimated_rank >= 1))
                    .count() as f64;
                let mr = rows
                    .iter()
                    .filter(|r| {
                        r.detection
                            .as_ref()
                            .is_some_and(|d| d.informative_bulks.iter().any(|&b| b >= 2))
                    })
                    .count() as f64;
                let pr = rows
                    .iter()
                    .filter(|r| r.detection.as_ref().is_some_and(|d| d.prefix_rule_rank >= 1))
                    .count() as f64;
                let mean_rank = rows
                    .iter()
                    .filter_map(|r| r.detection.as_ref().map(|d| d.estimated_rank as f64))
                    .sum::<f64>()
                    / n;
                Some(DetectStats {
                    detect_rate: dr / n,
                    middle_rate: mr / n,
                    prefix_detect_rate: pr / n,
                    mean_rank,
                })
            } else {
                None
            };
            GridSummary { grid_index: g, theta: spec.thetas[g], watched, detect }
        })
        .collect();

    let summary = ExperimentSummary {
        generator: GENERATOR_ID.to_string(),
        master_seed: master,
        trials: spec.trials,
        support: profile,
        watched_positions,
        per_grid,
        predictions,
    };
    Ok((results, summary))
}

#[allow(clippy::too_many_arguments)]
fn run_single_trial(
    spec: &ExperimentSpec,
    theta: f64,
    trial_seed: u64,
    grid_index: usize,
    trial_index: usize,
    watched_positions: &[usize],
    profile: &SupportProfile,
    null_spectra: &[Vec<f64>],
    detect_cfg: &DetectConfig,
) -> Result<TrialResult> {
    let noise_spec = spec.noise.with_seed(seed::derive(trial_seed, Domain::Noise, 0));
    let noise = sample_noise(&noise_spec)?;
    let (data, realized) = if theta > 0.0 {
        let sig = SignalModel::rank_one(theta, spec.geometry)?;
        plant_signal(&noise, &sig, seed::derive(trial_seed, Domain::Signal, 0))?
    } else {
        // theta = 0: noise-only trial; still draw a reference direction so
        // informativeness is defined.
        let sig = SignalModel::rank_one(1.0, spec.geometry)?;
        let (_, realized) =
            plant_signal(&noise, &sig, seed::derive(trial_seed, Domain::Signal, 0))?;
        (noise, realized)
    };

    let svd = linalg::Svd::compute(&data)?;
    let inform = if spec.record.informativeness {
        let planted = realized.left_vectors().expect("realized model has vectors");
        Some(predict::span_overlaps(&svd.left.view(), &planted.view())?)
    } else {
        None
    };

    let watched = watched_positions
        .iter()
        .map(|&pos| WatchedComponent {
            position: pos,
            value: svd.values[pos - 1],
            informativeness: inform.as_ref().map(|iv| iv[pos - 1]),
        })
        .collect();

    let detection = if spec.record.detect {
        let report = detect::detect_components_with_profile(
            &svd.values,
            profile,
            null_spectra,
            detect_cfg,
            "pooled calibration".to_string(),
        )?;
        let informative_bulks = report
            .gaps
            .iter()
            .filter(|g| !g.ambiguous)
            .map(|g| g.bulk)
            .collect();
        Some(TrialDetection {
            estimated_rank: report.estimated_rank,
            informative_indices: report.informative_indices.clone(),
            ambiguous_indices: report
                .gaps
                .iter()
                .filter(|g| g.ambiguous)
                .map(|g| g.component)
                .collect(),
            informative_bulks,
            prefix_rule_rank: report.prefix_rule_rank,
        })
    } else {
        None
    };

    Ok(TrialResult {
        grid_index,
        trial_index,
        seed: trial_seed,
        theta,
        watched,
        detection,
        values: spec.record.full_values.then(|| svd.values.clone()),
    })
}

/// Build a [`NullModel`] sampler backed by a noise spec on the calibration
/// stream of `master_seed`.
pub fn null_sampler(noise: NoiseSpec, master_seed: u64, draws: usize) -> NullModel<'static> {
    let label = format!(
        "monte-carlo null: {} draws of {:?} {}x{} (seed {master_seed})",
        draws, noise.kind, noise.n, noise.m
    );
    NullModel::Sampler {
        label,
        draws,
        sample: Box::new(move |d| {
            let spec = noise.with_seed(seed::derive(master_seed, Domain::Calibration, d as u64));
            sample_noise(&spec).expect("validated noise spec")
        }),
    }
}
