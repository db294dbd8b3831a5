//! Reproducibility of the Monte Carlo harness: identical results for any
//! worker count, bit-identical reruns, and agreement between the harness
//! and a hand-rolled single pipeline call.

use spectral_inform::linalg::Svd;
use spectral_inform::predict::{span_overlaps, Geometry, SignalModel};
use spectral_inform::sim::{
    plant_signal, run_experiment, sample_noise, ExperimentSpec, NoiseKind, NoiseSpec, RecordSpec,
};
use spectral_inform::{seed, spectrum_of};

fn small_spec() -> ExperimentSpec {
    ExperimentSpec {
        noise: NoiseSpec { kind: NoiseKind::IidGaussian, n: 64, m: 64, seed: 2024 },
        geometry: Geometry::RectangularSVD,
        thetas: vec![1.5, 3.0],
        trials: 6,
        calibration_draws: 25,
        alpha: 0.05,
        kappa: 25.0,
        record: RecordSpec { detect: true, ..Default::default() },
    }
}

fn run_serialized(spec: &ExperimentSpec, workers: usize) -> (String, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
    let (trials, summary) = pool.install(|| run_experiment(spec)).unwrap();
    let trials_js: Vec<String> =
        trials.iter().map(|t| serde_json::to_string(t).unwrap()).collect();
    (trials_js.join("\n"), serde_json::to_string(&summary).unwrap())
}

#[test]
fn results_are_identical_across_worker_counts() {
    let spec = small_spec();
    let (t1, s1) = run_serialized(&spec, 1);
    let (t8, s8) = run_serialized(&spec, 8);
    assert_eq!(t1, t8, "trial records differ between 1 and 8 workers");
    assert_eq!(s1, s8, "summaries differ between 1 and 8 workers");
}

#[test]
fn reruns_are_bit_identical() {
    let spec = small_spec();
    let (t1, s1) = run_serialized(&spec, 2);
    let (t2, s2) = run_serialized(&spec, 2);
    assert_eq!(t1, t2);
    assert_eq!(s1, s2);
}

#[test]
fn single_trial_matches_direct_pipeline_call() {
    let mut spec = small_spec();
    spec.thetas = vec![2.5];
    spec.trials = 1;
    spec.record.detect = false;
    let (trials, _) = run_experiment(&spec).unwrap();
    assert_eq!(trials.len(), 1);
    let trial = &trials[0];

    // Re-derive the same trial by hand from the recorded seed.
    let noise_spec =
        spec.noise.with_seed(seed::derive(trial.seed, seed::Domain::Noise, 0));
    let noise = sample_noise(&noise_spec).unwrap();
    let sig = SignalModel::rank_one(2.5, Geometry::RectangularSVD).unwrap();
    let (data, realized) =
        plant_signal(&noise, &sig, seed::derive(trial.seed, seed::Domain::Signal, 0)).unwrap();
    let svd = Svd::compute(&data).unwrap();
    let planted = realized.left_vectors().unwrap();
    let inform = span_overlaps(&svd.left.view(), &planted.view()).unwrap();

    for w in &trial.watched {
        assert_eq!(w.value, svd.values[w.position - 1], "value at {}", w.position);
        assert_eq!(
            w.informativeness.unwrap(),
            inform[w.position - 1],
            "informativeness at {}",
            w.position
        );
    }
}

#[test]
fn iid_top_singular_value_tracks_bulk_edge() {
    // Square iid noise has bulk edge 2; over seeds the top singular value
    // stays within [1.95, 2.05] at n = 1000 (50-seed mean was 1.9915,
    // range [1.979, 2.011]).
    let mut tops = Vec::new();
    for s in 0..50u64 {
        let x = sample_noise(&NoiseSpec {
            kind: NoiseKind::IidGaussian,
            n: 1000,
            m: 1000,
            seed: 3000 + s,
        })
        .unwrap();
        tops.push(spectrum_of(&x).unwrap()[0]);
    }
    let mean = tops.iter().sum::<f64>() / tops.len() as f64;
    assert!((1.95..=2.05).contains(&mean), "mean top singular value {mean}");
}

#[test]
fn observed_middle_outlier_matches_prediction() {
    // theta = 2 on the mixture: the observed middle value must sit within
    // 5% of the predicted rho in nearly every trial.
    let spec = ExperimentSpec {
        noise: NoiseSpec {
            kind: NoiseKind::CovarianceMixture { spectrum: vec![(20.0, 0.1), (1.0, 0.9)] },
            n: 500,
            m: 500,
            seed: 606,
        },
        geometry: Geometry::RectangularSVD,
        thetas: vec![2.0],
        trials: 20,
        calibration_draws: 100,
        alpha: 0.01,
        kappa: 25.0,
        record: RecordSpec::default(),
    };
    let (trials, summary) = run_experiment(&spec).unwrap();
    let pred = summary.predictions[0]
        .iter()
        .find(|p| p.gap_index == 2)
        .expect("middle gap prediction");
    let rho = pred.rho.expect("middle outlier expected at theta = 2");
    let middle_slot = summary
        .watched_positions
        .iter()
        .position(|&p| p == pred.bulk_position)
        .expect("middle position watched");
    let good = trials
        .iter()
        .filter(|t| {
            let v = t.watched[middle_slot].value;
            (v - rho).abs() <= 0.05 * rho
        })
        .count();
    assert!(good >= 18, "observed middle value within 5% of rho in only {good}/20 trials");
}
