mod common;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use cavity_rc_core::benchmarks::characterize::{characterize, CharacterizeSettings};
use cavity_rc_core::benchmarks::memory::{run_memory_probe, MemorySettings};
use cavity_rc_core::benchmarks::report::memory_report;
use cavity_rc_core::benchmarks::sinc::{fit_and_score, sinc, SincContext, SincSettings, SincTask};
use cavity_rc_core::benchmarks::synth::default_synthetic_corpus;
use cavity_rc_core::benchmarks::vowels::{evaluate, evaluate_with_labels, extract_features, VowelSettings};
use cavity_rc_core::benchmarks::{cavity_preset, Layout, Mode, Profile};
use cavity_rc_core::config::Gates;
use cavity_rc_core::readout::FeatureKind;
use cavity_rc_core::{CavitySpec, Cell, ProbeSpec};
use common::rng;

fn open_box(damping: f64) -> Layout {
    let cavity = CavitySpec::uniform(2.0, 1.0, 0.02, 343.0, damping, 16_000.0).unwrap();
    Layout {
        cavity,
        sources: vec![Cell::new(10, 25)],
        probes: vec![
            ProbeSpec::new(Cell::new(30, 25), "near"),
            ProbeSpec::new(Cell::new(60, 25), "mid"),
            ProbeSpec::new(Cell::new(90, 40), "far"),
        ],
        scatterers: Vec::new(),
    }
}

#[test]
fn impulse_arrives_after_the_travel_time_and_decays_at_half_gamma() {
    let layout = open_box(5.0);
    let probe = run_memory_probe(&layout, &MemorySettings::default()).unwrap();
    assert_eq!(probe.expected_rate, 2.5);
    let two_cells = 2.0 * 0.02 / 343.0;
    for r in &probe.responses {
        assert!(
            (r.onset_s - r.expected_onset_s).abs() <= two_cells,
            "{}: onset {} s, travel time {} s",
            r.label,
            r.onset_s,
            r.expected_onset_s
        );
        assert!((r.decay_rate / 2.5 - 1.0).abs() < 0.2, "{}: rate {}", r.label, r.decay_rate);
        assert!(!r.non_decaying);
        // Reverberation lasts well past the memory horizon of 0.1 s.
        assert!(r.decay_time_s > 0.1);
    }
    assert!(probe.max_cross_correlation < 0.99);
}

#[test]
fn lossless_cavity_does_not_forget() {
    let layout = open_box(0.0);
    let settings = MemorySettings { duration_s: 0.5, ..MemorySettings::default() };
    let probe = run_memory_probe(&layout, &settings).unwrap();
    assert_eq!(probe.expected_rate, 0.0);
    assert!(probe.responses.iter().all(|r| r.non_decaying), "{:?}", probe.responses);
}

#[test]
fn memory_report_is_reproducible() {
    let layout = cavity_preset(Profile::Ci, 16_000.0).unwrap();
    let settings = MemorySettings { duration_s: 0.3, ..MemorySettings::default() };
    let gates = Gates { memory_rate_tolerance: Some(0.2), ..Gates::default() };
    let a = memory_report("h", run_memory_probe(&layout, &settings).unwrap(), &gates).unwrap();
    let b = memory_report("h", run_memory_probe(&layout, &settings).unwrap(), &gates).unwrap();
    assert_eq!(a.0.to_json(), b.0.to_json());
    assert_eq!(a.1, b.1);
}

fn parse_phasor_csv(bytes: &[u8]) -> Vec<(f64, usize, f64)> {
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "gain_factor,harmonic_index,re,im,magnitude,phase_rad");
    lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].parse().unwrap(), c[1].parse().unwrap(), c[4].parse().unwrap())
        })
        .collect()
}

#[test]
fn characterization_sweep_shape_and_monotone_second_harmonic() {
    let layout = cavity_preset(Profile::Ci, 16_000.0).unwrap();
    let settings = CharacterizeSettings::default();
    let ch = characterize(&layout.cavity, Cell::new(55, 25), &settings).unwrap();
    let mut csv = Vec::new();
    ch.write_csv(&mut csv).unwrap();
    let rows = parse_phasor_csv(&csv);
    assert_eq!(rows.len(), 4 * 5);
    let h2: Vec<f64> = rows.iter().filter(|r| r.1 == 2).map(|r| r.2).collect();
    assert_eq!(h2.len(), 4);
    assert!(h2.windows(2).all(|w| w[1] >= w[0]), "{h2:?}");
    assert!(rows.iter().filter(|r| r.1 == 1).all(|r| (r.2 - 1.0).abs() < 1e-12));
}

#[test]
fn zero_gain_gives_a_pure_fundamental() {
    let layout = cavity_preset(Profile::Ci, 16_000.0).unwrap();
    let settings = CharacterizeSettings { gain_factors: vec![0.0], ..CharacterizeSettings::default() };
    let ch = characterize(&layout.cavity, Cell::new(55, 25), &settings).unwrap();
    let p = &ch.points[0].phasors;
    assert_eq!(p.phasors.len(), 5);
    assert!((p.phasors[0].norm() - 1.0).abs() < 1e-12);
    for m in 2..=5 {
        assert!(p.level_db(m) < -60.0, "harmonic {m}: {} dB", p.level_db(m));
    }
}

/// Least-squares line through (ζ, sinc ζ) on the training inputs, scored
/// on the test inputs: the best any readout linear in ζ can do.
fn affine_oracle(train: &[f64], test: &[f64]) -> f64 {
    let x = DMatrix::from_fn(train.len(), 2, |i, j| if j == 0 { 1.0 } else { train[i] });
    let y = DVector::from_iterator(train.len(), train.iter().map(|&z| sinc(z)));
    let coef = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
    let se: f64 = test.iter().map(|&z| (coef[0] + coef[1] * z - sinc(z)).powi(2)).sum();
    (se / test.len() as f64).sqrt()
}

#[test]
fn linear_pipeline_cannot_fit_sinc() {
    let layout = cavity_preset(Profile::Ci, 16_000.0).unwrap();
    let settings = SincSettings {
        task: SincTask { n_train: 100, n_test: 20, ..SincTask::default() },
        feature_kind: FeatureKind::ReIm,
        ..SincSettings::default()
    };
    let ctx = SincContext::new(&layout, &settings).unwrap();
    let (train, test) = settings.task.inputs().unwrap();
    let off = layout.linear().scatterers;
    let tx = ctx.features(&train, &off, 0).unwrap();
    let sx = ctx.features(&test, &off, train.len()).unwrap();
    let ty = DVector::from_iterator(train.len(), train.iter().map(|&z| sinc(z)));
    let sy = DVector::from_iterator(test.len(), test.iter().map(|&z| sinc(z)));
    let (_, _, rmse) = fit_and_score(&tx, &ty, &sx, &sy, &settings.lambdas).unwrap();
    let oracle = affine_oracle(&train, &test);
    assert!(rmse >= 0.2, "linear test RMSE {rmse}");
    assert!(rmse >= oracle - 0.02, "RMSE {rmse} beats the best affine fit {oracle}");
}

#[test]
fn shuffled_vowel_labels_fall_to_chance() {
    let data = default_synthetic_corpus();
    let layout = cavity_preset(Profile::Ci, 16_000.0).unwrap();
    let settings = VowelSettings::default();
    let features = extract_features(&data, &layout, &settings, Mode::Digital, None).unwrap();
    let real = evaluate(&data, &features, &settings, 7, 1).unwrap().metrics.accuracy;
    let mut labels = data.labels();
    labels.shuffle(&mut rng(21));
    let null = evaluate_with_labels(&data, &features, &labels, &settings, 7, 1).unwrap().metrics.accuracy;
    assert!(real > 0.6, "real labels {real}");
    assert!(null < 0.5, "shuffled labels {null}");
}
