//! Reference computations shared by the integration tests and the
//! acceptance run. Nothing here calls into the solver's stencil code.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cavity_rc_core::readout::{compose_weights, FeatureKind, FourierSelector, ModelKind, ReadoutModel};
use cavity_rc_core::wavefield::{derive_timestep, Medium, ReservoirState, RunOptions};
use cavity_rc_core::{CavitySpec, ProbeRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// max |a - b| / max |b|.
pub fn rel_max_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

// ---------------------------------------------------------------- d'Alembert

pub struct StripResult {
    pub rel_l2: f64,
    pub steps: usize,
    pub nx: usize,
    pub seconds: f64,
}

/// A Gaussian released from rest in a long, narrow strip. The field is
/// constant across the strip, so it must follow the 1D solution
/// `(f(x - ct) + f(x + ct)) / 2` until the halves reach the end walls.
pub fn dalembert_strip(dx: f64, sigma_m: f64, travel_m: f64) -> StripResult {
    let started = std::time::Instant::now();
    let c = 343.0;
    let length = 4.0;
    let spec = CavitySpec::uniform(length, 8.0 * dx, dx, c, 0.0, 16_000.0).unwrap();
    let (nx, ny) = (spec.nx(), spec.ny());
    let dt = derive_timestep(&spec, RunOptions::default().cfl).unwrap();
    let centre = length / 2.0;
    let f = |x: f64| (-0.5 * ((x - centre) / sigma_m).powi(2)).exp();
    let exact = |x: f64, t: f64| 0.5 * (f(x - c * t) + f(x + c * t));
    let x_of = |i: usize| (i as f64 + 0.5) * dx;
    let field = |t: f64| -> Vec<f64> { (0..ny).flat_map(|_| (0..nx).map(move |i| exact(x_of(i), t))).collect() };

    let medium = Medium::new(&spec, dt).unwrap();
    let mut state = ReservoirState::from_fields(nx, ny, &field(0.0), &field(-dt)).unwrap();
    let steps = (travel_m / (c * dt)).round() as usize;
    for _ in 0..steps {
        medium.step(&mut state, &[]).unwrap();
    }
    let t = steps as f64 * dt;
    let got = state.p_next();
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..ny {
        for i in 0..nx {
            let e = exact(x_of(i), t);
            num += (got[j * nx + i] - e).powi(2);
            den += e * e;
        }
    }
    StripResult { rel_l2: (num / den).sqrt(), steps, nx, seconds: started.elapsed().as_secs_f64() }
}

// ---------------------------------------------------------------- Q matrix

/// The one-step update as an explicit `2N × 2N` matrix acting on
/// `[p^n; p^{n-1}]`, built straight from the cavity maps.
pub fn q_matrix(spec: &CavitySpec, dt: f64) -> DMatrix<f64> {
    let (nx, ny) = (spec.nx(), spec.ny());
    let n = nx * ny;
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..ny {
        for i in 0..nx {
            let u = j * nx + i;
            // Lower half copies p^n into the p^{n-1} slot.
            q[(n + u, u)] = 1.0;
            if spec.solid[u] {
                continue;
            }
            let courant2 = (dt * spec.c_map[u] / spec.dx).powi(2);
            let loss = dt * spec.damping_map[u];
            q[(u, u)] += 2.0 - loss;
            q[(u, n + u)] += loss - 1.0;
            let mut nbrs = Vec::new();
            if i > 0 {
                nbrs.push(u - 1);
            }
            if i + 1 < nx {
                nbrs.push(u + 1);
            }
            if j > 0 {
                nbrs.push(u - nx);
            }
            if j + 1 < ny {
                nbrs.push(u + nx);
            }
            // Walls and solids pass no flux, so they drop out of the sum.
            for v in nbrs.into_iter().filter(|&v| !spec.solid[v]) {
                q[(u, v)] += courant2;
                q[(u, u)] -= courant2;
            }
        }
    }
    q
}

/// Largest deviation between stepping and repeated Q products, relative
/// to the largest field value seen.
pub fn q_matrix_mismatch(steps: usize, seed: u64) -> f64 {
    let mut spec = CavitySpec::uniform(0.32, 0.32, 0.02, 343.0, 3.0, 16_000.0).unwrap();
    let (nx, ny) = (spec.nx(), spec.ny());
    assert_eq!((nx, ny), (16, 16));
    let mut r = rng(seed);
    for j in 0..ny {
        for i in 0..nx {
            let u = j * nx + i;
            spec.c_map[u] = 343.0 * r.gen_range(0.7..1.0);
            spec.damping_map[u] = r.gen_range(0.0..40.0);
        }
    }
    for (i, j) in [(6, 6), (6, 7), (7, 6), (7, 7), (12, 3)] {
        spec.solid[j * nx + i] = true;
    }
    let dt = derive_timestep(&spec, 0.9).unwrap();
    let n = nx * ny;
    let mask = |v: &mut Vec<f64>| {
        for (x, s) in v.iter_mut().zip(&spec.solid) {
            if *s {
                *x = 0.0;
            }
        }
    };
    let mut a: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut b: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    mask(&mut a);
    mask(&mut b);

    let medium = Medium::new(&spec, dt).unwrap();
    let mut state = ReservoirState::from_fields(nx, ny, &a, &b).unwrap();
    let q = q_matrix(&spec, dt);
    let mut s = DVector::from_iterator(2 * n, a.iter().chain(&b).copied());
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for _ in 0..steps {
        medium.step(&mut state, &[]).unwrap();
        s = &q * s;
        let stepped = state.p_next();
        for (x, y) in stepped.iter().zip(s.rows(0, n).iter()) {
            worst = worst.max((x - y).abs());
            scale = scale.max(y.abs());
        }
    }
    worst / scale
}

// ---------------------------------------------------------------- energy

/// Energy drift over `steps` steps after a short pulse has been injected
/// into a lossless rigid cavity: `max |E_k - E_0| / E_0`.
pub fn energy_drift(steps: usize) -> f64 {
    let spec = CavitySpec::uniform(1.0, 0.5, 0.02, 343.0, 0.0, 16_000.0).unwrap();
    let dt = derive_timestep(&spec, 0.9).unwrap();
    let medium = Medium::new(&spec, dt).unwrap();
    let mut state = ReservoirState::for_cavity(&spec);
    let slot = medium.slot(cavity_rc_core::Cell::new(11, 7));
    let pulse = 24;
    for k in 0..pulse {
        let v = 1e6 * (PI * k as f64 / pulse as f64).sin().powi(2);
        medium.step(&mut state, &[(slot, v)]).unwrap();
    }
    let e0 = medium.total_energy(&state);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        medium.step(&mut state, &[]).unwrap();
        worst = worst.max((medium.total_energy(&state) - e0).abs());
    }
    worst / e0
}

// ---------------------------------------------------------------- DFT

/// Textbook DFT at the given bins with exact integer phase reduction.
pub fn brute_dft(x: &[f64], bins: &[usize]) -> Vec<Complex64> {
    let n = x.len();
    bins.iter()
        .map(|&j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &v) in x.iter().enumerate() {
                let phase = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                acc += v * Complex64::new(phase.cos(), phase.sin());
            }
            acc
        })
        .collect()
}

pub fn random_record(r: &mut ChaCha8Rng, label: &str, len: usize, rate: f64) -> ProbeRecord {
    ProbeRecord {
        label: label.into(),
        samples: (0..len).map(|_| r.gen_range(-1.0..1.0)).collect(),
        sample_rate_hz: rate,
    }
}

/// Worst absolute error of `fourier_features` against [`brute_dft`] over
/// two probes and every bin of a window of `n` samples starting at sample 3.
pub fn dft_mismatch(n: usize, seed: u64) -> f64 {
    let rate = 1000.0;
    let mut r = rng(seed);
    let records = vec![random_record(&mut r, "a", n + 7, rate), random_record(&mut r, "b", n + 7, rate)];
    let bins: Vec<usize> = (0..n).collect();
    let selector = FourierSelector::new(3.0 / rate, n, bins.clone()).unwrap();
    let got = cavity_rc_core::readout::fourier_features(&records, &selector).unwrap();
    let mut worst = 0.0f64;
    for (m, rec) in records.iter().enumerate() {
        let want = brute_dft(&rec.samples[3..3 + n], &bins);
        for (b, w) in want.iter().enumerate() {
            worst = worst.max((got[(b, m)] - w).norm());
        }
    }
    worst
}

// ---------------------------------------------------------------- readout

pub fn random_linear_model(r: &mut ChaCha8Rng, n_probes: usize, window: usize, outputs: usize) -> ReadoutModel {
    let mut bins: Vec<usize> = (0..window).filter(|_| r.gen_bool(0.3)).collect();
    if bins.is_empty() {
        bins.push(1);
    }
    let selector = FourierSelector::new(r.gen_range(0..5) as f64 / 1000.0, window, bins).unwrap();
    let d = n_probes * selector.n_bins() * 2;
    ReadoutModel {
        selector,
        sample_rate_hz: 1000.0,
        n_probes,
        feature_kind: FeatureKind::ReIm,
        band_norms: None,
        pca: None,
        weights: DMatrix::from_fn(outputs, d, |_, _| r.gen_range(-1.0..1.0)),
        bias: DVector::from_fn(outputs, |_, _| r.gen_range(-1.0..1.0)),
        kind: ModelKind::Ridge,
        seed: 0,
    }
}

/// Worst relative gap between the staged readout and its composed operator
/// over `trials` random models and inputs.
pub fn composition_mismatch(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let probes = r.gen_range(1..5);
        let window = r.gen_range(8..96);
        let outputs = r.gen_range(1..4);
        let model = random_linear_model(&mut r, probes, window, outputs);
        let records: Vec<ProbeRecord> =
            (0..probes).map(|m| random_record(&mut r, &format!("p{m}"), window + 10, 1000.0)).collect();
        let staged = model.scores(&records).unwrap();
        let flat = compose_weights(&model).unwrap().apply(&records).unwrap();
        worst = worst.max((&staged - &flat).norm() / staged.norm());
    }
    worst
}
