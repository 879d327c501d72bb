//! Impulse responses of the linear cavity: arrival times, decay rates and
//! how different the probes are from each other.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::benchmarks::layout::Layout;
use crate::error::{invalid, Result};
use crate::scatterers::DcBlocker;
use crate::wavefield::{derive_timestep, run_with, steps_per_sample, RunOptions, SourceSpec, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemorySettings {
    pub pulse_width_s: f64,
    /// Peak of the Hann pulse (Pa/s²).
    pub amplitude: f64,
    pub duration_s: f64,
    pub source_index: usize,
    /// Onset is the first sample of the high-passed response above this
    /// fraction of its peak.
    pub onset_threshold: f64,
    /// Fitting starts this long after the onset.
    pub fit_delay_s: f64,
    pub block_s: f64,
    /// Cutoff of the high-pass that removes the slow uniform-mode drift
    /// before fitting.
    pub highpass_hz: f64,
    pub run: RunOptions,
}

impl Default for MemorySettings {
    fn default() -> Self {
        Self {
            pulse_width_s: 1e-4,
            amplitude: 1e9,
            duration_s: 1.0,
            source_index: 0,
            onset_threshold: 0.05,
            fit_delay_s: 0.05,
            block_s: 0.01,
            highpass_hz: 20.0,
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse {
    pub label: String,
    pub distance_m: f64,
    pub onset_s: f64,
    /// Straight-line travel time from the source.
    pub expected_onset_s: f64,
    /// Fitted field decay rate (1/s).
    pub decay_rate: f64,
    /// Field e-folding time `1/decay_rate`; infinite when nothing decays.
    pub decay_time_s: f64,
    pub t60_s: f64,
    /// Set when the e-folding time is not shorter than the run.
    pub non_decaying: bool,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryProbe {
    pub sample_rate_hz: f64,
    /// Every `record_stride`-th sample lands on the cavity's own sample grid.
    pub record_stride: usize,
    pub pulse_width_s: f64,
    /// Half the mean damping coefficient: the rate every mode decays at.
    pub expected_rate: f64,
    pub responses: Vec<ImpulseResponse>,
    /// Largest normalised cross-correlation over all probe pairs and lags,
    /// computed on the high-passed responses.
    pub max_cross_correlation: f64,
}

/// Hann pulse of `width` seconds sampled at `rate`.
fn hann_pulse(width: f64, amplitude: f64, rate: f64) -> Vec<f64> {
    let n = (width * rate).round().max(2.0) as usize;
    (0..=n).map(|k| amplitude * (0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())).collect()
}

/// First time `|x|` reaches `fraction` of its peak, interpolated between
/// samples.
pub fn onset_time(x: &[f64], rate: f64, fraction: f64) -> Option<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return None;
    }
    let level = fraction * peak;
    let k = x.iter().position(|v| v.abs() >= level)?;
    if k == 0 {
        return Some(0.0);
    }
    let (a, b) = (x[k - 1].abs(), x[k].abs());
    let frac = if b > a { (level - a) / (b - a) } else { 0.0 };
    Some((k as f64 - 1.0 + frac) / rate)
}

/// Field decay rate from a least-squares line through the log block
/// energies of `x` (already restricted to the fitting range).
pub fn fit_decay_rate(x: &[f64], rate: f64, block_s: f64) -> Option<f64> {
    let block = ((block_s * rate).round() as usize).max(1);
    let points: Vec<(f64, f64)> = x
        .chunks_exact(block)
        .enumerate()
        .filter_map(|(k, c)| {
            let e = c.iter().map(|v| v * v).sum::<f64>() / block as f64;
            (e > 0.0).then(|| ((k as f64 + 0.5) * block as f64 / rate, e.ln()))
        })
        .collect();
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (mt, me) = points.iter().fold((0.0, 0.0), |(a, b), (t, e)| (a + t / n, b + e / n));
    let (sxy, sxx) =
        points.iter().fold((0.0, 0.0), |(sxy, sxx), (t, e)| (sxy + (t - mt) * (e - me), sxx + (t - mt) * (t - mt)));
    // Energy falls twice as fast as the field.
    Some(-0.5 * sxy / sxx)
}

/// Largest `|Σ a[k] b[k+lag]| / (‖a‖‖b‖)` over all lags.
pub fn max_normalized_xcorr(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let len = (a.len() + b.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let pad = |x: &[f64]| {
        let mut v: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        v.resize(len, Complex64::new(0.0, 0.0));
        v
    };
    let (mut fa, mut fb) = (pad(a), pad(b));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    inv.process(&mut prod);
    let peak = prod.iter().fold(0.0f64, |m, v| m.max(v.re.abs()));
    peak / len as f64 / (na * nb)
}

/// Fires a short pulse from one source through the linear cavity and
/// characterises every probe. Records are taken at every solver step.
pub fn run_memory_probe(layout: &Layout, settings: &MemorySettings) -> Result<MemoryProbe> {
    let base = &layout.cavity;
    let dt = derive_timestep(base, settings.run.cfl)?;
    if !(settings.pulse_width_s >= 2.0 * dt) {
        return Err(invalid(format!(
            "pulse width {} s is shorter than two time steps ({dt} s)",
            settings.pulse_width_s
        )));
    }
    let source = *layout
        .sources
        .get(settings.source_index)
        .ok_or_else(|| invalid(format!("no source {}", settings.source_index)))?;
    let mut cavity = base.clone();
    cavity.sample_rate_hz = 1.0 / dt;
    let rate = cavity.sample_rate_hz;
    let pulse = SourceSpec {
        position: source,
        waveform: Waveform::new(hann_pulse(settings.pulse_width_s, settings.amplitude, rate), rate),
        delay_s: 0.0,
    };
    let linear = layout.linear();
    let records = run_with(&cavity, &[pulse], &layout.probes, &linear.scatterers, settings.duration_s, &settings.run)?;

    let fluid: Vec<f64> = cavity.damping_map.iter().zip(&cavity.solid).filter(|(_, &s)| !s).map(|(&d, _)| d).collect();
    let expected_rate = 0.5 * fluid.iter().sum::<f64>() / fluid.len().max(1) as f64;
    let c = cavity.c_at(source);

    let mut responses = Vec::with_capacity(records.len());
    let mut filtered_all = Vec::with_capacity(records.len());
    for (record, probe) in records.iter().zip(&layout.probes) {
        let distance_m = source.distance_m(&probe.position, cavity.dx);
        let mut hp1 = DcBlocker::new(settings.highpass_hz, 1.0 / rate);
        let mut hp2 = DcBlocker::new(settings.highpass_hz, 1.0 / rate);
        let filtered: Vec<f64> = record.samples.iter().map(|&v| hp2.process(hp1.process(v))).collect();
        // Image sources of a net-positive pulse pile up, so the raw peak comes
        // late and dwarfs the direct arrival; detect on the filtered signal.
        let onset_s = onset_time(&filtered, rate, settings.onset_threshold).unwrap_or(f64::NAN);
        let start = (((onset_s.max(0.0) + settings.fit_delay_s) * rate).round() as usize).min(filtered.len());
        let decay_rate = fit_decay_rate(&filtered[start..], rate, settings.block_s).unwrap_or(0.0);
        let decay_time_s = if decay_rate > 0.0 { 1.0 / decay_rate } else { f64::INFINITY };
        responses.push(ImpulseResponse {
            label: probe.label.clone(),
            distance_m,
            onset_s,
            expected_onset_s: distance_m / c,
            decay_rate,
            decay_time_s,
            t60_s: 3.0 * 10f64.ln() * decay_time_s,
            non_decaying: decay_time_s >= settings.duration_s,
            samples: record.samples.clone(),
        });
        filtered_all.push(filtered);
    }
    // Compared after the high-pass: the pulse leaves every probe with the
    // same offset in the uniform mode, which would dominate otherwise.
    let mut max_cross_correlation = 0.0f64;
    for i in 0..responses.len() {
        for j in i + 1..responses.len() {
            max_cross_correlation = max_cross_correlation.max(max_normalized_xcorr(&filtered_all[i], &filtered_all[j]));
        }
    }
    Ok(MemoryProbe {
        sample_rate_hz: rate,
        record_stride: steps_per_sample(base, dt),
        pulse_width_s: settings.pulse_width_s,
        expected_rate,
        responses,
        max_cross_correlation,
    })
}
