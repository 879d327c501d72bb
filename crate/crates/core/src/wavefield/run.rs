use serde::{Deserialize, Serialize};

use crate::error::{Error, InstabilityKind, Result};
use crate::scatterers::{feedback, DcBlocker, ScattererSpec};
use crate::wavefield::cavity::{derive_timestep, steps_per_sample, CavitySpec, Cell};
use crate::wavefield::solver::{Medium, ReservoirState};

/// A uniformly sampled signal. Values between samples are linearly
/// interpolated; the signal is zero outside its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Self {
        Self { samples, sample_rate_hz }
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Self {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 || self.samples.is_empty() {
            return 0.0;
        }
        let x = t * self.sample_rate_hz;
        let k = x.floor() as usize;
        if k + 1 >= self.samples.len() {
            return if k + 1 == self.samples.len() && x == k as f64 { self.samples[k] } else { 0.0 };
        }
        let frac = x - k as f64;
        self.samples[k] + frac * (self.samples[k + 1] - self.samples[k])
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.samples.iter().map(|x| x * factor).collect(), self.sample_rate_hz)
    }
}

pub(crate) fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub position: Cell,
    /// Source term in Pa/s².
    pub waveform: Waveform,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub position: Cell,
    pub label: String,
}

impl ProbeSpec {
    pub fn new(position: Cell, label: impl Into<String>) -> Self {
        Self { position, label: label.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub label: String,
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl ProbeRecord {
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// RMS about the mean, ignoring any static pressure offset.
    pub fn ac_rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let mean = self.samples.iter().sum::<f64>() / self.samples.len() as f64;
        (self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub cfl: f64,
    /// Cutoff of the DC blockers on the sensed pressure and on the feedback
    /// of active scatterers; 0 disables them.
    pub dc_block_hz: f64,
    /// Abort with an instability once any probe sample exceeds this.
    pub amplitude_limit: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { cfl: 0.9, dc_block_hz: 20.0, amplitude_limit: None }
    }
}

/// Number of probe samples a run of `duration_s` produces.
pub fn sample_count(duration_s: f64, sample_rate_hz: f64) -> usize {
    (duration_s * sample_rate_hz * (1.0 - 1e-12)).ceil() as usize
}

/// Simulates the cavity and returns one record per probe.
pub fn run(
    spec: &CavitySpec,
    sources: &[SourceSpec],
    probes: &[ProbeSpec],
    scatterers: &[ScattererSpec],
    duration_s: f64,
) -> Result<Vec<ProbeRecord>> {
    run_with(spec, sources, probes, scatterers, duration_s, &RunOptions::default())
}

pub fn run_with(
    spec: &CavitySpec,
    sources: &[SourceSpec],
    probes: &[ProbeSpec],
    scatterers: &[ScattererSpec],
    duration_s: f64,
    options: &RunOptions,
) -> Result<Vec<ProbeRecord>> {
    let dt = derive_timestep(spec, options.cfl)?;
    let medium = Medium::new(spec, dt)?;
    run_on(&medium, spec, sources, probes, scatterers, duration_s, options)
}

/// Like [`run_with`] on a prebuilt [`Medium`], which is reused across the
/// many runs of a benchmark.
pub fn run_on(
    medium: &Medium,
    spec: &CavitySpec,
    sources: &[SourceSpec],
    probes: &[ProbeSpec],
    scatterers: &[ScattererSpec],
    duration_s: f64,
    options: &RunOptions,
) -> Result<Vec<ProbeRecord>> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("duration {duration_s} must be positive")));
    }
    check_placements(spec, sources, probes, scatterers)?;
    let dt = medium.dt();
    let spp = steps_per_sample(spec, dt);
    if ((1.0 / (spec.sample_rate_hz * dt)) - spp as f64).abs() > 1e-3 * spp as f64 {
        return Err(Error::InvalidParameter(format!("time step {dt} does not divide the sample interval")));
    }
    let n_samples = sample_count(duration_s, spec.sample_rate_hz);
    let total_steps = ((duration_s / dt) * (1.0 - 1e-12)).ceil() as u64;

    let source_slots: Vec<usize> = sources.iter().map(|s| medium.slot(s.position)).collect();
    let scatterer_slots: Vec<usize> = scatterers.iter().map(|s| medium.slot(s.position)).collect();
    // (sensed pressure, feedback output) filters per scatterer.
    let mut blockers: Vec<(DcBlocker, DcBlocker)> = scatterers
        .iter()
        .map(|s| {
            let cutoff = if s.enabled { options.dc_block_hz } else { 0.0 };
            (DcBlocker::new(cutoff, dt), DcBlocker::new(cutoff, dt))
        })
        .collect();

    let mut records: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); probes.len()];
    let mut state = ReservoirState::for_cavity(spec);
    let mut injections: Vec<(usize, f64)> = Vec::with_capacity(sources.len() + scatterers.len());
    let limit = options.amplitude_limit.unwrap_or(f64::INFINITY);

    let record = |state: &ReservoirState, records: &mut Vec<Vec<f64>>| -> Result<()> {
        for (r, probe) in records.iter_mut().zip(probes) {
            let v = state.next_at(probe.position);
            if v.abs() > limit {
                return Err(Error::Instability { step_index: state.step_index, kind: InstabilityKind::AmplitudeLimit });
            }
            r.push(v);
        }
        Ok(())
    };

    record(&state, &mut records)?;
    let mut recorded = 1;
    for step in 0..total_steps {
        let t = step as f64 * dt;
        injections.clear();
        for (source, &slot) in sources.iter().zip(&source_slots) {
            let v = source.waveform.value_at(t - source.delay_s);
            if v != 0.0 {
                injections.push((slot, v));
            }
        }
        for ((scatterer, &slot), (sense, drive)) in scatterers.iter().zip(&scatterer_slots).zip(blockers.iter_mut()) {
            let p_front = sense.process(state.next_at(scatterer.position));
            let v = drive.process(feedback(p_front, scatterer));
            if v != 0.0 {
                injections.push((slot, v));
            }
        }
        medium.step(&mut state, &injections)?;
        if state.step_index.is_multiple_of(spp as u64) && recorded < n_samples {
            record(&state, &mut records)?;
            recorded += 1;
        }
    }
    Ok(probes
        .iter()
        .zip(records)
        .map(|(p, mut samples)| {
            samples.truncate(n_samples);
            ProbeRecord { label: p.label.clone(), samples, sample_rate_hz: spec.sample_rate_hz }
        })
        .collect())
}

fn check_placements(
    spec: &CavitySpec,
    sources: &[SourceSpec],
    probes: &[ProbeSpec],
    scatterers: &[ScattererSpec],
) -> Result<()> {
    for (k, s) in sources.iter().enumerate() {
        if !spec.is_interior(s.position) {
            return Err(Error::Placement(format!("source {k} at {} is not an interior cell", s.position)));
        }
        if s.delay_s < 0.0 || !s.delay_s.is_finite() {
            return Err(Error::Placement(format!("source {k} has invalid delay {}", s.delay_s)));
        }
        if s.waveform.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("source {k} waveform is not finite")));
        }
    }
    for p in probes {
        if !spec.is_interior(p.position) {
            return Err(Error::Placement(format!("probe '{}' at {} is not an interior cell", p.label, p.position)));
        }
    }
    for (k, s) in scatterers.iter().enumerate() {
        s.validate()?;
        if !spec.is_interior(s.position) {
            return Err(Error::Placement(format!("scatterer {k} at {} is not an interior cell", s.position)));
        }
        if let Some(src) = sources.iter().position(|src| src.position == s.position) {
            return Err(Error::Placement(format!("scatterer {k} shares cell {} with source {src}", s.position)));
        }
    }
    Ok(())
}
