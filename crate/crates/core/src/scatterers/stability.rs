use std::f64::consts::PI;

use crate::error::Result;
use crate::scatterers::ScattererSpec;
use crate::wavefield::{
    derive_timestep, run_on, CavitySpec, Cell, Medium, ProbeRecord, ProbeSpec, RunOptions, SourceSpec, Waveform,
};

/// Bisection for the largest feedback gain a single scatterer tolerates
/// under a sinusoidal drive.
///
/// A gain counts as stable when the run completes without a non-finite
/// field and the RMS about the mean at the scatterer stays below
/// `rms_factor` times that of the same run with the control gain at zero.
#[derive(Debug, Clone)]
pub struct StabilitySearch {
    pub cavity: CavitySpec,
    pub source: Cell,
    pub duration_s: f64,
    pub rms_factor: f64,
    /// Bisection stops once the bracket is this narrow relative to its
    /// lower end.
    pub tolerance: f64,
    pub options: RunOptions,
}

impl StabilitySearch {
    pub fn new(cavity: CavitySpec) -> Self {
        let source = Cell::new(2, cavity.ny() / 2);
        Self { cavity, source, duration_s: 2.0, rms_factor: 100.0, tolerance: 2e-3, options: RunOptions::default() }
    }

    pub fn with_source(mut self, source: Cell) -> Self {
        self.source = source;
        self
    }

    pub fn with_duration(mut self, duration_s: f64) -> Self {
        self.duration_s = duration_s;
        self
    }

    fn drive(&self, amplitude: f64, fundamental_hz: f64) -> SourceSpec {
        let fs = self.cavity.sample_rate_hz;
        let n = (self.duration_s * fs).ceil() as usize + 2;
        let samples = (0..n).map(|k| amplitude * (2.0 * PI * fundamental_hz * k as f64 / fs).sin()).collect();
        SourceSpec { position: self.source, waveform: Waveform::new(samples, fs), delay_s: 0.0 }
    }

    /// Runs the drive with one scatterer and returns the record at its cell.
    pub fn response(
        &self,
        medium: &Medium,
        scatterer: &ScattererSpec,
        drive_amplitude: f64,
        fundamental_hz: f64,
        amplitude_limit: Option<f64>,
    ) -> Result<ProbeRecord> {
        let probe = ProbeSpec::new(scatterer.position, "front");
        let options = RunOptions { amplitude_limit, ..self.options };
        let mut records = run_on(
            medium,
            &self.cavity,
            &[self.drive(drive_amplitude, fundamental_hz)],
            &[probe],
            std::slice::from_ref(scatterer),
            self.duration_s,
            &options,
        )?;
        Ok(records.remove(0))
    }

    pub fn search(&self, template: &ScattererSpec, drive_amplitude: f64, fundamental_hz: f64) -> Result<f64> {
        template.validate()?;
        let dt = derive_timestep(&self.cavity, self.options.cfl)?;
        let medium = Medium::new(&self.cavity, dt)?;
        let linear = template.clone().with_gain(0.0);
        let reference = match self.response(&medium, &linear, drive_amplitude, fundamental_hz, None) {
            Ok(r) => r,
            Err(e) if e.is_instability() => return Ok(0.0),
            Err(e) => return Err(e),
        };
        let ref_rms = reference.ac_rms();
        let ref_peak = reference.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(ref_rms > 0.0) {
            return Ok(0.0);
        }
        let limit = Some(10.0 * self.rms_factor * ref_peak);
        let stable = |gain: f64| -> Result<bool> {
            let spec = template.clone().with_gain(gain);
            match self.response(&medium, &spec, drive_amplitude, fundamental_hz, limit) {
                Ok(r) => Ok(r.ac_rms() < self.rms_factor * ref_rms),
                Err(e) if e.is_instability() => Ok(false),
                Err(e) => Err(e),
            }
        };

        // Gain at which the feedback at the reference amplitude is a small
        // fraction of the local stencil coupling.
        let c = self.cavity.c_at(template.position);
        let start = 1e-2 * c * c / (self.cavity.dx * self.cavity.dx) * ref_rms.powf(1.0 - template.exponent_n);
        bisect_gain(stable, start, self.tolerance)
    }
}

/// Brackets the edge of the stable region by doubling or halving from
/// `start`, then bisects to `tolerance` and floors to two significant
/// figures.
pub(crate) fn bisect_gain(mut stable: impl FnMut(f64) -> Result<bool>, start: f64, tolerance: f64) -> Result<f64> {
    let (mut lo, mut hi);
    if stable(start)? {
        lo = start;
        hi = 2.0 * start;
        let mut doublings = 0;
        while stable(hi)? {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Ok(floor_significant(lo, 2));
            }
        }
    } else {
        hi = start;
        lo = 0.5 * start;
        let mut halvings = 0;
        while !stable(lo)? {
            hi = lo;
            lo *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Ok(0.0);
            }
        }
    }
    while hi - lo > tolerance * lo {
        let mid = 0.5 * (lo + hi);
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(floor_significant(lo, 2))
}

/// Stability bound of a whole set of scatterers sharing one gain, under
/// several drives at once.
#[derive(Debug, Clone)]
pub struct JointStabilitySearch<'a> {
    pub medium: &'a Medium,
    pub cavity: &'a CavitySpec,
    pub probes: &'a [ProbeSpec],
    pub duration_s: f64,
    pub rms_factor: f64,
    pub tolerance: f64,
    pub options: RunOptions,
}

impl JointStabilitySearch<'_> {
    /// Largest common gain for which every drive keeps every probe below
    /// `rms_factor` times its zero-gain RMS about the mean.
    pub fn search(&self, templates: &[ScattererSpec], drives: &[Vec<SourceSpec>]) -> Result<f64> {
        let first = templates.first().ok_or_else(|| crate::error::invalid("no scatterers to calibrate"))?;
        for t in templates {
            t.validate()?;
        }
        let with_gain = |g: f64| -> Vec<ScattererSpec> { templates.iter().map(|t| t.clone().with_gain(g)).collect() };
        let run_all = |g: f64, limit: Option<f64>| -> Result<Vec<Vec<ProbeRecord>>> {
            let options = RunOptions { amplitude_limit: limit, ..self.options };
            let scatterers = with_gain(g);
            drives
                .iter()
                .map(|d| run_on(self.medium, self.cavity, d, self.probes, &scatterers, self.duration_s, &options))
                .collect()
        };
        let reference = run_all(0.0, None)?;
        let ref_rms: Vec<Vec<f64>> = reference.iter().map(|recs| recs.iter().map(|r| r.ac_rms()).collect()).collect();
        let peak = reference.iter().flatten().flat_map(|r| r.samples.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = ref_rms.iter().flatten().copied().fold(0.0, f64::max);
        if !(scale > 0.0) {
            return Ok(0.0);
        }
        let stable = |g: f64| -> Result<bool> {
            match run_all(g, Some(10.0 * self.rms_factor * peak)) {
                Ok(runs) => Ok(runs.iter().zip(&ref_rms).all(|(recs, refs)| {
                    recs.iter().zip(refs).all(|(r, &base)| r.ac_rms() < self.rms_factor * base.max(1e-3 * scale))
                })),
                Err(e) if e.is_instability() => Ok(false),
                Err(e) => Err(e),
            }
        };
        let c = self.cavity.c_at(first.position);
        let start = 1e-3 * c * c / (self.cavity.dx * self.cavity.dx) * scale.powf(1.0 - first.exponent_n);
        bisect_gain(stable, start, self.tolerance)
    }
}

/// Largest stable gain for `spec_template` in `cavity` under a sinusoidal
/// drive of `drive_amplitude` (source-term units) at `fundamental_hz`.
pub fn max_stable_gain(
    spec_template: &ScattererSpec,
    cavity: &CavitySpec,
    drive_amplitude: f64,
    fundamental_hz: f64,
) -> Result<f64> {
    let mut search = StabilitySearch::new(cavity.clone());
    if search.source == spec_template.position {
        search.source = Cell::new(3, cavity.ny() / 2 + 1);
    }
    search.search(spec_template, drive_amplitude, fundamental_hz)
}

/// Rounds a positive value down to `digits` significant figures.
pub(crate) fn floor_significant(x: f64, digits: i32) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - x.log10().floor() as i32);
    let y = (x * scale * (1.0 + 1e-12)).floor() / scale;
    if y > x {
        (x * scale).floor() / scale
    } else {
        y
    }
}
