//! Turning task inputs into source waveforms.
//!
//! Scalars are frequency multiplexed through a fixed random mask: source
//! `m` plays `Σ_n ζ·s[n][m]·sin(2π f_n t)`. Audio is copied to every source
//! with a growing delay.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::wavefield::{Cell, SourceSpec, Waveform};

/// Random input mask with its carrier frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMask {
    /// `s_in[n][m]`: weight of carrier `n` on source `m`.
    pub s_in: Vec<Vec<f64>>,
    pub omega_hz: Vec<f64>,
    pub seed: u64,
    /// Peak source term (Pa/s²) after normalisation.
    pub amplitude_scale: f64,
}

/// Ten carriers, 400 Hz to 490 Hz in 10 Hz steps.
pub fn default_carriers() -> Vec<f64> {
    (0..10).map(|k| 400.0 + 10.0 * k as f64).collect()
}

impl EncodingMask {
    /// Draws the mask i.i.d. uniform in [-1, 1] from `seed`.
    pub fn random(n_sources: usize, omega_hz: Vec<f64>, seed: u64, amplitude_scale: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s_in = (0..omega_hz.len()).map(|_| (0..n_sources).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
        let mask = Self { s_in, omega_hz, seed, amplitude_scale };
        mask.check_shape()?;
        Ok(mask)
    }

    pub fn n_inputs(&self) -> usize {
        self.omega_hz.len()
    }

    pub fn n_sources(&self) -> usize {
        self.s_in.first().map_or(0, Vec::len)
    }

    fn check_shape(&self) -> Result<()> {
        if self.omega_hz.is_empty() || self.n_sources() == 0 {
            return Err(invalid("mask needs at least one carrier and one source"));
        }
        if self.s_in.len() != self.omega_hz.len() || self.s_in.iter().any(|r| r.len() != self.n_sources()) {
            return Err(Error::Dimension(format!(
                "mask rows must be {} carriers of {} sources",
                self.omega_hz.len(),
                self.n_sources()
            )));
        }
        if self.s_in.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("mask entries must be finite"));
        }
        if !(self.amplitude_scale > 0.0 && self.amplitude_scale.is_finite()) {
            return Err(invalid(format!("amplitude scale {} must be positive", self.amplitude_scale)));
        }
        if self.omega_hz[0] <= 0.0 || self.omega_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("carrier frequencies must be positive and strictly increasing"));
        }
        Ok(())
    }

    /// Shape checks plus the headroom rule: every carrier below a third of
    /// the Nyquist frequency.
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        self.check_shape()?;
        let limit = sample_rate_hz / 6.0;
        if let Some(f) = self.omega_hz.iter().find(|&&f| f >= limit) {
            return Err(invalid(format!("carrier {f} Hz is not below Nyquist/3 = {limit} Hz at {sample_rate_hz} Hz")));
        }
        Ok(())
    }

    /// Largest peak any source can reach for |ζ| = 1 before normalisation.
    fn unit_bound(&self) -> f64 {
        (0..self.n_sources()).map(|m| self.s_in.iter().map(|row| row[m].abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// CSV with one row per carrier (`omega_hz,s_0,...`), preceded by
    /// `#`-prefixed `key=value` metadata lines.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# amplitude_scale={:e}", self.amplitude_scale)?;
        write!(out, "omega_hz")?;
        for m in 0..self.n_sources() {
            write!(out, ",s_{m}")?;
        }
        writeln!(out)?;
        for (f, row) in self.omega_hz.iter().zip(&self.s_in) {
            write!(out, "{f:.17e}")?;
            for v in row {
                write!(out, ",{v:.17e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut seed = None;
        let mut amplitude_scale = None;
        let mut omega_hz = Vec::new();
        let mut s_in = Vec::new();
        let mut header_seen = false;
        for line in input.lines() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) =
                    meta.trim().split_once('=').ok_or_else(|| Error::Format(format!("bad metadata line '{line}'")))?;
                let bad = |_| Error::Format(format!("bad value in '{line}'"));
                match k.trim() {
                    "seed" => seed = Some(v.trim().parse::<u64>().map_err(|_| bad(()))?),
                    "amplitude_scale" => amplitude_scale = Some(v.trim().parse::<f64>().map_err(|_| bad(()))?),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("mask row '{line}': {e}")))?;
            if vals.len() < 2 {
                return Err(Error::Format(format!("mask row '{line}' has no source columns")));
            }
            omega_hz.push(vals[0]);
            s_in.push(vals[1..].to_vec());
        }
        let mask = Self {
            s_in,
            omega_hz,
            seed: seed.ok_or_else(|| Error::Format("mask CSV lacks a seed line".into()))?,
            amplitude_scale: amplitude_scale
                .ok_or_else(|| Error::Format("mask CSV lacks an amplitude_scale line".into()))?,
        };
        mask.check_shape()?;
        Ok(mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Each waveform set is scaled so its loudest source peaks at the
    /// amplitude scale. Erases the overall input magnitude.
    Peak,
    /// One constant for all inputs: the worst case over |ζ| ≤ π maps to the
    /// amplitude scale, so the input magnitude survives.
    #[default]
    Global,
}

/// Waveforms and onset delays for a set of sources.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionPlan {
    pub waveforms: Vec<Waveform>,
    pub delays_s: Vec<f64>,
    pub normalization: Normalization,
    /// Set when a scalar input lay outside the configured range.
    pub extrapolated: bool,
}

impl InjectionPlan {
    pub fn len(&self) -> usize {
        self.waveforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveforms.is_empty()
    }

    /// Attaches the waveforms to source cells, in order.
    pub fn sources(&self, positions: &[Cell]) -> Result<Vec<SourceSpec>> {
        if positions.len() != self.len() {
            return Err(Error::Dimension(format!(
                "plan has {} waveforms but {} source positions were given",
                self.len(),
                positions.len()
            )));
        }
        Ok(positions
            .iter()
            .zip(self.waveforms.iter().zip(&self.delays_s))
            .map(|(&position, (w, &delay_s))| SourceSpec { position, waveform: w.clone(), delay_s })
            .collect())
    }
}

/// Settings shared by every scalar of a regression task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarEncoding {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub normalization: Normalization,
    /// Raised-cosine fade-in length; 0 starts the carriers abruptly.
    #[serde(default)]
    pub ramp_s: f64,
    #[serde(default = "default_zeta_range")]
    pub zeta_range: (f64, f64),
}

fn default_zeta_range() -> (f64, f64) {
    (-PI, PI)
}

impl ScalarEncoding {
    pub fn new(duration_s: f64, sample_rate_hz: f64) -> Self {
        Self {
            duration_s,
            sample_rate_hz,
            normalization: Normalization::Global,
            ramp_s: 0.0,
            zeta_range: default_zeta_range(),
        }
    }
}

/// Raised-cosine fade-in gain at time `t`.
fn ramp_gain(t: f64, ramp_s: f64) -> f64 {
    if ramp_s <= 0.0 || t >= ramp_s {
        1.0
    } else {
        0.5 - 0.5 * (PI * t / ramp_s).cos()
    }
}

pub fn encode_scalar(zeta: f64, mask: &EncodingMask, settings: &ScalarEncoding) -> Result<InjectionPlan> {
    mask.validate(settings.sample_rate_hz)?;
    if !zeta.is_finite() {
        return Err(invalid(format!("input {zeta} is not finite")));
    }
    let min_duration = 50.0 / mask.omega_hz[0];
    if !(settings.duration_s >= min_duration * (1.0 - 1e-9)) {
        return Err(invalid(format!(
            "duration {} s holds fewer than 50 periods of {} Hz",
            settings.duration_s, mask.omega_hz[0]
        )));
    }
    let (lo, hi) = settings.zeta_range;
    let extrapolated = zeta < lo || zeta > hi;
    if extrapolated {
        log::warn!("input {zeta} lies outside the training range [{lo}, {hi}]");
    }
    let fs = settings.sample_rate_hz;
    let len = (settings.duration_s * fs).round() as usize;
    let mut waveforms: Vec<Vec<f64>> = vec![vec![0.0; len]; mask.n_sources()];
    if zeta != 0.0 {
        for (f, row) in mask.omega_hz.iter().zip(&mask.s_in) {
            let w = 2.0 * PI * f / fs;
            // Exact phases from the sample index keep carriers periodic.
            let carrier: Vec<f64> = (0..len).map(|k| (w * k as f64).sin()).collect();
            for (wave, &s) in waveforms.iter_mut().zip(row) {
                let a = zeta * s;
                wave.iter_mut().zip(&carrier).for_each(|(x, c)| *x += a * c);
            }
        }
    }
    let scale = match settings.normalization {
        Normalization::Peak => {
            let peak = waveforms.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
            if peak > 0.0 {
                mask.amplitude_scale / peak
            } else {
                0.0
            }
        }
        Normalization::Global => mask.amplitude_scale / (PI * mask.unit_bound()),
    };
    let waveforms = waveforms
        .into_iter()
        .map(|w| {
            let samples =
                w.into_iter().enumerate().map(|(k, x)| x * scale * ramp_gain(k as f64 / fs, settings.ramp_s)).collect();
            Waveform::new(samples, fs)
        })
        .collect::<Vec<_>>();
    Ok(InjectionPlan {
        delays_s: vec![0.0; waveforms.len()],
        waveforms,
        normalization: settings.normalization,
        extrapolated,
    })
}

/// Copies one mono recording to `n_sources` sources, source `m` delayed by
/// `m·delay_s`, peak normalised to `amplitude_scale`.
pub fn encode_audio(
    samples: &[f64],
    sample_rate_hz: f64,
    target_rate_hz: f64,
    n_sources: usize,
    delay_s: f64,
    amplitude_scale: f64,
) -> Result<InjectionPlan> {
    if samples.is_empty() {
        return Err(Error::Dataset("audio is empty".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Dataset("audio contains non-finite samples".into()));
    }
    if n_sources == 0 {
        return Err(invalid("need at least one source"));
    }
    if !(delay_s >= 0.0 && delay_s.is_finite()) {
        return Err(invalid(format!("delay {delay_s} must be non-negative")));
    }
    let audio = if (sample_rate_hz - target_rate_hz).abs() > 1e-9 * target_rate_hz {
        resample(samples, sample_rate_hz, target_rate_hz)?
    } else {
        samples.to_vec()
    };
    let peak = audio.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return Err(Error::Dataset("audio is silent".into()));
    }
    let wave = Waveform::new(audio.iter().map(|x| x * amplitude_scale / peak).collect(), target_rate_hz);
    Ok(InjectionPlan {
        waveforms: vec![wave; n_sources],
        delays_s: (0..n_sources).map(|m| m as f64 * delay_s).collect(),
        normalization: Normalization::Peak,
        extrapolated: false,
    })
}

/// Half width of the resampling kernel, in input samples at the cutoff.
const RESAMPLE_HALF_TAPS: f64 = 32.0;

/// Band-limited resampling with a Blackman-windowed sinc kernel; the
/// cutoff sits at 95% of the lower Nyquist frequency.
pub fn resample(samples: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>> {
    if !(from_hz > 0.0 && to_hz > 0.0) {
        return Err(invalid("sample rates must be positive"));
    }
    let out_len = ((samples.len() as f64) * to_hz / from_hz).round() as usize;
    let cutoff = 0.95 * 0.5 * from_hz.min(to_hz);
    // Kernel in input-sample units.
    let fc = cutoff / from_hz;
    let half = (RESAMPLE_HALF_TAPS / (2.0 * fc)).ceil();
    let out = (0..out_len)
        .map(|k| {
            let t = k as f64 * from_hz / to_hz;
            let lo = ((t - half).ceil().max(0.0)) as usize;
            let hi = ((t + half).floor() as usize).min(samples.len().saturating_sub(1));
            (lo..=hi)
                .map(|i| {
                    let x = i as f64 - t;
                    let w = 0.42 + 0.5 * (PI * x / half).cos() + 0.08 * (2.0 * PI * x / half).cos();
                    let s = if x == 0.0 { 1.0 } else { (2.0 * PI * fc * x).sin() / (PI * x * 2.0 * fc) };
                    samples[i] * 2.0 * fc * s * w
                })
                .sum()
        })
        .collect();
    Ok(out)
}

/// Reads a mono WAV file (integer PCM or 32-bit float) as samples in
/// [-1, 1] together with its sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, f64)> {
    let wav_err = |source| Error::Wav { path: path.to_path_buf(), source };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Dataset(format!(
            "{} has {} channels; only mono audio is supported",
            path.display(),
            spec.channels
        )));
    }
    let samples = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(wav_err)?
        }
    };
    Ok((samples, spec.sample_rate as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask() -> EncodingMask {
        EncodingMask::random(10, default_carriers(), 7, 1.0).unwrap()
    }

    fn dft_mag(x: &[f64], bin: usize) -> f64 {
        let n = x.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in x.iter().enumerate() {
            let a = -2.0 * PI * bin as f64 * k as f64 / n;
            re += v * a.cos();
            im += v * a.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn mask_is_reproducible_and_bounded() {
        let a = mask();
        let b = mask();
        assert_eq!(a, b);
        let c = EncodingMask::random(10, default_carriers(), 8, 1.0).unwrap();
        assert_ne!(a.s_in, c.s_in);
        assert!(a.s_in.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn carriers_must_leave_harmonic_headroom() {
        let m = EncodingMask::random(2, vec![400.0, 1400.0], 1, 1.0).unwrap();
        assert!(m.validate(8000.0).is_err());
        assert!(m.validate(16000.0).is_ok());
        assert!(EncodingMask::random(2, vec![400.0, 400.0], 1, 1.0).is_err());
    }

    #[test]
    fn zero_input_gives_silence() {
        let s = ScalarEncoding::new(0.2, 8000.0);
        for mode in [Normalization::Peak, Normalization::Global] {
            let plan = encode_scalar(0.0, &mask(), &ScalarEncoding { normalization: mode, ..s }).unwrap();
            assert_eq!(plan.len(), 10);
            assert!(plan.waveforms.iter().all(|w| w.samples.iter().all(|&x| x == 0.0)));
        }
    }

    #[test]
    fn spectrum_has_exactly_the_carrier_lines() {
        let s = ScalarEncoding::new(0.2, 8000.0);
        let plan = encode_scalar(1.3, &mask(), &s).unwrap();
        let x = &plan.waveforms[3].samples;
        let n = x.len();
        // 0.2 s window: carrier f sits on bin f / 5.
        let carrier_bins: Vec<usize> = default_carriers().iter().map(|f| (f / 5.0) as usize).collect();
        let peak = carrier_bins.iter().map(|&b| dft_mag(x, b)).fold(0.0, f64::max);
        for bin in 1..n / 2 {
            let m = dft_mag(x, bin);
            if carrier_bins.contains(&bin) {
                assert!(m > 1e-3 * peak);
            } else {
                assert!(m < 1e-9 * peak, "bin {bin}: {m}");
            }
        }
    }

    #[test]
    fn peak_mode_erases_magnitude_global_keeps_it() {
        let mut s = ScalarEncoding::new(0.2, 8000.0);
        s.normalization = Normalization::Peak;
        let a = encode_scalar(0.7, &mask(), &s).unwrap();
        let b = encode_scalar(1.4, &mask(), &s).unwrap();
        for (x, y) in a.waveforms.iter().zip(&b.waveforms) {
            for (u, v) in x.samples.iter().zip(&y.samples) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        s.normalization = Normalization::Global;
        let a = encode_scalar(0.7, &mask(), &s).unwrap();
        let b = encode_scalar(1.4, &mask(), &s).unwrap();
        assert!((b.waveforms[0].peak() / a.waveforms[0].peak() - 2.0).abs() < 1e-9);
        let top = encode_scalar(PI, &mask(), &s).unwrap();
        assert!(top.waveforms.iter().all(|w| w.peak() <= 1.0 + 1e-12));
    }

    #[test]
    fn adjacent_carrier_leakage_below_40_db() {
        let m = EncodingMask {
            s_in: vec![vec![1.0], vec![0.0]],
            omega_hz: vec![400.0, 410.0],
            seed: 0,
            amplitude_scale: 1.0,
        };
        let plan = encode_scalar(1.0, &m, &ScalarEncoding::new(0.2, 8000.0)).unwrap();
        let x = &plan.waveforms[0].samples;
        let ratio = dft_mag(x, 82) / dft_mag(x, 80);
        assert!(20.0 * ratio.log10() < -40.0);
    }

    #[test]
    fn short_duration_and_out_of_range_inputs() {
        let s = ScalarEncoding::new(0.1, 8000.0);
        assert!(encode_scalar(1.0, &mask(), &s).is_err());
        let s = ScalarEncoding::new(0.2, 8000.0);
        let plan = encode_scalar(4.0, &mask(), &s).unwrap();
        assert!(plan.extrapolated);
        assert!(!encode_scalar(3.0, &mask(), &s).unwrap().extrapolated);
    }

    #[test]
    fn ramp_fades_in() {
        let mut s = ScalarEncoding::new(0.2, 8000.0);
        s.ramp_s = 0.02;
        let plan = encode_scalar(2.0, &mask(), &s).unwrap();
        let x = &plan.waveforms[0].samples;
        assert_eq!(x[0], 0.0);
        let early = x[..40].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let late = x[800..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(early < 0.2 * late);
    }

    #[test]
    fn audio_copies_are_delayed() {
        let audio: Vec<f64> = (0..400).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let plan = encode_audio(&audio, 8000.0, 8000.0, 10, 0.01, 2.0).unwrap();
        assert_eq!(plan.len(), 10);
        assert!((plan.delays_s[9] - 0.09).abs() < 1e-15);
        assert!((plan.waveforms[0].peak() - 2.0).abs() < 1e-12);
        let single = encode_audio(&audio, 8000.0, 8000.0, 1, 0.0, 6.0).unwrap();
        for (a, b) in single.waveforms[0].samples.iter().zip(&audio) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(encode_audio(&[], 8000.0, 8000.0, 2, 0.01, 1.0).is_err());
        assert!(encode_audio(&[0.0; 50], 8000.0, 8000.0, 2, 0.01, 1.0).is_err());
    }

    #[test]
    fn resampler_preserves_in_band_tone() {
        let from = 22050.0;
        let x: Vec<f64> = (0..22050).map(|k| (2.0 * PI * 440.0 * k as f64 / from).sin()).collect();
        let y = resample(&x, from, 16000.0).unwrap();
        assert_eq!(y.len(), 16000);
        let err =
            (2000..14000).map(|k| (y[k] - (2.0 * PI * 440.0 * k as f64 / 16000.0).sin()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn mask_csv_round_trip() {
        let m = mask();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = EncodingMask::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn wav_round_trip_int_and_float() {
        let dir = tempfile::tempdir().unwrap();
        let p16 = dir.path().join("a.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p16, spec).unwrap();
        for v in [0i16, 16384, -32768] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let (x, fs) = read_wav(&p16).unwrap();
        assert_eq!(fs, 8000.0);
        assert_eq!(x, vec![0.0, 0.5, -1.0]);

        let pf = dir.path().join("b.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&pf, spec).unwrap();
        for v in [0.25f32, -0.75] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(read_wav(&pf).unwrap().0, vec![0.25, -0.75]);
    }
}
