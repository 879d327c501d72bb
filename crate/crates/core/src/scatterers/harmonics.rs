use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::wavefield::ProbeRecord;

/// Complex amplitudes of the first harmonics of a periodic steady state,
/// divided by the magnitude of the fundamental.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPhasors {
    pub fundamental_hz: f64,
    /// Entry `m` is harmonic `m + 1`.
    pub phasors: Vec<Complex64>,
    pub probe_label: String,
    /// Single-sided amplitude of the fundamental before normalisation.
    pub fundamental_amplitude: f64,
}

pub const MIN_HARMONICS: usize = 5;
const MIN_PERIODS: f64 = 20.0;

impl HarmonicPhasors {
    /// Magnitude of harmonic `m` (1-based) relative to the fundamental, in dB.
    pub fn level_db(&self, harmonic: usize) -> f64 {
        20.0 * self.phasors[harmonic - 1].norm().max(1e-300).log10()
    }

    /// Loudest harmonic above the fundamental, in dB re fundamental.
    pub fn max_overtone_db(&self) -> f64 {
        (2..=self.phasors.len()).map(|m| self.level_db(m)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "harmonic_index,re,im,magnitude,phase_rad")?;
        self.write_rows(out, None)
    }

    /// Rows without a header, optionally prefixed by one extra column value.
    pub fn write_rows<W: Write>(&self, out: &mut W, prefix: Option<f64>) -> std::io::Result<()> {
        for (m, z) in self.phasors.iter().enumerate() {
            if let Some(p) = prefix {
                write!(out, "{p:.6e},")?;
            }
            writeln!(out, "{},{:.15e},{:.15e},{:.15e},{:.15e}", m + 1, z.re, z.im, z.norm(), z.arg())?;
        }
        Ok(())
    }
}

/// Single-sided DFT of the steady-state tail at the first `k_harmonics`
/// multiples of `fundamental_hz`.
///
/// The window is the longest stretch of the second half of the record that
/// holds a whole number of fundamental periods on the sample grid.
pub fn stroboscopic_analysis(record: &ProbeRecord, fundamental_hz: f64, k_harmonics: usize) -> Result<HarmonicPhasors> {
    let fs = record.sample_rate_hz;
    if k_harmonics < MIN_HARMONICS {
        return Err(invalid(format!("need at least {MIN_HARMONICS} harmonics, got {k_harmonics}")));
    }
    if !(fundamental_hz > 0.0) || fundamental_hz * k_harmonics as f64 >= fs / 2.0 {
        return Err(invalid(format!(
            "fundamental {fundamental_hz} Hz with {k_harmonics} harmonics exceeds Nyquist at {fs} Hz"
        )));
    }
    let period = fs / fundamental_hz;
    if (record.samples.len() as f64) < MIN_PERIODS * period {
        return Err(invalid(format!(
            "record of {} samples holds fewer than {MIN_PERIODS} periods",
            record.samples.len()
        )));
    }
    let block = (1..=1000)
        .map(|m| m as f64 * period)
        .find(|len| (len - len.round()).abs() < 1e-9 * len)
        .map(|len| len.round() as usize)
        .ok_or_else(|| invalid(format!("{fundamental_hz} Hz has no integer number of periods at {fs} Hz")))?;
    let tail = record.samples.len() / 2;
    let blocks = tail / block;
    if blocks == 0 {
        return Err(invalid(format!(
            "steady-state tail of {tail} samples is shorter than one whole-period block of {block}"
        )));
    }
    let n = blocks * block;
    let window = &record.samples[record.samples.len() - n..];
    let amplitude = |m: usize| -> Complex64 {
        let w = -2.0 * PI * m as f64 * fundamental_hz / fs;
        let sum: Complex64 = window.iter().enumerate().map(|(k, &x)| Complex64::from_polar(x, w * k as f64)).sum();
        sum * (2.0 / n as f64)
    };
    let raw: Vec<Complex64> = (1..=k_harmonics).map(amplitude).collect();
    let fundamental_amplitude = raw[0].norm();
    if fundamental_amplitude == 0.0 {
        return Err(invalid(format!("probe '{}' has no energy at the fundamental", record.label)));
    }
    Ok(HarmonicPhasors {
        fundamental_hz,
        phasors: raw.iter().map(|z| z / fundamental_amplitude).collect(),
        probe_label: record.label.clone(),
        fundamental_amplitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(f: impl Fn(f64) -> f64, fs: f64, secs: f64) -> ProbeRecord {
        let n = (fs * secs) as usize;
        ProbeRecord { label: "p".into(), samples: (0..n).map(|k| f(k as f64 / fs)).collect(), sample_rate_hz: fs }
    }

    #[test]
    fn pure_tone_has_no_overtones() {
        let r = record(|t| 3.0 * (2.0 * PI * 500.0 * t + 0.3).sin(), 16_000.0, 0.2);
        let h = stroboscopic_analysis(&r, 500.0, 5).unwrap();
        assert!((h.phasors[0].norm() - 1.0).abs() < 1e-12);
        assert!((h.fundamental_amplitude - 3.0).abs() < 1e-9);
        for m in 1..5 {
            assert!(h.phasors[m].norm() < 1e-6, "harmonic {} = {}", m + 1, h.phasors[m].norm());
        }
    }

    #[test]
    fn known_overtone_levels_recovered() {
        let r = record(|t| (2.0 * PI * 500.0 * t).sin() + 0.25 * (2.0 * PI * 1000.0 * t).cos(), 16_000.0, 0.2);
        let h = stroboscopic_analysis(&r, 500.0, 5).unwrap();
        assert!((h.phasors[1].norm() - 0.25).abs() < 1e-9);
        assert!((h.level_db(2) - 20.0 * 0.25f64.log10()).abs() < 1e-6);
    }

    #[test]
    fn non_integer_period_grid_handled_by_block() {
        // 16000 / 300 is not an integer but three periods are 160 samples.
        let r = record(|t| (2.0 * PI * 300.0 * t).sin(), 16_000.0, 0.3);
        let h = stroboscopic_analysis(&r, 300.0, 5).unwrap();
        assert!(h.phasors[2].norm() < 1e-9);
    }

    #[test]
    fn rejects_irrational_period_short_record_and_nyquist() {
        let r = record(|t| t.sin(), 16_000.0, 0.5);
        assert!(stroboscopic_analysis(&r, 500.0 * std::f64::consts::SQRT_2, 5).is_err());
        let r = record(|t| (2.0 * PI * 500.0 * t).sin(), 16_000.0, 0.01);
        assert!(stroboscopic_analysis(&r, 500.0, 5).is_err());
        let r = record(|t| (2.0 * PI * 2000.0 * t).sin(), 16_000.0, 0.5);
        assert!(stroboscopic_analysis(&r, 2000.0, 5).is_err());
        assert!(stroboscopic_analysis(&r, 500.0, 4).is_err());
    }

    #[test]
    fn csv_has_expected_columns() {
        let r = record(|t| (2.0 * PI * 500.0 * t).sin(), 16_000.0, 0.2);
        let h = stroboscopic_analysis(&r, 500.0, 5).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "harmonic_index,re,im,magnitude,phase_rad");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[1].split(',').count(), 5);
    }
}
