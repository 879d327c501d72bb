use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::wavefield::ProbeRecord;

/// The rows of the DFT matrix kept by the readout, plus the window they
/// act on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSelector {
    pub window_start_s: f64,
    pub window_len: usize,
    /// DFT row indices `j`, strictly increasing, each below `window_len`.
    pub selected_bins: Vec<usize>,
}

impl FourierSelector {
    pub fn new(window_start_s: f64, window_len: usize, selected_bins: Vec<usize>) -> Result<Self> {
        let s = Self { window_start_s, window_len, selected_bins };
        s.validate()?;
        Ok(s)
    }

    /// Every bin in the half-open ranges covered by `bands_hz`.
    pub fn for_bands(
        window_start_s: f64,
        window_len: usize,
        sample_rate_hz: f64,
        bands_hz: &[(f64, f64)],
    ) -> Result<Self> {
        let mut bins = Vec::new();
        for &(lo, hi) in bands_hz {
            bins.extend(band_bins(lo, hi, window_len, sample_rate_hz));
        }
        bins.sort_unstable();
        bins.dedup();
        Self::new(window_start_s, window_len, bins)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(invalid("Fourier window must hold at least one sample"));
        }
        if !(self.window_start_s >= 0.0 && self.window_start_s.is_finite()) {
            return Err(invalid(format!("window start {} s must be non-negative", self.window_start_s)));
        }
        if self.selected_bins.is_empty() {
            return Err(invalid("no Fourier bins selected"));
        }
        if self.selected_bins.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("selected bins must be strictly increasing"));
        }
        if let Some(&b) = self.selected_bins.last().filter(|&&b| b >= self.window_len) {
            return Err(invalid(format!("bin {b} outside a window of {}", self.window_len)));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.selected_bins.len()
    }

    pub fn start_sample(&self, sample_rate_hz: f64) -> usize {
        (self.window_start_s * sample_rate_hz).round() as usize
    }

    pub fn bin_hz(&self, bin: usize, sample_rate_hz: f64) -> f64 {
        bin as f64 * sample_rate_hz / self.window_len as f64
    }

    /// Windowed samples of one record.
    pub fn window<'a>(&self, record: &'a ProbeRecord) -> Result<&'a [f64]> {
        let start = self.start_sample(record.sample_rate_hz);
        record.samples.get(start..start + self.window_len).ok_or_else(|| {
            Error::Dimension(format!(
                "window of {} samples at {start} does not fit record '{}' of {}",
                self.window_len,
                record.label,
                record.samples.len()
            ))
        })
    }

    /// The selected rows of the Fourier matrix, `F_s[b, k] = κ^{j_b k}`.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.window_len;
        DMatrix::from_fn(self.n_bins(), n, |b, k| {
            let jk = (self.selected_bins[b] * k) % n;
            Complex64::from_polar(1.0, -2.0 * PI * jk as f64 / n as f64)
        })
    }
}

/// DFT bins `round(lo·n/fs) .. round(hi·n/fs)`, end exclusive.
pub fn band_bins(lo_hz: f64, hi_hz: f64, window_len: usize, sample_rate_hz: f64) -> std::ops::Range<usize> {
    let to_bin = |f: f64| (f * window_len as f64 / sample_rate_hz).round().max(0.0) as usize;
    to_bin(lo_hz)..to_bin(hi_hz).min(window_len)
}

/// `F_s` applied to each record's window: a bins × probes matrix.
pub fn fourier_features(records: &[ProbeRecord], selector: &FourierSelector) -> Result<DMatrix<Complex64>> {
    selector.validate()?;
    let first = records.first().ok_or_else(|| invalid("no probe records"))?;
    for r in records {
        if r.samples.len() != first.samples.len() || r.sample_rate_hz != first.sample_rate_hz {
            return Err(Error::Dimension(format!(
                "record '{}' ({} samples at {} Hz) differs from '{}' ({} samples at {} Hz)",
                r.label,
                r.samples.len(),
                r.sample_rate_hz,
                first.label,
                first.samples.len(),
                first.sample_rate_hz
            )));
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(selector.window_len);
    let mut out = DMatrix::zeros(selector.n_bins(), records.len());
    let mut buf = vec![Complex64::default(); selector.window_len];
    for (m, r) in records.iter().enumerate() {
        for (b, x) in buf.iter_mut().zip(selector.window(r)?) {
            *b = Complex64::new(*x, 0.0);
        }
        fft.process(&mut buf);
        for (row, &j) in selector.selected_bins.iter().enumerate() {
            out[(row, m)] = buf[j];
        }
    }
    Ok(out)
}

/// How the complex Fourier matrix becomes a real feature vector. Vectors
/// are probe-major: all bins of probe 0, then probe 1, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Magnitude,
    /// Squared magnitude.
    Intensity,
    /// Real and imaginary parts interleaved; keeps the pipeline linear.
    ReIm,
}

impl FeatureKind {
    pub fn per_bin(self) -> usize {
        match self {
            FeatureKind::ReIm => 2,
            _ => 1,
        }
    }
}

pub fn flatten_features(y: &DMatrix<Complex64>, kind: FeatureKind) -> DVector<f64> {
    let (bins, probes) = y.shape();
    let mut v = Vec::with_capacity(bins * probes * kind.per_bin());
    for m in 0..probes {
        for b in 0..bins {
            let z = y[(b, m)];
            match kind {
                FeatureKind::Magnitude => v.push(z.norm()),
                FeatureKind::Intensity => v.push(z.norm_sqr()),
                FeatureKind::ReIm => {
                    v.push(z.re);
                    v.push(z.im);
                }
            }
        }
    }
    DVector::from_vec(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(samples: Vec<f64>) -> ProbeRecord {
        ProbeRecord { label: "p".into(), samples, sample_rate_hz: 1000.0 }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut x = vec![0.0; 64];
        x[0] = 1.0;
        let s = FourierSelector::new(0.0, 64, vec![0, 5, 31, 63]).unwrap();
        let y = fourier_features(&[rec(x)], &s).unwrap();
        for b in 0..4 {
            assert!((y[(b, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn on_bin_sine_concentrates() {
        let n = 256;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * 9.0 * k as f64 / n as f64).sin()).collect();
        let s = FourierSelector::new(0.0, n, (0..n / 2).collect()).unwrap();
        let y = fourier_features(&[rec(x)], &s).unwrap();
        for b in 0..n / 2 {
            let m = y[(b, 0)].norm();
            if b == 9 {
                assert!((m - n as f64 / 2.0).abs() < 1e-9);
            } else {
                assert!(m < 1e-9 * n as f64);
            }
        }
    }

    #[test]
    fn band_bin_ranges() {
        assert_eq!(band_bins(10.0, 1000.0, 4096, 16000.0), 3..256);
        assert_eq!(band_bins(1000.0, 3500.0, 4096, 16000.0), 256..896);
    }

    #[test]
    fn selector_rejects_bad_bins_and_short_records() {
        assert!(FourierSelector::new(0.0, 16, vec![3, 3]).is_err());
        assert!(FourierSelector::new(0.0, 16, vec![16]).is_err());
        assert!(FourierSelector::new(0.0, 16, vec![]).is_err());
        let s = FourierSelector::new(0.01, 16, vec![1]).unwrap();
        assert!(fourier_features(&[rec(vec![0.0; 20])], &s).is_err());
        assert!(fourier_features(&[rec(vec![0.0; 26]), rec(vec![0.0; 27])], &s).is_err());
    }

    #[test]
    fn window_offset_is_applied() {
        let mut x = vec![0.0; 40];
        x[10] = 2.0;
        let s = FourierSelector::new(0.01, 16, vec![0, 1]).unwrap();
        let y = fourier_features(&[rec(x)], &s).unwrap();
        assert!((y[(0, 0)].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flatten_is_probe_major() {
        let y = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(3.0, 4.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0), Complex64::new(0.0, -1.0)],
        );
        assert_eq!(flatten_features(&y, FeatureKind::Magnitude).as_slice(), &[5.0, 2.0, 1.0, 1.0]);
        assert_eq!(flatten_features(&y, FeatureKind::Intensity).as_slice(), &[25.0, 4.0, 1.0, 1.0]);
        assert_eq!(flatten_features(&y, FeatureKind::ReIm).as_slice(), &[3.0, 4.0, 0.0, 2.0, 1.0, 0.0, 0.0, -1.0]);
    }
}
