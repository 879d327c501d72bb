use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::readout::fourier::{band_bins, FeatureKind, FourierSelector};

/// Min-Max statistics of one frequency band, shared by all probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandNorm {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub min: f64,
    pub max: f64,
}

impl BandNorm {
    fn map(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }
}

/// Band-wise Min-Max normalisation of flattened feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMinMax {
    pub bands: Vec<BandNorm>,
    /// Band index of every feature, `None` when its bin is in no band.
    #[serde(skip)]
    assignment: Vec<Option<usize>>,
}

fn check_bands(bands_hz: &[(f64, f64)]) -> Result<()> {
    for (k, &(lo, hi)) in bands_hz.iter().enumerate() {
        if !(lo >= 0.0 && hi > lo) {
            return Err(invalid(format!("band {k} ({lo}, {hi}) Hz is empty")));
        }
    }
    let mut sorted = bands_hz.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(invalid("normalisation bands overlap"));
    }
    Ok(())
}

/// Band of each flattened feature.
pub fn band_assignment(
    bands_hz: &[(f64, f64)],
    selector: &FourierSelector,
    sample_rate_hz: f64,
    n_probes: usize,
    kind: FeatureKind,
) -> Vec<Option<usize>> {
    let ranges: Vec<_> =
        bands_hz.iter().map(|&(lo, hi)| band_bins(lo, hi, selector.window_len, sample_rate_hz)).collect();
    let per_probe: Vec<Option<usize>> = selector
        .selected_bins
        .iter()
        .flat_map(|b| {
            let band = ranges.iter().position(|r| r.contains(b));
            std::iter::repeat_n(band, kind.per_bin())
        })
        .collect();
    (0..n_probes).flat_map(|_| per_probe.iter().copied()).collect()
}

impl BandMinMax {
    /// Per-band min and max over every feature of every training vector.
    pub fn fit(
        train: &[DVector<f64>],
        bands_hz: &[(f64, f64)],
        selector: &FourierSelector,
        sample_rate_hz: f64,
        n_probes: usize,
        kind: FeatureKind,
    ) -> Result<Self> {
        check_bands(bands_hz)?;
        if train.is_empty() {
            return Err(invalid("Min-Max needs at least one training vector"));
        }
        let assignment = band_assignment(bands_hz, selector, sample_rate_hz, n_probes, kind);
        let mut stats = vec![(f64::INFINITY, f64::NEG_INFINITY); bands_hz.len()];
        for v in train {
            if v.len() != assignment.len() {
                return Err(crate::Error::Dimension(format!(
                    "feature vector of {} entries, layout expects {}",
                    v.len(),
                    assignment.len()
                )));
            }
            for (x, a) in v.iter().zip(&assignment) {
                if let Some(k) = a {
                    stats[*k].0 = stats[*k].0.min(*x);
                    stats[*k].1 = stats[*k].1.max(*x);
                }
            }
        }
        let bands = bands_hz
            .iter()
            .zip(stats)
            .map(|(&(lo_hz, hi_hz), (min, max))| {
                if !(max > min) {
                    log::warn!("band {lo_hz}-{hi_hz} Hz is degenerate on the training set; mapping it to 0.5");
                }
                let (min, max) = if min.is_finite() { (min, max) } else { (0.0, 0.0) };
                BandNorm { lo_hz, hi_hz, min, max }
            })
            .collect();
        Ok(Self { bands, assignment })
    }

    /// Rebuilds the feature layout after deserialisation.
    pub fn with_layout(
        bands: Vec<BandNorm>,
        selector: &FourierSelector,
        sample_rate_hz: f64,
        n_probes: usize,
        kind: FeatureKind,
    ) -> Result<Self> {
        let hz: Vec<_> = bands.iter().map(|b| (b.lo_hz, b.hi_hz)).collect();
        check_bands(&hz)?;
        let assignment = band_assignment(&hz, selector, sample_rate_hz, n_probes, kind);
        Ok(Self { bands, assignment })
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.assignment.len() {
            return Err(crate::Error::Dimension(format!(
                "feature vector of {} entries, normaliser expects {}",
                v.len(),
                self.assignment.len()
            )));
        }
        Ok(DVector::from_iterator(
            v.len(),
            v.iter().zip(&self.assignment).map(|(&x, a)| match a {
                Some(k) => self.bands[*k].map(x),
                None => x,
            }),
        ))
    }
}
