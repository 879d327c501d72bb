//! The trained decision layer.
//!
//! Probe records go through `F_s` (selected DFT rows), become a real
//! vector (magnitudes, intensities or re/im pairs), are optionally
//! band-normalised and PCA-projected, and finally meet a linear model.

mod fourier;
mod linear;
mod norm;
mod pca;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use fourier::{band_bins, flatten_features, fourier_features, FeatureKind, FourierSelector};
pub use linear::{argmax, fit_linear_svm, fit_ridge, rmse, LinearSvm, RidgeModel, SvmParams};
pub use norm::{band_assignment, BandMinMax, BandNorm};
pub use pca::{stack_rows, Pca};

use crate::error::{invalid, Error, Result};
use crate::wavefield::ProbeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ridge,
    LinearSvm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    pub selector: FourierSelector,
    pub sample_rate_hz: f64,
    pub n_probes: usize,
    pub feature_kind: FeatureKind,
    pub band_norms: Option<BandMinMax>,
    pub pca: Option<Pca>,
    /// outputs × features.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub kind: ModelKind,
    pub seed: u64,
}

impl ReadoutModel {
    pub fn raw_len(&self) -> usize {
        self.n_probes * self.selector.n_bins() * self.feature_kind.per_bin()
    }

    pub fn validate(&self) -> Result<()> {
        self.selector.validate()?;
        let mut d = self.raw_len();
        if let Some(p) = &self.pca {
            if p.dim() != d {
                return Err(Error::Dimension(format!("PCA expects {} inputs, features have {d}", p.dim())));
            }
            let g = &p.components * p.components.transpose();
            if (g - DMatrix::identity(p.k(), p.k())).amax() > 1e-8 {
                return Err(invalid("PCA components are not orthonormal"));
            }
            d = p.k();
        }
        if self.weights.ncols() != d || self.bias.len() != self.weights.nrows() {
            return Err(Error::Dimension(format!(
                "weights {}x{} and bias {} do not fit {d} features",
                self.weights.nrows(),
                self.weights.ncols(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Flattened Fourier features before normalisation.
    pub fn raw_features(&self, records: &[ProbeRecord]) -> Result<DVector<f64>> {
        if records.len() != self.n_probes {
            return Err(Error::Dimension(format!("model reads {} probes, got {}", self.n_probes, records.len())));
        }
        Ok(flatten_features(&fourier_features(records, &self.selector)?, self.feature_kind))
    }

    /// Normalisation and projection of a raw feature vector.
    pub fn transform(&self, raw: &DVector<f64>) -> Result<DVector<f64>> {
        let mut v = match &self.band_norms {
            Some(n) => n.apply(raw)?,
            None => raw.clone(),
        };
        if let Some(p) = &self.pca {
            v = p.transform(&v)?;
        }
        Ok(v)
    }

    pub fn scores_from_features(&self, features: &DVector<f64>) -> DVector<f64> {
        &self.weights * features + &self.bias
    }

    pub fn scores(&self, records: &[ProbeRecord]) -> Result<DVector<f64>> {
        Ok(self.scores_from_features(&self.transform(&self.raw_features(records)?)?))
    }

    pub fn predict_class(&self, records: &[ProbeRecord]) -> Result<usize> {
        Ok(argmax(self.scores(records)?.as_slice()))
    }
}

/// A single real-linear map on the raw windowed samples that equals the
/// staged readout `W·vec(F_s X) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedReadout {
    /// outputs × (probes · window_len), probe-major.
    pub operator: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub selector: FourierSelector,
    pub n_probes: usize,
}

impl ComposedReadout {
    pub fn apply(&self, records: &[ProbeRecord]) -> Result<DVector<f64>> {
        if records.len() != self.n_probes {
            return Err(Error::Dimension(format!("expected {} probes, got {}", self.n_probes, records.len())));
        }
        let n = self.selector.window_len;
        let mut x = DVector::zeros(self.n_probes * n);
        for (m, r) in records.iter().enumerate() {
            x.rows_mut(m * n, n).copy_from_slice(self.selector.window(r)?);
        }
        Ok(&self.operator * x + &self.bias)
    }
}

/// Folds the Fourier rows into the weights. Only defined for the purely
/// linear pipeline: re/im features, no normalisation, no PCA.
pub fn compose_weights(model: &ReadoutModel) -> Result<ComposedReadout> {
    if model.feature_kind != FeatureKind::ReIm {
        return Err(invalid("composition needs re/im features; magnitudes are not linear"));
    }
    if model.band_norms.is_some() || model.pca.is_some() {
        return Err(invalid("composition is only exact without Min-Max and PCA stages"));
    }
    model.validate()?;
    let n = model.selector.window_len;
    let bins = model.selector.n_bins();
    let f = model.selector.matrix();
    let outputs = model.weights.nrows();
    let mut operator = DMatrix::zeros(outputs, model.n_probes * n);
    for o in 0..outputs {
        for m in 0..model.n_probes {
            for b in 0..bins {
                let col = 2 * (m * bins + b);
                let (w_re, w_im) = (model.weights[(o, col)], model.weights[(o, col + 1)]);
                if w_re == 0.0 && w_im == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let z = f[(b, k)];
                    operator[(o, m * n + k)] += w_re * z.re + w_im * z.im;
                }
            }
        }
    }
    Ok(ComposedReadout {
        operator,
        bias: model.bias.clone(),
        selector: model.selector.clone(),
        n_probes: model.n_probes,
    })
}

const MAGIC: &[u8; 8] = b"CAVRCRO1";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    selector: FourierSelector,
    sample_rate_hz: f64,
    n_probes: usize,
    feature_kind: FeatureKind,
    bands: Option<Vec<BandNorm>>,
    /// (k, d) when a PCA stage is present.
    pca_dims: Option<(usize, usize)>,
    pca_singular_values: Option<usize>,
    model_kind: ModelKind,
    seed: u64,
    weights_dims: (usize, usize),
}

fn put(out: &mut Vec<u8>, xs: impl IntoIterator<Item = f64>) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Row-major values of a matrix.
fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

impl ReadoutModel {
    /// Magic, little-endian u32 header length, JSON header, then row-major
    /// little-endian f64 arrays: PCA mean, PCA components, PCA singular
    /// values, weights, bias.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = Header {
            schema_version: MODEL_SCHEMA_VERSION,
            selector: self.selector.clone(),
            sample_rate_hz: self.sample_rate_hz,
            n_probes: self.n_probes,
            feature_kind: self.feature_kind,
            bands: self.band_norms.as_ref().map(|b| b.bands.clone()),
            pca_dims: self.pca.as_ref().map(|p| (p.k(), p.dim())),
            pca_singular_values: self.pca.as_ref().map(|p| p.singular_values.len()),
            model_kind: self.kind,
            seed: self.seed,
            weights_dims: self.weights.shape(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        if let Some(p) = &self.pca {
            put(&mut out, p.mean.iter().copied());
            put(&mut out, row_major(&p.components));
            put(&mut out, p.singular_values.iter().copied());
        }
        put(&mut out, row_major(&self.weights));
        put(&mut out, self.bias.iter().copied());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(format!("readout model: {m}"));
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(fmt("bad magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = bytes.get(12..12 + hlen).ok_or_else(|| fmt("truncated header"))?;
        let h: Header = serde_json::from_slice(json).map_err(|e| fmt(&e.to_string()))?;
        if h.schema_version != MODEL_SCHEMA_VERSION {
            return Err(fmt(&format!("unsupported schema version {}", h.schema_version)));
        }
        let mut rest = &bytes[12 + hlen..];
        let mut take = |count: usize| -> Result<Vec<f64>> {
            if rest.len() < 8 * count {
                return Err(fmt("truncated arrays"));
            }
            let (head, tail) = rest.split_at(8 * count);
            rest = tail;
            Ok(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let pca = match h.pca_dims {
            Some((k, d)) => {
                let mean = DVector::from_vec(take(d)?);
                let components = DMatrix::from_row_slice(k, d, &take(k * d)?);
                let singular_values = take(h.pca_singular_values.unwrap_or(k))?;
                Some(Pca { mean, components, singular_values })
            }
            None => None,
        };
        let (r, c) = h.weights_dims;
        let weights = DMatrix::from_row_slice(r, c, &take(r * c)?);
        let bias = DVector::from_vec(take(r)?);
        if !rest.is_empty() {
            return Err(fmt("trailing bytes"));
        }
        let band_norms = match h.bands {
            Some(b) => Some(BandMinMax::with_layout(b, &h.selector, h.sample_rate_hz, h.n_probes, h.feature_kind)?),
            None => None,
        };
        let model = Self {
            selector: h.selector,
            sample_rate_hz: h.sample_rate_hz,
            n_probes: h.n_probes,
            feature_kind: h.feature_kind,
            band_norms,
            pca,
            weights,
            bias,
            kind: h.model_kind,
            seed: h.seed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// One row per sample: `id,label,f_0,...`.
pub fn write_features_csv<W: Write>(
    out: &mut W,
    ids: &[String],
    labels: &[String],
    rows: &[DVector<f64>],
) -> std::io::Result<()> {
    let d = rows.first().map_or(0, |r| r.len());
    write!(out, "id,label")?;
    for k in 0..d {
        write!(out, ",f_{k}")?;
    }
    writeln!(out)?;
    for ((id, label), row) in ids.iter().zip(labels).zip(rows) {
        write!(out, "{id},{label}")?;
        for v in row.iter() {
            write!(out, ",{v:.15e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
