//! Scalar regression of `sin(ζ)/ζ` from second-harmonic features, swept
//! over the scatterer exponent.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::layout::Layout;
use crate::encoding::{default_carriers, encode_scalar, EncodingMask, Normalization, ScalarEncoding};
use crate::error::{invalid, Error, Result};
use crate::readout::{flatten_features, fourier_features, rmse, FeatureKind, FourierSelector, RidgeModel};
use crate::scatterers::{JointStabilitySearch, PowerLaw, ScattererSpec};
use crate::wavefield::{derive_timestep, run_on, Medium, ProbeRecord, RunOptions};

/// `sin(x)/x`, 1 at the origin.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SincTask {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub zeta_range: (f64, f64),
}

impl Default for SincTask {
    fn default() -> Self {
        Self { n_train: 100, n_test: 40, seed: 7, zeta_range: (-PI, PI) }
    }
}

impl SincTask {
    /// Uniform inputs, train then test. Duplicates are redrawn so the two
    /// sets never share a value.
    pub fn inputs(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (lo, hi) = self.zeta_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("empty input range ({lo}, {hi})")));
        }
        if self.n_train < 2 || self.n_test == 0 {
            return Err(invalid("sinc task needs at least 2 training and 1 test input"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut all: Vec<f64> = Vec::with_capacity(self.n_train + self.n_test);
        while all.len() < self.n_train + self.n_test {
            let z = rng.gen_range(lo..hi);
            if !all.contains(&z) {
                all.push(z);
            }
        }
        let test = all.split_off(self.n_train);
        Ok((all, test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SincSettings {
    pub task: SincTask,
    pub carriers_hz: Vec<f64>,
    pub mask_seed: u64,
    /// Source-term scale reached by the largest admissible input.
    pub amplitude_scale: f64,
    pub normalization: Normalization,
    pub duration_s: f64,
    pub ramp_s: f64,
    pub window_start_s: f64,
    pub window_len: usize,
    pub exponents: Vec<f64>,
    pub law: PowerLaw,
    pub gain_fraction: f64,
    pub feature_kind: FeatureKind,
    /// Microphone noise, as a fraction of the loudest linear probe RMS.
    pub noise_fraction: f64,
    pub noise_seed: u64,
    /// Ridge penalties tried by leave-one-out, relative to the feature
    /// scale.
    pub lambdas: Vec<f64>,
    pub run: RunOptions,
}

impl Default for SincSettings {
    fn default() -> Self {
        Self {
            task: SincTask::default(),
            carriers_hz: default_carriers(),
            mask_seed: 11,
            amplitude_scale: 1e9,
            normalization: Normalization::Global,
            duration_s: 0.25,
            ramp_s: 0.02,
            window_start_s: 0.05,
            window_len: 3200,
            exponents: vec![1.1, 1.3, 1.5, 1.7, 1.9],
            law: PowerLaw::Even,
            gain_fraction: 0.8,
            feature_kind: FeatureKind::Magnitude,
            noise_fraction: 0.03,
            noise_seed: 5,
            lambdas: (-10..=2).map(|k| 10f64.powi(k)).collect(),
            run: RunOptions::default(),
        }
    }
}

impl SincSettings {
    pub fn encoding(&self, sample_rate_hz: f64) -> ScalarEncoding {
        ScalarEncoding {
            duration_s: self.duration_s,
            sample_rate_hz,
            normalization: self.normalization,
            ramp_s: self.ramp_s,
            zeta_range: self.task.zeta_range,
        }
    }

    /// Bins at twice each carrier.
    pub fn selector(&self, sample_rate_hz: f64) -> Result<FourierSelector> {
        let n = self.window_len as f64;
        let mut bins = Vec::with_capacity(self.carriers_hz.len());
        for &f in &self.carriers_hz {
            let exact = 2.0 * f * n / sample_rate_hz;
            let bin = exact.round();
            if (exact - bin).abs() > 1e-6 {
                return Err(invalid(format!(
                    "{} Hz is not on the {}-sample window grid at {sample_rate_hz} Hz",
                    2.0 * f,
                    self.window_len
                )));
            }
            bins.push(bin as usize);
        }
        FourierSelector::new(self.window_start_s, self.window_len, bins)
    }

    pub fn validate(&self) -> Result<()> {
        if self.exponents.is_empty() {
            return Err(invalid("no exponents to sweep"));
        }
        if let Some(n) = self.exponents.iter().find(|n| !(**n >= 1.0 && **n <= 2.0)) {
            return Err(invalid(format!("exponent {n} outside [1, 2]")));
        }
        if self.task.n_train < 100 {
            return Err(invalid(format!("{} training inputs, at least 100 needed", self.task.n_train)));
        }
        if !(self.gain_fraction > 0.0 && self.gain_fraction <= 1.0) {
            return Err(invalid(format!("gain fraction {} outside (0, 1]", self.gain_fraction)));
        }
        if !(self.noise_fraction >= 0.0) {
            return Err(invalid("noise fraction must be non-negative"));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(invalid("ridge penalties must be a non-empty list of non-negative values"));
        }
        Ok(())
    }
}

/// One point of the exponent sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SincPoint {
    /// `None` for the all-linear baseline.
    pub exponent: Option<f64>,
    pub gain: f64,
    pub unstable: bool,
    pub train_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SincSweep {
    pub points: Vec<SincPoint>,
    pub linear: SincPoint,
    pub test_inputs: Vec<f64>,
    /// Test predictions at the best exponent.
    pub best_predictions: Vec<f64>,
}

impl SincSweep {
    /// Stable point with the lowest test error.
    pub fn best(&self) -> Option<&SincPoint> {
        self.points
            .iter()
            .filter(|p| p.test_rmse.is_some())
            .min_by(|a, b| a.test_rmse.unwrap().total_cmp(&b.test_rmse.unwrap()))
    }

    /// True when the best exponent is neither the first nor the last one
    /// swept.
    pub fn has_interior_minimum(&self) -> bool {
        let Some(best) = self.best() else { return false };
        let idx = self.points.iter().position(|p| std::ptr::eq(p, best)).unwrap();
        idx > 0 && idx + 1 < self.points.len()
    }
}

/// Seeded microphone noise for sample `index`, the same across exponents.
fn add_noise(records: &mut [ProbeRecord], std: f64, seed: u64, index: usize) {
    if std <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let normal = Normal::new(0.0, std).unwrap();
    for r in records {
        r.samples.iter_mut().for_each(|x| *x += normal.sample(&mut rng));
    }
}

/// Everything a sweep needs that does not change between exponents.
pub struct SincContext<'a> {
    pub layout: &'a Layout,
    pub medium: Medium,
    pub mask: EncodingMask,
    pub settings: &'a SincSettings,
    pub selector: FourierSelector,
    pub noise_std: f64,
}

impl<'a> SincContext<'a> {
    pub fn new(layout: &'a Layout, settings: &'a SincSettings) -> Result<Self> {
        settings.validate()?;
        let rate = layout.cavity.sample_rate_hz;
        let mask = EncodingMask::random(
            layout.sources.len(),
            settings.carriers_hz.clone(),
            settings.mask_seed,
            settings.amplitude_scale,
        )?;
        mask.validate(rate)?;
        let selector = settings.selector(rate)?;
        let medium = Medium::new(&layout.cavity, derive_timestep(&layout.cavity, settings.run.cfl)?)?;
        let mut ctx = Self { layout, medium, mask, settings, selector, noise_std: 0.0 };
        let reference = ctx.simulate(PI, &layout.linear().scatterers)?;
        let loudest = reference.iter().map(|r| r.ac_rms()).fold(0.0, f64::max);
        ctx.noise_std = settings.noise_fraction * loudest;
        Ok(ctx)
    }

    pub fn simulate(&self, zeta: f64, scatterers: &[ScattererSpec]) -> Result<Vec<ProbeRecord>> {
        let plan = encode_scalar(zeta, &self.mask, &self.settings.encoding(self.layout.cavity.sample_rate_hz))?;
        let sources = plan.sources(&self.layout.sources)?;
        run_on(
            &self.medium,
            &self.layout.cavity,
            &sources,
            &self.layout.probes,
            scatterers,
            self.settings.duration_s,
            &self.settings.run,
        )
    }

    /// Second-harmonic features of every input, noise included.
    pub fn features(&self, zetas: &[f64], scatterers: &[ScattererSpec], offset: usize) -> Result<DMatrix<f64>> {
        let rows = zetas
            .par_iter()
            .enumerate()
            .map(|(k, &z)| -> Result<DVector<f64>> {
                let mut records = self.simulate(z, scatterers)?;
                add_noise(&mut records, self.noise_std, self.settings.noise_seed, offset + k);
                Ok(flatten_features(&fourier_features(&records, &self.selector)?, self.settings.feature_kind))
            })
            .collect::<Result<Vec<_>>>()?;
        crate::readout::stack_rows(&rows)
    }

    /// Common gain at `gain_fraction` of the joint bound under the two
    /// extreme inputs.
    pub fn calibrate(&self, exponent: f64) -> Result<f64> {
        let rate = self.layout.cavity.sample_rate_hz;
        let drives = [PI, -PI]
            .iter()
            .map(|&z| encode_scalar(z, &self.mask, &self.settings.encoding(rate))?.sources(&self.layout.sources))
            .collect::<Result<Vec<_>>>()?;
        let templates: Vec<ScattererSpec> = self
            .layout
            .scatterers
            .iter()
            .map(|s| ScattererSpec::new(s.position, exponent, 0.0).with_law(self.settings.law))
            .collect();
        let search = JointStabilitySearch {
            medium: &self.medium,
            cavity: &self.layout.cavity,
            probes: &self.layout.probes,
            duration_s: self.settings.duration_s,
            rms_factor: 100.0,
            tolerance: 2e-2,
            options: self.settings.run,
        };
        Ok(self.settings.gain_fraction * search.search(&templates, &drives)?)
    }
}

/// Ridge with the penalty picked by leave-one-out, scored on both sets.
/// `relative_lambdas` are in units of the mean feature variance times the
/// sample count, so the grid does not depend on the pressure scale.
pub fn fit_and_score(
    train_x: &DMatrix<f64>,
    train_y: &DVector<f64>,
    test_x: &DMatrix<f64>,
    test_y: &DVector<f64>,
    relative_lambdas: &[f64],
) -> Result<(RidgeModel, f64, f64)> {
    let mean = train_x.row_mean();
    let spread = train_x.row_iter().map(|r| (r - &mean).norm_squared()).sum::<f64>() / train_x.ncols().max(1) as f64;
    let unit = if spread > 0.0 { spread } else { 1.0 };
    let lambdas: Vec<f64> = relative_lambdas.iter().map(|l| l * unit).collect();
    let (model, _) = RidgeModel::fit_loo(train_x, train_y, &lambdas)?;
    let train = rmse(&model.predict_all(train_x), train_y);
    let test = rmse(&model.predict_all(test_x), test_y);
    Ok((model, train, test))
}

fn evaluate(
    ctx: &SincContext,
    scatterers: &[ScattererSpec],
    train: &[f64],
    test: &[f64],
) -> Result<(RidgeModel, f64, f64, DVector<f64>)> {
    let train_x = ctx.features(train, scatterers, 0)?;
    let test_x = ctx.features(test, scatterers, train.len())?;
    let train_y = DVector::from_iterator(train.len(), train.iter().map(|&z| sinc(z)));
    let test_y = DVector::from_iterator(test.len(), test.iter().map(|&z| sinc(z)));
    let (model, tr, te) = fit_and_score(&train_x, &train_y, &test_x, &test_y, &ctx.settings.lambdas)?;
    let predictions = model.predict_all(&test_x);
    Ok((model, tr, te, predictions))
}

/// Runs the linear baseline, then each exponent at its own calibrated gain.
/// An exponent whose calibration or runs go unstable is flagged and the
/// sweep moves on.
pub fn run_sinc_sweep(layout: &Layout, settings: &SincSettings) -> Result<SincSweep> {
    let ctx = SincContext::new(layout, settings)?;
    let (train, test) = settings.task.inputs()?;

    let (model, tr, te, _) = evaluate(&ctx, &layout.linear().scatterers, &train, &test)?;
    log::info!("linear baseline: test RMSE {te:.4}");
    let linear = SincPoint {
        exponent: None,
        gain: 0.0,
        unstable: false,
        train_rmse: Some(tr),
        test_rmse: Some(te),
        lambda: Some(model.lambda),
    };

    let mut points = Vec::with_capacity(settings.exponents.len());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &n in &settings.exponents {
        let outcome = ctx.calibrate(n).and_then(|gain| {
            let scatterers: Vec<ScattererSpec> = layout
                .scatterers
                .iter()
                .map(|s| ScattererSpec::new(s.position, n, gain).with_law(settings.law))
                .collect();
            evaluate(&ctx, &scatterers, &train, &test).map(|r| (gain, r))
        });
        match outcome {
            Ok((gain, (model, tr, te, predictions))) => {
                log::info!("n = {n}: gain {gain:.3e}, test RMSE {te:.4}");
                if best.as_ref().is_none_or(|(b, _)| te < *b) {
                    best = Some((te, predictions.iter().copied().collect()));
                }
                points.push(SincPoint {
                    exponent: Some(n),
                    gain,
                    unstable: false,
                    train_rmse: Some(tr),
                    test_rmse: Some(te),
                    lambda: Some(model.lambda),
                });
            }
            Err(Error::Instability { step_index, kind }) => {
                log::warn!("n = {n}: unstable ({kind:?} at step {step_index})");
                points.push(SincPoint {
                    exponent: Some(n),
                    gain: 0.0,
                    unstable: true,
                    train_rmse: None,
                    test_rmse: None,
                    lambda: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SincSweep { points, linear, test_inputs: test, best_predictions: best.map(|b| b.1).unwrap_or_default() })
}
