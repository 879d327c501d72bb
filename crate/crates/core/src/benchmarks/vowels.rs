use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::layout::Layout;
use crate::benchmarks::{ClassificationMetrics, Mode};
use crate::encoding::{encode_audio, read_wav, resample};
use crate::error::{Error, Result};
use crate::readout::{
    argmax, fit_linear_svm, flatten_features, fourier_features, stack_rows, BandMinMax, FeatureKind, FourierSelector,
    LinearSvm, Pca, SvmParams,
};
use crate::scatterers::{JointStabilitySearch, PowerLaw};
use crate::wavefield::{derive_timestep, run_on, Medium, ProbeRecord, RunOptions, SourceSpec};

/// Environment variable that overrides the corpus location.
pub const CORPUS_ENV: &str = "CAVITY_RC_CORPUS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VowelClass {
    Ah,
    Aw,
    Uh,
}

impl VowelClass {
    pub const ALL: [VowelClass; 3] = [VowelClass::Ah, VowelClass::Aw, VowelClass::Uh];

    pub fn name(self) -> &'static str {
        match self {
            VowelClass::Ah => "ah",
            VowelClass::Aw => "aw",
            VowelClass::Uh => "uh",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ah" => Some(VowelClass::Ah),
            "aw" => Some(VowelClass::Aw),
            "uh" => Some(VowelClass::Uh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" | "man" | "boy" => Some(Sex::Male),
            "f" | "w" | "female" | "woman" | "girl" => Some(Sex::Female),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VowelSample {
    pub id: String,
    pub audio: Vec<f64>,
    pub sample_rate_hz: f64,
    pub class: VowelClass,
    pub speaker: String,
    pub sex: Sex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VowelDataset {
    pub samples: Vec<VowelSample>,
    /// Formant-synthesised stand-in rather than recordings.
    pub synthetic: bool,
}

/// Indices into a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl VowelDataset {
    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        self.samples.iter().for_each(|s| c[s.class.index()] += 1);
        c
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class.index()).collect()
    }

    /// Speaker-disjoint split: within each sex, speakers are shuffled with
    /// `seed` and the first `test_fraction` of them go to the test set.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<Split> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!("test fraction {test_fraction} not in (0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut test_speakers = BTreeSet::new();
        for sex in [Sex::Male, Sex::Female] {
            let mut speakers: Vec<&str> = self
                .samples
                .iter()
                .filter(|s| s.sex == sex)
                .map(|s| s.speaker.as_str())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            speakers.shuffle(&mut rng);
            let n_test = (speakers.len() as f64 * test_fraction).round() as usize;
            test_speakers.extend(speakers.into_iter().take(n_test));
        }
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.samples.len()).partition(|&i| test_speakers.contains(self.samples[i].speaker.as_str()));
        for (name, part) in [("train", &train), ("test", &test)] {
            let present: BTreeSet<_> = part.iter().map(|&i| self.samples[i].class).collect();
            if present.len() < 3 {
                return Err(Error::Dataset(format!("{name} split lacks some vowel classes")));
            }
        }
        Ok(Split { train, test })
    }
}

/// Loads the ah/aw/uh subset listed in `manifest.csv`
/// (`filename,class,speaker,sex`) under `root`.
pub fn ingest_vowel_corpus(root: &Path) -> Result<VowelDataset> {
    let manifest = root.join("manifest.csv");
    if !manifest.is_file() {
        return Err(Error::Dataset(format!(
            "no vowel corpus at {}: expected manifest.csv with columns filename,class,speaker,sex \
             next to mono WAV files (set {CORPUS_ENV} to point elsewhere, or enable the synthetic fallback)",
            root.display()
        )));
    }
    let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Dataset("manifest.csv is empty".into()))?
        .split(',')
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if header != ["filename", "class", "speaker", "sex"] {
        return Err(Error::Dataset(format!("manifest header {header:?} is not filename,class,speaker,sex")));
    }
    let mut samples = Vec::new();
    let mut problems = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            problems.push(format!("line {}: expected 4 columns", n + 2));
            continue;
        }
        let Some(class) = VowelClass::parse(cols[1]) else {
            continue;
        };
        let Some(sex) = Sex::parse(cols[3]) else {
            problems.push(format!("{}: unknown sex '{}'", cols[0], cols[3]));
            continue;
        };
        let path = root.join(cols[0]);
        match read_wav(&path) {
            Ok((audio, rate)) => samples.push(VowelSample {
                id: cols[0].to_string(),
                audio,
                sample_rate_hz: rate,
                class,
                speaker: cols[2].to_string(),
                sex,
            }),
            Err(e) => problems.push(format!("{}: {e}", cols[0])),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Dataset(format!("corpus manifest problems:\n  {}", problems.join("\n  "))));
    }
    let dataset = VowelDataset { samples, synthetic: false };
    if dataset.class_counts().contains(&0) {
        return Err(Error::Dataset(format!("corpus lacks some of ah/aw/uh (counts {:?})", dataset.class_counts())));
    }
    log::info!("loaded {} vowel recordings, class counts {:?}", dataset.samples.len(), dataset.class_counts());
    Ok(dataset)
}

/// Finds the corpus: the environment variable first, then `configured`.
/// Without either, the synthetic corpus is used if `synthetic_fallback`
/// allows it. A corpus that exists but fails to load is always an error.
pub fn resolve_corpus(configured: Option<&Path>, synthetic_fallback: bool) -> Result<VowelDataset> {
    let root = std::env::var_os(CORPUS_ENV).map(std::path::PathBuf::from).or_else(|| configured.map(Path::to_path_buf));
    match root {
        Some(root) if root.join("manifest.csv").is_file() || !synthetic_fallback => ingest_vowel_corpus(&root),
        _ if synthetic_fallback => {
            log::warn!("no vowel corpus found, using the synthetic corpus");
            Ok(crate::benchmarks::synth::default_synthetic_corpus())
        }
        _ => Err(Error::Dataset(format!(
            "no vowel corpus configured: set {CORPUS_ENV} or task.vowel.corpus, or enable the synthetic fallback"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VowelSettings {
    pub duration_s: f64,
    pub source_delay_s: f64,
    /// Peak source term of each loudspeaker (Pa/s²).
    pub amplitude_scale: f64,
    pub window_start_s: f64,
    pub window_len: usize,
    pub bands_hz: Vec<(f64, f64)>,
    pub pca_k: usize,
    pub c_reg: f64,
    pub epochs: usize,
    pub test_fraction: f64,
    pub exponent_n: f64,
    pub law: PowerLaw,
    /// Fraction of the joint stability bound used as the common gain.
    pub gain_fraction: f64,
    /// Training samples whose drives calibrate the stability bound.
    pub calibration_samples: usize,
    pub run: RunOptions,
}

impl Default for VowelSettings {
    fn default() -> Self {
        Self {
            duration_s: 0.5,
            source_delay_s: 0.01,
            amplitude_scale: 1e9,
            window_start_s: 0.05,
            window_len: 4096,
            bands_hz: vec![(10.0, 1000.0), (1000.0, 3500.0)],
            pca_k: 65,
            c_reg: 10.0,
            epochs: 200,
            test_fraction: 1.0 / 3.0,
            exponent_n: 1.5,
            law: PowerLaw::Even,
            gain_fraction: 0.3,
            calibration_samples: 6,
            // Vowel envelopes would otherwise leak through the feedback and
            // pump the uniform mode.
            run: RunOptions { dc_block_hz: 100.0, ..RunOptions::default() },
        }
    }
}

impl VowelSettings {
    pub fn selector(&self, sample_rate_hz: f64) -> Result<FourierSelector> {
        FourierSelector::for_bands(self.window_start_s, self.window_len, sample_rate_hz, &self.bands_hz)
    }
}

/// Raw (un-normalised) Fourier magnitudes of every sample for one mode,
/// reusable across split and classifier seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelFeatures {
    pub mode: Mode,
    pub raw: Vec<DVector<f64>>,
    pub n_probes: usize,
    pub selector: FourierSelector,
    pub sample_rate_hz: f64,
    /// Common scatterer gain in the nonlinear mode.
    pub gain: Option<f64>,
}

fn audio_record(sample: &VowelSample, rate: f64, duration_s: f64) -> Result<ProbeRecord> {
    let audio = if (sample.sample_rate_hz - rate).abs() > 1e-9 * rate {
        resample(&sample.audio, sample.sample_rate_hz, rate)?
    } else {
        sample.audio.clone()
    };
    let n = (duration_s * rate).round() as usize;
    let mut samples = vec![0.0; n];
    samples.iter_mut().zip(&audio).for_each(|(s, a)| *s = *a);
    Ok(ProbeRecord { label: "audio".into(), samples, sample_rate_hz: rate })
}

fn drive(sample: &VowelSample, layout: &Layout, settings: &VowelSettings) -> Result<Vec<SourceSpec>> {
    let rate = layout.cavity.sample_rate_hz;
    let plan = encode_audio(
        &sample.audio,
        sample.sample_rate_hz,
        rate,
        layout.sources.len(),
        settings.source_delay_s,
        settings.amplitude_scale,
    )?;
    plan.sources(&layout.sources)
}

/// Common gain for the nonlinear mode: a fraction of the joint stability
/// bound under the drives of the first few training samples.
pub fn calibrate_gain(
    layout: &Layout,
    medium: &Medium,
    dataset: &VowelDataset,
    train: &[usize],
    settings: &VowelSettings,
    options: &RunOptions,
) -> Result<f64> {
    let drives = train
        .iter()
        .take(settings.calibration_samples.max(1))
        .map(|&i| drive(&dataset.samples[i], layout, settings))
        .collect::<Result<Vec<_>>>()?;
    let templates = layout.with_gains(settings.exponent_n, settings.law, &vec![0.0; layout.scatterers.len()])?;
    let search = JointStabilitySearch {
        medium,
        cavity: &layout.cavity,
        probes: &layout.probes,
        duration_s: settings.duration_s,
        rms_factor: 100.0,
        tolerance: 2e-2,
        options: *options,
    };
    let bound = search.search(&templates.scatterers, &drives)?;
    log::info!("joint stability bound {bound:.3e}");
    Ok(settings.gain_fraction * bound)
}

/// Simulates (or, in the digital mode, just transforms) every sample.
pub fn extract_features(
    dataset: &VowelDataset,
    layout: &Layout,
    settings: &VowelSettings,
    mode: Mode,
    gain: Option<f64>,
) -> Result<VowelFeatures> {
    let rate = layout.cavity.sample_rate_hz;
    let selector = settings.selector(rate)?;
    let options = settings.run;
    let (active, n_probes) = match mode {
        Mode::Digital => (None, 1),
        Mode::Linear => (Some(layout.linear()), layout.probes.len()),
        Mode::Nonlinear => {
            let g = gain.ok_or_else(|| Error::InvalidParameter("nonlinear mode needs a gain".into()))?;
            let n = layout.scatterers.len();
            (Some(layout.with_gains(settings.exponent_n, settings.law, &vec![g; n])?), layout.probes.len())
        }
    };
    let medium = match &active {
        Some(l) => Some(Medium::new(&l.cavity, derive_timestep(&l.cavity, options.cfl)?)?),
        None => None,
    };
    let raw = dataset
        .samples
        .par_iter()
        .map(|sample| -> Result<DVector<f64>> {
            let records = match (&active, &medium) {
                (Some(l), Some(m)) => {
                    let sources = drive(sample, l, settings)?;
                    run_on(m, &l.cavity, &sources, &l.probes, &l.scatterers, settings.duration_s, &options)?
                }
                _ => vec![audio_record(sample, rate, settings.duration_s)?],
            };
            Ok(flatten_features(&fourier_features(&records, &selector)?, FeatureKind::Magnitude))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VowelFeatures { mode, raw, n_probes, selector, sample_rate_hz: rate, gain })
}

/// Trained classifier stages.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelClassifier {
    pub norms: BandMinMax,
    pub pca: Pca,
    pub svm: LinearSvm,
}

impl VowelClassifier {
    pub fn n_parameters(&self) -> usize {
        self.svm.n_parameters()
    }

    pub fn predict(&self, raw: &DVector<f64>) -> Result<usize> {
        let z = self.pca.transform(&self.norms.apply(raw)?)?;
        Ok(argmax(self.svm.scores(&z).as_slice()))
    }
}

pub fn train_classifier(
    features: &VowelFeatures,
    labels: &[usize],
    train: &[usize],
    settings: &VowelSettings,
    svm_seed: u64,
) -> Result<VowelClassifier> {
    let raw: Vec<DVector<f64>> = train.iter().map(|&i| features.raw[i].clone()).collect();
    let norms = BandMinMax::fit(
        &raw,
        &settings.bands_hz,
        &features.selector,
        features.sample_rate_hz,
        features.n_probes,
        FeatureKind::Magnitude,
    )?;
    let normed = raw.iter().map(|r| norms.apply(r)).collect::<Result<Vec<_>>>()?;
    let data = stack_rows(&normed)?;
    let k = settings.pca_k.min(data.nrows()).min(data.ncols());
    let pca = Pca::fit(&data, k)?;
    let projected = normed.iter().map(|v| pca.transform(v)).collect::<Result<Vec<_>>>()?;
    let x = stack_rows(&projected)?;
    let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let params = SvmParams { c_reg: settings.c_reg, epochs: settings.epochs, seed: svm_seed };
    let svm = fit_linear_svm(&x, &y, VowelClass::ALL.len(), &params)?;
    Ok(VowelClassifier { norms, pca, svm })
}

/// Outcome of one (split seed, classifier seed) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelOutcome {
    pub mode: Mode,
    pub split_seed: u64,
    pub svm_seed: u64,
    pub metrics: ClassificationMetrics,
    pub n_parameters: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub test_ids: Vec<String>,
}

pub fn evaluate(
    dataset: &VowelDataset,
    features: &VowelFeatures,
    settings: &VowelSettings,
    split_seed: u64,
    svm_seed: u64,
) -> Result<VowelOutcome> {
    evaluate_with_labels(dataset, features, &dataset.labels(), settings, split_seed, svm_seed)
}

/// Like [`evaluate`] with caller-supplied labels (used for the shuffled
/// label null test).
pub fn evaluate_with_labels(
    dataset: &VowelDataset,
    features: &VowelFeatures,
    labels: &[usize],
    settings: &VowelSettings,
    split_seed: u64,
    svm_seed: u64,
) -> Result<VowelOutcome> {
    let split = dataset.split(settings.test_fraction, split_seed)?;
    let clf = train_classifier(features, labels, &split.train, settings, svm_seed)?;
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    for &i in &split.test {
        truth.push(labels[i]);
        predicted.push(clf.predict(&features.raw[i])?);
    }
    Ok(VowelOutcome {
        mode: features.mode,
        split_seed,
        svm_seed,
        metrics: ClassificationMetrics::from_predictions(&truth, &predicted, 3),
        n_parameters: clf.n_parameters(),
        train_size: split.train.len(),
        test_size: split.test.len(),
        test_ids: split.test.iter().map(|&i| dataset.samples[i].id.clone()).collect(),
    })
}

/// Mean magnitude spectrum per class over a probe-major feature layout,
/// averaged over probes (for the spectra plots).
pub fn class_mean_spectra(dataset: &VowelDataset, features: &VowelFeatures) -> BTreeMap<VowelClass, Vec<f64>> {
    let bins = features.selector.n_bins();
    let mut out = BTreeMap::new();
    for class in VowelClass::ALL {
        let members: Vec<_> = (0..dataset.samples.len()).filter(|&i| dataset.samples[i].class == class).collect();
        let mut acc = vec![0.0; bins];
        for &i in &members {
            for m in 0..features.n_probes {
                for (a, v) in acc.iter_mut().zip(features.raw[i].rows(m * bins, bins).iter()) {
                    *a += v * v;
                }
            }
        }
        let norm = (members.len() * features.n_probes).max(1) as f64;
        out.insert(class, acc.into_iter().map(|v| v / norm).collect());
    }
    out
}

/// Accuracy of one pipeline over several (split, classifier) seed pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelModeResult {
    pub mode: Mode,
    pub gain: Option<f64>,
    pub outcomes: Vec<VowelOutcome>,
    pub mean_accuracy: f64,
    /// Per-class mean power spectra for plotting, class-major.
    #[serde(skip)]
    pub spectra: Vec<Vec<f64>>,
    #[serde(skip)]
    pub spectra_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelBenchmark {
    pub synthetic: bool,
    pub class_counts: [usize; 3],
    pub modes: Vec<VowelModeResult>,
}

impl VowelBenchmark {
    pub fn mode(&self, mode: Mode) -> Option<&VowelModeResult> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

/// Extracts features once per mode and evaluates every seed pair. The
/// nonlinear gain is calibrated on the training split of the first pair.
pub fn run_vowel_benchmark(
    dataset: &VowelDataset,
    layout: &Layout,
    settings: &VowelSettings,
    modes: &[Mode],
    seeds: &[(u64, u64)],
) -> Result<VowelBenchmark> {
    let &(first_split, _) = seeds.first().ok_or_else(|| Error::InvalidParameter("no seeds given".into()))?;
    let mut results = Vec::with_capacity(modes.len());
    for &mode in modes {
        let gain = if mode == Mode::Nonlinear {
            let medium = Medium::new(&layout.cavity, derive_timestep(&layout.cavity, settings.run.cfl)?)?;
            let split = dataset.split(settings.test_fraction, first_split)?;
            Some(calibrate_gain(layout, &medium, dataset, &split.train, settings, &settings.run)?)
        } else {
            None
        };
        let features = extract_features(dataset, layout, settings, mode, gain)?;
        let outcomes = seeds
            .iter()
            .map(|&(split, svm)| evaluate(dataset, &features, settings, split, svm))
            .collect::<Result<Vec<_>>>()?;
        let mean_accuracy = outcomes.iter().map(|o| o.metrics.accuracy).sum::<f64>() / outcomes.len() as f64;
        log::info!("{} mode: mean accuracy {mean_accuracy:.3}", mode.name());
        let spectra = class_mean_spectra(dataset, &features).into_values().collect();
        let spectra_hz = features
            .selector
            .selected_bins
            .iter()
            .map(|&b| features.selector.bin_hz(b, features.sample_rate_hz))
            .collect();
        results.push(VowelModeResult { mode, gain, outcomes, mean_accuracy, spectra, spectra_hz });
    }
    Ok(VowelBenchmark { synthetic: dataset.synthetic, class_counts: dataset.class_counts(), modes: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::synth::synthetic_corpus;

    #[test]
    fn split_is_speaker_disjoint_and_deterministic() {
        let d = synthetic_corpus(9, 9, 3);
        let s = d.split(1.0 / 3.0, 5).unwrap();
        assert_eq!(s, d.split(1.0 / 3.0, 5).unwrap());
        let train: BTreeSet<_> = s.train.iter().map(|&i| &d.samples[i].speaker).collect();
        assert!(s.test.iter().all(|&i| !train.contains(&d.samples[i].speaker)));
        assert_eq!(s.train.len() + s.test.len(), d.samples.len());
        assert_eq!(s.test.len(), 18);
        assert_ne!(s, d.split(1.0 / 3.0, 6).unwrap());
    }

    #[test]
    fn empty_or_missing_corpus_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ingest_vowel_corpus(dir.path()).is_err());
        std::fs::write(dir.path().join("manifest.csv"), "filename,class,speaker,sex\n").unwrap();
        assert!(ingest_vowel_corpus(dir.path()).is_err());
    }

    fn write_wav(path: &Path) {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for k in 0..800 {
            w.write_sample(((k as f64 * 0.3).sin() * 1000.0) as i16).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn manifest_subset_and_offending_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = String::from("filename,class,speaker,sex\n");
        for (k, class) in ["ah", "aw", "uh", "iy", "ae"].iter().enumerate() {
            let name = format!("s{k}.wav");
            write_wav(&dir.path().join(&name));
            manifest.push_str(&format!("{name},{class},m01,m\n"));
        }
        std::fs::write(dir.path().join("manifest.csv"), &manifest).unwrap();
        let d = ingest_vowel_corpus(dir.path()).unwrap();
        assert_eq!(d.samples.len(), 3);
        assert!(!d.synthetic);
        manifest.push_str("missing.wav,uh,m02,m\nbad.wav,ah,w01,x\n");
        std::fs::write(dir.path().join("manifest.csv"), &manifest).unwrap();
        let err = ingest_vowel_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("missing.wav") && err.contains("bad.wav"), "{err}");
    }
}
