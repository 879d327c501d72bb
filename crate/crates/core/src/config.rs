//! Run configuration: a strict TOML schema, its canonical hash and the
//! checks that run before any simulation starts.
//!
//! Shared sections (`solver`, `encoding`, `readout`) override the task
//! defaults key by key; a key a task does not use is rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarks::characterize::CharacterizeSettings;
use crate::benchmarks::layout::{cavity_preset, room_preset, Layout, Profile, SPEED_OF_SOUND};
use crate::benchmarks::memory::MemorySettings;
use crate::benchmarks::sinc::{SincSettings, SincTask};
use crate::benchmarks::vowels::VowelSettings;
use crate::benchmarks::Mode;
use crate::encoding::{read_wav, Normalization};
use crate::error::{Error, Result};
use crate::readout::FeatureKind;
use crate::scatterers::{PowerLaw, ScattererSpec};
use crate::wavefield::{derive_timestep, Boundary, CavitySpec, Cell, ProbeSpec, RunOptions, SourceSpec, Waveform};

pub const SCHEMA_VERSION: u32 = 1;

/// Mixed into the split seed to seed microphone noise.
const NOISE_SEED_SALT: u64 = 0x6e6f_6973_6500;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Not part of the hash.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Simulation threads; 0 uses every core. Not part of the hash.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub cavity: CavitySection,
    #[serde(default)]
    pub solver: SolverSection,
    /// Driven sources; only the simulate task uses them.
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    /// Replaces the preset's probes when given.
    #[serde(default)]
    pub probes: Option<Vec<ProbeSpec>>,
    /// Replaces the preset's scatterers when given.
    #[serde(default)]
    pub scatterers: Option<Vec<ScattererSpec>>,
    #[serde(default)]
    pub encoding: EncodingSection,
    #[serde(default)]
    pub readout: ReadoutSection,
    pub task: TaskSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Encoding mask.
    pub mask: u64,
    /// Input draws, dataset splits and microphone noise.
    pub split: u64,
    /// Classifier training order.
    pub svm: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { mask: 11, split: 7, svm: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 2 m × 1 m rigid cavity with rods, ten sources and ten scatterers.
    #[default]
    Cavity,
    /// 6 m × 4 m lossy room with one corner source.
    Room,
    /// Uniform rectangle with nothing in it.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    /// Extents and cell size of the empty preset.
    #[serde(default)]
    pub width_m: Option<f64>,
    #[serde(default)]
    pub height_m: Option<f64>,
    #[serde(default)]
    pub dx: Option<f64>,
    #[serde(default)]
    pub speed_of_sound: Option<f64>,
    /// Uniform damping (1/s) replacing the preset's.
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub boundary: Option<Boundary>,
}

fn default_rate() -> f64 {
    16_000.0
}

impl Default for CavitySection {
    fn default() -> Self {
        Self {
            preset: Preset::Cavity,
            profile: Profile::default(),
            sample_rate_hz: default_rate(),
            width_m: None,
            height_m: None,
            dx: None,
            speed_of_sound: None,
            damping: None,
            boundary: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub cfl: Option<f64>,
    pub dc_block_hz: Option<f64>,
    pub amplitude_limit: Option<f64>,
}

impl SolverSection {
    pub fn apply(&self, base: RunOptions) -> RunOptions {
        RunOptions {
            cfl: self.cfl.unwrap_or(base.cfl),
            dc_block_hz: self.dc_block_hz.unwrap_or(base.dc_block_hz),
            amplitude_limit: self.amplitude_limit.or(base.amplitude_limit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub position: Cell,
    pub waveform: WaveformConfig,
    #[serde(default)]
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveformConfig {
    Zero {
        duration_s: f64,
    },
    Sine {
        frequency_hz: f64,
        amplitude: f64,
        duration_s: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    /// Hann pulse.
    Pulse {
        width_s: f64,
        amplitude: f64,
    },
    /// Mono WAV scaled so its peak equals `amplitude`.
    Wav {
        path: PathBuf,
        amplitude: f64,
    },
}

impl WaveformConfig {
    pub fn build(&self, sample_rate_hz: f64, base_dir: &Path) -> Result<Waveform> {
        use std::f64::consts::PI;
        let n_of = |secs: f64| (secs * sample_rate_hz).round() as usize;
        let samples = match *self {
            WaveformConfig::Zero { duration_s } => vec![0.0; n_of(duration_s)],
            WaveformConfig::Sine { frequency_hz, amplitude, duration_s, phase_rad } => (0..n_of(duration_s))
                .map(|k| amplitude * (2.0 * PI * frequency_hz * k as f64 / sample_rate_hz + phase_rad).sin())
                .collect(),
            WaveformConfig::Pulse { width_s, amplitude } => {
                let n = n_of(width_s).max(2);
                (0..=n).map(|k| amplitude * (0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())).collect()
            }
            WaveformConfig::Wav { ref path, amplitude } => {
                let (audio, rate) = read_wav(&base_dir.join(path))?;
                let audio = crate::encoding::resample(&audio, rate, sample_rate_hz)?;
                let peak = audio.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
                audio.iter().map(|v| v * scale).collect()
            }
        };
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(config_err("source waveform is not finite"));
        }
        Ok(Waveform::new(samples, sample_rate_hz))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EncodingSection {
    pub carriers_hz: Option<Vec<f64>>,
    pub amplitude_scale: Option<f64>,
    pub normalization: Option<Normalization>,
    pub ramp_s: Option<f64>,
    /// Delay between consecutive loudspeakers for audio input.
    pub source_delay_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub window_start_s: Option<f64>,
    pub window_len: Option<usize>,
    pub feature_kind: Option<FeatureKind>,
    /// Ridge penalties relative to the feature scale.
    pub lambdas: Option<Vec<f64>>,
    pub bands_hz: Option<Vec<(f64, f64)>>,
    pub pca_k: Option<usize>,
    pub c_reg: Option<f64>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Simulate,
    Sinc,
    Vowel,
    Memory,
    Characterize,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Simulate => "simulate",
            TaskKind::Sinc => "sinc",
            TaskKind::Vowel => "vowel",
            TaskKind::Memory => "memory",
            TaskKind::Characterize => "characterize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub kind: TaskKind,
    #[serde(default)]
    pub simulate: SimulateTask,
    #[serde(default)]
    pub sinc: SincTaskConfig,
    #[serde(default)]
    pub vowel: VowelTaskConfig,
    #[serde(default)]
    pub memory: MemoryTaskConfig,
    #[serde(default)]
    pub characterize: CharacterizeTaskConfig,
    #[serde(default)]
    pub gates: Gates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateTask {
    pub duration_s: f64,
    /// Also write one WAV file per probe.
    pub write_wav: bool,
}

impl Default for SimulateTask {
    fn default() -> Self {
        Self { duration_s: 0.1, write_wav: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SincTaskConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub zeta_range: (f64, f64),
    pub duration_s: f64,
    pub exponents: Vec<f64>,
    pub law: PowerLaw,
    pub gain_fraction: f64,
    pub noise_fraction: f64,
}

impl Default for SincTaskConfig {
    fn default() -> Self {
        let s = SincSettings::default();
        Self {
            n_train: s.task.n_train,
            n_test: s.task.n_test,
            zeta_range: s.task.zeta_range,
            duration_s: s.duration_s,
            exponents: s.exponents,
            law: s.law,
            gain_fraction: s.gain_fraction,
            noise_fraction: s.noise_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VowelTaskConfig {
    /// Directory with `manifest.csv`; the corpus environment variable
    /// takes precedence.
    pub corpus: Option<PathBuf>,
    /// Use the built-in formant synthesiser when no corpus is found.
    pub synthetic_fallback: bool,
    pub modes: Vec<Mode>,
    /// Number of (split, classifier) seed pairs, counting up from the
    /// configured seeds.
    pub seed_count: usize,
    pub duration_s: f64,
    pub test_fraction: f64,
    pub exponent_n: f64,
    pub law: PowerLaw,
    pub gain_fraction: f64,
    pub calibration_samples: usize,
}

impl Default for VowelTaskConfig {
    fn default() -> Self {
        let s = VowelSettings::default();
        Self {
            corpus: None,
            synthetic_fallback: true,
            modes: vec![Mode::Digital, Mode::Linear, Mode::Nonlinear],
            seed_count: 3,
            duration_s: s.duration_s,
            test_fraction: s.test_fraction,
            exponent_n: s.exponent_n,
            law: s.law,
            gain_fraction: s.gain_fraction,
            calibration_samples: s.calibration_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryTaskConfig {
    pub pulse_width_s: f64,
    pub amplitude: f64,
    pub duration_s: f64,
    pub source_index: usize,
    pub onset_threshold: f64,
    pub fit_delay_s: f64,
    pub block_s: f64,
    pub highpass_hz: f64,
}

impl Default for MemoryTaskConfig {
    fn default() -> Self {
        let s = MemorySettings::default();
        Self {
            pulse_width_s: s.pulse_width_s,
            amplitude: s.amplitude,
            duration_s: s.duration_s,
            source_index: s.source_index,
            onset_threshold: s.onset_threshold,
            fit_delay_s: s.fit_delay_s,
            block_s: s.block_s,
            highpass_hz: s.highpass_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacterizeTaskConfig {
    /// Index into the layout's scatterers.
    pub scatterer: usize,
    pub fundamental_hz: f64,
    pub drive_amplitude: f64,
    pub exponent_n: f64,
    pub law: PowerLaw,
    pub gain_factors: Vec<f64>,
    pub k_harmonics: usize,
    pub duration_s: f64,
    pub source: Option<Cell>,
}

impl Default for CharacterizeTaskConfig {
    fn default() -> Self {
        let s = CharacterizeSettings::default();
        Self {
            scatterer: 0,
            fundamental_hz: s.fundamental_hz,
            drive_amplitude: s.drive_amplitude,
            exponent_n: s.exponent_n,
            law: s.law,
            gain_factors: s.gain_factors,
            k_harmonics: s.k_harmonics,
            duration_s: s.duration_s,
            source: s.source,
        }
    }
}

/// Pass/fail thresholds checked after a benchmark; unset gates are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Gates {
    pub sinc_max_rmse: Option<f64>,
    pub sinc_max_ratio_to_linear: Option<f64>,
    pub sinc_interior_minimum: Option<bool>,
    /// Accuracy points nonlinear must beat linear by, on every seed.
    pub vowel_margin_over_linear: Option<f64>,
    pub vowel_margin_over_digital: Option<f64>,
    pub vowel_max_parameters: Option<usize>,
    pub memory_rate_tolerance: Option<f64>,
    pub memory_max_cross_correlation: Option<f64>,
    pub characterize_second_harmonic_monotone: Option<bool>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    /// Parses a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    /// Output directory, resolved against the config's directory.
    pub fn output_path(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    /// Canonical JSON with sorted keys, without the output directory and
    /// worker count.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("workers");
        }
        serde_json::to_string(&value).expect("json value serialises")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn layout(&self) -> Result<Layout> {
        let c = &self.cavity;
        let empty_only = [("width_m", c.width_m.is_some()), ("height_m", c.height_m.is_some()), ("dx", c.dx.is_some())];
        let mut layout = match c.preset {
            Preset::Cavity | Preset::Room => {
                if let Some((key, _)) = empty_only.iter().find(|(_, set)| *set) {
                    return Err(config_err(format!("cavity.{key} only applies to the empty preset")));
                }
                let l = if c.preset == Preset::Cavity {
                    cavity_preset(c.profile, c.sample_rate_hz)?
                } else {
                    room_preset(c.profile, c.sample_rate_hz)?
                };
                if let Some(speed) = c.speed_of_sound {
                    let mut l = l;
                    l.cavity.c_map.iter_mut().for_each(|v| *v = speed);
                    l
                } else {
                    l
                }
            }
            Preset::Empty => {
                let (Some(w), Some(h)) = (c.width_m, c.height_m) else {
                    return Err(config_err("the empty preset needs cavity.width_m and cavity.height_m"));
                };
                let dx = c.dx.unwrap_or(c.profile.dx());
                let cavity =
                    CavitySpec::uniform(w, h, dx, c.speed_of_sound.unwrap_or(SPEED_OF_SOUND), 0.0, c.sample_rate_hz)?;
                Layout { cavity, sources: Vec::new(), probes: Vec::new(), scatterers: Vec::new() }
            }
        };
        if let Some(d) = c.damping {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(config_err(format!("cavity.damping must be finite and >= 0, got {d}")));
            }
            layout.cavity.set_uniform_damping(d);
        }
        if let Some(b) = c.boundary {
            layout.cavity = layout.cavity.with_boundary(b);
        }
        layout.cavity.validate()?;
        if let Some(p) = &self.probes {
            layout.probes = p.clone();
        }
        if let Some(s) = &self.scatterers {
            layout.scatterers = s.clone();
        }
        Ok(layout)
    }

    /// Simulate-task sources with their waveforms built.
    pub fn sources(&self, sample_rate_hz: f64) -> Result<Vec<SourceSpec>> {
        self.sources
            .iter()
            .map(|s| {
                Ok(SourceSpec {
                    position: s.position,
                    waveform: s.waveform.build(sample_rate_hz, &self.base_dir)?,
                    delay_s: s.delay_s,
                })
            })
            .collect()
    }

    pub fn run_options(&self, base: RunOptions) -> RunOptions {
        self.solver.apply(base)
    }

    /// Keys of the shared sections that are set but unused by the task.
    fn unused_keys(&self) -> Vec<&'static str> {
        let e = &self.encoding;
        let r = &self.readout;
        let all = [
            ("encoding.carriers_hz", e.carriers_hz.is_some(), &[TaskKind::Sinc][..]),
            ("encoding.amplitude_scale", e.amplitude_scale.is_some(), &[TaskKind::Sinc, TaskKind::Vowel]),
            ("encoding.normalization", e.normalization.is_some(), &[TaskKind::Sinc]),
            ("encoding.ramp_s", e.ramp_s.is_some(), &[TaskKind::Sinc]),
            ("encoding.source_delay_s", e.source_delay_s.is_some(), &[TaskKind::Vowel]),
            ("readout.window_start_s", r.window_start_s.is_some(), &[TaskKind::Sinc, TaskKind::Vowel]),
            ("readout.window_len", r.window_len.is_some(), &[TaskKind::Sinc, TaskKind::Vowel]),
            ("readout.feature_kind", r.feature_kind.is_some(), &[TaskKind::Sinc]),
            ("readout.lambdas", r.lambdas.is_some(), &[TaskKind::Sinc]),
            ("readout.bands_hz", r.bands_hz.is_some(), &[TaskKind::Vowel]),
            ("readout.pca_k", r.pca_k.is_some(), &[TaskKind::Vowel]),
            ("readout.c_reg", r.c_reg.is_some(), &[TaskKind::Vowel]),
            ("readout.epochs", r.epochs.is_some(), &[TaskKind::Vowel]),
        ];
        all.iter().filter(|(_, set, tasks)| *set && !tasks.contains(&self.task.kind)).map(|(k, _, _)| *k).collect()
    }

    pub fn sinc_settings(&self) -> SincSettings {
        let t = &self.task.sinc;
        let d = SincSettings::default();
        SincSettings {
            task: SincTask { n_train: t.n_train, n_test: t.n_test, seed: self.seeds.split, zeta_range: t.zeta_range },
            carriers_hz: self.encoding.carriers_hz.clone().unwrap_or(d.carriers_hz),
            mask_seed: self.seeds.mask,
            amplitude_scale: self.encoding.amplitude_scale.unwrap_or(d.amplitude_scale),
            normalization: self.encoding.normalization.unwrap_or(d.normalization),
            duration_s: t.duration_s,
            ramp_s: self.encoding.ramp_s.unwrap_or(d.ramp_s),
            window_start_s: self.readout.window_start_s.unwrap_or(d.window_start_s),
            window_len: self.readout.window_len.unwrap_or(d.window_len),
            exponents: t.exponents.clone(),
            law: t.law,
            gain_fraction: t.gain_fraction,
            feature_kind: self.readout.feature_kind.unwrap_or(d.feature_kind),
            noise_fraction: t.noise_fraction,
            noise_seed: self.seeds.split ^ NOISE_SEED_SALT,
            lambdas: self.readout.lambdas.clone().unwrap_or(d.lambdas),
            run: self.run_options(d.run),
        }
    }

    pub fn vowel_settings(&self) -> VowelSettings {
        let t = &self.task.vowel;
        let d = VowelSettings::default();
        VowelSettings {
            duration_s: t.duration_s,
            source_delay_s: self.encoding.source_delay_s.unwrap_or(d.source_delay_s),
            amplitude_scale: self.encoding.amplitude_scale.unwrap_or(d.amplitude_scale),
            window_start_s: self.readout.window_start_s.unwrap_or(d.window_start_s),
            window_len: self.readout.window_len.unwrap_or(d.window_len),
            bands_hz: self.readout.bands_hz.clone().unwrap_or(d.bands_hz),
            pca_k: self.readout.pca_k.unwrap_or(d.pca_k),
            c_reg: self.readout.c_reg.unwrap_or(d.c_reg),
            epochs: self.readout.epochs.unwrap_or(d.epochs),
            test_fraction: t.test_fraction,
            exponent_n: t.exponent_n,
            law: t.law,
            gain_fraction: t.gain_fraction,
            calibration_samples: t.calibration_samples,
            run: self.run_options(d.run),
        }
    }

    /// (split, classifier) seed pairs of the vowel task.
    pub fn vowel_seeds(&self) -> Vec<(u64, u64)> {
        (0..self.task.vowel.seed_count as u64)
            .map(|k| (self.seeds.split.wrapping_add(k), self.seeds.svm.wrapping_add(k)))
            .collect()
    }

    pub fn memory_settings(&self) -> MemorySettings {
        let t = &self.task.memory;
        MemorySettings {
            pulse_width_s: t.pulse_width_s,
            amplitude: t.amplitude,
            duration_s: t.duration_s,
            source_index: t.source_index,
            onset_threshold: t.onset_threshold,
            fit_delay_s: t.fit_delay_s,
            block_s: t.block_s,
            highpass_hz: t.highpass_hz,
            run: self.run_options(RunOptions::default()),
        }
    }

    pub fn characterize_settings(&self) -> CharacterizeSettings {
        let t = &self.task.characterize;
        CharacterizeSettings {
            fundamental_hz: t.fundamental_hz,
            drive_amplitude: t.drive_amplitude,
            exponent_n: t.exponent_n,
            law: t.law,
            gain_factors: t.gain_factors.clone(),
            k_harmonics: t.k_harmonics,
            duration_s: t.duration_s,
            source: t.source,
            run: self.run_options(RunOptions::default()),
        }
    }

    /// Every check that can be made without simulating. Returns the layout
    /// so callers need not rebuild it.
    pub fn validate(&self) -> Result<Layout> {
        let layout = self.layout()?;
        let cavity = &layout.cavity;
        let unused = self.unused_keys();
        if !unused.is_empty() {
            return Err(config_err(format!(
                "keys not used by the {} task: {}",
                self.task.kind.name(),
                unused.join(", ")
            )));
        }
        if !self.sources.is_empty() && self.task.kind != TaskKind::Simulate {
            return Err(config_err("[[sources]] only applies to the simulate task"));
        }

        let mut labels = BTreeSet::new();
        for p in &layout.probes {
            if !cavity.is_interior(p.position) {
                return Err(config_err(format!(
                    "probe '{}' at {} lies outside the grid interior ({} x {} cells)",
                    p.label,
                    p.position,
                    cavity.nx(),
                    cavity.ny()
                )));
            }
            if cavity.solid[cavity.index(p.position)] {
                return Err(config_err(format!("probe '{}' at {} is inside a solid obstacle", p.label, p.position)));
            }
            if p.label.is_empty() || p.label.contains([',', '"', '\n']) || p.label == "time_s" {
                return Err(config_err(format!("probe label '{}' cannot be used as a CSV column", p.label)));
            }
            if !labels.insert(p.label.as_str()) {
                return Err(config_err(format!("probe label '{}' is used twice", p.label)));
            }
        }
        for (k, s) in layout.scatterers.iter().enumerate() {
            if !cavity.is_interior(s.position) {
                return Err(config_err(format!("scatterer {k} at {} lies outside the grid interior", s.position)));
            }
            s.validate().map_err(|e| config_err(format!("scatterer {k}: {e}")))?;
        }
        for (k, s) in self.sources.iter().enumerate() {
            if !cavity.is_interior(s.position) {
                return Err(config_err(format!("source {k} at {} lies outside the grid interior", s.position)));
            }
            if !(s.delay_s >= 0.0) {
                return Err(config_err(format!("source {k} has a negative delay")));
            }
            if let WaveformConfig::Wav { path, .. } = &s.waveform {
                let full = self.base_dir.join(path);
                if !full.is_file() {
                    return Err(config_err(format!("source {k}: WAV file {} not found", full.display())));
                }
            }
        }
        let run = self.run_options(RunOptions::default());
        derive_timestep(cavity, run.cfl)?;
        let rate = cavity.sample_rate_hz;

        match self.task.kind {
            TaskKind::Simulate => {
                if !(self.task.simulate.duration_s > 0.0) {
                    return Err(config_err("task.simulate.duration_s must be positive"));
                }
                if self.task.simulate.write_wav && (rate.fract() != 0.0 || rate > u32::MAX as f64) {
                    return Err(config_err(format!("WAV output needs an integer sample rate, got {rate}")));
                }
            }
            TaskKind::Sinc => {
                let s = self.sinc_settings();
                s.validate()?;
                s.selector(rate)?;
                check_window(s.window_start_s, s.window_len, rate, s.duration_s, "sinc")?;
                if layout.sources.is_empty() || layout.scatterers.is_empty() || layout.probes.is_empty() {
                    return Err(config_err("the sinc task needs sources, scatterers and probes"));
                }
            }
            TaskKind::Vowel => {
                let s = self.vowel_settings();
                let nyquist = rate / 2.0;
                for &(lo, hi) in &s.bands_hz {
                    if !(0.0 <= lo && lo < hi && hi <= nyquist) {
                        return Err(config_err(format!(
                            "band {lo}-{hi} Hz must be ordered and below Nyquist ({nyquist} Hz)"
                        )));
                    }
                }
                s.selector(rate)?;
                check_window(s.window_start_s, s.window_len, rate, s.duration_s, "vowel")?;
                if self.task.vowel.modes.is_empty() || self.task.vowel.seed_count == 0 {
                    return Err(config_err("the vowel task needs at least one mode and one seed"));
                }
                if self.task.vowel.modes.iter().any(|&m| m != Mode::Digital)
                    && (layout.sources.is_empty() || layout.probes.is_empty())
                {
                    return Err(config_err("cavity modes of the vowel task need sources and probes"));
                }
            }
            TaskKind::Memory => {
                let s = self.memory_settings();
                if s.source_index >= layout.sources.len() {
                    return Err(config_err(format!(
                        "task.memory.source_index {} but the layout has {} sources",
                        s.source_index,
                        layout.sources.len()
                    )));
                }
            }
            TaskKind::Characterize => {
                let t = &self.task.characterize;
                if t.scatterer >= layout.scatterers.len() {
                    return Err(config_err(format!(
                        "task.characterize.scatterer {} but the layout has {} scatterers",
                        t.scatterer,
                        layout.scatterers.len()
                    )));
                }
                if t.fundamental_hz * t.k_harmonics as f64 >= rate / 2.0 {
                    return Err(config_err("characterize harmonics reach above Nyquist"));
                }
            }
        }
        Ok(layout)
    }
}

fn check_window(start_s: f64, len: usize, rate: f64, duration_s: f64, task: &str) -> Result<()> {
    let start = (start_s * rate).round() as usize;
    let available = (duration_s * rate).round() as usize;
    if start + len > available {
        return Err(config_err(format!(
            "{task} readout window ends at sample {} but the run has {available}",
            start + len
        )));
    }
    Ok(())
}
