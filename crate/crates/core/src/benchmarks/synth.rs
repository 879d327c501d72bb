//! Formant synthesis of the three vowels, used when no recorded corpus is
//! available.
//!
//! Class means follow published American English averages for adult men
//! and women. Each speaker gets a vocal-tract scale and a pitch; each
//! token gets its own formant jitter, pitch contour, length and breath
//! noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::benchmarks::vowels::{Sex, VowelClass, VowelDataset, VowelSample};

pub const SYNTH_RATE_HZ: f64 = 16_000.0;
/// Seed of the built-in synthetic corpus.
pub const SYNTH_CORPUS_SEED: u64 = 0x5EED_7011;

/// (F0, F1, F2, F3, F4) in Hz.
fn class_means(class: VowelClass, sex: Sex) -> [f64; 5] {
    match (class, sex) {
        (VowelClass::Ah, Sex::Male) => [138.0, 768.0, 1333.0, 2522.0, 3687.0],
        (VowelClass::Ah, Sex::Female) => [229.0, 936.0, 1551.0, 2815.0, 4299.0],
        (VowelClass::Aw, Sex::Male) => [141.0, 652.0, 997.0, 2538.0, 3486.0],
        (VowelClass::Aw, Sex::Female) => [225.0, 781.0, 1136.0, 2824.0, 3923.0],
        (VowelClass::Uh, Sex::Male) => [144.0, 623.0, 1200.0, 2550.0, 3557.0],
        (VowelClass::Uh, Sex::Female) => [230.0, 753.0, 1426.0, 2933.0, 4092.0],
    }
}

const BANDWIDTHS_HZ: [f64; 4] = [90.0, 110.0, 170.0, 250.0];
/// Relative standard deviation of each formant from token to token.
const FORMANT_JITTER: [f64; 4] = [0.07, 0.06, 0.04, 0.03];
const SPEAKER_SCALE_SD: f64 = 0.05;
const SPEAKER_PITCH_SD: f64 = 0.12;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenParams {
    pub f0_hz: f64,
    pub formants_hz: [f64; 4],
    pub bandwidths_hz: [f64; 4],
    pub duration_s: f64,
    pub breath: f64,
}

/// Rosenberg glottal flow over one period, `phase` in [0, 1).
fn glottal_flow(phase: f64, open: f64, close: f64) -> f64 {
    if phase < open {
        0.5 - 0.5 * (PI * phase / open).cos()
    } else if phase < open + close {
        (0.5 * PI * (phase - open) / close).cos()
    } else {
        0.0
    }
}

/// Two-pole resonator with unit gain at DC.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(f: f64, bw: f64, fs: f64) -> Self {
        let r = (-PI * bw / fs).exp();
        let b = 2.0 * r * (2.0 * PI * f / fs).cos();
        let c = -r * r;
        Self { a: 1.0 - b - c, b, c, y1: 0.0, y2: 0.0 }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Renders one token at `fs`, peak normalised to 1.
pub fn render(params: &TokenParams, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = (params.duration_s * fs).round() as usize;
    let mut filters: Vec<Resonator> = params
        .formants_hz
        .iter()
        .zip(&params.bandwidths_hz)
        .filter(|(f, _)| **f < 0.48 * fs)
        .map(|(&f, &bw)| Resonator::new(f, bw, fs))
        .collect();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let attack = 0.03 * fs;
    let release = 0.05 * fs;
    let mut phase = 0.0;
    let mut prev_flow = 0.0;
    let mut drift = 0.0;
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        let t = k as f64 / len as f64;
        // Gentle declination plus a slow random walk in pitch.
        drift = 0.999 * drift + 0.0005 * noise.sample(rng);
        let f0 = params.f0_hz * (1.0 + 0.06 * (0.5 - t) + drift);
        phase += f0 / fs;
        phase -= phase.floor();
        let flow = glottal_flow(phase, 0.4, 0.16);
        // Lip radiation differentiates the flow.
        let mut x = flow - prev_flow;
        prev_flow = flow;
        x += params.breath * flow * noise.sample(rng) * 0.05;
        for f in filters.iter_mut() {
            x = f.process(x);
        }
        let kf = k as f64;
        let env = if kf < attack {
            0.5 - 0.5 * (PI * kf / attack).cos()
        } else if kf > len as f64 - release {
            0.5 - 0.5 * (PI * (len as f64 - kf) / release).cos()
        } else {
            1.0
        };
        out.push(x * env);
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|x| *x /= peak);
    }
    out
}

/// The fallback corpus: 45 men and 48 women, 279 tokens in all.
pub fn default_synthetic_corpus() -> VowelDataset {
    synthetic_corpus(45, 48, SYNTH_CORPUS_SEED)
}

/// Speakers are `n_male` men then `n_female` women; each says every vowel
/// once, so classes are balanced by construction.
pub fn synthetic_corpus(n_male: usize, n_female: usize, seed: u64) -> VowelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut samples = Vec::new();
    for s in 0..n_male + n_female {
        let sex = if s < n_male { Sex::Male } else { Sex::Female };
        let speaker = format!("{}{:02}", if sex == Sex::Male { 'm' } else { 'w' }, s);
        let scale = 1.0 + SPEAKER_SCALE_SD * unit.sample(&mut rng);
        let pitch = 1.0 + SPEAKER_PITCH_SD * unit.sample(&mut rng);
        for class in VowelClass::ALL {
            let means = class_means(class, sex);
            let mut formants = [0.0; 4];
            for (k, f) in formants.iter_mut().enumerate() {
                *f = means[k + 1] * scale * (1.0 + FORMANT_JITTER[k] * unit.sample(&mut rng));
            }
            // Keep the resonances ordered.
            for k in 1..4 {
                formants[k] = formants[k].max(formants[k - 1] + 150.0);
            }
            let params = TokenParams {
                f0_hz: means[0] * pitch * (1.0 + 0.04 * unit.sample(&mut rng)),
                formants_hz: formants,
                bandwidths_hz: BANDWIDTHS_HZ.map(|b| b * (1.0 + 0.15 * unit.sample(&mut rng)).max(0.5)),
                duration_s: rng.gen_range(0.24..0.34),
                breath: rng.gen_range(0.2..1.0),
            };
            let audio = render(&params, SYNTH_RATE_HZ, &mut rng);
            samples.push(VowelSample {
                id: format!("{speaker}_{}", class.name()),
                audio,
                sample_rate_hz: SYNTH_RATE_HZ,
                class,
                speaker: speaker.clone(),
                sex,
            });
        }
    }
    VowelDataset { samples, synthetic: true }
}
