//! Desk-scale versions of the experiments: sinc regression with an
//! exponent sweep, three-vowel classification with linear, nonlinear and
//! digital variants, and impulse-response memory.

pub mod characterize;
pub mod layout;
pub mod memory;
pub mod report;
pub mod sinc;
pub mod synth;
pub mod vowels;

use serde::{Deserialize, Serialize};

pub use layout::{cavity_preset, room_preset, Layout, Profile};

/// Which pipeline a classification run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No cavity: features straight from the input audio.
    Digital,
    /// Cavity with every scatterer switched off.
    Linear,
    /// Cavity with active nonlinear scatterers.
    Nonlinear,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Digital => "digital",
            Mode::Linear => "linear",
            Mode::Nonlinear => "nonlinear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "digital" => Some(Mode::Digital),
            "linear" => Some(Mode::Linear),
            "nonlinear" => Some(Mode::Nonlinear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl ClassificationMetrics {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Self {
        let mut confusion = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let recall = (0..n_classes).map(|c| ratio(confusion[c][c], confusion[c].iter().sum())).collect();
        let precision =
            (0..n_classes).map(|c| ratio(confusion[c][c], (0..n_classes).map(|r| confusion[r][c]).sum())).collect();
        Self { accuracy: ratio(trace, total), confusion, precision, recall }
    }
}
