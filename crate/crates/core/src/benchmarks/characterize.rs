//! Harmonic content in front of one scatterer as its gain approaches the
//! stability bound.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scatterers::{stroboscopic_analysis, HarmonicPhasors, PowerLaw, ScattererSpec, StabilitySearch};
use crate::wavefield::{derive_timestep, CavitySpec, Cell, Medium, RunOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacterizeSettings {
    pub fundamental_hz: f64,
    /// Peak of the sinusoidal source term (Pa/s²).
    pub drive_amplitude: f64,
    pub exponent_n: f64,
    pub law: PowerLaw,
    /// Gains as fractions of the stability bound.
    pub gain_factors: Vec<f64>,
    pub k_harmonics: usize,
    pub duration_s: f64,
    /// Drive cell; defaults to the stability search's source near the left wall.
    pub source: Option<Cell>,
    pub run: RunOptions,
}

impl Default for CharacterizeSettings {
    fn default() -> Self {
        Self {
            fundamental_hz: 500.0,
            drive_amplitude: 1e9,
            exponent_n: 1.5,
            law: PowerLaw::Even,
            gain_factors: vec![0.25, 0.5, 0.75, 1.0],
            k_harmonics: 5,
            duration_s: 2.0,
            source: None,
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub factor: f64,
    pub gain: f64,
    pub phasors: HarmonicPhasors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    pub position: Cell,
    pub bound: f64,
    pub points: Vec<GainPoint>,
}

impl Characterization {
    /// Magnitude of harmonic `m` (1-based) at every gain point.
    pub fn harmonic_magnitudes(&self, m: usize) -> Vec<f64> {
        self.points.iter().map(|p| p.phasors.phasors[m - 1].norm()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "gain_factor,harmonic_index,re,im,magnitude,phase_rad")?;
        for p in &self.points {
            p.phasors.write_rows(out, Some(p.factor))?;
        }
        Ok(())
    }
}

/// Finds the stability bound of a single scatterer at `position` and
/// analyses the steady state at each fraction of it.
pub fn characterize(cavity: &CavitySpec, position: Cell, settings: &CharacterizeSettings) -> Result<Characterization> {
    if settings.gain_factors.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(invalid("gain factors must be finite and non-negative"));
    }
    let template = ScattererSpec::new(position, settings.exponent_n, 0.0).with_law(settings.law);
    template.validate()?;
    let mut search = StabilitySearch::new(cavity.clone()).with_duration(settings.duration_s);
    search.options = settings.run;
    if let Some(s) = settings.source {
        search = search.with_source(s);
    } else if search.source == position {
        search.source = Cell::new(3, cavity.ny() / 2 + 1);
    }
    if search.source == position {
        return Err(invalid(format!("scatterer and source share cell {position}")));
    }
    let bound = search.search(&template, settings.drive_amplitude, settings.fundamental_hz)?;
    log::info!("stability bound at {position}: {bound:.4e}");

    let medium = Medium::new(cavity, derive_timestep(cavity, settings.run.cfl)?)?;
    let mut points = Vec::with_capacity(settings.gain_factors.len());
    for &factor in &settings.gain_factors {
        let gain = factor * bound;
        let spec = template.clone().with_gain(gain);
        let record = search.response(&medium, &spec, settings.drive_amplitude, settings.fundamental_hz, None)?;
        let phasors = stroboscopic_analysis(&record, settings.fundamental_hz, settings.k_harmonics)?;
        points.push(GainPoint { factor, gain, phasors });
    }
    Ok(Characterization { position, bound, points })
}
