use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scatterers::{PowerLaw, ScattererSpec};
use crate::wavefield::{CavitySpec, Cell, ProbeSpec};

/// Grid resolution presets for the benchmark cavities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 5 mm cells.
    Paper,
    /// 1 cm cells.
    #[default]
    Fast,
    /// 2 cm cells, for continuous integration.
    Ci,
}

impl Profile {
    pub fn dx(self) -> f64 {
        match self {
            Profile::Paper => 0.005,
            Profile::Fast => 0.01,
            Profile::Ci => 0.02,
        }
    }
}

/// A cavity with everything placed in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub cavity: CavitySpec,
    pub sources: Vec<Cell>,
    pub probes: Vec<ProbeSpec>,
    pub scatterers: Vec<ScattererSpec>,
}

impl Layout {
    /// Same layout with every scatterer switched off.
    pub fn linear(&self) -> Self {
        let mut out = self.clone();
        out.scatterers = out.scatterers.into_iter().map(ScattererSpec::disabled).collect();
        out
    }

    /// Scatterers enabled with the given exponent, law and per-scatterer
    /// gains.
    pub fn with_gains(&self, exponent_n: f64, law: PowerLaw, gains: &[f64]) -> Result<Self> {
        if gains.len() != self.scatterers.len() {
            return Err(Error::Dimension(format!("{} gains for {} scatterers", gains.len(), self.scatterers.len())));
        }
        let mut out = self.clone();
        for (s, &g) in out.scatterers.iter_mut().zip(gains) {
            *s = ScattererSpec::new(s.position, exponent_n, g).with_law(law);
            s.validate()?;
        }
        Ok(out)
    }
}

/// Sub-wavelength rigid rods of the 2 m × 1 m cavity, centres in meters.
const CAVITY_RODS: [(f64, f64); 15] = [
    (0.35, 0.30),
    (0.52, 0.71),
    (0.68, 0.45),
    (0.81, 0.18),
    (0.93, 0.62),
    (1.05, 0.35),
    (1.12, 0.82),
    (1.24, 0.55),
    (1.33, 0.22),
    (1.46, 0.70),
    (1.55, 0.41),
    (1.63, 0.15),
    (1.72, 0.60),
    (1.84, 0.33),
    (1.90, 0.80),
];
const ROD_RADIUS_M: f64 = 0.03;
/// Scatterers sit along the top wall.
const CAVITY_SCATTERER_X: [f64; 10] = [0.22, 0.41, 0.58, 0.77, 0.95, 1.13, 1.31, 1.50, 1.66, 1.85];
const CAVITY_SCATTERER_Y: f64 = 0.97;

pub const CAVITY_DAMPING: f64 = 5.0;
pub const SPEED_OF_SOUND: f64 = 343.0;

fn placed(cavity: &CavitySpec, x: f64, y: f64, what: &str) -> Result<Cell> {
    let cell = Cell::at(x, y, cavity.dx);
    if !cavity.is_interior(cell) {
        return Err(Error::Placement(format!("{what} at ({x}, {y}) m is not an interior cell")));
    }
    Ok(cell)
}

/// Scatterers at `points`, probes co-located and labelled `mic0..`.
fn scatterers_and_probes(cavity: &CavitySpec, points: &[(f64, f64)]) -> Result<(Vec<ScattererSpec>, Vec<ProbeSpec>)> {
    let mut scatterers = Vec::new();
    let mut probes = Vec::new();
    for (k, &(x, y)) in points.iter().enumerate() {
        let cell = placed(cavity, x, y, "scatterer")?;
        scatterers.push(ScattererSpec::new(cell, 1.5, 0.0).disabled());
        probes.push(ProbeSpec::new(cell, format!("mic{k}")));
    }
    Ok((scatterers, probes))
}

/// The 2 m × 1 m rigid cavity with 15 rods, ten scatterers on the top wall
/// (each with a microphone in front of it) and ten sources on the left.
pub fn cavity_preset(profile: Profile, sample_rate_hz: f64) -> Result<Layout> {
    let mut cavity = CavitySpec::uniform(2.0, 1.0, profile.dx(), SPEED_OF_SOUND, CAVITY_DAMPING, sample_rate_hz)?;
    for &c in &CAVITY_RODS {
        cavity.paint_solid_disc(c, ROD_RADIUS_M);
    }
    let points: Vec<_> = CAVITY_SCATTERER_X.iter().map(|&x| (x, CAVITY_SCATTERER_Y)).collect();
    let (scatterers, probes) = scatterers_and_probes(&cavity, &points)?;
    let sources = (0..10).map(|k| placed(&cavity, 0.03, 0.05 + 0.1 * k as f64, "source")).collect::<Result<_>>()?;
    Ok(Layout { cavity, sources, probes, scatterers })
}

/// Diffuser bumps on the room walls: (centre, radius) in meters.
const ROOM_DIFFUSERS: [((f64, f64), f64); 12] = [
    ((1.1, 0.0), 0.18),
    ((2.6, 0.0), 0.12),
    ((4.3, 0.0), 0.2),
    ((6.0, 0.9), 0.15),
    ((6.0, 2.3), 0.22),
    ((6.0, 3.4), 0.1),
    ((4.9, 4.0), 0.16),
    ((3.2, 4.0), 0.2),
    ((1.5, 4.0), 0.13),
    ((0.0, 3.1), 0.19),
    ((0.0, 1.9), 0.11),
    ((0.0, 0.8), 0.17),
];
const ROOM_SCATTERERS: [(f64, f64); 10] = [
    (1.3, 1.1),
    (2.2, 3.1),
    (2.9, 1.7),
    (3.6, 0.6),
    (3.9, 2.7),
    (4.5, 1.5),
    (5.1, 3.2),
    (5.4, 0.9),
    (1.8, 2.4),
    (4.6, 3.6),
];
pub const ROOM_DAMPING: f64 = 10.0;

/// Larger, lossier 6 m × 4 m room with corrugated walls and a single
/// source in a corner.
pub fn room_preset(profile: Profile, sample_rate_hz: f64) -> Result<Layout> {
    let mut cavity = CavitySpec::uniform(6.0, 4.0, profile.dx(), SPEED_OF_SOUND, ROOM_DAMPING, sample_rate_hz)?;
    for &(c, r) in &ROOM_DIFFUSERS {
        cavity.paint_solid_disc(c, r);
    }
    let (scatterers, probes) = scatterers_and_probes(&cavity, &ROOM_SCATTERERS)?;
    let sources = vec![placed(&cavity, 0.25, 0.25, "source")?];
    Ok(Layout { cavity, sources, probes, scatterers })
}
