//! Actively controlled nonlinear meta-scatterers.
//!
//! A scatterer senses the pressure at its own cell and feeds back a local
//! monopole source `G_NL · p^n`. When its control is off it behaves as a
//! passive linear load.

mod harmonics;
mod stability;

pub use harmonics::{stroboscopic_analysis, HarmonicPhasors};
pub use stability::{max_stable_gain, JointStabilitySearch, StabilitySearch};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::wavefield::Cell;

/// How a non-integer power is extended to negative pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerLaw {
    /// `sign(p) |p|^n`: odd in `p`, creates odd harmonics only under a
    /// half-wave symmetric drive.
    #[default]
    Signed,
    /// `|p|^n`: even in `p`, creates even harmonics and a DC term.
    Even,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererSpec {
    pub position: Cell,
    pub exponent_n: f64,
    pub gain_gnl: f64,
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default)]
    pub linear_load: f64,
    #[serde(default)]
    pub law: PowerLaw,
}

fn default_true() -> bool {
    true
}

pub const EXPONENT_RANGE: (f64, f64) = (1.0, 3.0);

impl ScattererSpec {
    pub fn new(position: Cell, exponent_n: f64, gain_gnl: f64) -> Self {
        Self { position, exponent_n, gain_gnl, enabled: true, linear_load: 0.0, law: PowerLaw::Signed }
    }

    pub fn with_law(mut self, law: PowerLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_gain(mut self, gain_gnl: f64) -> Self {
        self.gain_gnl = gain_gnl;
        self
    }

    pub fn with_exponent(mut self, exponent_n: f64) -> Self {
        self.exponent_n = exponent_n;
        self
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = EXPONENT_RANGE;
        if !(self.exponent_n >= lo && self.exponent_n <= hi) {
            return Err(invalid(format!(
                "scatterer at {}: exponent {} outside [{lo}, {hi}]",
                self.position, self.exponent_n
            )));
        }
        if !self.gain_gnl.is_finite() || self.gain_gnl < 0.0 {
            return Err(invalid(format!(
                "scatterer at {}: gain {} must be finite and non-negative",
                self.position, self.gain_gnl
            )));
        }
        if !(self.linear_load >= 0.0 && self.linear_load.is_finite()) {
            return Err(invalid(format!(
                "scatterer at {}: linear load {} must be non-negative",
                self.position, self.linear_load
            )));
        }
        Ok(())
    }
}

/// Source contribution (Pa/s²) of a scatterer sensing `p_front`.
#[inline]
pub fn feedback(p_front: f64, spec: &ScattererSpec) -> f64 {
    if !spec.enabled {
        return -spec.linear_load * p_front;
    }
    if p_front == 0.0 || spec.gain_gnl == 0.0 {
        return 0.0;
    }
    let magnitude = spec.gain_gnl * p_front.abs().powf(spec.exponent_n);
    match spec.law {
        PowerLaw::Signed => magnitude.copysign(p_front),
        PowerLaw::Even => magnitude,
    }
}

/// One-pole DC blocker applied to the feedback before it reaches the field.
///
/// A loudspeaker membrane cannot radiate a static pressure, and in a closed
/// rigid cavity any DC injection pumps the uniform mode without bound.
#[derive(Debug, Clone, Copy)]
pub struct DcBlocker {
    pole: f64,
    last_in: f64,
    last_out: f64,
}

impl DcBlocker {
    /// `cutoff_hz <= 0` gives a pass-through filter.
    pub fn new(cutoff_hz: f64, dt: f64) -> Self {
        let pole = if cutoff_hz > 0.0 { (-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp() } else { 1.0 };
        Self { pole, last_in: 0.0, last_out: 0.0 }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        if self.pole >= 1.0 {
            return x;
        }
        let y = x - self.last_in + self.pole * self.last_out;
        self.last_in = x;
        self.last_out = y;
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(n: f64, g: f64) -> ScattererSpec {
        ScattererSpec::new(Cell::new(5, 5), n, g)
    }

    #[test]
    fn zero_pressure_gives_zero() {
        for law in [PowerLaw::Signed, PowerLaw::Even] {
            assert_eq!(feedback(0.0, &spec(1.5, 7.0).with_law(law)), 0.0);
        }
        assert_eq!(feedback(0.0, &spec(1.5, 7.0).disabled()), 0.0);
    }

    #[test]
    fn zero_gain_is_transparent() {
        assert_eq!(feedback(3.2, &spec(1.5, 0.0)), 0.0);
    }

    #[test]
    fn gain_seven_exponent_one_and_half() {
        let v = feedback(2.0, &spec(1.5, 7.0));
        assert!((v - 19.798_989_873_223_33).abs() < 1e-12, "{v}");
        let v = feedback(-2.0, &spec(1.5, 7.0).with_law(PowerLaw::Even));
        assert!((v - 19.798_989_873_223_33).abs() < 1e-12);
    }

    #[test]
    fn disabled_is_linear_load() {
        let mut s = spec(1.5, 7.0).disabled();
        s.linear_load = 0.25;
        assert_eq!(feedback(4.0, &s), -1.0);
    }

    #[test]
    fn exponent_range_enforced() {
        assert!(spec(0.9, 1.0).validate().is_err());
        assert!(spec(3.1, 1.0).validate().is_err());
        assert!(spec(1.5, f64::NAN).validate().is_err());
        assert!(spec(1.7, 2.0).validate().is_ok());
    }

    #[test]
    fn dc_blocker_removes_constant() {
        let mut f = DcBlocker::new(20.0, 1e-4);
        let mut y = 0.0;
        for _ in 0..20_000 {
            y = f.process(1.0);
        }
        assert!(y.abs() < 1e-6);
        let mut pass = DcBlocker::new(0.0, 1e-4);
        assert_eq!(pass.process(0.7), 0.7);
    }

    proptest! {
        #[test]
        fn signed_law_is_odd(p in -50.0f64..50.0, n in 1.0f64..3.0, g in 0.0f64..20.0) {
            let s = spec(n, g);
            prop_assert_eq!(feedback(-p, &s), -feedback(p, &s));
        }

        #[test]
        fn magnitude_grows_with_pressure_and_gain(
            p in 0.01f64..20.0, dp in 0.01f64..5.0, n in 1.0f64..3.0, g in 0.1f64..20.0, dg in 0.01f64..5.0
        ) {
            let s = spec(n, g);
            prop_assert!(feedback(p + dp, &s).abs() > feedback(p, &s).abs());
            prop_assert!(feedback(-(p + dp), &s).abs() > feedback(-p, &s).abs());
            prop_assert!(feedback(p, &spec(n, g + dg)).abs() > feedback(p, &s).abs());
        }
    }
}
