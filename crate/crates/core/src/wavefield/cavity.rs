use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A grid cell, `i` along the width (x) and `j` along the height (y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
}

impl Cell {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    /// Cell containing the physical point `(x, y)` in meters.
    pub fn at(x_m: f64, y_m: f64, dx: f64) -> Self {
        Self { i: (x_m / dx).floor().max(0.0) as usize, j: (y_m / dx).floor().max(0.0) as usize }
    }

    pub fn distance_m(&self, other: &Cell, dx: f64) -> f64 {
        let di = self.i as f64 - other.i as f64;
        let dj = self.j as f64 - other.j as f64;
        (di * di + dj * dj).sqrt() * dx
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Boundary {
    /// Zero normal pressure gradient at the walls (mirrored ghost cells).
    RigidReflective,
    /// Rigid outer wall behind a graded sponge layer of extra damping.
    Absorbing { layer_cells: usize, max_sigma: f64 },
}

/// Geometry and material maps of a 2D cavity.
///
/// Maps are stored row-major with `j` (height) as the slow index, i.e. the
/// value of cell `(i, j)` lives at `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CavitySpec {
    pub width_m: f64,
    pub height_m: f64,
    pub dx: f64,
    /// Wave speed per cell (m/s).
    pub c_map: Vec<f64>,
    /// Viscous loss per cell (1/s).
    pub damping_map: Vec<f64>,
    /// Rigid obstacle cells; they carry no field and reflect like walls.
    pub solid: Vec<bool>,
    pub boundary: Boundary,
    pub sample_rate_hz: f64,
}

pub const MIN_CELLS_PER_SIDE: usize = 8;

impl CavitySpec {
    pub fn uniform(
        width_m: f64,
        height_m: f64,
        dx: f64,
        speed: f64,
        damping: f64,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if !(width_m > 0.0 && height_m > 0.0 && dx > 0.0) {
            return Err(Error::InvalidCavity(format!(
                "extents and dx must be positive (width {width_m}, height {height_m}, dx {dx})"
            )));
        }
        let nx = (width_m / dx).round() as usize;
        let ny = (height_m / dx).round() as usize;
        let n = nx * ny;
        let spec = Self {
            width_m,
            height_m,
            dx,
            c_map: vec![speed; n],
            damping_map: vec![damping; n],
            solid: vec![false; n],
            boundary: Boundary::RigidReflective,
            sample_rate_hz,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn nx(&self) -> usize {
        (self.width_m / self.dx).round() as usize
    }

    pub fn ny(&self) -> usize {
        (self.height_m / self.dx).round() as usize
    }

    pub fn n_cells(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.j * self.nx() + cell.i
    }

    pub fn c_max(&self) -> f64 {
        self.c_map.iter().copied().fold(0.0, f64::max)
    }

    pub fn c_at(&self, cell: Cell) -> f64 {
        self.c_map[self.index(cell)]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_m > 0.0 && self.height_m > 0.0 && self.dx > 0.0) {
            return Err(Error::InvalidCavity("extents and dx must be positive".into()));
        }
        let (nx, ny) = (self.nx(), self.ny());
        if nx < MIN_CELLS_PER_SIDE || ny < MIN_CELLS_PER_SIDE {
            return Err(Error::InvalidCavity(format!(
                "grid {nx}x{ny} is below the minimum of {MIN_CELLS_PER_SIDE} cells per side"
            )));
        }
        let n = nx * ny;
        if self.c_map.len() != n || self.damping_map.len() != n || self.solid.len() != n {
            return Err(Error::InvalidCavity(format!(
                "map sizes (c {}, damping {}, solid {}) do not match the {nx}x{ny} grid",
                self.c_map.len(),
                self.damping_map.len(),
                self.solid.len()
            )));
        }
        if let Some(c) = self.c_map.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidCavity(format!("wave speed {c} is not positive")));
        }
        if let Some(d) = self.damping_map.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidCavity(format!("damping {d} is negative or not finite")));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::InvalidCavity("sample rate must be positive".into()));
        }
        if let Boundary::Absorbing { layer_cells, max_sigma } = self.boundary {
            if layer_cells == 0 || 2 * layer_cells >= nx.min(ny) || !(max_sigma >= 0.0) {
                return Err(Error::InvalidCavity(format!(
                    "absorbing layer of {layer_cells} cells (sigma {max_sigma}) does not fit the grid"
                )));
            }
        }
        Ok(())
    }

    /// True when the cell is strictly inside the outer wall and not solid.
    pub fn is_interior(&self, cell: Cell) -> bool {
        cell.i >= 1 && cell.j >= 1 && cell.i + 1 < self.nx() && cell.j + 1 < self.ny() && !self.solid[self.index(cell)]
    }

    pub fn fill_disc<T: Copy>(&self, map: &mut [T], center_m: (f64, f64), radius_m: f64, value: T) {
        let (nx, ny) = (self.nx(), self.ny());
        for j in 0..ny {
            for i in 0..nx {
                let x = (i as f64 + 0.5) * self.dx - center_m.0;
                let y = (j as f64 + 0.5) * self.dx - center_m.1;
                if x * x + y * y <= radius_m * radius_m {
                    map[j * nx + i] = value;
                }
            }
        }
    }

    /// Region of different wave speed (a penetrable rod).
    pub fn paint_speed_disc(&mut self, center_m: (f64, f64), radius_m: f64, speed: f64) {
        let mut map = std::mem::take(&mut self.c_map);
        self.fill_disc(&mut map, center_m, radius_m, speed);
        self.c_map = map;
    }

    /// Rigid obstacle.
    pub fn paint_solid_disc(&mut self, center_m: (f64, f64), radius_m: f64) {
        let mut map = std::mem::take(&mut self.solid);
        self.fill_disc(&mut map, center_m, radius_m, true);
        self.solid = map;
    }

    pub fn set_uniform_damping(&mut self, damping: f64) {
        self.damping_map.iter_mut().for_each(|d| *d = damping);
    }
}

/// Largest stable leapfrog step for the given Courant fraction, before any
/// snapping to the probe sample interval.
pub fn cfl_timestep(spec: &CavitySpec, cfl_number: f64) -> Result<f64> {
    if !(cfl_number > 0.0 && cfl_number <= 1.0) {
        return Err(Error::InvalidParameter(format!("cfl number {cfl_number} not in (0, 1]")));
    }
    spec.validate()?;
    Ok(cfl_number * spec.dx / (spec.c_max() * std::f64::consts::SQRT_2))
}

/// Solver time step: the CFL step shrunk so that an integer number of steps
/// spans exactly one probe sample interval.
pub fn derive_timestep(spec: &CavitySpec, cfl_number: f64) -> Result<f64> {
    let dt = cfl_timestep(spec, cfl_number)?;
    let interval = 1.0 / spec.sample_rate_hz;
    let steps = (interval / dt * (1.0 - 1e-12)).ceil().max(1.0);
    Ok(interval / steps)
}

/// Number of solver steps per probe sample for a snapped `dt`.
pub fn steps_per_sample(spec: &CavitySpec, dt: f64) -> usize {
    (1.0 / (spec.sample_rate_hz * dt)).round() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cavity() -> CavitySpec {
        CavitySpec::uniform(1.0, 0.5, 0.01, 343.0, 0.0, 16_000.0).unwrap()
    }

    #[test]
    fn cfl_formula_matches_hand_value() {
        let dt = cfl_timestep(&cavity(), 1.0).unwrap();
        // 0.01 / (343 * sqrt 2)
        assert!((dt - 2.061_535_8e-5).abs() < 1e-11, "{dt}");
    }

    #[test]
    fn cfl_zero_and_above_one_rejected() {
        assert!(cfl_timestep(&cavity(), 0.0).is_err());
        assert!(cfl_timestep(&cavity(), 1.01).is_err());
        assert!(derive_timestep(&cavity(), -0.5).is_err());
    }

    #[test]
    fn doubling_speed_halves_step() {
        let base = cavity();
        let mut fast = base.clone();
        fast.c_map.iter_mut().for_each(|c| *c *= 2.0);
        let a = cfl_timestep(&base, 0.9).unwrap();
        let b = cfl_timestep(&fast, 0.9).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn snapped_step_divides_sample_interval() {
        for cfl in [0.3, 0.5, 0.77, 0.95, 1.0] {
            let spec = cavity();
            let dt = derive_timestep(&spec, cfl).unwrap();
            assert!(dt <= cfl_timestep(&spec, cfl).unwrap() * (1.0 + 1e-12));
            let ratio = 1.0 / (spec.sample_rate_hz * dt);
            assert!((ratio - ratio.round()).abs() < 1e-3 * ratio);
        }
    }

    #[test]
    fn validation_catches_bad_maps() {
        assert!(CavitySpec::uniform(0.05, 1.0, 0.01, 343.0, 0.0, 8000.0).is_err());
        let mut spec = cavity();
        spec.c_map[3] = 0.0;
        assert!(spec.validate().is_err());
        let mut spec = cavity();
        spec.damping_map[7] = -1.0;
        assert!(spec.validate().is_err());
        let spec = cavity().with_boundary(Boundary::Absorbing { layer_cells: 40, max_sigma: 100.0 });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn interior_excludes_walls_and_solids() {
        let mut spec = cavity();
        assert!(!spec.is_interior(Cell::new(0, 4)));
        assert!(!spec.is_interior(Cell::new(99, 4)));
        assert!(spec.is_interior(Cell::new(50, 25)));
        spec.paint_solid_disc((0.505, 0.255), 0.02);
        assert!(!spec.is_interior(Cell::new(50, 25)));
    }
}
