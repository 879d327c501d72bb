//! Leapfrog update of the 2D scalar wave equation.
//!
//! One step advances the pair `(p_next, p_curr) = (p_{t+1}, p_t)` to
//! `(p_{t+2}, p_{t+1})`:
//!
//! ```text
//! p_{t+1} = 2 p_t - p_{t-1} + dt² c² ∇²p_t - dt γ (p_t - p_{t-1}) + dt² s_t
//! ```
//!
//! with a 5-point Laplacian. Walls and solid cells are zero-flux: a missing
//! neighbour contributes nothing, which is the same as a mirrored ghost cell.

use crate::error::{Error, InstabilityKind, Result};
use crate::wavefield::cavity::{Boundary, CavitySpec, Cell};

/// Consecutive pressure fields of a run, stored with one ghost layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    nx: usize,
    ny: usize,
    /// Field at the newest time level.
    p_next: Vec<f64>,
    /// Field one step earlier.
    p_curr: Vec<f64>,
    pub step_index: u64,
}

impl ReservoirState {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        let n = (nx + 2) * (ny + 2);
        Self { nx, ny, p_next: vec![0.0; n], p_curr: vec![0.0; n], step_index: 0 }
    }

    pub fn for_cavity(spec: &CavitySpec) -> Self {
        Self::zeros(spec.nx(), spec.ny())
    }

    /// Builds a state from unpadded row-major fields.
    pub fn from_fields(nx: usize, ny: usize, p_next: &[f64], p_curr: &[f64]) -> Result<Self> {
        if p_next.len() != nx * ny || p_curr.len() != nx * ny {
            return Err(Error::Dimension(format!(
                "fields of length {} / {} for a {nx}x{ny} grid",
                p_next.len(),
                p_curr.len()
            )));
        }
        let mut state = Self::zeros(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                let k = state.padded(i, j);
                state.p_next[k] = p_next[j * nx + i];
                state.p_curr[k] = p_curr[j * nx + i];
            }
        }
        Ok(state)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    #[inline]
    fn padded(&self, i: usize, j: usize) -> usize {
        (j + 1) * (self.nx + 2) + i + 1
    }

    #[inline]
    pub fn next_at(&self, cell: Cell) -> f64 {
        self.p_next[self.padded(cell.i, cell.j)]
    }

    #[inline]
    pub fn curr_at(&self, cell: Cell) -> f64 {
        self.p_curr[self.padded(cell.i, cell.j)]
    }

    pub fn p_next(&self) -> Vec<f64> {
        self.unpad(&self.p_next)
    }

    pub fn p_curr(&self) -> Vec<f64> {
        self.unpad(&self.p_curr)
    }

    fn unpad(&self, field: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            let k = self.padded(0, j);
            out.extend_from_slice(&field[k..k + self.nx]);
        }
        out
    }

    /// Exchanges the two time levels, reversing the direction of time.
    pub fn reverse_time(&mut self) {
        std::mem::swap(&mut self.p_next, &mut self.p_curr);
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.p_next) && all_finite(&self.p_curr)
    }
}

fn all_finite(xs: &[f64]) -> bool {
    // x * 0 is NaN exactly when x is not finite.
    let mut acc = [0.0f64; 8];
    let chunks = xs.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for l in 0..8 {
            acc[l] += c[l] * 0.0;
        }
    }
    let mut s: f64 = acc.iter().sum();
    for x in tail {
        s += x * 0.0;
    }
    s == 0.0
}

/// The five stencil inputs of one grid row, all of the row's length.
struct RowView<'a> {
    centre: &'a [f64],
    left: &'a [f64],
    right: &'a [f64],
    down: &'a [f64],
    up: &'a [f64],
}

impl RowView<'_> {
    #[inline(always)]
    fn update(&self, out: &mut [f64], courant2: &[f64], loss: &[f64]) {
        let n = out.len();
        let (c, l, r, d, u) = (&self.centre[..n], &self.left[..n], &self.right[..n], &self.down[..n], &self.up[..n]);
        let (courant2, loss) = (&courant2[..n], &loss[..n]);
        for x in 0..n {
            let p = c[x];
            let lap = l[x] + r[x] + d[x] + u[x] - 4.0 * p;
            out[x] = (2.0 - loss[x]) * p + (loss[x] - 1.0) * out[x] + courant2[x] * lap;
        }
    }

    /// Same arithmetic as [`RowView::update`] with shared coefficients.
    #[inline(always)]
    fn update_uniform(&self, out: &mut [f64], courant2: f64, loss: f64) {
        let n = out.len();
        let (c, l, r, d, u) = (&self.centre[..n], &self.left[..n], &self.right[..n], &self.down[..n], &self.up[..n]);
        let (a, b) = (2.0 - loss, loss - 1.0);
        for x in 0..n {
            let p = c[x];
            let lap = l[x] + r[x] + d[x] + u[x] - 4.0 * p;
            out[x] = a * p + b * out[x] + courant2 * lap;
        }
    }
}

/// Per-cell update coefficients for a fixed cavity and time step.
#[derive(Debug, Clone)]
pub struct Medium {
    nx: usize,
    ny: usize,
    dx: f64,
    dt: f64,
    /// dt² c² / dx² per padded cell.
    courant2: Vec<f64>,
    /// dt γ per padded cell, including the sponge layer.
    loss: Vec<f64>,
    /// c² per unpadded cell, kept for the energy functional.
    c2: Vec<f64>,
    solid: Vec<bool>,
    /// Padded indices of solid cells.
    solid_cells: Vec<usize>,
    /// (fluid cell, solid neighbour) pairs that need a zero-flux fix.
    solid_links: Vec<(usize, usize)>,
    /// `(courant2, loss)` when every fluid cell shares them.
    uniform: Option<(f64, f64)>,
}

impl Medium {
    pub fn new(spec: &CavitySpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
        }
        let (nx, ny) = (spec.nx(), spec.ny());
        let w = nx + 2;
        let n = w * (ny + 2);
        let mut courant2 = vec![0.0; n];
        let mut loss = vec![0.0; n];
        let mut solid_cells = Vec::new();
        let mut solid_links = Vec::new();
        let sponge = |i: usize, j: usize| -> f64 {
            match spec.boundary {
                Boundary::RigidReflective => 0.0,
                Boundary::Absorbing { layer_cells, max_sigma } => {
                    let d = i.min(j).min(nx - 1 - i).min(ny - 1 - j);
                    if d >= layer_cells {
                        0.0
                    } else {
                        let x = (layer_cells - d) as f64 / layer_cells as f64;
                        max_sigma * x * x
                    }
                }
            }
        };
        for j in 0..ny {
            for i in 0..nx {
                let u = j * nx + i;
                let k = (j + 1) * w + i + 1;
                if spec.solid[u] {
                    solid_cells.push(k);
                    continue;
                }
                let c = spec.c_map[u];
                courant2[k] = dt * dt * c * c / (spec.dx * spec.dx);
                loss[k] = dt * (spec.damping_map[u] + sponge(i, j));
                let neighbours = [
                    (i > 0).then(|| (u - 1, k - 1)),
                    (i + 1 < nx).then(|| (u + 1, k + 1)),
                    (j > 0).then(|| (u - nx, k - w)),
                    (j + 1 < ny).then(|| (u + nx, k + w)),
                ];
                for (nu, nk) in neighbours.into_iter().flatten() {
                    if spec.solid[nu] {
                        solid_links.push((k, nk));
                    }
                }
            }
        }
        let mut fluid = (0..ny).flat_map(|j| (0..nx).map(move |i| (j + 1) * w + i + 1)).filter(|&k| courant2[k] > 0.0);
        let uniform = fluid.next().and_then(|k0| {
            let first = (courant2[k0], loss[k0]);
            fluid.all(|k| (courant2[k], loss[k]) == first).then_some(first)
        });
        Ok(Self {
            nx,
            ny,
            dx: spec.dx,
            dt,
            courant2,
            loss,
            c2: spec.c_map.iter().map(|c| c * c).collect(),
            solid: spec.solid.clone(),
            solid_cells,
            solid_links,
            uniform,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Padded storage index of a cell, as used by [`Medium::step`] injections.
    #[inline]
    pub fn slot(&self, cell: Cell) -> usize {
        (cell.j + 1) * (self.nx + 2) + cell.i + 1
    }

    /// Advances the state by one step.
    ///
    /// `injections` are `(slot, value)` pairs in source-term units (Pa/s²);
    /// sources and scatterer feedback both enter this way.
    pub fn step(&self, state: &mut ReservoirState, injections: &[(usize, f64)]) -> Result<()> {
        debug_assert_eq!(state.dims(), (self.nx, self.ny));
        let (nx, ny) = (self.nx, self.ny);
        let w = nx + 2;
        let cur = &mut state.p_next;

        // Mirror walls into the ghost layer: zero flux across every outer face.
        for j in 1..=ny {
            cur[j * w] = cur[j * w + 1];
            cur[j * w + nx + 1] = cur[j * w + nx];
        }
        cur.copy_within(w + 1..w + 1 + nx, 1);
        cur.copy_within(ny * w + 1..ny * w + 1 + nx, (ny + 1) * w + 1);

        let cur = &state.p_next;
        let out = &mut state.p_curr;
        let mut finite = true;
        for j in 1..=ny {
            let lo = j * w + 1;
            let row = RowView {
                centre: &cur[lo..lo + nx],
                left: &cur[lo - 1..lo - 1 + nx],
                right: &cur[lo + 1..lo + 1 + nx],
                down: &cur[lo - w..lo - w + nx],
                up: &cur[lo + w..lo + w + nx],
            };
            let o = &mut out[lo..lo + nx];
            match self.uniform {
                Some((c2, loss)) => row.update_uniform(o, c2, loss),
                None => row.update(o, &self.courant2[lo..lo + nx], &self.loss[lo..lo + nx]),
            }
            finite &= all_finite(o);
        }
        for &(k, s) in &self.solid_links {
            out[k] -= self.courant2[k] * (cur[s] - cur[k]);
        }
        for &k in &self.solid_cells {
            out[k] = 0.0;
        }
        let dt2 = self.dt * self.dt;
        for &(k, value) in injections {
            out[k] += dt2 * value;
            finite &= out[k].is_finite();
        }
        std::mem::swap(&mut state.p_next, &mut state.p_curr);
        state.step_index += 1;
        if !finite {
            return Err(Error::Instability { step_index: state.step_index, kind: InstabilityKind::NonFinite });
        }
        Ok(())
    }

    /// Discrete energy of the leapfrog scheme.
    ///
    /// Kinetic part from the time difference of the two levels, potential
    /// part from the product of their gradients across every fluid face.
    /// The product form is the one the scheme conserves exactly.
    pub fn total_energy(&self, state: &ReservoirState) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let a = &state.p_next;
        let b = &state.p_curr;
        let idx = |i: usize, j: usize| (j + 1) * (nx + 2) + i + 1;
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let u = j * nx + i;
                if self.solid[u] {
                    continue;
                }
                let k = idx(i, j);
                let v = (a[k] - b[k]) / self.dt;
                kinetic += v * v / (2.0 * self.c2[u]);
                if i + 1 < nx && !self.solid[u + 1] {
                    let kr = idx(i + 1, j);
                    potential += (a[kr] - a[k]) * (b[kr] - b[k]);
                }
                if j + 1 < ny && !self.solid[u + nx] {
                    let ku = idx(i, j + 1);
                    potential += (a[ku] - a[k]) * (b[ku] - b[k]);
                }
            }
        }
        // |∇p|² dx² reduces to the squared face difference.
        kinetic * self.dx * self.dx + 0.5 * potential
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::cavity::derive_timestep;

    fn setup(damping: f64) -> (CavitySpec, Medium) {
        let spec = CavitySpec::uniform(0.4, 0.3, 0.01, 343.0, damping, 16_000.0).unwrap();
        let dt = derive_timestep(&spec, 0.9).unwrap();
        let medium = Medium::new(&spec, dt).unwrap();
        (spec, medium)
    }

    fn pulse(spec: &CavitySpec, centre: (f64, f64), width: f64) -> Vec<f64> {
        let (nx, ny) = (spec.nx(), spec.ny());
        let mut f = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let x = (i as f64 + 0.5) * spec.dx - centre.0;
                let y = (j as f64 + 0.5) * spec.dx - centre.1;
                f[j * nx + i] = (-(x * x + y * y) / (2.0 * width * width)).exp();
            }
        }
        f
    }

    #[test]
    fn zero_state_stays_zero() {
        let (spec, medium) = setup(3.0);
        let mut state = ReservoirState::for_cavity(&spec);
        for _ in 0..50 {
            medium.step(&mut state, &[]).unwrap();
        }
        assert!(state.p_next().iter().all(|&x| x == 0.0));
        assert_eq!(state.step_index, 50);
        assert_eq!(medium.total_energy(&state), 0.0);
    }

    #[test]
    fn doctored_step_beyond_cfl_blows_up() {
        let spec = CavitySpec::uniform(0.4, 0.3, 0.01, 343.0, 0.0, 16_000.0).unwrap();
        let dt = 1.5 * spec.dx / (343.0 * std::f64::consts::SQRT_2);
        let medium = Medium::new(&spec, dt).unwrap();
        let f = pulse(&spec, (0.2, 0.15), 0.02);
        let mut state = ReservoirState::from_fields(spec.nx(), spec.ny(), &f, &f).unwrap();
        let err = (0..1000).try_for_each(|_| medium.step(&mut state, &[])).unwrap_err();
        match err {
            Error::Instability { step_index, kind } => {
                assert_eq!(kind, InstabilityKind::NonFinite);
                assert!(step_index <= 1000);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn damped_energy_never_increases() {
        let (spec, medium) = setup(5.0);
        let f = pulse(&spec, (0.15, 0.12), 0.03);
        let mut state = ReservoirState::from_fields(spec.nx(), spec.ny(), &f, &f).unwrap();
        let mut last = medium.total_energy(&state);
        for _ in 0..3000 {
            medium.step(&mut state, &[]).unwrap();
            let e = medium.total_energy(&state);
            assert!(e < last, "energy rose from {last} to {e}");
            last = e;
        }
    }

    #[test]
    fn solid_cells_stay_silent_and_energy_is_kept() {
        let mut spec = CavitySpec::uniform(0.4, 0.3, 0.01, 343.0, 0.0, 16_000.0).unwrap();
        spec.paint_solid_disc((0.25, 0.15), 0.04);
        let dt = derive_timestep(&spec, 0.9).unwrap();
        let medium = Medium::new(&spec, dt).unwrap();
        let f = pulse(&spec, (0.1, 0.15), 0.02);
        let mut state = ReservoirState::from_fields(spec.nx(), spec.ny(), &f, &f).unwrap();
        let e0 = medium.total_energy(&state);
        for _ in 0..2000 {
            medium.step(&mut state, &[]).unwrap();
        }
        let centre = Cell::new(25, 15);
        assert_eq!(state.next_at(centre), 0.0);
        let e1 = medium.total_energy(&state);
        assert!(((e1 - e0) / e0).abs() < 1e-9, "{e0} -> {e1}");
    }

    #[test]
    fn absorbing_layer_drains_energy() {
        let spec = CavitySpec::uniform(0.4, 0.4, 0.01, 343.0, 0.0, 16_000.0)
            .unwrap()
            .with_boundary(Boundary::Absorbing { layer_cells: 10, max_sigma: 2000.0 });
        let dt = derive_timestep(&spec, 0.9).unwrap();
        let medium = Medium::new(&spec, dt).unwrap();
        let f = pulse(&spec, (0.2, 0.2), 0.02);
        let mut state = ReservoirState::from_fields(spec.nx(), spec.ny(), &f, &f).unwrap();
        let e0 = medium.total_energy(&state);
        for _ in 0..4000 {
            medium.step(&mut state, &[]).unwrap();
        }
        assert!(medium.total_energy(&state) < 0.05 * e0);
    }
}
