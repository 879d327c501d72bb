//! Finite-difference time-domain solver for the cavity, written as the
//! reservoir recurrence `h_t = Q(h_{t-1}) h_{t-1} + Q_in x_t` with
//! `h_t = (p_{t+1}, p_t)`.

mod cavity;
mod run;
mod solver;

pub use cavity::{cfl_timestep, derive_timestep, steps_per_sample, Boundary, CavitySpec, Cell, MIN_CELLS_PER_SIDE};
pub use run::{run, run_on, run_with, sample_count, ProbeRecord, ProbeSpec, RunOptions, SourceSpec, Waveform};
pub use solver::{Medium, ReservoirState};

/// Energy functional of a state; see [`Medium::total_energy`].
pub fn total_energy(state: &ReservoirState, medium: &Medium) -> f64 {
    medium.total_energy(state)
}
