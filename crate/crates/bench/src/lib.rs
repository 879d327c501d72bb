//! Fixtures shared by the criterion benches.

use cavity_rc_core::benchmarks::{cavity_preset, Layout, Profile};
use cavity_rc_core::{PowerLaw, ProbeRecord};

/// Benchmark cavity at `profile` with every scatterer active.
pub fn active_layout(profile: Profile) -> Layout {
    let layout = cavity_preset(profile, 16_000.0).expect("preset");
    let gains = vec![1e6; layout.scatterers.len()];
    layout.with_gains(1.5, PowerLaw::Even, &gains).expect("gains")
}

/// Deterministic pseudo-random probe records.
pub fn records(n_probes: usize, len: usize) -> Vec<ProbeRecord> {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    (0..n_probes)
        .map(|m| {
            let samples = (0..len)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            ProbeRecord { label: format!("p{m}"), samples, sample_rate_hz: 16_000.0 }
        })
        .collect()
}
