//! Synthetic instances for tests and benchmarks without datasets:
//! a sinusoidal daily generation profile with optional seeded jitter.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::ExogenousTrace;

/// Daily profile `g_t = peak * max(0, sin(π (t mod 24 - 6) / 12))`: sunrise
/// at hour 6, solar noon at 12, sunset at 18.
pub fn sine_day_generation(peak: f64, horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            let hour = (t % 24) as f64;
            peak * (std::f64::consts::PI * (hour - 6.0) / 12.0).sin().max(0.0)
        })
        .collect()
}

/// Residential-shaped baseline demand: low overnight, a sharp breakfast
/// spike, moderate daytime, and a tall evening peak. The spikes exceed a
/// 1 kW battery's discharge limit, so covering them takes demand flexibility
/// as well as storage. Scaled by `scale`.
pub fn daily_demand_profile(scale: f64, horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            let base = match t % 24 {
                0..=5 => 0.3,
                6 => 0.6,
                7 => 1.6,
                8 => 0.8,
                9..=16 => 0.5,
                17 => 0.8,
                18 => 1.0,
                19 => 1.8,
                20 => 1.0,
                21 => 0.8,
                _ => 0.3,
            };
            scale * base
        })
        .collect()
}

/// Sine-day generation with multiplicative jitter, plus a constant reference
/// demand column.
pub fn synthetic_trace(
    peak: f64,
    horizon: usize,
    reference_demand: f64,
    jitter: f64,
    seed: u64,
) -> Result<ExogenousTrace> {
    let mut gen = sine_day_generation(peak, horizon);
    if jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in &mut gen {
            *g = (*g * (1.0 + jitter * rng.gen_range(-1.0..1.0))).max(0.0);
        }
    }
    ExogenousTrace::new(gen, Some(vec![reference_demand; horizon]))
}
