//! Latency of steering selection against bank size.

use std::hint::black_box;
use std::time::Instant;

use crate::array::MicArray;
use crate::error::{Error, Result};
use crate::steering::{build_bank, select_steering, SteeringBank};

/// Calls per timed batch; single calls are below timer resolution.
const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionLatency {
    pub bank_size: usize,
    /// Median seconds per call over the repetitions.
    pub median: f64,
}

/// Bank of `size` entries spanning −30°..30° (a single 0° entry for size 1).
pub fn bank_of_size(array: &MicArray, azimuths: &[f64], size: usize, c: f64) -> Result<SteeringBank> {
    match size {
        0 => Err(Error::domain("bank size must be at least 1")),
        1 => SteeringBank::fixed(array, azimuths, 0.0, c),
        n => build_bank(array, azimuths, -30.0, 30.0, 60.0 / (n - 1) as f64, c),
    }
}

/// Median per-call latency of `select_steering` over banks of each size.
pub fn bench_selection(
    array: &MicArray,
    azimuths: &[f64],
    bank_sizes: &[usize],
    repetitions: usize,
) -> Result<Vec<SelectionLatency>> {
    if repetitions < 100 {
        return Err(Error::domain(format!("need at least 100 repetitions, got {repetitions}")));
    }
    // tilts spread over and past the bank span
    let tilts: Vec<f64> = (0..BATCH).map(|i| -35.0 + 70.0 * i as f64 / BATCH as f64).collect();
    bank_sizes
        .iter()
        .map(|&size| {
            let bank = bank_of_size(array, azimuths, size, crate::array::SPEED_OF_SOUND)?;
            let mut samples: Vec<f64> = (0..repetitions)
                .map(|_| {
                    let clock = Instant::now();
                    for &t in &tilts {
                        let _ = black_box(select_steering(black_box(&bank), black_box(t)));
                    }
                    clock.elapsed().as_secs_f64() / BATCH as f64
                })
                .collect();
            samples.sort_by(f64::total_cmp);
            Ok(SelectionLatency {
                bank_size: size,
                median: samples[samples.len() / 2],
            })
        })
        .collect()
}

pub fn render(rows: &[SelectionLatency]) -> String {
    let mut s = String::from("bank_size,median_ns\n");
    for r in rows {
        s.push_str(&format!("{},{:.1}\n", r.bank_size, r.median * 1e9));
    }
    s
}
