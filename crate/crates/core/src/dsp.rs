//! Emission waveform, matched filtering and envelope extraction.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 450_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("signal must have at least one sample"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Linear frequency sweep emitted by the transducer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionSpec {
    pub f_start: f64,
    pub f_end: f64,
    /// Seconds.
    pub duration: f64,
    pub amplitude: f64,
}

impl Default for EmissionSpec {
    fn default() -> Self {
        EmissionSpec {
            f_start: 80_000.0,
            f_end: 20_000.0,
            duration: 0.002,
            amplitude: 1.0,
        }
    }
}

impl EmissionSpec {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        for f in [self.f_start, self.f_end] {
            if !(f > 0.0 && f < nyquist) {
                return Err(Error::domain(format!(
                    "chirp frequency {f} Hz outside (0, {nyquist}) at {sample_rate} Hz"
                )));
            }
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::domain(format!("chirp duration must be positive, got {}", self.duration)));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::domain(format!("chirp amplitude must be positive, got {}", self.amplitude)));
        }
        Ok(())
    }

    /// Instantaneous phase in radians at `t` seconds after onset.
    pub fn phase(&self, t: f64) -> f64 {
        let sweep = (self.f_end - self.f_start) / (2.0 * self.duration);
        2.0 * PI * (self.f_start * t + sweep * t * t)
    }

    /// Continuous-time waveform; zero outside `[0, duration)`.
    pub fn waveform(&self, t: f64) -> f64 {
        if (0.0..self.duration).contains(&t) {
            self.amplitude * self.phase(t).sin()
        } else {
            0.0
        }
    }

    pub fn num_samples(&self, sample_rate: f64) -> usize {
        ((self.duration * sample_rate).round() as usize).max(1)
    }
}

/// Sampled chirp, rescaled so that the peak magnitude equals `amplitude`.
pub fn generate_chirp(spec: &EmissionSpec, sample_rate: f64) -> Result<Signal> {
    spec.validate(sample_rate)?;
    let n = spec.num_samples(sample_rate);
    let mut samples: Vec<f64> = (0..n).map(|i| spec.phase(i as f64 / sample_rate).sin()).collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = spec.amplitude / peak;
        samples.iter_mut().for_each(|s| *s *= scale);
    }
    Signal::new(samples, sample_rate)
}

/// One microphone frame: `channels[m][n]` is sample `n` of microphone `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub channels: Vec<Vec<f32>>,
    pub sample_rate: f64,
    /// Seconds.
    pub timestamp: f64,
}

impl RawFrame {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: f64, timestamp: f64) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::domain("frame needs at least one channel"));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::domain("frame channels must not be empty"));
        }
        if let Some(m) = channels.iter().position(|c| c.len() != n) {
            return Err(Error::domain(format!("channel {m} length differs from channel 0 ({n})")));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(RawFrame {
            channels,
            sample_rate,
            timestamp,
        })
    }

    pub fn num_mics(&self) -> usize {
        self.channels.len()
    }

    pub fn num_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn channel_signal(&self, m: usize) -> Signal {
        Signal {
            samples: self.channels[m].iter().map(|&s| s as f64).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Cross-correlation against a fixed replica for recordings of a fixed
/// length, with the FFT plans and replica spectrum prepared once.
///
/// `out[n] = Σ_k rec[n + k] · replica[k]`, `rec` zero beyond its end, so an
/// echo that begins at sample `d` peaks at `out[d]`.
pub struct MatchedFilter {
    len: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    replica_spectrum: Vec<Complex64>,
    sample_rate: f64,
}

impl MatchedFilter {
    pub fn new(replica: &Signal, recording_len: usize) -> Self {
        let fft_len = (recording_len + replica.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut replica_spectrum = vec![Complex64::new(0.0, 0.0); fft_len];
        for (dst, &s) in replica_spectrum.iter_mut().zip(&replica.samples) {
            dst.re = s;
        }
        forward.process(&mut replica_spectrum);
        replica_spectrum.iter_mut().for_each(|c| *c = c.conj());
        MatchedFilter {
            len: recording_len,
            fft_len,
            forward,
            inverse,
            replica_spectrum,
            sample_rate: replica.sample_rate,
        }
    }

    pub fn recording_len(&self) -> usize {
        self.len
    }

    /// Correlates `recording` into `out`; both must have the planned length.
    pub fn apply_into(&self, recording: impl IntoIterator<Item = f64>, out: &mut [f64]) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (dst, s) in buf.iter_mut().zip(recording.into_iter().take(self.len)) {
            dst.re = s;
        }
        self.forward.process(&mut buf);
        buf.iter_mut()
            .zip(&self.replica_spectrum)
            .for_each(|(x, r)| *x *= r);
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re * scale;
        }
    }

    pub fn apply(&self, recording: &Signal) -> Result<Signal> {
        if recording.sample_rate != self.sample_rate {
            return Err(Error::domain(format!(
                "sample rate mismatch: recording {} Hz, replica {} Hz",
                recording.sample_rate, self.sample_rate
            )));
        }
        if recording.len() != self.len {
            return Err(Error::domain(format!(
                "matched filter planned for {} samples, got {}",
                self.len,
                recording.len()
            )));
        }
        let mut out = vec![0.0; self.len];
        self.apply_into(recording.samples.iter().copied(), &mut out);
        Signal::new(out, recording.sample_rate)
    }
}

/// Cross-correlation of `recording` with `replica`, output the same length
/// as `recording`.
pub fn matched_filter(recording: &Signal, replica: &Signal) -> Result<Signal> {
    if recording.sample_rate != replica.sample_rate {
        return Err(Error::domain(format!(
            "sample rate mismatch: recording {} Hz, replica {} Hz",
            recording.sample_rate, replica.sample_rate
        )));
    }
    MatchedFilter::new(replica, recording.len()).apply(recording)
}

/// Full-length analytic-signal transform for a fixed length.
pub struct AnalyticTransform {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl AnalyticTransform {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        AnalyticTransform {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    /// Analytic signal of a real sequence of the planned length: positive
    /// frequencies doubled, negative frequencies removed, DC and Nyquist
    /// kept.
    pub fn apply(&self, samples: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(samples.len(), self.len);
        let n = self.len;
        let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        self.forward.process(&mut buf);
        let half = n / 2;
        let last_doubled = if n % 2 == 0 { half } else { half + 1 };
        for (k, c) in buf.iter_mut().enumerate() {
            let w = if k == 0 || (n % 2 == 0 && k == half) {
                1.0
            } else if k < last_doubled {
                2.0
            } else {
                0.0
            };
            *c *= w / n as f64;
        }
        self.inverse.process(&mut buf);
        buf
    }
}

pub fn analytic_signal(samples: &[f64]) -> Vec<Complex64> {
    AnalyticTransform::new(samples.len()).apply(samples)
}

/// Magnitude of the analytic signal.
pub fn envelope(signal: &Signal) -> Signal {
    let samples = analytic_signal(&signal.samples).iter().map(|c| c.norm()).collect();
    Signal {
        samples,
        sample_rate: signal.sample_rate,
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}
