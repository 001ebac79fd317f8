//! Elevation-dependent gain calibration and compensation.
//!
//! A flat reflector straight ahead at a fixed range is measured with the
//! sensor pitched over the steering range; each entry's factor is the
//! untilted peak energy divided by the peak energy at that steering
//! elevation. Peak energy is the envelope amplitude of the beamformed
//! image near the reflector's range.

use crate::beamformer::AcousticImage;
use crate::error::{Error, Result};
use crate::simulator::{Reflector, Scene, SonarRig};
use crate::steering::{select_steering, SteeringBank};

/// Range bins on either side of the reflector bin searched for its peak.
pub const PEAK_SEARCH_BINS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    /// `(elevation_deg, factor)`, strictly increasing in elevation.
    entries: Vec<(f64, f64)>,
    /// Meters; informational.
    reference_range: f64,
}

impl GainTable {
    pub fn new(entries: Vec<(f64, f64)>, reference_range: f64) -> Result<Self> {
        if entries.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::domain("gain table elevations must be strictly increasing"));
        }
        if let Some(&(e, f)) = entries.iter().find(|(e, f)| !e.is_finite() || !(*f > 0.0 && f.is_finite())) {
            return Err(Error::domain(format!("gain factor {f} at {e}° must be positive and finite")));
        }
        match entries.iter().find(|(e, _)| *e == 0.0) {
            Some(&(_, f)) if f == 1.0 => {}
            Some(&(_, f)) => return Err(Error::domain(format!("gain factor at 0° must be exactly 1, got {f}"))),
            None => return Err(Error::domain("gain table has no 0° entry")),
        }
        Ok(GainTable {
            entries,
            reference_range,
        })
    }

    /// Factor 1 at 0° only; compensation becomes a no-op.
    pub fn unity() -> Self {
        GainTable {
            entries: vec![(0.0, 1.0)],
            reference_range: 0.0,
        }
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn reference_range(&self) -> f64 {
        self.reference_range
    }

    /// Factor at `theta_c`: an entry's own value on an exact match, linear
    /// interpolation between neighbors, the end value (flagged) outside the
    /// table span.
    pub fn factor_at(&self, theta_c: f64) -> (f64, bool) {
        let e = &self.entries;
        let i = e.partition_point(|(el, _)| *el < theta_c);
        if i < e.len() && e[i].0 == theta_c {
            return (e[i].1, false);
        }
        if i == 0 {
            return (e[0].1, true);
        }
        if i == e.len() {
            return (e[e.len() - 1].1, true);
        }
        let ((e0, f0), (e1, f1)) = (e[i - 1], e[i]);
        (f0 + (f1 - f0) * (theta_c - e0) / (e1 - e0), false)
    }
}

/// `factor(θ) = energy(0°) / energy(θ)`.
pub fn calibrate_gain(measurements: &[(f64, f64)], reference_range: f64) -> Result<GainTable> {
    let mut sorted = measurements.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::domain("calibration elevations must be unique"));
    }
    if let Some(&(e, p)) = sorted.iter().find(|(_, p)| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::domain(format!("peak energy {p} at {e}° must be positive")));
    }
    let Some(&(_, reference)) = sorted.iter().find(|(e, _)| *e == 0.0) else {
        return Err(Error::domain("calibration has no 0° measurement"));
    };
    let entries = sorted.iter().map(|&(e, p)| (e, reference / p)).collect();
    GainTable::new(entries, reference_range)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compensated {
    pub image: AcousticImage,
    /// `theta_c` fell outside the table span.
    pub clamped: bool,
}

/// Scales every cell by the table factor at `theta_c`.
pub fn apply_gain(image: &AcousticImage, table: &GainTable, theta_c: f64) -> Compensated {
    let (factor, clamped) = table.factor_at(theta_c);
    let mut image = image.clone();
    image.energy.iter_mut().for_each(|v| *v *= factor);
    image.gain_applied = factor;
    Compensated { image, clamped }
}

/// Peak envelope amplitude within `PEAK_SEARCH_BINS` range bins of `range`,
/// over all azimuths.
pub fn peak_near_range(image: &AcousticImage, range: f64) -> f64 {
    let bin = image.range_axis[1] - image.range_axis[0];
    let center = (range / bin).round() as usize;
    let lo = center.saturating_sub(PEAK_SEARCH_BINS);
    let hi = (center + PEAK_SEARCH_BINS).min(image.num_ranges() - 1);
    (lo..=hi)
        .flat_map(|r| (0..image.num_azimuths()).map(move |a| (r, a)))
        .map(|(r, a)| image.at(r, a))
        .fold(0.0, f64::max)
}

/// Simulated pan-tilt calibration: for every tilt in `angles`, a flat
/// reflector straight ahead at `reference_range` is measured with the
/// steering matrix the bank selects for that tilt. Returns
/// `(theta_c, peak_energy)` pairs, keyed by steering elevation.
pub fn run_calibration_sweep(
    rig: &SonarRig,
    bank: &SteeringBank,
    reference_range: f64,
    noise_sigma: f64,
    angles: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if !angles.contains(&0.0) {
        return Err(Error::domain("calibration angles must include 0"));
    }
    let scene = Scene::new(
        vec![Reflector::at(reference_range, 0.0, 0.0, 1.0)?],
        noise_sigma,
        rig.speed_of_sound,
    )?;
    angles
        .iter()
        .enumerate()
        .map(|(i, &tilt)| {
            let frame = rig.synthesize(&scene, tilt, 0.0, seed.wrapping_add(i as u64))?.frame;
            let sel = select_steering(bank, tilt)?;
            let image = rig.image(&frame, bank.matrix(sel.index))?;
            Ok((sel.theta_c, peak_near_range(&image, reference_range)))
        })
        .collect()
}
