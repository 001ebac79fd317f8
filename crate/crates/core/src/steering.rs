//! Precomputed delay-and-sum steering matrices and constant-time selection
//! of the matrix that counter-rotates the scan plane against a measured
//! tilt.

use rayon::prelude::*;

use crate::array::{direction_unit_vector, rotate_about_y, MicArray, Vec3, SPEED_OF_SOUND};
use crate::error::{Error, Result};

/// Bytes per delay entry in the packed (cache / device) representation.
pub const PACKED_BYTES_PER_ENTRY: usize = std::mem::size_of::<f32>();

/// Scan directions of one steered plane.
///
/// The plane is the sensor's horizontal plane pitched up by `elevation`
/// about the y-axis, so azimuth 0 points at elevation `elevation` and
/// every azimuth in the plane is the world-horizontal direction of the
/// same azimuth once the sensor tilt is `-elevation`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    azimuths: Vec<f64>,
    elevation: f64,
}

impl DirectionGrid {
    pub fn new(azimuths: Vec<f64>, elevation: f64) -> Result<Self> {
        if azimuths.is_empty() {
            return Err(Error::domain("azimuth grid is empty"));
        }
        if let Some(a) = azimuths.iter().find(|a| !(-90.0..=90.0).contains(*a)) {
            return Err(Error::domain(format!("azimuth {a} outside [-90, 90]")));
        }
        if azimuths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("azimuths must be strictly increasing"));
        }
        if !(-90.0..=90.0).contains(&elevation) {
            return Err(Error::domain(format!("plane elevation {elevation} outside [-90, 90]")));
        }
        Ok(DirectionGrid { azimuths, elevation })
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    /// Unit vector of scan direction `azimuth` in this plane.
    pub fn direction(&self, azimuth: f64) -> Vec3 {
        let flat = direction_unit_vector(azimuth, 0.0).expect("azimuth validated on construction");
        rotate_about_y(flat, -self.elevation)
    }
}

/// Evenly spaced azimuths from `start` to `end` inclusive.
pub fn azimuth_range(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    let n = checked_steps(start, end, step)?;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

pub fn default_azimuths() -> Vec<f64> {
    azimuth_range(-90.0, 90.0, 1.0).expect("default grid is valid")
}

/// Number of whole `step`s between `lo` and `hi`; rejects spans that the
/// step does not divide.
fn checked_steps(lo: f64, hi: f64, step: f64) -> Result<usize> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::domain(format!("range [{lo}, {hi}] must satisfy min < max")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(format!("resolution must be positive, got {step}")));
    }
    let steps = (hi - lo) / step;
    let n = steps.round();
    if (steps - n).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "resolution {step} does not divide the span [{lo}, {hi}]"
        )));
    }
    Ok(n as usize)
}

/// Per-microphone, per-direction delays for one steered plane.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    num_mics: usize,
    azimuths: Vec<f64>,
    /// Row-major `num_mics × num_directions`, seconds, column minimum 0.
    delays: Vec<f64>,
    /// Absolute arrival time of a zero-delay sample relative to the
    /// emitter-origin two-way time `2r/c`, seconds: the raw delay removed
    /// from the column plus the emitter's own plane-wave lead.
    offsets: Vec<f64>,
    elevation: f64,
    speed_of_sound: f64,
}

impl DelayMatrix {
    pub(crate) fn from_parts(
        num_mics: usize,
        azimuths: Vec<f64>,
        delays: Vec<f64>,
        offsets: Vec<f64>,
        elevation: f64,
        speed_of_sound: f64,
    ) -> Result<Self> {
        let dirs = azimuths.len();
        if delays.len() != num_mics * dirs || offsets.len() != dirs {
            return Err(Error::domain("delay matrix dimensions inconsistent"));
        }
        if delays.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::domain("delays must be non-negative"));
        }
        Ok(DelayMatrix {
            num_mics,
            azimuths,
            delays,
            offsets,
            elevation,
            speed_of_sound,
        })
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_directions(&self) -> usize {
        self.azimuths.len()
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn delay(&self, mic: usize, direction: usize) -> f64 {
        self.delays[mic * self.azimuths.len() + direction]
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn offset(&self, direction: usize) -> f64 {
        self.offsets[direction]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Copy with microphone rows reordered: row `i` of the result is row
    /// `order[i]` of `self`.
    pub fn permuted_rows(&self, order: &[usize]) -> DelayMatrix {
        let dirs = self.azimuths.len();
        let delays = order
            .iter()
            .flat_map(|&m| self.delays[m * dirs..(m + 1) * dirs].iter().copied())
            .collect();
        DelayMatrix {
            delays,
            ..self.clone()
        }
    }
}

/// Far-field plane-wave delays: `τ_m(d) = −(p_m · u(d)) / c`, shifted per
/// column so the earliest microphone has delay 0.
///
/// The removed minimum, plus the emitter's lead `−(e · u) / c`, is kept as
/// the column offset so range bins map to absolute two-way travel times.
pub fn compute_delay_matrix(array: &MicArray, grid: &DirectionGrid, c: f64) -> Result<DelayMatrix> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("speed of sound must be positive, got {c}")));
    }
    let mics = array.mic_positions();
    let dirs = grid.azimuths().len();
    let mut delays = vec![0.0; mics.len() * dirs];
    let mut offsets = vec![0.0; dirs];
    for (d, &az) in grid.azimuths().iter().enumerate() {
        let u = grid.direction(az);
        let raw: Vec<f64> = mics.iter().map(|p| -p.dot(u) / c).collect();
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        offsets[d] = min - array.emitter_position().dot(u) / c;
        for (m, r) in raw.iter().enumerate() {
            delays[m * dirs + d] = r - min;
        }
    }
    DelayMatrix::from_parts(mics.len(), grid.azimuths().to_vec(), delays, offsets, grid.elevation(), c)
}

/// Outcome of a steering lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    /// Grid elevation of the chosen matrix, degrees.
    pub theta_c: f64,
    /// The requested compensation fell outside the bank and was clamped.
    pub clamped: bool,
}

/// Immutable set of delay matrices on an arithmetic elevation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringBank {
    matrices: Vec<DelayMatrix>,
    theta_c_min: f64,
    resolution: f64,
    azimuths: Vec<f64>,
    speed_of_sound: f64,
    array_hash: String,
}

impl SteeringBank {
    pub(crate) fn from_parts(
        matrices: Vec<DelayMatrix>,
        theta_c_min: f64,
        resolution: f64,
        azimuths: Vec<f64>,
        speed_of_sound: f64,
        array_hash: String,
    ) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::domain("steering bank is empty"));
        }
        if matrices.len() > 1 && !(resolution > 0.0) {
            return Err(Error::domain("multi-entry bank needs a positive resolution"));
        }
        Ok(SteeringBank {
            matrices,
            theta_c_min,
            resolution,
            azimuths,
            speed_of_sound,
            array_hash,
        })
    }

    /// Bank with a single fixed steering plane at `theta_c`.
    pub fn fixed(array: &MicArray, azimuths: &[f64], theta_c: f64, c: f64) -> Result<Self> {
        let grid = DirectionGrid::new(azimuths.to_vec(), theta_c)?;
        let m = compute_delay_matrix(array, &grid, c)?;
        SteeringBank::from_parts(vec![m], theta_c, 0.0, azimuths.to_vec(), c, array.geometry_hash())
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn theta_c_min(&self) -> f64 {
        self.theta_c_min
    }

    pub fn theta_c_max(&self) -> f64 {
        self.elevation(self.matrices.len() - 1)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn array_hash(&self) -> &str {
        &self.array_hash
    }

    pub fn num_mics(&self) -> usize {
        self.matrices[0].num_mics()
    }

    /// Grid elevation of entry `index`.
    pub fn elevation(&self, index: usize) -> f64 {
        self.theta_c_min + index as f64 * self.resolution
    }

    pub fn matrix(&self, index: usize) -> &DelayMatrix {
        &self.matrices[index]
    }

    pub fn matrices(&self) -> &[DelayMatrix] {
        &self.matrices
    }
}

/// One delay matrix per elevation `theta_c_min + k · resolution` up to
/// `theta_c_max`.
pub fn build_bank(
    array: &MicArray,
    azimuths: &[f64],
    theta_c_min: f64,
    theta_c_max: f64,
    resolution: f64,
    c: f64,
) -> Result<SteeringBank> {
    let steps = checked_steps(theta_c_min, theta_c_max, resolution)?;
    // validate the azimuths once up front
    DirectionGrid::new(azimuths.to_vec(), theta_c_min)?;
    let matrices = (0..=steps)
        .into_par_iter()
        .map(|k| {
            let grid = DirectionGrid::new(azimuths.to_vec(), theta_c_min + k as f64 * resolution)?;
            compute_delay_matrix(array, &grid, c)
        })
        .collect::<Result<Vec<_>>>()?;
    SteeringBank::from_parts(
        matrices,
        theta_c_min,
        resolution,
        azimuths.to_vec(),
        c,
        array.geometry_hash(),
    )
}

/// Default bank: −30°..30° at 1°, −90°..90° azimuth at 1°, c = 343 m/s.
pub fn default_bank(array: &MicArray) -> SteeringBank {
    build_bank(array, &default_azimuths(), -30.0, 30.0, 1.0, SPEED_OF_SOUND).expect("default bank parameters are valid")
}

/// Picks the bank entry closest to `θ_c = −theta_i`, clamped to the bank
/// span. An exact midpoint between two entries resolves to the one
/// farther from zero.
pub fn select_steering(bank: &SteeringBank, theta_i: f64) -> Result<Selection> {
    if !theta_i.is_finite() {
        return Err(Error::domain(format!("tilt {theta_i} is not finite")));
    }
    let last = bank.len() - 1;
    if last == 0 {
        return Ok(Selection {
            index: 0,
            theta_c: bank.theta_c_min,
            clamped: -theta_i != bank.theta_c_min,
        });
    }
    let (lo, hi) = (bank.theta_c_min, bank.theta_c_max());
    let target = -theta_i;
    let clamped = target < lo || target > hi;
    let x = (target.clamp(lo, hi) - lo) / bank.resolution;
    let below = (x.floor() as usize).min(last);
    let frac = x - below as f64;
    let index = if below == last || frac < 0.5 - 1e-9 {
        below
    } else if frac > 0.5 + 1e-9 {
        below + 1
    } else if bank.elevation(below) + bank.resolution / 2.0 >= 0.0 {
        below + 1
    } else {
        below
    };
    Ok(Selection {
        index,
        theta_c: bank.elevation(index),
        clamped,
    })
}

/// Size of the bank in its packed form.
pub fn bank_memory_bytes(bank: &SteeringBank) -> usize {
    bank.matrices
        .iter()
        .map(|m| m.num_mics() * m.num_directions())
        .sum::<usize>()
        * PACKED_BYTES_PER_ENTRY
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair() -> MicArray {
        MicArray::new(vec![Vec3::new(0.0, 0.05, 0.0), Vec3::new(0.0, -0.05, 0.0)], Vec3::ZERO).unwrap()
    }

    #[test]
    fn single_mic_gives_zero_delays() {
        let a = MicArray::new(vec![Vec3::ZERO], Vec3::ZERO).unwrap();
        let g = DirectionGrid::new(default_azimuths(), 12.0).unwrap();
        let m = compute_delay_matrix(&a, &g, 343.0).unwrap();
        assert!(m.delays().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn broadside_pair_is_symmetric() {
        let g = DirectionGrid::new(vec![0.0], 0.0).unwrap();
        let m = compute_delay_matrix(&pair(), &g, 343.0).unwrap();
        assert_eq!(m.delay(0, 0), 0.0);
        assert_eq!(m.delay(1, 0), 0.0);
    }

    #[test]
    fn endfire_pair_path_difference() {
        let g = DirectionGrid::new(vec![90.0], 0.0).unwrap();
        let m = compute_delay_matrix(&pair(), &g, 343.0).unwrap();
        // the +y microphone hears a wave from +y first
        assert_eq!(m.delay(0, 0), 0.0);
        assert!((m.delay(1, 0) - 0.1 / 343.0).abs() < 1e-15);
        assert!((m.delay(1, 0) - 291.5e-6).abs() < 0.1e-6);
    }

    #[test]
    fn bank_sizes() {
        let a = MicArray::default_layout();
        let az = default_azimuths();
        assert_eq!(build_bank(&a, &az, -30.0, 30.0, 1.0, 343.0).unwrap().len(), 61);
        assert_eq!(build_bank(&a, &az, -30.0, 30.0, 5.0, 343.0).unwrap().len(), 13);
        assert!(build_bank(&a, &az, 0.0, 0.0, 1.0, 343.0).is_err());
        assert!(build_bank(&a, &az, -30.0, 30.0, 7.0, 343.0).is_err());
    }

    #[test]
    fn bank_elevations_are_exact_grid() {
        let bank = build_bank(&pair(), &[0.0, 10.0], -30.0, 30.0, 2.5, 343.0).unwrap();
        for (k, m) in bank.matrices().iter().enumerate() {
            assert_eq!(m.elevation(), -30.0 + k as f64 * 2.5);
        }
    }

    #[test]
    fn selection_examples() {
        let bank = build_bank(&pair(), &[0.0], -30.0, 30.0, 1.0, 343.0).unwrap();
        let s = select_steering(&bank, -10.78).unwrap();
        assert_eq!((s.theta_c, s.clamped), (11.0, false));
        assert_eq!(select_steering(&bank, 0.0).unwrap().theta_c, 0.0);
        let s = select_steering(&bank, -45.0).unwrap();
        assert_eq!((s.theta_c, s.clamped), (30.0, true));
        assert_eq!(select_steering(&bank, 30.64).unwrap().theta_c, -30.0);
        assert!(select_steering(&bank, f64::NAN).is_err());
    }

    #[test]
    fn midpoints_round_away_from_zero() {
        let bank = build_bank(&pair(), &[0.0], -30.0, 30.0, 1.0, 343.0).unwrap();
        assert_eq!(select_steering(&bank, -10.5).unwrap().theta_c, 11.0);
        assert_eq!(select_steering(&bank, 10.5).unwrap().theta_c, -11.0);
        assert_eq!(select_steering(&bank, 0.5).unwrap().theta_c, -1.0);
        assert_eq!(select_steering(&bank, -0.5).unwrap().theta_c, 1.0);
    }

    #[test]
    fn single_entry_bank_always_returns_it() {
        let bank = SteeringBank::fixed(&pair(), &[0.0, 5.0], 4.0, 343.0).unwrap();
        for t in [-50.0, 0.0, 3.3, 80.0] {
            let s = select_steering(&bank, t).unwrap();
            assert_eq!((s.index, s.theta_c), (0, 4.0));
        }
    }

    #[test]
    fn memory_report() {
        let a = MicArray::default_layout();
        let bank = default_bank(&a);
        assert_eq!(bank_memory_bytes(&bank), 1_413_248);
        assert!(build_bank(&a, &[], -30.0, 30.0, 1.0, 343.0).is_err());
    }

    #[test]
    fn memory_doubles_with_azimuths() {
        let a = pair();
        let az1 = azimuth_range(-40.0, 40.0, 2.0).unwrap();
        let az2 = azimuth_range(-40.0, 41.0, 1.0).unwrap();
        assert_eq!(az2.len(), 2 * az1.len());
        let b1 = build_bank(&a, &az1, -5.0, 5.0, 1.0, 343.0).unwrap();
        let b2 = build_bank(&a, &az2, -5.0, 5.0, 1.0, 343.0).unwrap();
        assert_eq!(bank_memory_bytes(&b2), 2 * bank_memory_bytes(&b1));
    }

    proptest! {
        #[test]
        fn columns_start_at_zero_and_ignore_translation(
            dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0, el in -30.0f64..30.0
        ) {
            let a = MicArray::random_disc(8, 0.04, 3).unwrap();
            let g = DirectionGrid::new(azimuth_range(-90.0, 90.0, 15.0).unwrap(), el).unwrap();
            let m = compute_delay_matrix(&a, &g, 343.0).unwrap();
            let t = compute_delay_matrix(&a.translated(Vec3::new(dx, dy, dz)), &g, 343.0).unwrap();
            for d in 0..m.num_directions() {
                let col_min = (0..m.num_mics()).map(|i| m.delay(i, d)).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(col_min, 0.0);
                for i in 0..m.num_mics() {
                    prop_assert!((m.delay(i, d) - t.delay(i, d)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn on_grid_tilts_select_exactly(t in -30i32..=30) {
            let bank = build_bank(&pair(), &[0.0], -30.0, 30.0, 1.0, 343.0).unwrap();
            let s = select_steering(&bank, t as f64).unwrap();
            prop_assert_eq!(s.theta_c, -(t as f64));
            prop_assert!(!s.clamped);
        }

        #[test]
        fn selection_is_nearest(theta in -40.0f64..40.0) {
            let bank = build_bank(&pair(), &[0.0], -30.0, 30.0, 1.0, 343.0).unwrap();
            let s = select_steering(&bank, theta).unwrap();
            let target = (-theta).clamp(-30.0, 30.0);
            prop_assert!((s.theta_c - target).abs() <= 0.5 + 1e-9);
        }
    }
}
