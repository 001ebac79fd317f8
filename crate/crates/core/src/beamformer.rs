//! Conventional delay-and-sum beamforming into range × azimuth images.
//!
//! Channels are matched-filtered first, then shifted by the steering delays
//! and averaged coherently; the image holds the envelope of that average.
//! The envelope is taken through per-channel analytic signals, which is the
//! same as the envelope of the shifted sum because the Hilbert transform is
//! linear and shift-invariant, and it only has to be evaluated at the range
//! bins.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::dsp::{AnalyticTransform, MatchedFilter, RawFrame};
use crate::error::{Error, Result};
use crate::steering::DelayMatrix;

pub const DEFAULT_DECIMATION: usize = 8;
pub const DEFAULT_MAX_RANGE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamformParams {
    /// Meters.
    pub max_range: f64,
    /// Samples per range bin.
    pub decimation: usize,
}

impl Default for BeamformParams {
    fn default() -> Self {
        BeamformParams {
            max_range: DEFAULT_MAX_RANGE,
            decimation: DEFAULT_DECIMATION,
        }
    }
}

/// Energy over range × azimuth for one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticImage {
    /// Row-major `num_ranges × num_azimuths`, non-negative.
    pub energy: Vec<f64>,
    /// Meters.
    pub range_axis: Vec<f64>,
    /// Degrees.
    pub azimuth_axis: Vec<f64>,
    /// Steering elevation used, degrees.
    pub theta_c: f64,
    pub gain_applied: f64,
}

impl AcousticImage {
    pub fn num_ranges(&self) -> usize {
        self.range_axis.len()
    }

    pub fn num_azimuths(&self) -> usize {
        self.azimuth_axis.len()
    }

    pub fn at(&self, range: usize, azimuth: usize) -> f64 {
        self.energy[range * self.azimuth_axis.len() + azimuth]
    }

    pub fn max(&self) -> f64 {
        self.energy.iter().copied().fold(0.0, f64::max)
    }

    /// `(range_index, azimuth_index)` of the largest cell; first one wins.
    pub fn argmax(&self) -> (usize, usize) {
        let i = crate::dsp::argmax(&self.energy);
        (i / self.num_azimuths(), i % self.num_azimuths())
    }

    pub fn same_axes(&self, other: &AcousticImage) -> bool {
        self.range_axis == other.range_axis && self.azimuth_axis == other.azimuth_axis
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformOutput {
    pub image: AcousticImage,
    /// Cells zeroed because a steered sample fell past the end of the frame.
    pub truncated: usize,
}

fn range_axis(sample_rate: f64, c: f64, params: &BeamformParams) -> Result<Vec<f64>> {
    if params.decimation == 0 {
        return Err(Error::domain("decimation must be at least 1"));
    }
    if !(params.max_range > 0.0 && params.max_range.is_finite()) {
        return Err(Error::domain(format!("max range must be positive, got {}", params.max_range)));
    }
    let bin = c / (2.0 * sample_rate) * params.decimation as f64;
    let n = (params.max_range / bin).floor() as usize + 1;
    Ok((0..n).map(|k| k as f64 * bin).collect())
}

/// Delay-and-sum over analytic channels.
pub fn das_beamform_analytic(
    channels: &[Vec<Complex64>],
    delays: &DelayMatrix,
    sample_rate: f64,
    params: &BeamformParams,
) -> Result<BeamformOutput> {
    let num_mics = channels.len();
    if num_mics != delays.num_mics() {
        return Err(Error::domain(format!(
            "frame has {num_mics} channels, delay matrix has {} rows",
            delays.num_mics()
        )));
    }
    let n = channels[0].len();
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::domain("channels differ in length"));
    }
    let c = delays.speed_of_sound();
    let span = n as f64 / sample_rate;
    if span < 2.0 * params.max_range / c {
        return Err(Error::domain(format!(
            "frame spans {span} s, max range {} m needs {} s",
            params.max_range,
            2.0 * params.max_range / c
        )));
    }
    let ranges = range_axis(sample_rate, c, params)?;
    let dirs = delays.num_directions();
    let scale = 1.0 / num_mics as f64;

    let columns: Vec<(Vec<f64>, usize)> = (0..dirs)
        .into_par_iter()
        .map(|d| {
            // column offset and mic delay rounded together: one nearest-sample
            // shift per channel
            let shifts: Vec<i64> = (0..num_mics)
                .map(|m| ((delays.offset(d) + delays.delay(m, d)) * sample_rate).round() as i64)
                .collect();
            let max_shift = shifts.iter().copied().max().unwrap_or(0);
            let mut truncated = 0;
            let column = (0..ranges.len())
                .map(|k| {
                    let start = (k * params.decimation) as i64;
                    if start + max_shift >= n as i64 {
                        truncated += 1;
                        return 0.0;
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (ch, &s) in channels.iter().zip(&shifts) {
                        let idx = start + s;
                        if idx >= 0 {
                            acc += ch[idx as usize];
                        }
                    }
                    acc.norm() * scale
                })
                .collect();
            (column, truncated)
        })
        .collect();

    let mut energy = vec![0.0; ranges.len() * dirs];
    let mut truncated = 0;
    for (d, (column, t)) in columns.into_iter().enumerate() {
        truncated += t;
        for (k, v) in column.into_iter().enumerate() {
            energy[k * dirs + d] = v;
        }
    }
    Ok(BeamformOutput {
        image: AcousticImage {
            energy,
            range_axis: ranges,
            azimuth_axis: delays.azimuths().to_vec(),
            theta_c: delays.elevation(),
            gain_applied: 1.0,
        },
        truncated,
    })
}

/// Delay-and-sum of matched-filtered channels (`num_mics × num_samples`).
pub fn das_beamform(
    filtered: &[Vec<f64>],
    delays: &DelayMatrix,
    sample_rate: f64,
    params: &BeamformParams,
) -> Result<BeamformOutput> {
    let Some(first) = filtered.first() else {
        return Err(Error::domain("no channels to beamform"));
    };
    if filtered.iter().any(|c| c.len() != first.len()) {
        return Err(Error::domain("channels differ in length"));
    }
    let transform = AnalyticTransform::new(first.len());
    let analytic: Vec<Vec<Complex64>> = filtered.par_iter().map(|c| transform.apply(c)).collect();
    das_beamform_analytic(&analytic, delays, sample_rate, params)
}

/// Matched-filters every channel of `frame` and returns analytic signals
/// ready for [`das_beamform_analytic`].
pub fn prepare_channels(frame: &RawFrame, filter: &MatchedFilter) -> Result<Vec<Vec<Complex64>>> {
    if filter.recording_len() != frame.num_samples() {
        return Err(Error::domain(format!(
            "matched filter planned for {} samples, frame has {}",
            filter.recording_len(),
            frame.num_samples()
        )));
    }
    let transform = AnalyticTransform::new(frame.num_samples());
    Ok(frame
        .channels
        .par_iter()
        .map(|ch| {
            let mut out = vec![0.0; ch.len()];
            filter.apply_into(ch.iter().map(|&s| s as f64), &mut out);
            transform.apply(&out)
        })
        .collect())
}

/// Matched filter, delay-and-sum, envelope.
pub fn beamform_frame(
    frame: &RawFrame,
    filter: &MatchedFilter,
    delays: &DelayMatrix,
    params: &BeamformParams,
) -> Result<BeamformOutput> {
    let channels = prepare_channels(frame, filter)?;
    das_beamform_analytic(&channels, delays, frame.sample_rate, params)
}

/// Signed elementwise difference of two images on the same axes.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceImage {
    pub values: Vec<f64>,
    pub range_axis: Vec<f64>,
    pub azimuth_axis: Vec<f64>,
}

impl DifferenceImage {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `a − b`, cell by cell.
pub fn image_difference(a: &AcousticImage, b: &AcousticImage) -> Result<DifferenceImage> {
    if !a.same_axes(b) {
        return Err(Error::domain("images have different axes"));
    }
    Ok(DifferenceImage {
        values: a.energy.iter().zip(&b.energy).map(|(x, y)| x - y).collect(),
        range_axis: a.range_axis.clone(),
        azimuth_axis: a.azimuth_axis.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{MicArray, Vec3};
    use crate::dsp::{envelope, generate_chirp, EmissionSpec, Signal, DEFAULT_SAMPLE_RATE};
    use crate::steering::{azimuth_range, compute_delay_matrix, DirectionGrid};
    use proptest::prelude::*;

    const FS: f64 = DEFAULT_SAMPLE_RATE;

    fn echo_channel(delay: usize, n: usize) -> Vec<f64> {
        let chirp = generate_chirp(&EmissionSpec::default(), FS).unwrap();
        let mut rec = vec![0.0; n];
        rec[delay..delay + chirp.len()].copy_from_slice(&chirp.samples);
        let filter = MatchedFilter::new(&chirp, n);
        let mut out = vec![0.0; n];
        filter.apply_into(rec, &mut out);
        out
    }

    fn params() -> BeamformParams {
        BeamformParams {
            max_range: 1.0,
            decimation: 8,
        }
    }

    #[test]
    fn single_mic_columns_equal_channel_envelope() {
        let n = 4000;
        let ch = echo_channel(1200, n);
        let array = MicArray::new(vec![Vec3::ZERO], Vec3::ZERO).unwrap();
        let grid = DirectionGrid::new(azimuth_range(-60.0, 60.0, 20.0).unwrap(), 0.0).unwrap();
        let delays = compute_delay_matrix(&array, &grid, 343.0).unwrap();
        let out = das_beamform(&[ch.clone()], &delays, FS, &params()).unwrap();
        let env = envelope(&Signal::new(ch, FS).unwrap());
        let img = &out.image;
        for k in 0..img.num_ranges() {
            for a in 0..img.num_azimuths() {
                assert_eq!(img.at(k, a).to_bits(), env.samples[k * 8].to_bits());
            }
        }
        assert_eq!(out.truncated, 0);
    }

    #[test]
    fn identical_channels_average_to_one_channel() {
        let n = 4000;
        let ch = echo_channel(900, n);
        let array = MicArray::new(vec![Vec3::ZERO], Vec3::ZERO).unwrap();
        let grid = DirectionGrid::new(vec![0.0], 0.0).unwrap();
        let one = compute_delay_matrix(&array, &grid, 343.0).unwrap();
        let single = das_beamform(&[ch.clone()], &one, FS, &params()).unwrap().image;
        let zero = DelayMatrix::from_parts(5, vec![0.0], vec![0.0; 5], vec![0.0], 0.0, 343.0).unwrap();
        let many = das_beamform(&vec![ch; 5], &zero, FS, &params()).unwrap().image;
        for (a, b) in single.energy.iter().zip(&many.energy) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_frame_gives_zero_image() {
        let array = MicArray::random_disc(4, 0.04, 1).unwrap();
        let grid = DirectionGrid::new(vec![-10.0, 0.0, 10.0], 5.0).unwrap();
        let delays = compute_delay_matrix(&array, &grid, 343.0).unwrap();
        let out = das_beamform(&vec![vec![0.0; 3000]; 4], &delays, FS, &params()).unwrap();
        assert!(out.image.energy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_frame_rejected_and_truncation_counted() {
        let array = MicArray::random_disc(4, 0.04, 1).unwrap();
        let grid = DirectionGrid::new(vec![0.0, 60.0], 0.0).unwrap();
        let delays = compute_delay_matrix(&array, &grid, 343.0).unwrap();
        assert!(das_beamform(&vec![vec![0.0; 1000]; 4], &delays, FS, &params()).is_err());
        // frame exactly spanning the max range: the far mic's samples for the
        // last bins run off the end
        let wide = MicArray::new(vec![Vec3::ZERO, Vec3::new(0.0, -0.3, 0.0)], Vec3::ZERO).unwrap();
        let delays = compute_delay_matrix(&wide, &grid, 343.0).unwrap();
        let n = (2.0 * 1.0 / 343.0 * FS).ceil() as usize;
        let out = das_beamform(&vec![vec![1e-3; n]; 2], &delays, FS, &params()).unwrap();
        assert!(out.truncated > 0);
    }

    #[test]
    fn channel_count_mismatch() {
        let array = MicArray::random_disc(4, 0.04, 1).unwrap();
        let grid = DirectionGrid::new(vec![0.0], 0.0).unwrap();
        let delays = compute_delay_matrix(&array, &grid, 343.0).unwrap();
        assert!(das_beamform(&vec![vec![0.0; 6000]; 3], &delays, FS, &params()).is_err());
    }

    #[test]
    fn difference_identities() {
        let img = AcousticImage {
            energy: vec![1.0, 2.0, 3.0, 4.0],
            range_axis: vec![0.0, 0.1],
            azimuth_axis: vec![-1.0, 1.0],
            theta_c: 0.0,
            gain_applied: 1.0,
        };
        let other = AcousticImage {
            energy: vec![0.5, 0.0, 7.0, 1.0],
            ..img.clone()
        };
        assert!(image_difference(&img, &img).unwrap().values.iter().all(|&v| v == 0.0));
        let ab = image_difference(&img, &other).unwrap();
        let ba = image_difference(&other, &img).unwrap();
        assert!(ab.values.iter().zip(&ba.values).all(|(x, y)| x + y == 0.0));
        let shifted = AcousticImage {
            azimuth_axis: vec![-2.0, 2.0],
            ..img.clone()
        };
        assert!(image_difference(&img, &shifted).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn mic_permutation_invariance(seed in 0u64..1000, scale in 0.1f64..10.0) {
            let n = 3500;
            let array = MicArray::random_disc(6, 0.04, seed).unwrap();
            let grid = DirectionGrid::new(azimuth_range(-30.0, 30.0, 10.0).unwrap(), 3.0).unwrap();
            let delays = compute_delay_matrix(&array, &grid, 343.0).unwrap();
            let channels: Vec<Vec<f64>> = (0..6).map(|m| echo_channel(700 + 13 * m, n)).collect();
            let base = das_beamform(&channels, &delays, FS, &params()).unwrap().image;

            let order = [3usize, 0, 5, 1, 4, 2];
            let permuted: Vec<Vec<f64>> = order.iter().map(|&m| channels[m].clone()).collect();
            let p = das_beamform(&permuted, &delays.permuted_rows(&order), FS, &params()).unwrap().image;
            for (a, b) in base.energy.iter().zip(&p.energy) {
                prop_assert!((a - b).abs() <= 1e-9 * base.max());
            }

            let scaled: Vec<Vec<f64>> = channels.iter().map(|c| c.iter().map(|v| v * scale).collect()).collect();
            let s = das_beamform(&scaled, &delays, FS, &params()).unwrap().image;
            for (a, b) in base.energy.iter().zip(&s.energy) {
                prop_assert!((a * scale - b).abs() <= 1e-9 * base.max() * scale);
            }
            prop_assert_eq!(base.argmax(), s.argmax());
        }
    }
}
