//! Image similarity, the tilt-sweep validation experiment, and tilt
//! distribution statistics.

use rayon::prelude::*;

use crate::beamformer::AcousticImage;
use crate::error::{Error, Result};
use crate::gain::{apply_gain, GainTable};
use crate::seed;
use crate::simulator::{Scene, SonarRig};
use crate::steering::{select_steering, SteeringBank};

/// `⟨a, b⟩ / (‖a‖ ‖b‖)` over the flattened energies.
pub fn cosine_similarity(a: &AcousticImage, b: &AcousticImage) -> Result<f64> {
    if !a.same_axes(b) {
        return Err(Error::domain("images have different axes"));
    }
    cosine_similarity_values(&a.energy, &b.energy)
}

pub fn cosine_similarity_values(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain("images differ in size"));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("cosine similarity of an all-zero image is undefined"));
    }
    // a single sqrt keeps identical inputs at exactly 1
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub tilt: f64,
    pub similarity_stabilized: f64,
    pub similarity_unstabilized: f64,
    /// Steering elevation and gain used on the stabilized path.
    pub theta_c: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub seed: u64,
    pub config_hash: String,
}

impl SweepReport {
    pub fn row(&self, tilt: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.tilt == tilt)
    }
}

/// Noise seed of the frame measured at `tilt`; the untilted frame doubles
/// as the sweep reference.
pub fn sweep_frame_seed(root: u64, tilt: f64) -> u64 {
    seed::derive(root, "sweep-frame", (tilt * 1000.0).round() as i64)
}

/// Measures `scene` at every tilt and compares stabilized (bank-selected
/// steering plus gain) and unstabilized (θ_c = 0, no gain) images against
/// the untilted reference.
pub fn run_tilt_sweep(
    rig: &SonarRig,
    scene: &Scene,
    bank: &SteeringBank,
    gain_table: &GainTable,
    tilts: &[f64],
    root_seed: u64,
) -> Result<SweepReport> {
    if !tilts.contains(&0.0) {
        return Err(Error::domain("sweep tilts must include the 0° reference"));
    }
    let level = select_steering(bank, 0.0)?;
    if level.theta_c != 0.0 {
        return Err(Error::domain("steering bank has no 0° entry for the reference"));
    }
    let level_delays = bank.matrix(level.index);
    let reference_frame = rig.synthesize(scene, 0.0, 0.0, sweep_frame_seed(root_seed, 0.0))?.frame;
    let reference = rig.image(&reference_frame, level_delays)?;

    let rows = tilts
        .par_iter()
        .map(|&tilt| {
            let frame = rig.synthesize(scene, tilt, 0.0, sweep_frame_seed(root_seed, tilt))?.frame;
            let unstabilized = rig.image(&frame, level_delays)?;
            let sel = select_steering(bank, tilt)?;
            let stabilized = apply_gain(&rig.image(&frame, bank.matrix(sel.index))?, gain_table, sel.theta_c).image;
            Ok(SweepRow {
                tilt,
                similarity_stabilized: cosine_similarity(&stabilized, &reference)?,
                similarity_unstabilized: cosine_similarity(&unstabilized, &reference)?,
                theta_c: sel.theta_c,
                gain: stabilized.gain_applied,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let description = format!(
        "{:?}|{}|{:?}|{:?}|{}|{}|{}|{:?}|{:?}|{root_seed}",
        scene,
        rig.array.geometry_hash(),
        rig.emission,
        rig.directivity,
        rig.sample_rate,
        bank.theta_c_min(),
        bank.resolution(),
        gain_table.entries(),
        tilts
    );
    Ok(SweepReport {
        rows,
        seed: root_seed,
        config_hash: seed::text_hash(&description),
    })
}

/// Summary of a tilt distribution, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltStats {
    pub mean: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean, central 95 % percentile interval, and extremes.
pub fn tilt_statistics(samples: &[f64]) -> Result<TiltStats> {
    if samples.len() < 2 {
        return Err(Error::domain("tilt statistics need at least two samples"));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::domain("tilt samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(TiltStats {
        mean,
        ci95_low: percentile(&sorted, 0.025).min(mean),
        ci95_high: percentile(&sorted, 0.975).max(mean),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::DirectivityModel;
    use crate::steering::{build_bank, default_azimuths};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn img(energy: Vec<f64>) -> AcousticImage {
        AcousticImage {
            range_axis: (0..energy.len()).map(|i| i as f64).collect(),
            azimuth_axis: vec![0.0],
            energy,
            theta_c: 0.0,
            gain_applied: 1.0,
        }
    }

    #[test]
    fn similarity_examples() {
        let a = img(vec![1.0, 0.0, 0.0, 0.0]);
        let b = img(vec![1.0, 1.0, 0.0, 0.0]);
        let c = img(vec![0.0, 0.0, 2.0, 5.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&a, &c).unwrap(), 0.0);
        assert!((cosine_similarity(&a, &b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(cosine_similarity(&a, &img(vec![0.0; 4])).is_err());
    }

    #[test]
    fn statistics_examples() {
        let s = tilt_statistics(&[2.5; 10]).unwrap();
        assert_eq!((s.ci95_low, s.ci95_high, s.mean), (2.5, 2.5, 2.5));
        let s = tilt_statistics(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean), (-1.0, 1.0, 0.0));
        assert!(tilt_statistics(&[1.0]).is_err());
    }

    #[test]
    fn gaussian_percentile_interval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let normal = Normal::new(0.165, 1.65).unwrap();
        let draws: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let s = tilt_statistics(&draws).unwrap();
        // µ ± 1.959964 σ
        assert!((s.ci95_low - -3.069).abs() < 0.15, "{s:?}");
        assert!((s.ci95_high - 3.399).abs() < 0.15, "{s:?}");
    }

    #[test]
    fn zero_only_sweep_matches_reference() {
        let rig = SonarRig::default_rig();
        let bank = build_bank(&rig.array, &default_azimuths(), -30.0, 30.0, 1.0, 343.0).unwrap();
        let scene = Scene::cluttered_room(0.01);
        let r = run_tilt_sweep(&rig, &scene, &bank, &GainTable::unity(), &[0.0], 5).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].similarity_stabilized, 1.0);
        assert_eq!(r.rows[0].similarity_unstabilized, 1.0);
        assert!(run_tilt_sweep(&rig, &scene, &bank, &GainTable::unity(), &[5.0], 5).is_err());
    }

    #[test]
    fn unstabilized_similarity_degrades_monotonically() {
        let rig = SonarRig::default_rig().with_directivity(DirectivityModel::default());
        let bank = build_bank(&rig.array, &default_azimuths(), -30.0, 30.0, 1.0, 343.0).unwrap();
        let scene = Scene::single_boresight(2.0, 0.0).unwrap();
        let tilts: Vec<f64> = (0..=15).map(|t| t as f64).collect();
        let r = run_tilt_sweep(&rig, &scene, &bank, &GainTable::unity(), &tilts, 1).unwrap();
        for w in r.rows.windows(2) {
            assert!(
                w[1].similarity_unstabilized <= w[0].similarity_unstabilized + 0.01,
                "{:?}",
                r.rows
            );
        }
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_scale_invariant(
            a in proptest::collection::vec(0.0f64..1.0, 8),
            b in proptest::collection::vec(0.0f64..1.0, 8),
            s in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|&v| v > 0.0) && b.iter().any(|&v| v > 0.0));
            let ab = cosine_similarity_values(&a, &b).unwrap();
            let ba = cosine_similarity_values(&b, &a).unwrap();
            let scaled: Vec<f64> = b.iter().map(|v| v * s).collect();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((ab - cosine_similarity_values(&a, &scaled).unwrap()).abs() < 1e-12);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ab));
        }
    }
}
