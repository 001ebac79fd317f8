//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.
//!
//! Run with `cargo test -p steadybeam --test acceptance -- --nocapture`.

use std::path::Path;
use std::time::{Duration, Instant};

use steadybeam::ahrs::replay_imu;
use steadybeam::array::{DirectivityModel, MicArray, Vec3};
use steadybeam::beamformer::{das_beamform, BeamformParams};
use steadybeam::bench::bench_selection;
use steadybeam::config::PipelineConfig;
use steadybeam::dsp::{argmax, envelope, generate_chirp, matched_filter, EmissionSpec, Signal, DEFAULT_SAMPLE_RATE};
use steadybeam::evaluation::{cosine_similarity_values, run_tilt_sweep};
use steadybeam::gain::{calibrate_gain, run_calibration_sweep};
use steadybeam::pipeline::{run_pipeline, RunOptions};
use steadybeam::simulator::{synthesize_imu, ImuNoise, Reflector, Scene, SonarRig, TiltProfile};
use steadybeam::steering::{
    azimuth_range, bank_memory_bytes, compute_delay_matrix, default_azimuths, default_bank, select_steering,
    DirectionGrid,
};
use steadybeam::GainTable;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_selection() -> Outcome {
    let bank = default_bank(&MicArray::default_layout());
    let s = select_steering(&bank, -10.78).map_err(|e| e.to_string())?;
    check(s.theta_c == 11.0, || format!("θ_i = −10.78 gave θ_c = {}", s.theta_c))?;
    for t in -30..=30 {
        let s = select_steering(&bank, t as f64).map_err(|e| e.to_string())?;
        check(s.theta_c == -(t as f64), || format!("θ_i = {t} gave θ_c = {}", s.theta_c))?;
    }
    Ok("θ_c(−10.78) = 11, θ_c = −θ_i on all 61 integers".into())
}

fn c2_bank_size() -> Outcome {
    let bank = default_bank(&MicArray::default_layout());
    check(bank.len() == 61, || format!("{} matrices", bank.len()))?;
    Ok(format!("61 matrices, {} bytes", bank_memory_bytes(&bank)))
}

fn c3_point_targets() -> Outcome {
    let rig = SonarRig::default_rig();
    let bank = default_bank(&rig.array);
    let level = bank.matrix(select_steering(&bank, 0.0).unwrap().index);
    let mut worst = (0usize, 0usize);
    for az in [-40.0, 0.0, 20.0] {
        for range in [1.0, 3.0] {
            let scene = Scene::new(vec![Reflector::at(range, az, 0.0, 1.0).unwrap()], 0.0, 343.0).unwrap();
            let frame = rig.synthesize(&scene, 0.0, 0.0, 0).unwrap().frame;
            let img = rig.image(&frame, level).unwrap();
            let (r, a) = img.argmax();
            let bin = img.range_axis[1];
            let dr = (r as i64 - (range / bin).round() as i64).unsigned_abs() as usize;
            let da = (img.azimuth_axis[a] - az).abs().round() as usize;
            worst = (worst.0.max(da), worst.1.max(dr));
            check(da <= 1 && dr <= 1, || {
                format!("target ({az}°, {range} m) peaked at ({}°, {} m)", img.azimuth_axis[a], img.range_axis[r])
            })?;
        }
    }
    Ok(format!("6/6 targets, worst offset {} az steps, {} range bins", worst.0, worst.1))
}

fn c4_stabilization() -> Outcome {
    let rig = SonarRig::default_rig().with_directivity(DirectivityModel::omnidirectional());
    let bank = default_bank(&rig.array);
    let scene = Scene::cluttered_room(0.0);
    let report = run_tilt_sweep(&rig, &scene, &bank, &GainTable::unity(), &[-10.0, -5.0, 0.0, 5.0, 10.0], 1)
        .map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for row in report.rows.iter().filter(|r| r.tilt != 0.0) {
        summary.push(format!(
            "{}°: {:.4}/{:.4}",
            row.tilt, row.similarity_stabilized, row.similarity_unstabilized
        ));
        check(row.similarity_stabilized >= 0.99, || format!("stabilized {row:?}"))?;
        check(row.similarity_stabilized - row.similarity_unstabilized >= 0.05, || format!("margin {row:?}"))?;
    }
    Ok(format!("stabilized/unstabilized {}", summary.join(", ")))
}

fn c5_gain_flatness() -> Outcome {
    let rig = SonarRig::default_rig();
    let bank = default_bank(&rig.array);
    let tilts: Vec<f64> = (-30..=30).map(|t| t as f64).collect();
    let noise = 0.01;
    let calibration = run_calibration_sweep(&rig, &bank, 2.0, noise, &tilts, 11).map_err(|e| e.to_string())?;
    let table = calibrate_gain(&calibration, 2.0).map_err(|e| e.to_string())?;
    check(table.factor_at(0.0) == (1.0, false), || "factor(0) is not exactly 1".into())?;
    let mut asym: f64 = 0.0;
    for t in 1..=30 {
        let (p, _) = table.factor_at(t as f64);
        let (m, _) = table.factor_at(-(t as f64));
        asym = asym.max((p / m - 1.0).abs());
    }
    check(asym <= 0.01, || format!("table asymmetry {asym}"))?;

    // fresh noise for the verification pass
    let verify = run_calibration_sweep(&rig, &bank, 2.0, noise, &tilts, 97).map_err(|e| e.to_string())?;
    let compensated: Vec<(f64, f64)> = verify.iter().map(|&(th, p)| (th, p * table.factor_at(th).0)).collect();
    let e0 = compensated.iter().find(|(th, _)| *th == 0.0).unwrap().1;
    let spread = compensated.iter().map(|(_, p)| (p / e0 - 1.0).abs()).fold(0.0, f64::max);
    check(spread <= 0.03, || format!("compensated spread {spread}: {compensated:?}"))?;
    let (_, f30) = table.entries()[table.entries().len() - 1];
    Ok(format!(
        "max deviation {:.2} %, asymmetry {:.2} %, factor(30°) = {f30:.3}",
        100.0 * spread,
        100.0 * asym
    ))
}

fn c6_fig3_factor() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("gain.csv"), "0,1\n11,1.34\n").map_err(|e| e.to_string())?;
    let text = "seed = 5\n[gain]\ntable = \"gain.csv\"\n[pipeline]\nframes = 1\nconstant_tilt_deg = -10.78\n";
    std::fs::write(dir.path().join("run.toml"), text).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::load(&dir.path().join("run.toml")).map_err(|e| e.to_string())?;
    let with = run_pipeline(&cfg, RunOptions::default(), None).map_err(|e| e.to_string())?;
    let without = run_pipeline(
        &cfg,
        RunOptions {
            stabilize: true,
            gain: false,
        },
        None,
    )
    .map_err(|e| e.to_string())?;
    let rec = with.records[0];
    check(rec.selection.theta_c == 11.0, || format!("θ_c = {}", rec.selection.theta_c))?;
    check(rec.gain_applied == 1.34, || format!("gain_applied = {}", rec.gain_applied))?;
    check(with.images[0].gain_applied == 1.34, || "image metadata lacks the factor".into())?;
    check(with.images[0].argmax() == without.images[0].argmax(), || "argmax moved".into())?;
    Ok(format!("θ_c = 11, gain_applied = 1.34, argmax {:?} unchanged", with.images[0].argmax()))
}

fn c7_ahrs() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, pitch) in [-30.0, -10.0, 0.0, 10.0, 30.0].into_iter().enumerate() {
        let profile = TiltProfile::constant(pitch, 2.0).unwrap();
        let noise = ImuNoise { gyro: 0.0, accel: 0.05 };
        let stream = synthesize_imu(&profile, 100.0, noise, 40 + k as u64).unwrap();
        check(stream.len() >= 200, || format!("{} samples", stream.len()))?;
        let replay = replay_imu(&stream, 0.1).map_err(|e| e.to_string())?;
        let est = replay.estimates.last().unwrap().theta_i;
        worst = worst.max((est - pitch).abs());
        check((est - pitch).abs() <= 0.5, || format!("pitch {pitch}: estimate {est}"))?;
    }
    Ok(format!("worst error {worst:.3}°"))
}

fn c8_matched_filter() -> Outcome {
    let fs = DEFAULT_SAMPLE_RATE;
    let chirp = generate_chirp(&EmissionSpec::default(), fs).unwrap();
    for delay in [0usize, 137, 500, 4000] {
        let mut rec = vec![0.0; 6000];
        rec[delay..delay + chirp.len()].copy_from_slice(&chirp.samples);
        let out = matched_filter(&Signal::new(rec, fs).unwrap(), &chirp).map_err(|e| e.to_string())?;
        let peak = argmax(&out.samples);
        check(peak == delay, || format!("delay {delay} peaked at {peak}"))?;
    }
    Ok("peaks at 0, 137, 500, 4000".into())
}

fn c9_constant_time() -> Outcome {
    let array = MicArray::default_layout();
    let rows = bench_selection(&array, &default_azimuths(), &[61, 610], 1000).map_err(|e| e.to_string())?;
    let (a, b) = (rows[0].median, rows[1].median);
    check(a < 1e-3 && b < 1e-3, || format!("medians {a} s, {b} s"))?;
    check(a.max(b) / a.min(b) <= 5.0, || format!("medians {a} s vs {b} s"))?;

    let cfg = PipelineConfig::from_toml_str("seed = 9", Path::new(".")).map_err(|e| e.to_string())?;
    let run = run_pipeline(&cfg, RunOptions::default(), None).map_err(|e| e.to_string())?;
    let overhead = run.timing.stabilization_overhead();
    check(overhead < 0.05, || format!("stabilization overhead {overhead}"))?;
    Ok(format!(
        "median {:.0} ns (61) vs {:.0} ns (610); overhead {:.4} % of {:.1} ms/frame",
        a * 1e9,
        b * 1e9,
        100.0 * overhead,
        run.timing.mean_total * 1e3
    ))
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let code = steadybeam::cli::cli_main([
            "steadybeam",
            "sweep",
            "--seed",
            "2024",
            "--out",
            out.to_str().unwrap(),
        ]);
        check(code == 0, || format!("sweep exited with {code}"))?;
        outputs.push(std::fs::read(out.join("sweep.csv")).map_err(|e| e.to_string())?);
    }
    check(outputs[0] == outputs[1], || "sweep CSVs differ".into())?;
    let rows = String::from_utf8_lossy(&outputs[0])
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1;
    check(rows == 61, || format!("{rows} rows"))?;
    Ok(format!("{} identical bytes, {rows} rows", outputs[0].len()))
}

fn c11_oracles() -> Outcome {
    // delays against the projected path difference of every mic pair
    let array = MicArray::default_layout();
    let c = 343.0;
    let mut worst: f64 = 0.0;
    for theta_c in [-30.0f64, -7.0, 0.0, 11.0, 30.0] {
        let azimuths = azimuth_range(-90.0, 90.0, 5.0).unwrap();
        let grid = DirectionGrid::new(azimuths.clone(), theta_c).unwrap();
        let m = compute_delay_matrix(&array, &grid, c).unwrap();
        let (st, ct) = theta_c.to_radians().sin_cos();
        for (d, az) in azimuths.iter().enumerate() {
            let (sa, ca) = az.to_radians().sin_cos();
            // horizontal direction pitched up by theta_c about +y
            let u = Vec3::new(ct * ca, sa, st * ca);
            let p = array.mic_positions();
            let path = |i: usize| -(p[i].x * u.x + p[i].y * u.y + p[i].z * u.z);
            let earliest = (0..p.len()).map(path).fold(f64::INFINITY, f64::min);
            for i in 0..p.len() {
                let oracle = (path(i) - earliest) / c;
                worst = worst.max((m.delay(i, d) - oracle).abs());
            }
        }
    }
    check(worst <= 1e-12, || format!("delay error {worst} s"))?;

    // single microphone: every column is the channel envelope, bit for bit
    let fs = DEFAULT_SAMPLE_RATE;
    let chirp = generate_chirp(&EmissionSpec::default(), fs).unwrap();
    let mut rec = vec![0.0; 4000];
    rec[1500..1500 + chirp.len()].copy_from_slice(&chirp.samples);
    let filtered = matched_filter(&Signal::new(rec, fs).unwrap(), &chirp).unwrap();
    let single = MicArray::new(vec![Vec3::ZERO], Vec3::ZERO).unwrap();
    let grid = DirectionGrid::new(azimuth_range(-60.0, 60.0, 30.0).unwrap(), 5.0).unwrap();
    let delays = compute_delay_matrix(&single, &grid, c).unwrap();
    let params = BeamformParams {
        max_range: 1.0,
        decimation: 8,
    };
    let img = das_beamform(&[filtered.samples.clone()], &delays, fs, &params).unwrap().image;
    let env = envelope(&filtered);
    for k in 0..img.num_ranges() {
        for a in 0..img.num_azimuths() {
            check(img.at(k, a).to_bits() == env.samples[k * 8].to_bits(), || {
                format!("cell ({k}, {a}) differs from the envelope")
            })?;
        }
    }

    let sims = [
        cosine_similarity_values(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap(),
        cosine_similarity_values(&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 2.0, 5.0]).unwrap(),
        cosine_similarity_values(&[1.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0]).unwrap(),
    ];
    for (got, want) in sims.iter().zip([1.0, 0.0, std::f64::consts::FRAC_1_SQRT_2]) {
        check((got - want).abs() <= 1e-9, || format!("similarity {got}, expected {want}"))?;
    }
    Ok(format!("delay error {worst:.1e} s, single-mic bit-exact, similarities {sims:.4?}"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, u64, fn() -> Outcome); 11] = [
        ("steering selection exactness", 1, c1_selection),
        ("bank size", 10, c2_bank_size),
        ("beamformer steering correctness", 30, c3_point_targets),
        ("stabilization recovers the reference", 120, c4_stabilization),
        ("gain round-trip flatness", 120, c5_gain_flatness),
        ("fig. 3 factor consistency", 30, c6_fig3_factor),
        ("AHRS convergence", 30, c7_ahrs),
        ("matched-filter delay recovery", 10, c8_matched_filter),
        ("constant-time selection", 60, c9_constant_time),
        ("sweep determinism", 120, c10_determinism),
        ("oracle equivalences", 30, c11_oracles),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = run();
        let took = clock.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > Duration::from_secs(*limit) => {
                Err(format!("{detail}; took {took:.1?}, limit {limit} s"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name} ({took:.2?}): {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
