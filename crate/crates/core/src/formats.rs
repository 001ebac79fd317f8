//! On-disk formats.
//!
//! | file | layout |
//! |------|--------|
//! | raw frame (`.sbraw`) | ASCII line `SBRAW 1 <num_mics> <num_samples> <sample_rate> <timestamp>\n`, then `num_mics × num_samples` little-endian `f32`, channel-major |
//! | bank cache (`.sbbank`) | ASCII `SBBANK 1\n`, `key value` lines, `end\n`; then per matrix `num_directions` `f32` column offsets followed by `num_mics × num_directions` `f32` delays (row-major), all little-endian |
//! | IMU stream | text `timestamp_s,gx,gy,gz,ax,ay,az[,mx,my,mz]` |
//! | tilt profile | text `timestamp_s,theta_deg` |
//! | gain table | text `elevation_deg,factor`; must contain `0,1` |
//! | scene | TOML: `reflectors = [[x, y, z, reflectivity], ...]`, `noise_sigma`, `speed_of_sound`, optional `absorption_db_per_m` |
//! | image | CSV with axis header rows; 16-bit binary PGM normalized to the image max plus a `key=value` sidecar |
//! | sweep report | CSV `tilt_deg,sim_stabilized,sim_unstabilized` after `#` metadata lines |
//!
//! Text formats accept `#` comments and blank lines. Floats are written in
//! Rust's shortest round-trip form, so text outputs are byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ahrs::ImuSample;
use crate::array::{MicArray, Vec3};
use crate::beamformer::AcousticImage;
use crate::dsp::RawFrame;
use crate::error::{Error, Result};
use crate::evaluation::SweepReport;
use crate::gain::GainTable;
use crate::simulator::{Reflector, Scene, TiltProfile};
use crate::steering::{DelayMatrix, SteeringBank};

const FRAME_MAGIC: &str = "SBRAW";
const BANK_MAGIC: &str = "SBBANK";
const FORMAT_VERSION: u32 = 1;

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_fields(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path, line, format!("bad number {:?}: {e}", f.trim())))
        })
        .collect()
}

// ---------------------------------------------------------------- frames

pub fn encode_frame(frame: &RawFrame) -> Vec<u8> {
    let header = format!(
        "{FRAME_MAGIC} {FORMAT_VERSION} {} {} {} {}\n",
        frame.num_mics(),
        frame.num_samples(),
        frame.sample_rate,
        frame.timestamp
    );
    let mut out = Vec::with_capacity(header.len() + 4 * frame.num_mics() * frame.num_samples());
    out.extend_from_slice(header.as_bytes());
    for ch in &frame.channels {
        for s in ch {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    out
}

pub fn write_frame(path: &Path, frame: &RawFrame) -> Result<()> {
    write_file(path, &encode_frame(frame))
}

pub fn decode_frame(path: &Path, bytes: &[u8]) -> Result<RawFrame> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(path, 1, "missing frame header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::parse(path, 1, "header is not text"))?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 6 || f[0] != FRAME_MAGIC {
        return Err(Error::parse(path, 1, format!("expected `{FRAME_MAGIC} <version> ...` header")));
    }
    let bad = |what: &str| Error::parse(path, 1, format!("bad {what} in frame header"));
    let version: u32 = f[1].parse().map_err(|_| bad("version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::parse(path, 1, format!("unsupported frame version {version}")));
    }
    let mics: usize = f[2].parse().map_err(|_| bad("num_mics"))?;
    let samples: usize = f[3].parse().map_err(|_| bad("num_samples"))?;
    let rate: f64 = f[4].parse().map_err(|_| bad("sample_rate"))?;
    let timestamp: f64 = f[5].parse().map_err(|_| bad("timestamp"))?;
    let body = &bytes[nl + 1..];
    if body.len() != mics * samples * 4 {
        return Err(Error::parse(
            path,
            1,
            format!("expected {} data bytes, found {}", mics * samples * 4, body.len()),
        ));
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    let channels = values.chunks(samples.max(1)).map(<[f32]>::to_vec).collect();
    RawFrame::new(channels, rate, timestamp)
}

pub fn read_frame(path: &Path) -> Result<RawFrame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(path, &bytes)
}

// ------------------------------------------------------------ bank cache

pub fn write_bank_cache(path: &Path, bank: &SteeringBank) -> Result<()> {
    let azimuths: Vec<String> = bank.azimuths().iter().map(|a| a.to_string()).collect();
    let mut out = Vec::new();
    let header = format!(
        "{BANK_MAGIC} {FORMAT_VERSION}\narray_hash {}\nnum_mics {}\ntheta_c_min {}\nresolution {}\ncount {}\nspeed_of_sound {}\nazimuths {}\nend\n",
        bank.array_hash(),
        bank.num_mics(),
        bank.theta_c_min(),
        bank.resolution(),
        bank.len(),
        bank.speed_of_sound(),
        azimuths.join(",")
    );
    out.extend_from_slice(header.as_bytes());
    for m in bank.matrices() {
        for v in m.offsets().iter().chain(m.delays()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_file(path, &out)
}

/// Loads a cached bank, refusing caches built for another array.
pub fn read_bank_cache(path: &Path, array: &MicArray) -> Result<SteeringBank> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |reader: &mut BufReader<fs::File>, line: &mut String| -> Result<usize> {
        line.clear();
        lineno += 1;
        reader.read_line(line).map_err(|e| Error::io(path, e))?;
        Ok(lineno)
    };
    let n = next_line(&mut reader, &mut line)?;
    if line.trim() != format!("{BANK_MAGIC} {FORMAT_VERSION}") {
        return Err(Error::parse(path, n, format!("expected `{BANK_MAGIC} {FORMAT_VERSION}`")));
    }
    let mut fields = std::collections::BTreeMap::new();
    loop {
        let n = next_line(&mut reader, &mut line)?;
        let l = line.trim();
        if l == "end" {
            break;
        }
        if l.is_empty() {
            return Err(Error::parse(path, n, "unterminated bank header"));
        }
        let (k, v) = l.split_once(' ').ok_or_else(|| Error::parse(path, n, "expected `key value`"))?;
        fields.insert(k.to_string(), (n, v.to_string()));
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| Error::parse(path, 1, format!("bank header lacks `{k}`")));
    let num = |k: &str| -> Result<f64> {
        let (n, v) = get(k)?;
        v.parse().map_err(|_| Error::parse(path, *n, format!("bad `{k}`")))
    };

    let cached = get("array_hash")?.1.clone();
    let actual = array.geometry_hash();
    if cached != actual {
        return Err(Error::ArrayMismatch { cached, actual });
    }
    let num_mics = num("num_mics")? as usize;
    let count = num("count")? as usize;
    let theta_c_min = num("theta_c_min")?;
    let resolution = num("resolution")?;
    let c = num("speed_of_sound")?;
    let (n, az) = get("azimuths")?;
    let azimuths = parse_fields(path, *n, az)?;
    let dirs = azimuths.len();

    let mut body = Vec::new();
    reader.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    let per_matrix = dirs * (num_mics + 1);
    if body.len() != 4 * per_matrix * count {
        return Err(Error::parse(path, lineno, "bank data length does not match header"));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();
    let matrices = values
        .chunks(per_matrix)
        .enumerate()
        .map(|(k, chunk)| {
            DelayMatrix::from_parts(
                num_mics,
                azimuths.clone(),
                chunk[dirs..].to_vec(),
                chunk[..dirs].to_vec(),
                theta_c_min + k as f64 * resolution,
                c,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    SteeringBank::from_parts(matrices, theta_c_min, resolution, azimuths, c, actual)
}

// ------------------------------------------------------------ IMU stream

pub fn parse_imu_stream(path: &Path, text: &str) -> Result<Vec<ImuSample>> {
    data_lines(text)
        .map(|(n, l)| {
            let f = parse_fields(path, n, l)?;
            let mag = match f.len() {
                7 => None,
                10 => Some(Vec3::new(f[7], f[8], f[9])),
                k => return Err(Error::parse(path, n, format!("expected 7 or 10 fields, found {k}"))),
            };
            Ok(ImuSample {
                timestamp: f[0],
                gyro: Vec3::new(f[1], f[2], f[3]),
                accel: Vec3::new(f[4], f[5], f[6]),
                mag,
            })
        })
        .collect()
}

pub fn read_imu_stream(path: &Path) -> Result<Vec<ImuSample>> {
    parse_imu_stream(path, &read_text(path)?)
}

pub fn format_imu_stream(samples: &[ImuSample]) -> String {
    let mut s = String::from("# timestamp_s,gx,gy,gz,ax,ay,az[,mx,my,mz]\n");
    for x in samples {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            x.timestamp, x.gyro.x, x.gyro.y, x.gyro.z, x.accel.x, x.accel.y, x.accel.z
        );
        if let Some(m) = x.mag {
            let _ = write!(s, ",{},{},{}", m.x, m.y, m.z);
        }
        s.push('\n');
    }
    s
}

pub fn write_imu_stream(path: &Path, samples: &[ImuSample]) -> Result<()> {
    write_file(path, format_imu_stream(samples).as_bytes())
}

// ---------------------------------------------------------- tilt profile

pub fn parse_tilt_profile(path: &Path, text: &str) -> Result<TiltProfile> {
    let samples = data_lines(text)
        .map(|(n, l)| match parse_fields(path, n, l)?.as_slice() {
            &[t, theta] => Ok((t, theta)),
            f => Err(Error::parse(path, n, format!("expected 2 fields, found {}", f.len()))),
        })
        .collect::<Result<Vec<_>>>()?;
    TiltProfile::new(samples)
}

pub fn read_tilt_profile(path: &Path) -> Result<TiltProfile> {
    parse_tilt_profile(path, &read_text(path)?)
}

pub fn write_tilt_profile(path: &Path, profile: &TiltProfile) -> Result<()> {
    let mut s = String::from("# timestamp_s,theta_deg\n");
    for (t, th) in profile.samples() {
        let _ = writeln!(s, "{t},{th}");
    }
    write_file(path, s.as_bytes())
}

// ------------------------------------------------------------ gain table

pub fn parse_gain_table(path: &Path, text: &str) -> Result<GainTable> {
    let mut reference_range = 0.0;
    for l in text.lines() {
        if let Some(v) = l.trim().strip_prefix("# reference_range_m=") {
            reference_range = v.trim().parse().unwrap_or(0.0);
        }
    }
    let entries = data_lines(text)
        .map(|(n, l)| match parse_fields(path, n, l)?.as_slice() {
            &[e, f] => Ok((e, f)),
            f => Err(Error::parse(path, n, format!("expected 2 fields, found {}", f.len()))),
        })
        .collect::<Result<Vec<_>>>()?;
    GainTable::new(entries, reference_range).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn read_gain_table(path: &Path) -> Result<GainTable> {
    parse_gain_table(path, &read_text(path)?)
}

pub fn format_gain_table(table: &GainTable) -> String {
    let mut s = format!("# elevation_deg,factor\n# reference_range_m={}\n", table.reference_range());
    for (e, f) in table.entries() {
        let _ = writeln!(s, "{e},{f}");
    }
    s
}

pub fn write_gain_table(path: &Path, table: &GainTable) -> Result<()> {
    write_file(path, format_gain_table(table).as_bytes())
}

// ----------------------------------------------------------------- scene

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    reflectors: Vec<[f64; 4]>,
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default = "default_c")]
    speed_of_sound: f64,
    #[serde(default)]
    absorption_db_per_m: f64,
}

fn default_c() -> f64 {
    crate::array::SPEED_OF_SOUND
}

pub fn parse_scene(path: &Path, text: &str) -> Result<Scene> {
    let f: SceneFile = toml::from_str(text).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let reflectors = f
        .reflectors
        .iter()
        .map(|r| Reflector {
            position: Vec3::new(r[0], r[1], r[2]),
            reflectivity: r[3],
        })
        .collect();
    Scene::new(reflectors, f.noise_sigma, f.speed_of_sound)?.with_absorption(f.absorption_db_per_m)
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    parse_scene(path, &read_text(path)?)
}

pub fn format_scene(scene: &Scene) -> String {
    let f = SceneFile {
        reflectors: scene
            .reflectors()
            .iter()
            .map(|r| [r.position.x, r.position.y, r.position.z, r.reflectivity])
            .collect(),
        noise_sigma: scene.noise_sigma(),
        speed_of_sound: scene.speed_of_sound(),
        absorption_db_per_m: scene.absorption_db_per_m(),
    };
    toml::to_string(&f).expect("scene serializes")
}

// ---------------------------------------------------------------- images

pub fn image_csv(image: &AcousticImage) -> String {
    let mut s = format!("# theta_c={},gain_applied={}\nrange_m", image.theta_c, image.gain_applied);
    for a in &image.azimuth_axis {
        let _ = write!(s, ",{a}");
    }
    s.push('\n');
    for (k, r) in image.range_axis.iter().enumerate() {
        let _ = write!(s, "{r}");
        for a in 0..image.num_azimuths() {
            let _ = write!(s, ",{}", image.at(k, a));
        }
        s.push('\n');
    }
    s
}

/// Binary 16-bit PGM: one row per range bin, one column per azimuth,
/// values scaled so the image maximum maps to 65535.
pub fn image_pgm(image: &AcousticImage) -> (Vec<u8>, f64) {
    let max = image.max();
    let mut out = format!("P5\n{} {}\n65535\n", image.num_azimuths(), image.num_ranges()).into_bytes();
    for &v in &image.energy {
        let q = if max > 0.0 { (v / max * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&q.to_be_bytes());
    }
    (out, max)
}

pub fn image_sidecar(image: &AcousticImage, normalization: f64) -> String {
    format!(
        "normalization={normalization}\ntheta_c={}\ngain_applied={}\nnum_ranges={}\nnum_azimuths={}\n",
        image.theta_c,
        image.gain_applied,
        image.num_ranges(),
        image.num_azimuths()
    )
}

/// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.txt` into `dir`.
pub fn write_image(dir: &Path, stem: &str, image: &AcousticImage) -> Result<()> {
    write_file(&dir.join(format!("{stem}.csv")), image_csv(image).as_bytes())?;
    let (pgm, norm) = image_pgm(image);
    write_file(&dir.join(format!("{stem}.pgm")), &pgm)?;
    write_file(&dir.join(format!("{stem}.txt")), image_sidecar(image, norm).as_bytes())
}

pub fn parse_image_csv(path: &Path, text: &str) -> Result<AcousticImage> {
    let mut lines = text.lines().enumerate();
    let (_, meta) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty image file"))?;
    let mut theta_c = 0.0;
    let mut gain_applied = 1.0;
    for kv in meta.trim_start_matches('#').trim().split(',') {
        match kv.split_once('=') {
            Some(("theta_c", v)) => theta_c = v.parse().map_err(|_| Error::parse(path, 1, "bad theta_c"))?,
            Some(("gain_applied", v)) => {
                gain_applied = v.parse().map_err(|_| Error::parse(path, 1, "bad gain_applied"))?
            }
            _ => return Err(Error::parse(path, 1, format!("unexpected metadata {kv:?}"))),
        }
    }
    let (_, axis) = lines.next().ok_or_else(|| Error::parse(path, 2, "missing azimuth header"))?;
    let azimuth_axis = parse_fields(path, 2, axis.strip_prefix("range_m,").unwrap_or(""))?;
    let mut range_axis = Vec::new();
    let mut energy = Vec::new();
    for (i, l) in lines {
        let f = parse_fields(path, i + 1, l)?;
        if f.len() != azimuth_axis.len() + 1 {
            return Err(Error::parse(path, i + 1, "row length does not match azimuth axis"));
        }
        range_axis.push(f[0]);
        energy.extend_from_slice(&f[1..]);
    }
    Ok(AcousticImage {
        energy,
        range_axis,
        azimuth_axis,
        theta_c,
        gain_applied,
    })
}

pub fn read_image_csv(path: &Path) -> Result<AcousticImage> {
    parse_image_csv(path, &read_text(path)?)
}

// ----------------------------------------------------------------- sweep

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut s = format!(
        "# steadybeam tilt sweep\n# config_hash={}\n# seed={}\n# version={}\ntilt_deg,sim_stabilized,sim_unstabilized\n",
        report.config_hash,
        report.seed,
        env!("CARGO_PKG_VERSION")
    );
    for r in &report.rows {
        let _ = writeln!(s, "{},{},{}", r.tilt, r.similarity_stabilized, r.similarity_unstabilized);
    }
    s
}

pub fn write_sweep_csv(path: &Path, report: &SweepReport) -> Result<()> {
    write_file(path, sweep_csv(report).as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

/// Flushes a line to stdout, ignoring a closed pipe.
pub fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}
