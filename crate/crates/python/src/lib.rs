//! Python bindings for the steadybeam core.
//!
//! Arrays cross the boundary as plain lists; images come back as a list of
//! range rows.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use steadybeam::ahrs::replay_imu as core_replay_imu;
use steadybeam::array::DirectivityModel;
use steadybeam::evaluation::{cosine_similarity as core_cosine, run_tilt_sweep};
use steadybeam::gain::apply_gain as core_apply_gain;
use steadybeam::simulator::{Reflector, Scene as CoreScene, SonarRig};
use steadybeam::steering::{bank_memory_bytes, build_bank, default_azimuths, default_bank, select_steering};
use steadybeam::{AcousticImage, Error, ImuSample, RawFrame, Vec3};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Parse { .. } | Error::Config(_) | Error::ArrayMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn vec3(v: (f64, f64, f64)) -> Vec3 {
    Vec3::new(v.0, v.1, v.2)
}

#[pyclass(name = "MicArray", module = "steadybeam", frozen)]
#[derive(Clone)]
struct PyMicArray(steadybeam::MicArray);

#[pymethods]
impl PyMicArray {
    #[new]
    #[pyo3(signature = (mic_positions, emitter_position = (0.0, 0.0, 0.0)))]
    fn new(mic_positions: Vec<(f64, f64, f64)>, emitter_position: (f64, f64, f64)) -> PyResult<Self> {
        steadybeam::MicArray::new(mic_positions.into_iter().map(vec3).collect(), vec3(emitter_position))
            .map(PyMicArray)
            .map_err(py_err)
    }

    #[staticmethod]
    fn default() -> Self {
        PyMicArray(steadybeam::MicArray::default_layout())
    }

    #[staticmethod]
    fn random_disc(count: usize, radius: f64, seed: u64) -> PyResult<Self> {
        steadybeam::MicArray::random_disc(count, radius, seed)
            .map(PyMicArray)
            .map_err(py_err)
    }

    #[getter]
    fn num_mics(&self) -> usize {
        self.0.num_mics()
    }

    #[getter]
    fn mic_positions(&self) -> Vec<(f64, f64, f64)> {
        self.0.mic_positions().iter().map(|p| (p.x, p.y, p.z)).collect()
    }

    fn geometry_hash(&self) -> String {
        self.0.geometry_hash()
    }

    fn __repr__(&self) -> String {
        format!("MicArray(num_mics={})", self.0.num_mics())
    }
}

#[pyclass(name = "SteeringBank", module = "steadybeam", frozen)]
struct PySteeringBank(steadybeam::SteeringBank);

#[pymethods]
impl PySteeringBank {
    /// Bank over `theta_c_min..=theta_c_max` in `resolution` steps. Azimuths
    /// default to −90°..90° in 1° steps.
    #[new]
    #[pyo3(signature = (array, theta_c_min = -30.0, theta_c_max = 30.0, resolution = 1.0, azimuths = None, speed_of_sound = 343.0))]
    fn new(
        array: &PyMicArray,
        theta_c_min: f64,
        theta_c_max: f64,
        resolution: f64,
        azimuths: Option<Vec<f64>>,
        speed_of_sound: f64,
    ) -> PyResult<Self> {
        let az = azimuths.unwrap_or_else(default_azimuths);
        build_bank(&array.0, &az, theta_c_min, theta_c_max, resolution, speed_of_sound)
            .map(PySteeringBank)
            .map_err(py_err)
    }

    #[staticmethod]
    fn default(array: &PyMicArray) -> Self {
        PySteeringBank(default_bank(&array.0))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn azimuths(&self) -> Vec<f64> {
        self.0.azimuths().to_vec()
    }

    /// `(index, theta_c, clamped)` for an estimated tilt in degrees.
    fn select(&self, theta_i: f64) -> PyResult<(usize, f64, bool)> {
        let s = select_steering(&self.0, theta_i).map_err(py_err)?;
        Ok((s.index, s.theta_c, s.clamped))
    }

    /// Delays of entry `index`, `[mic][direction]`, seconds.
    fn delays(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        if index >= self.0.len() {
            return Err(PyValueError::new_err(format!("index {index} out of range")));
        }
        let m = self.0.matrix(index);
        Ok((0..m.num_mics())
            .map(|i| (0..m.num_directions()).map(|d| m.delay(i, d)).collect())
            .collect())
    }

    fn memory_bytes(&self) -> usize {
        bank_memory_bytes(&self.0)
    }
}

#[pyclass(name = "Scene", module = "steadybeam", frozen)]
#[derive(Clone)]
struct PyScene(CoreScene);

#[pymethods]
impl PyScene {
    /// Reflectors as `(range_m, azimuth_deg, elevation_deg, reflectivity)`.
    #[new]
    #[pyo3(signature = (reflectors, noise_sigma = 0.0, speed_of_sound = 343.0))]
    fn new(reflectors: Vec<(f64, f64, f64, f64)>, noise_sigma: f64, speed_of_sound: f64) -> PyResult<Self> {
        let refl = reflectors
            .into_iter()
            .map(|(r, az, el, g)| Reflector::at(r, az, el, g))
            .collect::<Result<Vec<_>, _>>()
            .map_err(py_err)?;
        CoreScene::new(refl, noise_sigma, speed_of_sound)
            .map(PyScene)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (noise_sigma = 0.01))]
    fn cluttered_room(noise_sigma: f64) -> Self {
        PyScene(CoreScene::cluttered_room(noise_sigma))
    }

    #[getter]
    fn num_reflectors(&self) -> usize {
        self.0.reflectors().len()
    }
}

#[pyclass(name = "Rig", module = "steadybeam", frozen)]
struct PyRig(SonarRig);

#[pymethods]
impl PyRig {
    /// Default sensor; `directivity` is "piston" or "omni".
    #[new]
    #[pyo3(signature = (directivity = "piston"))]
    fn new(directivity: &str) -> PyResult<Self> {
        let rig = SonarRig::default_rig();
        match directivity {
            "piston" => Ok(PyRig(rig)),
            "omni" => Ok(PyRig(rig.with_directivity(DirectivityModel::omnidirectional()))),
            other => Err(PyValueError::new_err(format!("unknown directivity {other:?}"))),
        }
    }

    #[getter]
    fn array(&self) -> PyMicArray {
        PyMicArray(self.0.array.clone())
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.0.sample_rate
    }

    /// Raw frame of `scene` with the sensor tilted `tilt` degrees.
    #[pyo3(signature = (scene, tilt = 0.0, seed = 0))]
    fn synthesize(&self, scene: &PyScene, tilt: f64, seed: u64) -> PyResult<PyFrame> {
        let s = self.0.synthesize(&scene.0, tilt, 0.0, seed).map_err(py_err)?;
        Ok(PyFrame(s.frame))
    }

    /// Image of `frame` steered with entry `index` of `bank`.
    fn beamform(&self, frame: &PyFrame, bank: &PySteeringBank, index: usize) -> PyResult<PyImage> {
        if index >= bank.0.len() {
            return Err(PyValueError::new_err(format!("index {index} out of range")));
        }
        self.0
            .image(&frame.0, bank.0.matrix(index))
            .map(PyImage)
            .map_err(py_err)
    }

    /// Stabilized and unstabilized similarity per tilt, as dicts.
    #[pyo3(signature = (scene, bank, tilts, seed = 0, gain_table = None))]
    fn tilt_sweep(
        &self,
        py: Python<'_>,
        scene: &PyScene,
        bank: &PySteeringBank,
        tilts: Vec<f64>,
        seed: u64,
        gain_table: Option<&PyGainTable>,
    ) -> PyResult<Vec<PyObject>> {
        let table = gain_table.map(|t| t.0.clone()).unwrap_or_else(steadybeam::GainTable::unity);
        let report = py
            .allow_threads(|| run_tilt_sweep(&self.0, &scene.0, &bank.0, &table, &tilts, seed))
            .map_err(py_err)?;
        report
            .rows
            .iter()
            .map(|r| {
                let d = pyo3::types::PyDict::new(py);
                d.set_item("tilt", r.tilt)?;
                d.set_item("stabilized", r.similarity_stabilized)?;
                d.set_item("unstabilized", r.similarity_unstabilized)?;
                d.set_item("theta_c", r.theta_c)?;
                d.set_item("gain", r.gain)?;
                Ok(d.into_any().unbind())
            })
            .collect()
    }
}

#[pyclass(name = "Frame", module = "steadybeam", frozen)]
struct PyFrame(RawFrame);

#[pymethods]
impl PyFrame {
    #[new]
    #[pyo3(signature = (channels, sample_rate, timestamp = 0.0))]
    fn new(channels: Vec<Vec<f32>>, sample_rate: f64, timestamp: f64) -> PyResult<Self> {
        RawFrame::new(channels, sample_rate, timestamp)
            .map(PyFrame)
            .map_err(py_err)
    }

    #[getter]
    fn num_mics(&self) -> usize {
        self.0.num_mics()
    }

    #[getter]
    fn num_samples(&self) -> usize {
        self.0.num_samples()
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.0.sample_rate
    }

    fn channel(&self, m: usize) -> PyResult<Vec<f32>> {
        self.0
            .channels
            .get(m)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("channel {m} out of range")))
    }
}

#[pyclass(name = "Image", module = "steadybeam", frozen)]
struct PyImage(AcousticImage);

#[pymethods]
impl PyImage {
    /// `[range][azimuth]`.
    #[getter]
    fn energy(&self) -> Vec<Vec<f64>> {
        self.0
            .energy
            .chunks(self.0.num_azimuths())
            .map(|row| row.to_vec())
            .collect()
    }

    #[getter]
    fn range_axis(&self) -> Vec<f64> {
        self.0.range_axis.clone()
    }

    #[getter]
    fn azimuth_axis(&self) -> Vec<f64> {
        self.0.azimuth_axis.clone()
    }

    #[getter]
    fn theta_c(&self) -> f64 {
        self.0.theta_c
    }

    #[getter]
    fn gain_applied(&self) -> f64 {
        self.0.gain_applied
    }

    /// `(range_m, azimuth_deg, energy)` of the brightest cell.
    fn peak(&self) -> (f64, f64, f64) {
        let (r, a) = self.0.argmax();
        (self.0.range_axis[r], self.0.azimuth_axis[a], self.0.at(r, a))
    }
}

#[pyclass(name = "GainTable", module = "steadybeam", frozen)]
struct PyGainTable(steadybeam::GainTable);

#[pymethods]
impl PyGainTable {
    /// `(theta_c_deg, factor)` pairs.
    #[new]
    #[pyo3(signature = (entries, reference_range = 2.0))]
    fn new(entries: Vec<(f64, f64)>, reference_range: f64) -> PyResult<Self> {
        steadybeam::GainTable::new(entries, reference_range)
            .map(PyGainTable)
            .map_err(py_err)
    }

    #[staticmethod]
    fn unity() -> Self {
        PyGainTable(steadybeam::GainTable::unity())
    }

    /// `(factor, clamped)`.
    fn factor_at(&self, theta_c: f64) -> (f64, bool) {
        self.0.factor_at(theta_c)
    }

    #[getter]
    fn entries(&self) -> Vec<(f64, f64)> {
        self.0.entries().to_vec()
    }
}

#[pyfunction]
fn apply_gain(image: &PyImage, table: &PyGainTable, theta_c: f64) -> PyImage {
    PyImage(core_apply_gain(&image.0, &table.0, theta_c).image)
}

#[pyfunction]
fn cosine_similarity(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    core_cosine(&a.0, &b.0).map_err(py_err)
}

/// Replays `(t, gx, gy, gz, ax, ay, az)` samples and returns `(t, theta_i)`
/// per accepted sample.
#[pyfunction]
#[pyo3(signature = (samples, beta = 0.1))]
fn replay_imu(samples: Vec<(f64, f64, f64, f64, f64, f64, f64)>, beta: f64) -> PyResult<Vec<(f64, f64)>> {
    let stream: Vec<ImuSample> = samples
        .into_iter()
        .map(|(t, gx, gy, gz, ax, ay, az)| ImuSample {
            gyro: Vec3::new(gx, gy, gz),
            accel: Vec3::new(ax, ay, az),
            mag: None,
            timestamp: t,
        })
        .collect();
    let replay = core_replay_imu(&stream, beta).map_err(py_err)?;
    Ok(replay.estimates.iter().map(|e| (e.timestamp, e.theta_i)).collect())
}

#[pymodule]
#[pyo3(name = "steadybeam")]
fn steadybeam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMicArray>()?;
    m.add_class::<PySteeringBank>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyRig>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyGainTable>()?;
    m.add_function(wrap_pyfunction!(apply_gain, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(replay_imu, m)?)?;
    Ok(())
}
