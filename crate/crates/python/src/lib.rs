//! Python bindings for the vistaloop core.
//!
//! Reports come back as plain dicts decoded from the same JSON the CLI writes.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use vistaloop::control::LoopConfig;
use vistaloop::evaluator::evaluate as evaluate_video;
use vistaloop::heads::heads;
use vistaloop::json::{audit_json, metrics_json, report_json};
use vistaloop::metrics::compute_metrics;
use vistaloop::scenario_file::{load_scenario, parse_scenario, serialize_scenario};
use vistaloop::scenarios::{demo_scenario, object_fault, random_scenario, weather_tint, RandomOptions};
use vistaloop::{build_conditions, render_scene, FaultKind, MultiviewVideo};

fn py_err(e: vistaloop::Error) -> PyErr {
    match e {
        vistaloop::Error::Io(m) => PyIOError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_dict(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A validated driving scenario.
#[pyclass(name = "Scenario", module = "vistaloop_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: vistaloop::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Load a scenario file from disk.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_scenario(&path).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_scenario(text).map(|inner| Self { inner }).map_err(py_err)
    }

    /// The five-object stationary demo scene.
    #[staticmethod]
    fn demo() -> Self {
        Self { inner: demo_scenario() }
    }

    #[staticmethod]
    #[pyo3(signature = (seed, num_objects = 5, randomize_conditions = true))]
    fn random(seed: u64, num_objects: usize, randomize_conditions: bool) -> Self {
        let opts = RandomOptions {
            num_objects,
            randomize_conditions,
            ..RandomOptions::default()
        };
        Self {
            inner: random_scenario(seed, &opts),
        }
    }

    /// Attach an object fault (`wrong_color`, `blur_object`, `drop_object`, `jitter_box`).
    #[pyo3(signature = (kind, index, severity = 1.0))]
    fn add_object_fault(&mut self, kind: &str, index: u32, severity: f64) -> PyResult<()> {
        let kind = FaultKind::parse(kind).map_err(py_err)?;
        self.inner.fault_plan.push(object_fault(kind, index, severity));
        self.inner.validate().map_err(|e| {
            self.inner.fault_plan.pop();
            py_err(e)
        })
    }

    #[pyo3(signature = (deactivation_weight, severity = 1.0))]
    fn add_weather_tint(&mut self, deactivation_weight: f64, severity: f64) -> PyResult<()> {
        self.inner.fault_plan.push(weather_tint(deactivation_weight, severity));
        self.inner.validate().map_err(|e| {
            self.inner.fault_plan.pop();
            py_err(e)
        })
    }

    fn to_text(&self) -> String {
        serialize_scenario(&self.inner)
    }

    #[getter]
    fn num_objects(&self) -> usize {
        self.inner.objects.len()
    }

    #[getter]
    fn num_views(&self) -> usize {
        self.inner.num_views()
    }

    #[getter]
    fn num_frames(&self) -> u32 {
        self.inner.num_frames
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(objects={}, views={}, frames={}, faults={})",
            self.inner.objects.len(),
            self.inner.num_views(),
            self.inner.num_frames,
            self.inner.fault_plan.len()
        )
    }
}

/// Rendered multiview video with per-pixel instance ids.
#[pyclass(name = "Video", module = "vistaloop_py")]
pub struct PyVideo {
    inner: MultiviewVideo,
}

impl PyVideo {
    fn cell(&self, view: u32, t: u32) -> PyResult<&vistaloop::Frame> {
        if view >= self.inner.num_views || t >= self.inner.num_frames {
            return Err(PyValueError::new_err(format!("no frame at view {view}, t {t}")));
        }
        Ok(self.inner.frame(view, t))
    }
}

#[pymethods]
impl PyVideo {
    #[getter]
    fn num_views(&self) -> u32 {
        self.inner.num_views
    }

    #[getter]
    fn num_frames(&self) -> u32 {
        self.inner.num_frames
    }

    /// `(width, height)` of every frame.
    #[getter]
    fn size(&self) -> (u32, u32) {
        let p = &self.inner.frames[0].pixels;
        (p.width, p.height)
    }

    /// Row-major RGB bytes of one frame.
    fn pixels<'py>(&self, py: Python<'py>, view: u32, t: u32) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.cell(view, t)?.pixels.data))
    }

    /// Row-major instance ids of one frame, 0 for background and index + 1 for objects.
    fn instance_ids(&self, view: u32, t: u32) -> PyResult<Vec<u16>> {
        Ok(self.cell(view, t)?.instance_ids.data.clone())
    }

    /// Write PPM frames and PGM id maps into `dir`.
    fn export(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.export(&dir).map_err(py_err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

/// Render a scenario once, applying its fault plan.
#[pyfunction]
#[pyo3(signature = (scenario, seed = 42))]
fn render(py: Python<'_>, scenario: &PyScenario, seed: u64) -> PyResult<PyVideo> {
    let s = scenario.inner.clone();
    py.detach(move || {
        s.validate()?;
        let c = build_conditions(&s)?;
        Ok(render_scene(&c, &s.rig, s.num_frames, seed, &s.fault_plan, 1))
    })
    .map(|inner| PyVideo { inner })
    .map_err(py_err)
}

/// Audit a video against the scenario it was rendered from.
#[pyfunction]
#[pyo3(signature = (video, scenario, lam = 0.6))]
fn evaluate(py: Python<'_>, video: &PyVideo, scenario: &PyScenario, lam: f64) -> PyResult<Py<PyAny>> {
    let report = py
        .detach(|| {
            let c = build_conditions(&scenario.inner)?;
            evaluate_video(&video.inner, &c, &scenario.inner.rig, lam, heads())
        })
        .map_err(py_err)?;
    to_dict(py, &report_json(&report))
}

/// Run the closed loop and return `(video, audit)`.
#[pyfunction]
#[pyo3(signature = (scenario, seed = 42, lam = 0.6, gamma_g = 0.8, gamma_o = 0.7, alpha = 2.0, max_iters = 5, feather = 2))]
#[allow(clippy::too_many_arguments)]
fn run_closed_loop(
    py: Python<'_>,
    scenario: &PyScenario,
    seed: u64,
    lam: f64,
    gamma_g: f64,
    gamma_o: f64,
    alpha: f64,
    max_iters: u32,
    feather: u32,
) -> PyResult<(PyVideo, Py<PyAny>)> {
    let config = LoopConfig {
        gamma_g,
        gamma_o,
        lambda: lam,
        alpha_emphasis: alpha,
        max_iterations: max_iters,
        seed,
        feather,
    };
    let (video, log) = py
        .detach(|| {
            config.check()?;
            vistaloop::run_closed_loop(&scenario.inner, &config, heads())
        })
        .map_err(py_err)?;
    let audit = to_dict(py, &audit_json(&log))?;
    Ok((PyVideo { inner: video }, audit))
}

/// Offline layout, detection and alignment metrics.
#[pyfunction]
fn metrics(py: Python<'_>, video: &PyVideo, scenario: &PyScenario) -> PyResult<Py<PyAny>> {
    let m = py
        .detach(|| compute_metrics(&video.inner, &scenario.inner, heads()))
        .map_err(py_err)?;
    to_dict(py, &metrics_json(&m))
}

#[pymodule]
pub fn vistaloop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyVideo>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_closed_loop, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
