//! Python bindings: streams, LED tables, simulation, annotation, scoring,
//! signature decoding, assignment and line-crossing timing.
//!
//! Structured results come back as plain dicts and lists.

use std::fmt::Display;

use flashcap_core::event::{read_any, write_event_file};
use flashcap_core::{
    ablation_run, annotate_stream, assign as assign_costs, decode as decode_signature, detect_crossing as crossing,
    precision_recall as score, scenario, simulate as run_simulation, trajectory_from_labels, AblationFlags, CostMatrix,
    Event, EventStream, GroundTruthLabels, LabelSet, LedConfig, LedTable, LineSpec, PipelineConfig, Polarity, Sample,
    StreamHeader,
};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde_json::{json, Value};

create_exception!(flashcap, FlashcapError, PyValueError);

fn err(e: impl Display) -> PyErr {
    FlashcapError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

type RawEvent = (u64, u16, u16, u8);

fn to_events(raw: Vec<RawEvent>) -> PyResult<Vec<Event>> {
    raw.into_iter()
        .map(|(t, x, y, p)| {
            let polarity = Polarity::from_bit(p).ok_or_else(|| err(format!("polarity must be 0 or 1, got {p}")))?;
            Ok(Event::new(t, x, y, polarity))
        })
        .collect()
}

fn raw(events: &[Event]) -> Vec<RawEvent> {
    events.iter().map(|e| (e.t, e.x, e.y, e.polarity.bit())).collect()
}

/// Time-ordered events with a sensor header.
#[pyclass(name = "EventStream", frozen)]
pub struct PyEventStream {
    inner: EventStream,
}

#[pymethods]
impl PyEventStream {
    /// Builds a stream from `(t_us, x, y, polarity)` tuples sorted by time.
    #[new]
    #[pyo3(signature = (events, width = 1280, height = 720, t_start = 0, t_end = None))]
    fn new(events: Vec<RawEvent>, width: u16, height: u16, t_start: u64, t_end: Option<u64>) -> PyResult<Self> {
        let events = to_events(events)?;
        let header = StreamHeader {
            sensor_width: width,
            sensor_height: height,
            t_start,
            t_end: t_end.unwrap_or_else(|| events.last().map_or(t_start, |e| e.t + 1)),
            event_count: events.len() as u64,
        };
        Ok(Self { inner: EventStream::new(header, events).map_err(err)? })
    }

    /// Reads `.fevt` or `.csv`.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self { inner: read_any(path).map_err(err)? })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_event_file(path, &self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.events().len()
    }

    fn header<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let h = self.inner.header();
        to_py(
            py,
            &json!({
                "sensor_width": h.sensor_width,
                "sensor_height": h.sensor_height,
                "t_start": h.t_start,
                "t_end": h.t_end,
                "event_count": h.event_count,
            }),
        )
    }

    /// Events with `t0 <= t < t1`.
    fn window(&self, t0: u64, t1: u64) -> Vec<RawEvent> {
        raw(self.inner.window(t0, t1))
    }

    fn events(&self) -> Vec<RawEvent> {
        raw(self.inner.events())
    }
}

#[pyclass(name = "LedTable", frozen)]
pub struct PyLedTable {
    inner: LedTable,
}

#[pymethods]
impl PyLedTable {
    /// Builds a table from `(id, on_time_us, off_time_us)` tuples.
    #[new]
    fn new(leds: Vec<(String, u32, u32)>) -> PyResult<Self> {
        let leds = leds.into_iter().map(|(id, on, off)| LedConfig::new(id, on, off)).collect();
        Ok(Self { inner: LedTable::new(leds).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: LedTable::load(path).map_err(err)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: LedTable::from_toml(text).map_err(err)? })
    }

    #[staticmethod]
    fn default_suit() -> Self {
        Self { inner: LedTable::default_suit() }
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn leds(&self) -> Vec<(String, u32, u32)> {
        self.inner.leds().iter().map(|l| (l.id.clone(), l.on_time_us, l.off_time_us)).collect()
    }
}

/// Pipeline tuning knobs. Keyword arguments override the defaults.
#[pyclass(name = "PipelineConfig", frozen)]
pub struct PyPipelineConfig {
    inner: PipelineConfig,
}

fn merged_config(base: &PipelineConfig, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<PipelineConfig> {
    let mut value = serde_json::to_value(base).map_err(err)?;
    if let Some(kwargs) = kwargs {
        let Value::Object(overrides) = from_py(kwargs.as_any())? else { unreachable!("kwargs is a dict") };
        value.as_object_mut().expect("config is an object").extend(overrides);
    }
    serde_json::from_value(value).map_err(err)
}

#[pymethods]
impl PyPipelineConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        Ok(Self { inner: merged_config(&PipelineConfig::default(), kwargs)? })
    }

    /// Copy with some fields replaced.
    #[pyo3(signature = (**kwargs))]
    fn replace(&self, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        Ok(Self { inner: merged_config(&self.inner, kwargs)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: PipelineConfig::load(path).map_err(err)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &serde_json::to_value(&self.inner).map_err(err)?)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }
}

/// Joint labels on 1 ms ticks.
#[pyclass(name = "LabelSet", frozen)]
pub struct PyLabelSet {
    inner: LabelSet,
}

#[pymethods]
impl PyLabelSet {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: LabelSet::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn to_flbl(&self) -> String {
        self.inner.to_flbl()
    }

    #[getter]
    fn t0_ms(&self) -> u64 {
        self.inner.t0_ms
    }

    #[getter]
    fn led_ids(&self) -> Vec<String> {
        self.inner.led_ids.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.frames.len()
    }

    fn label_count(&self) -> usize {
        self.inner.label_count()
    }

    /// `(t_ms, x, y)` for every tick where `led_id` is labelled.
    fn track(&self, led_id: &str) -> Vec<(u64, f64, f64)> {
        self.inner.track(led_id)
    }

    /// `{led_id: {"x", "y", "source"}}` at `t_ms`, or `None` outside the set.
    fn frame<'py>(&self, py: Python<'py>, t_ms: u64) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.inner
            .frame(t_ms)
            .map(|f| to_py(py, &serde_json::to_value(&f.joints).map_err(err)?))
            .transpose()
    }
}

#[pyclass(name = "GroundTruth", frozen)]
pub struct PyGroundTruth {
    inner: GroundTruthLabels,
}

#[pymethods]
impl PyGroundTruth {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: GroundTruthLabels::load(path).map_err(err)? })
    }

    fn to_flbl(&self) -> String {
        self.inner.to_flbl()
    }

    #[getter]
    fn led_ids(&self) -> Vec<String> {
        self.inner.led_ids.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.ticks.len()
    }

    /// `(x, y, visible)` of LED `led_index` at `t_ms`.
    fn at(&self, t_ms: u64, led_index: usize) -> Option<(f64, f64, bool)> {
        self.inner.at(t_ms, led_index).map(|p| (p.x, p.y, p.visible))
    }
}

/// Output of one simulator run.
#[pyclass(name = "Simulation", frozen)]
pub struct PySimulation {
    #[pyo3(get)]
    stream: Py<PyEventStream>,
    #[pyo3(get)]
    truth: Py<PyGroundTruth>,
    #[pyo3(get)]
    leds: Py<PyLedTable>,
    metadata: Value,
}

#[pymethods]
impl PySimulation {
    fn metadata<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.metadata)
    }
}

#[pyfunction]
fn scenarios() -> Vec<&'static str> {
    flashcap_core::sim::scenario_names().to_vec()
}

/// Renders a built-in scenario, optionally cut to `duration_ms`.
#[pyfunction]
#[pyo3(signature = (name, seed = 0, duration_ms = None))]
fn simulate(py: Python<'_>, name: &str, seed: u64, duration_ms: Option<u64>) -> PyResult<PySimulation> {
    let mut scene = scenario(name, seed).map_err(err)?;
    if let Some(ms) = duration_ms {
        scene = scene.truncated(ms * 1000);
    }
    let out = py.detach(|| run_simulation(&scene)).map_err(err)?;
    Ok(PySimulation {
        stream: Py::new(py, PyEventStream { inner: out.stream })?,
        truth: Py::new(py, PyGroundTruth { inner: out.truth })?,
        leds: Py::new(py, PyLedTable { inner: out.leds })?,
        metadata: serde_json::to_value(&out.metadata).map_err(err)?,
    })
}

/// Labels `stream`; returns `(labels, diagnostics)`.
#[pyfunction]
#[pyo3(signature = (stream, leds, config = None))]
fn annotate<'py>(
    py: Python<'py>,
    stream: &PyEventStream,
    leds: &PyLedTable,
    config: Option<&PyPipelineConfig>,
) -> PyResult<(PyLabelSet, Bound<'py, PyAny>)> {
    let cfg = config.map_or_else(PipelineConfig::default, |c| c.inner.clone());
    let out = py.detach(|| annotate_stream(&stream.inner, &leds.inner, &cfg)).map_err(err)?;
    let diagnostics = to_py(py, &serde_json::to_value(out.diagnostics).map_err(err)?)?;
    Ok((PyLabelSet { inner: out.labels }, diagnostics))
}

#[pyfunction]
#[pyo3(signature = (pred, gt, tol = 1.0))]
fn precision_recall<'py>(py: Python<'py>, pred: &PyLabelSet, gt: &PyGroundTruth, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let report = score(&pred.inner, &gt.inner, tol).map_err(err)?;
    to_py(py, &serde_json::to_value(report).map_err(err)?)
}

/// Complete pipeline plus each single ablation, one dict per row.
#[pyfunction]
#[pyo3(signature = (stream, gt, leds, config = None, tol = 1.0))]
fn ablation<'py>(
    py: Python<'py>,
    stream: &PyEventStream,
    gt: &PyGroundTruth,
    leds: &PyLedTable,
    config: Option<&PyPipelineConfig>,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.map_or_else(PipelineConfig::default, |c| c.inner.clone());
    let rows = py
        .detach(|| ablation_run(&stream.inner, &gt.inner, &leds.inner, &cfg, &AblationFlags::singles(), tol))
        .map_err(err)?;
    to_py(py, &serde_json::to_value(rows).map_err(err)?)
}

/// Blink signature of one cluster's events.
#[pyfunction]
#[pyo3(signature = (events, subwindow_us = 25, kernel = 3))]
fn decode<'py>(py: Python<'py>, events: Vec<RawEvent>, subwindow_us: u64, kernel: usize) -> PyResult<Bound<'py, PyAny>> {
    let s = decode_signature(&to_events(events)?, subwindow_us, kernel).map_err(err)?;
    to_py(
        py,
        &json!({
            "mean_on_us": s.mean_on_us,
            "mean_off_us": s.mean_off_us,
            "period_us": s.period_us,
            "period_pos_us": s.period_pos_us,
            "period_neg_us": s.period_neg_us,
            "sample_count": s.sample_count,
        }),
    )
}

/// Minimum-cost assignment on a cluster × LED cost matrix; entries above
/// `d_max` or infinite are forbidden.
#[pyfunction]
fn assign<'py>(py: Python<'py>, costs: Vec<Vec<f64>>, d_max: f64) -> PyResult<Bound<'py, PyAny>> {
    let matrix = CostMatrix::from_rows(&costs, d_max).map_err(err)?;
    let a = assign_costs(&matrix);
    let pairs: Vec<Value> = a.pairs.iter().map(|p| json!([p.cluster, p.led, p.cost])).collect();
    to_py(
        py,
        &json!({ "pairs": pairs, "unmatched_clusters": a.unmatched_clusters, "unmatched_leds": a.unmatched_leds }),
    )
}

/// First time, µs, at which `samples` (`(t_us, x, y)`) cross the line
/// `(x0, y0, x1, y1)` after `t_start_us`.
#[pyfunction]
#[pyo3(signature = (samples, line, t_start_us = 0, bounded = true))]
fn detect_crossing(samples: Vec<(f64, f64, f64)>, line: (f64, f64, f64, f64), t_start_us: u64, bounded: bool) -> PyResult<f64> {
    let traj: Vec<Sample> = samples.into_iter().map(|(t_us, x, y)| Sample { t_us, x, y }).collect();
    let spec = LineSpec { bounded, ..LineSpec::new((line.0, line.1), (line.2, line.3), "", t_start_us) };
    crossing(&traj, &spec).map_err(err)
}

/// A joint's labels as `(t_us, x, y)` samples at tick midpoints.
#[pyfunction]
fn trajectory(labels: &PyLabelSet, joint: &str) -> Vec<(f64, f64, f64)> {
    trajectory_from_labels(&labels.inner, joint).into_iter().map(|s| (s.t_us, s.x, s.y)).collect()
}

#[pymodule]
fn flashcap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlashcapError", m.py().get_type::<FlashcapError>())?;
    m.add_class::<PyEventStream>()?;
    m.add_class::<PyLedTable>()?;
    m.add_class::<PyPipelineConfig>()?;
    m.add_class::<PyLabelSet>()?;
    m.add_class::<PyGroundTruth>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(annotate, m)?)?;
    m.add_function(wrap_pyfunction!(precision_recall, m)?)?;
    m.add_function(wrap_pyfunction!(ablation, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(assign, m)?)?;
    m.add_function(wrap_pyfunction!(detect_crossing, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    Ok(())
}
