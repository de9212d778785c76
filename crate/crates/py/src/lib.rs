//! Python bindings.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use synthsight::features::{LabelPair, NormStats};
use synthsight::io::{self, GraphDoc, Split};
use synthsight::library::{default_library, CellLibrary};
use synthsight::nn::{Checkpoint, ModelConfig, TrainConfig};
use synthsight::pipeline::{self, SplitCounts};
use synthsight::reconstruct::{reconstruct_metrics, sweep_curve, InferredGraph, DEFAULT_K_PATHS};
use synthsight::sta::analyze;

create_exception!(synthsight_py, SynthsightError, PyException);

fn err(e: synthsight::Error) -> PyErr {
    SynthsightError::new_err(e.to_string())
}

/// Converts through JSON so results arrive as plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SynthsightError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "CellLibrary", module = "synthsight_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyLibrary(CellLibrary);

#[pymethods]
impl PyLibrary {
    /// Built-in library; `seed` perturbs the cell parameters.
    #[new]
    #[pyo3(signature = (seed = 0))]
    fn new(seed: u64) -> Self {
        PyLibrary(default_library(seed))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        CellLibrary::load(path).map(PyLibrary).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.0.fingerprint()
    }

    #[getter]
    fn version(&self) -> String {
        self.0.version.clone()
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }
}

/// One graph document: header plus pin graph, features and labels.
#[pyclass(name = "Graph", module = "synthsight_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyGraph(GraphDoc);

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        GraphDoc::from_json(text).map(PyGraph).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn id(&self) -> String {
        self.0.header.id.clone()
    }

    #[getter]
    fn role<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.header.role)
    }

    #[getter]
    fn split<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.header.split)
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.header.width
    }

    fn header<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.header)
    }

    fn __len__(&self) -> usize {
        self.0.graph.len()
    }

    fn edges(&self) -> Vec<(u32, u32)> {
        self.0.graph.edges().iter().map(|(a, b)| (a.0, b.0)).collect()
    }

    fn nodes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.graph.nodes())
    }

    /// Per-node feature rows, or None before annotation.
    fn features(&self) -> Option<Vec<Vec<f64>>> {
        self.0.graph.features().map(|f| f.iter().map(|v| v.to_row().to_vec()).collect())
    }

    /// Per-node `(delay_delta, area_delta)`, or None when unlabeled.
    fn labels(&self) -> Option<Vec<(f64, f64)>> {
        self.0.graph.labels().map(|l| l.iter().map(|p| (p.delay_delta, p.area_delta)).collect())
    }

    /// Static timing of the graph under `library`.
    fn analyze<'py>(&self, py: Python<'py>, library: &PyLibrary) -> PyResult<Bound<'py, PyAny>> {
        let r = analyze(&self.0.graph, &library.0).map_err(err)?;
        to_py(py, &r)
    }

    /// Design delay and area from the graph's labels (predicted or true deltas).
    fn reconstruct(&self) -> PyResult<(f64, f64)> {
        let m = reconstruct_metrics(&pipeline::inferred_graph(&self.0).map_err(err)?);
        Ok((m.delay, m.area))
    }

    /// Delay and area with all deltas zero.
    fn baseline(&self) -> PyResult<(f64, f64)> {
        let g = self.0.graph.clone().without_labels();
        let zero = vec![LabelPair::default(); g.len()];
        let m = reconstruct_metrics(&InferredGraph::new(g, zero).map_err(err)?);
        Ok((m.delay, m.area))
    }

    /// Target sweep over the graph's labels; one dict per target.
    #[pyo3(signature = (targets, k_paths = DEFAULT_K_PATHS))]
    fn sweep<'py>(&self, py: Python<'py>, targets: Vec<f64>, k_paths: usize) -> PyResult<Bound<'py, PyAny>> {
        let ig = pipeline::inferred_graph(&self.0).map_err(err)?;
        let curve = py.detach(|| sweep_curve(&ig, &targets, k_paths)).map_err(err)?;
        to_py(py, &curve.points)
    }

    fn __repr__(&self) -> String {
        format!("Graph(id={:?}, role={:?}, nodes={})", self.0.header.id, self.0.header.role, self.0.graph.len())
    }
}

#[pyclass(name = "NormStats", module = "synthsight_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyNorm(NormStats);

#[pymethods]
impl PyNorm {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        NormStats::load(path).map(PyNorm).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.0.fingerprint()
    }
}

/// Trained model checkpoint.
#[pyclass(name = "Model", module = "synthsight_py", frozen)]
struct PyModel(Checkpoint);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Checkpoint::load(path).map(PyModel).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    #[getter]
    fn step(&self) -> u64 {
        self.0.step()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.model.param_count()
    }

    #[getter]
    fn norm(&self) -> PyNorm {
        PyNorm(self.0.norm.clone())
    }

    /// Inferred graphs whose labels hold the predicted deltas.
    fn predict(&self, py: Python<'_>, graphs: Vec<PyGraph>) -> PyResult<Vec<PyGraph>> {
        let docs = unwrap(graphs);
        let out = py.detach(|| pipeline::predict_docs(&self.0, &self.0.norm, &docs)).map_err(err)?;
        Ok(wrap(out))
    }
}

fn unwrap(graphs: Vec<PyGraph>) -> Vec<GraphDoc> {
    graphs.into_iter().map(|g| g.0).collect()
}

fn wrap(docs: Vec<GraphDoc>) -> Vec<PyGraph> {
    docs.into_iter().map(PyGraph).collect()
}

fn library_or_default(library: Option<&PyLibrary>) -> CellLibrary {
    library.map(|l| l.0.clone()).unwrap_or_else(|| default_library(0))
}

/// Random prefix adders, split by index into train, val and test.
#[pyfunction]
#[pyo3(signature = (width = 16, train = 200, val = 50, test = 50, seed = 0, library = None))]
fn gen_dataset(
    py: Python<'_>,
    width: u32,
    train: usize,
    val: usize,
    test: usize,
    seed: u64,
    library: Option<&PyLibrary>,
) -> PyResult<Vec<PyGraph>> {
    let lib = library_or_default(library);
    let docs = py.detach(|| pipeline::gen_dataset(width, SplitCounts { train, val, test }, seed, &lib)).map_err(err)?;
    Ok(wrap(docs))
}

/// Timing-driven optimization of each pre graph toward `alpha` times its delay.
#[pyfunction]
#[pyo3(signature = (graphs, alpha = 0.6, library = None))]
fn synthesize(py: Python<'_>, graphs: Vec<PyGraph>, alpha: f64, library: Option<&PyLibrary>) -> PyResult<Vec<PyGraph>> {
    let lib = library_or_default(library);
    let docs = unwrap(graphs);
    Ok(wrap(py.detach(|| pipeline::synth_docs(&docs, &lib, alpha)).map_err(err)?))
}

/// Per-node labels from matched pre and post graphs.
#[pyfunction]
#[pyo3(signature = (pre, post, library = None))]
fn label(py: Python<'_>, pre: Vec<PyGraph>, post: Vec<PyGraph>, library: Option<&PyLibrary>) -> PyResult<Vec<PyGraph>> {
    let lib = library_or_default(library);
    let (pre, post) = (unwrap(pre), unwrap(post));
    Ok(wrap(py.detach(|| pipeline::label_docs(&pre, &post, &lib)).map_err(err)?))
}

/// Normalization statistics from the train split.
#[pyfunction]
fn fit_norm(labeled: Vec<PyGraph>) -> PyResult<PyNorm> {
    pipeline::fit_norm(&unwrap(labeled)).map(PyNorm).map_err(err)
}

/// Trains on the train split with early stopping on val; returns the model and a report dict.
#[pyfunction]
#[pyo3(signature = (labeled, norm, epochs = 100, batch = 8, patience = 10, seed = 0, lr = 0.01, dropout = 0.1, hidden = 64, layers = 6, heads = 8))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    labeled: Vec<PyGraph>,
    norm: &PyNorm,
    epochs: usize,
    batch: usize,
    patience: usize,
    seed: u64,
    lr: f64,
    dropout: f64,
    hidden: usize,
    layers: usize,
    heads: usize,
) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
    if heads == 0 || !hidden.is_multiple_of(heads) {
        return Err(SynthsightError::new_err(format!("hidden {hidden} must be a multiple of heads {heads}")));
    }
    let config = ModelConfig { hidden, layers, heads, head_dim: hidden / heads, dropout_p: dropout, lr, seed, ..ModelConfig::default() };
    let cfg = TrainConfig { epochs, batch_graphs: batch, patience };
    let docs = unwrap(labeled);
    let stats = norm.0.clone();
    let (ck, report) = py.detach(|| pipeline::train_model(&docs, &stats, config, &cfg)).map_err(err)?;
    Ok((PyModel(ck), to_py(py, &report)?))
}

/// Design-level MAE of inferred graphs against labeled ground truth.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, inferred: Vec<PyGraph>, labeled: Vec<PyGraph>) -> PyResult<Bound<'py, PyAny>> {
    let summary = pipeline::evaluate(&unwrap(inferred), &unwrap(labeled)).map_err(err)?;
    to_py(py, &summary)
}

/// Graphs of one split ("train", "val" or "test").
#[pyfunction]
fn select_split(graphs: Vec<PyGraph>, split: &str) -> PyResult<Vec<PyGraph>> {
    let s: Split = split.parse().map_err(err)?;
    Ok(wrap(pipeline::select_split(unwrap(graphs), Some(s))))
}

#[pyfunction]
fn read_dataset(path: &str) -> PyResult<Vec<PyGraph>> {
    io::read_dataset(path).map(wrap).map_err(err)
}

#[pyfunction]
fn write_dataset(path: &str, graphs: Vec<PyGraph>) -> PyResult<()> {
    io::write_dataset(path, &unwrap(graphs)).map_err(err)
}

#[pymodule]
fn synthsight_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SynthsightError", m.py().get_type::<SynthsightError>())?;
    m.add_class::<PyLibrary>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyNorm>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(label, m)?)?;
    m.add_function(wrap_pyfunction!(fit_norm, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(select_split, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(write_dataset, m)?)?;
    Ok(())
}
