//! Python bindings: datasets, the PCA model, privatization, the sandbox store
//! and the evaluation entry points.

use agrishare::data::{self, DataMatrix, FeatureSchema};
use agrishare::eval::{self, PowerConfig, Table4Config};
use agrishare::ldp::{self, NoisyMatrix};
use agrishare::models::{self, ClassifierKind, ClassifierModel};
use agrishare::pca::{self, PcaModel, TransformedMatrix};
use agrishare::sandbox::{self, AggregatedStore, ClusterModel, ParticipantShare, SimilarityMode};
use agrishare::Error;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for agrishare::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn chunked(values: &[f64], k: usize) -> Vec<Vec<f64>> {
    values.chunks_exact(k).map(<[f64]>::to_vec).collect()
}

/// A feature table, optionally labelled.
#[pyclass(name = "Dataset", module = "agrishare")]
pub struct PyDataset {
    inner: DataMatrix,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (rows, feature_names, labels=None))]
    fn new(rows: Vec<Vec<f64>>, feature_names: Vec<String>, labels: Option<Vec<String>>) -> PyResult<Self> {
        let label = labels.as_ref().map(|_| "label");
        let schema = FeatureSchema::new(feature_names, label).py()?;
        Ok(PyDataset { inner: DataMatrix::from_rows(schema, &rows, labels).py()? })
    }

    #[staticmethod]
    #[pyo3(signature = (path, label=None))]
    fn from_csv(path: &str, label: Option<&str>) -> PyResult<Self> {
        Ok(PyDataset { inner: data::load_csv_any(path, label).py()? })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        data::write_csv(path, &self.inner).py()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.schema().feature_names().to_vec()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<String>> {
        self.inner.labels().map(<[String]>::to_vec)
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        chunked(self.inner.values(), self.inner.n_features())
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n_rows={}, n_features={})", self.inner.n_rows(), self.inner.n_features())
    }
}

#[pyfunction]
#[pyo3(signature = (rows_per_crop, seed=0))]
fn generate_synthetic_crop(rows_per_crop: usize, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset { inner: data::generate_synthetic_crop(rows_per_crop, seed).py()? })
}

#[pyfunction]
#[pyo3(signature = (n, seed=0))]
fn generate_synthetic_market(n: usize, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset { inner: data::generate_synthetic_market(n, seed).py()? })
}

/// Rows projected into component space.
#[pyclass(name = "TransformedMatrix", module = "agrishare")]
pub struct PyTransformed {
    inner: TransformedMatrix,
}

#[pymethods]
impl PyTransformed {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyTransformed { inner: TransformedMatrix::load(path).py()? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        pca::format_fingerprint(self.inner.model_fingerprint())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        chunked(self.inner.values(), self.inner.k())
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }
}

/// Component-space rows with Laplace noise added.
#[pyclass(name = "NoisyMatrix", module = "agrishare")]
pub struct PyNoisy {
    inner: NoisyMatrix,
}

#[pymethods]
impl PyNoisy {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyNoisy { inner: NoisyMatrix::load(path).py()? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        pca::format_fingerprint(self.inner.model_fingerprint())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        chunked(self.inner.values(), self.inner.k())
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }
}

/// Standardizer plus the top-k principal components.
#[pyclass(name = "PcaModel", module = "agrishare")]
pub struct PyPcaModel {
    inner: PcaModel,
}

#[pymethods]
impl PyPcaModel {
    #[staticmethod]
    #[pyo3(signature = (data, k=2))]
    fn fit(data: PyRef<'_, PyDataset>, k: usize) -> PyResult<Self> {
        Ok(PyPcaModel { inner: pca::pca_fit(&data.inner, k).py()? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyPcaModel { inner: PcaModel::from_json(text).py()? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyPcaModel { inner: PcaModel::load(path).py()? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        pca::format_fingerprint(self.inner.fingerprint())
    }

    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        self.inner.components().to_vec()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    #[getter]
    fn sensitivities(&self) -> Vec<f64> {
        self.inner.sensitivities().values().to_vec()
    }

    fn explained_variance_ratio(&self) -> Vec<f64> {
        pca::explained_variance_ratio(&self.inner)
    }

    fn transform(&self, data: PyRef<'_, PyDataset>) -> PyResult<PyTransformed> {
        Ok(PyTransformed { inner: pca::pca_transform(&self.inner, &data.inner).py()? })
    }

    fn project_row(&self, row: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project_row(&row).py()
    }

    fn __repr__(&self) -> String {
        format!("PcaModel(k={}, d={}, fingerprint={})", self.inner.k(), self.inner.d(), self.fingerprint())
    }
}

/// Add Laplace noise calibrated to the model's sensitivities at total budget `epsilon`.
#[pyfunction]
#[pyo3(signature = (model, transformed, epsilon, seed=0))]
fn privatize(model: PyRef<'_, PyPcaModel>, transformed: PyRef<'_, PyTransformed>, epsilon: f64, seed: u64) -> PyResult<PyNoisy> {
    Ok(PyNoisy { inner: ldp::privatize_with_model(&model.inner, &transformed.inner, epsilon, seed).py()? })
}

/// Per-component Laplace scales for a total budget.
#[pyfunction]
fn laplace_scales(model: PyRef<'_, PyPcaModel>, epsilon: f64) -> PyResult<Vec<f64>> {
    let s = model.inner.sensitivities();
    let budget = ldp::allocate_epsilon(epsilon, s).py()?;
    Ok((0..s.len()).map(|i| budget.scale(s, i)).collect())
}

/// K-Means centroids.
#[pyclass(name = "ClusterModel", module = "agrishare")]
pub struct PyClusterModel {
    inner: ClusterModel,
}

#[pymethods]
impl PyClusterModel {
    #[getter]
    fn centroids(&self) -> Vec<Vec<f64>> {
        self.inner.centroids.clone()
    }

    #[getter]
    fn inertia(&self) -> f64 {
        self.inner.inertia
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.sizes.clone()
    }

    fn assign(&self, point: Vec<f64>) -> PyResult<usize> {
        sandbox::kmeans_assign(&self.inner, &point).py()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyClusterModel { inner: ClusterModel::load(path).py()? })
    }
}

fn parse_mode(mode: &str) -> PyResult<SimilarityMode> {
    mode.parse().py()
}

/// The sandbox: privatized shares from every participant, under one model.
#[pyclass(name = "AggregatedStore", module = "agrishare")]
pub struct PyStore {
    inner: AggregatedStore,
}

#[pymethods]
impl PyStore {
    #[new]
    fn new(model: PyRef<'_, PyPcaModel>) -> Self {
        PyStore { inner: AggregatedStore::new(model.inner.fingerprint()) }
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(PyStore { inner: AggregatedStore::load(dir).py()? })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.inner.save(dir).py()
    }

    fn submit(&mut self, participant: &str, share: PyRef<'_, PyNoisy>) -> PyResult<()> {
        let share = ParticipantShare::new(participant, share.inner.clone()).py()?;
        self.inner.submit_share(share).py()
    }

    #[getter]
    fn participants(&self) -> Vec<String> {
        self.inner.participant_ids().map(str::to_owned).collect()
    }

    #[getter]
    fn total_rows(&self) -> usize {
        self.inner.total_rows()
    }

    fn share(&self, participant: &str) -> PyResult<PyNoisy> {
        Ok(PyNoisy { inner: self.inner.share(participant).py()?.clone() })
    }

    #[pyo3(signature = (c=4, seed=0))]
    fn kmeans(&self, c: usize, seed: u64) -> PyResult<PyClusterModel> {
        Ok(PyClusterModel { inner: sandbox::kmeans_fit(&self.inner, c, seed).py()? })
    }

    /// Nearest shared rows to `profile` within its cluster, as
    /// `(participant, row, distance)` tuples.
    #[pyo3(signature = (clusters, profile, m=5))]
    fn recommend(
        &self,
        clusters: PyRef<'_, PyClusterModel>,
        profile: Vec<f64>,
        m: usize,
    ) -> PyResult<(usize, Vec<(String, usize, f64)>)> {
        let r = sandbox::recommend_collaborators(&self.inner, &clusters.inner, &profile, m).py()?;
        Ok((r.query_label, r.neighbors.into_iter().map(|n| (n.participant, n.row, n.distance)).collect()))
    }

    #[pyo3(signature = (a, b, mode="profile"))]
    fn similarity(&self, a: &str, b: &str, mode: &str) -> PyResult<f64> {
        sandbox::market_similarity(&self.inner, a, b, parse_mode(mode)?).py()
    }

    /// The `m` participants closest to `initiator`, ascending by distance.
    #[pyo3(signature = (initiator, m, mode="profile"))]
    fn rank_collaborators(&self, initiator: &str, m: usize, mode: &str) -> PyResult<Vec<(String, f64)>> {
        let mode = parse_mode(mode)?;
        data::audit::deny_raw_access(|| sandbox::rank_collaborators(&self.inner, initiator, m, mode)).py()
    }
}

/// A trained logreg / gnb / svm classifier.
#[pyclass(name = "Classifier", module = "agrishare")]
pub struct PyClassifier {
    inner: ClassifierModel,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (kind, data, seed=0))]
    fn train(kind: &str, data: PyRef<'_, PyDataset>, seed: u64) -> PyResult<Self> {
        let kind: ClassifierKind = kind.parse().py()?;
        Ok(PyClassifier { inner: models::train_classifier(kind, &data.inner, seed).py()? })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    fn predict(&self, data: PyRef<'_, PyDataset>) -> PyResult<Vec<String>> {
        self.inner.predict(&data.inner).py()
    }

    fn accuracy(&self, data: PyRef<'_, PyDataset>) -> PyResult<f64> {
        models::accuracy(&self.inner, &data.inner).py()
    }
}

/// Membership-inference power of `shared` against member (`case`) and
/// non-member (`control`) projections.
#[pyfunction]
#[pyo3(signature = (shared, case, control, fpr=eval::DEFAULT_FPR, seed=0))]
fn power_analysis<'py>(
    py: Python<'py>,
    shared: PyRef<'_, PyNoisy>,
    case: PyRef<'_, PyTransformed>,
    control: PyRef<'_, PyTransformed>,
    fpr: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = PowerConfig::for_pools(fpr, control.inner.n_rows(), case.inner.n_rows(), seed).py()?;
    let r = eval::power_analysis(&shared.inner, &case.inner, &control.inner, &cfg).py()?;
    let d = PyDict::new(py);
    d.set_item("epsilon", r.epsilon)?;
    d.set_item("threshold", r.threshold)?;
    d.set_item("power", r.power)?;
    d.set_item("n_control", r.n_control)?;
    d.set_item("n_case", r.n_case)?;
    Ok(d)
}

/// Centralized vs privacy-protected accuracy for each classifier.
#[pyfunction]
#[pyo3(signature = (data, seed=0))]
fn table4<'py>(py: Python<'py>, data: PyRef<'_, PyDataset>, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let report = eval::table4_experiment(&data.inner, &Table4Config::new(seed)).py()?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("classifier", r.classifier.to_string())?;
            d.set_item("epsilon", r.epsilon)?;
            d.set_item("acc_centralized", r.acc_centralized)?;
            d.set_item("acc_aggregated", r.acc_aggregated)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "agrishare")]
fn agrishare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPcaModel>()?;
    m.add_class::<PyTransformed>()?;
    m.add_class::<PyNoisy>()?;
    m.add_class::<PyStore>()?;
    m.add_class::<PyClusterModel>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic_crop, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic_market, m)?)?;
    m.add_function(wrap_pyfunction!(privatize, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_scales, m)?)?;
    m.add_function(wrap_pyfunction!(power_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(table4, m)?)?;
    Ok(())
}
