//! Python bindings for the group-discovery feature selection engine.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use gdm_core::bench;
use gdm_core::corr::{self, RedNormalizer};
use gdm_core::data::{self, SparseDataset};
use gdm_core::error::GdmError;
use gdm_core::gdm::{self, GdmConfig};
use gdm_core::model_file::ModelFile;
use gdm_core::synth::{self, GroundTruth, SynthConfig};

fn to_py(e: GdmError) -> PyErr {
    match e {
        GdmError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Sparse labeled dataset in feature-major layout.
#[pyclass(frozen)]
struct Dataset {
    inner: SparseDataset,
}

#[pymethods]
impl Dataset {
    /// Load LIBSVM text (gzip transparent for .gz paths).
    #[staticmethod]
    #[pyo3(signature = (path, dimensions=None))]
    fn load(path: &str, dimensions: Option<usize>) -> PyResult<Self> {
        Ok(Dataset {
            inner: data::load_libsvm_path(path, dimensions).map_err(to_py)?,
        })
    }

    /// Build from dense columns and +/-1 labels.
    #[staticmethod]
    fn from_columns(columns: Vec<Vec<f64>>, labels: Vec<i8>) -> PyResult<Self> {
        Ok(Dataset {
            inner: SparseDataset::from_dense_columns(&columns, labels).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn labels(&self) -> Vec<i8> {
        self.inner.labels().to_vec()
    }

    fn pearson(&self, j: usize, k: usize) -> PyResult<f64> {
        if j >= self.inner.n_features() || k >= self.inner.n_features() {
            return Err(PyValueError::new_err("feature index out of range"));
        }
        Ok(corr::pearson(&self.inner, j, k))
    }

    #[pyo3(signature = (features, mean_pairs=false))]
    fn redundancy_rate(&self, features: Vec<usize>, mean_pairs: bool) -> PyResult<f64> {
        let norm = if mean_pairs {
            RedNormalizer::MeanPairs
        } else {
            RedNormalizer::OrderedPairs
        };
        corr::redundancy_rate(&self.inner, &features, norm).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let mut buf = Vec::new();
        data::write_libsvm(&self.inner, &mut buf).map_err(to_py)?;
        std::fs::write(path, buf).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_samples={}, n_features={})",
            self.inner.n_samples(),
            self.inner.n_features()
        )
    }
}

/// Fitted selection model with the embedded evaluation classifier.
#[pyclass(frozen)]
struct Model {
    file: ModelFile,
}

#[pymethods]
impl Model {
    #[getter]
    fn support(&self) -> Vec<usize> {
        self.file.support.clone()
    }

    #[getter]
    fn groups(&self) -> BTreeMap<usize, Vec<usize>> {
        self.file.groups.clone()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.file.n_features
    }

    #[getter]
    fn stop_reason(&self) -> String {
        format!("{:?}", self.file.stop_reason)
    }

    #[getter]
    fn theta(&self) -> Option<f64> {
        self.file.trace.last().map(|t| t.theta)
    }

    /// Support plus affiliated features, sorted.
    fn selected_with_affiliated(&self) -> Vec<usize> {
        self.file.selection_model().selected_with_affiliated()
    }

    fn predict(&self, dataset: &Dataset) -> PyResult<Vec<i8>> {
        let svm = self
            .file
            .classifier
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("model has no embedded classifier"))?;
        gdm::predict(&dataset.inner, svm).map_err(to_py)
    }

    fn decision_values(&self, dataset: &Dataset) -> PyResult<Vec<f64>> {
        let svm = self
            .file
            .classifier
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("model has no embedded classifier"))?;
        svm.decision_values(&dataset.inner).map_err(to_py)
    }

    fn accuracy(&self, dataset: &Dataset) -> PyResult<f64> {
        let svm = self
            .file
            .classifier
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("model has no embedded classifier"))?;
        bench::accuracy(svm, &dataset.inner).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.file.to_json_pretty().map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.file.save_atomic(path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model {
            file: ModelFile::load(path).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(support={}, groups={}, stop={:?})",
            self.file.support.len(),
            self.file.groups.len(),
            self.file.stop_reason
        )
    }
}

/// Generator ground truth for recovery scoring.
#[pyclass(frozen)]
struct Truth {
    inner: GroundTruth,
}

#[pymethods]
impl Truth {
    #[getter]
    fn groups(&self) -> Vec<Vec<usize>> {
        self.inner.groups.clone()
    }

    #[getter]
    fn group_weights(&self) -> Vec<f64> {
        self.inner.group_weights.clone()
    }

    #[getter]
    fn noise_indices(&self) -> Vec<usize> {
        self.inner.noise_indices.clone()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Truth {
            inner: GroundTruth::load(path).map_err(to_py)?,
        })
    }
}

/// Fit the selection model and train the embedded classifier.
#[pyfunction]
#[pyo3(signature = (
    dataset, budget, iterations=10, tau=0.25, c=1.0,
    tol_sub=1e-6, tol_cut=1e-3, with_affiliated=false, augment_bias=false
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    dataset: &Dataset,
    budget: usize,
    iterations: usize,
    tau: f64,
    c: f64,
    tol_sub: f64,
    tol_cut: f64,
    with_affiliated: bool,
    augment_bias: bool,
) -> PyResult<Model> {
    let config = GdmConfig {
        budget,
        max_iterations: iterations,
        tau,
        c_param: c,
        eps_cut: tol_cut,
        eps_sub: tol_sub,
        seed: 0,
    };
    let (model, state) = gdm::fit(&dataset.inner, &config).map_err(to_py)?;
    let svm = gdm::final_classifier(&dataset.inner, &model, &config, with_affiliated, augment_bias)
        .map_err(to_py)?;
    Ok(Model {
        file: ModelFile::assemble(&model, &state, Some((svm, with_affiliated))),
    })
}

/// Generate a synthetic train/test pair with ground truth.
#[pyfunction]
#[pyo3(signature = (
    samples=512, features=2000, groups=40, correlated=8,
    group_size_min=4, group_size_max=8, within_corr=0.9,
    noise_level=0.1, label_noise=0.1, min_abs_weight=0.0, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    samples: usize,
    features: usize,
    groups: usize,
    correlated: usize,
    group_size_min: usize,
    group_size_max: usize,
    within_corr: f64,
    noise_level: f64,
    label_noise: f64,
    min_abs_weight: f64,
    seed: u64,
) -> PyResult<(Dataset, Dataset, Truth)> {
    let config = SynthConfig {
        n_samples: samples,
        n_features: features,
        n_groups: groups,
        n_correlated_groups: correlated,
        group_size_range: (group_size_min, group_size_max),
        within_group_corr: within_corr,
        noise_level,
        label_noise,
        min_abs_weight,
        seed,
    };
    let (train, test, truth) = synth::generate(&config).map_err(to_py)?;
    Ok((
        Dataset { inner: train },
        Dataset { inner: test },
        Truth { inner: truth },
    ))
}

/// Score group recovery of a fitted model against ground truth.
#[pyfunction]
fn recovery_score<'py>(
    py: Python<'py>,
    model: &Model,
    truth: &Truth,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let report = synth::recovery_score(&model.file.selection_model(), &truth.inner);
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("group_hit_rate", report.group_hit_rate)?;
    dict.set_item("support_purity", report.support_purity)?;
    dict.set_item("affiliation_coverage", report.affiliation_coverage)?;
    dict.set_item("exclusivity_violations", report.exclusivity_violations)?;
    dict.set_item("n_supports", report.n_supports)?;
    dict.set_item("n_groups_hit", report.n_groups_hit)?;
    Ok(dict)
}

#[pymodule]
fn gdm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<Truth>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_score, m)?)?;
    m.add("MODEL_SCHEMA_VERSION", gdm_core::MODEL_SCHEMA_VERSION)?;
    Ok(())
}
