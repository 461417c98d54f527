//! Python bindings for the projection engine: datasets, training, projection,
//! quality metrics, and clustering pseudolabels. Feature matrices cross the
//! boundary as lists of row lists; projections come back as (x, y) tuples.
//!
//! Build `libsharp.so` with cargo and rename it to `sharp.so` somewhere on
//! `sys.path`; `python/smoke_test.py` at the repository root does exactly
//! that and then drives the whole pipeline.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sharp_core::artifact::{dataset_fingerprint, load_model, save_model, ModelArtifact};
use sharp_core::cli::parse_shape;
use sharp_core::network::{
    train_with_arch, Architecture, ClassifierAttachment, L2Mode, LossBreakdown, TrainConfig,
};
use sharp_core::sampling::SamplingScheme;
use sharp_core::{cluster, data, metrics, Tensor};

fn pyerr(e: sharp_core::Error) -> PyErr {
    match e {
        sharp_core::Error::Io(_) => PyIOError::new_err(e.to_string()),
        sharp_core::Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> PyResult<Tensor> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err(format!(
            "{name} must be a nonempty list of nonempty rows"
        )));
    }
    Tensor::from_rows(rows).map_err(pyerr)
}

fn to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.data().chunks(t.cols()).map(<[f64]>::to_vec).collect()
}

fn scheme_spec(s: &SamplingScheme) -> String {
    match s {
        SamplingScheme::Gaussian => "gaussian".into(),
        SamplingScheme::GeneralizedNormal { omega } => format!("gennorm:{omega}"),
        SamplingScheme::DirichletPolygon {
            vertices,
            translation,
            ..
        } => {
            if *translation {
                format!("polygon:{}", vertices.cols())
            } else {
                format!("polygon:{}:no-translate", vertices.cols())
            }
        }
    }
}

/// A named dataset: row-major features plus optional integer class labels.
#[pyclass(module = "sharp")]
struct Dataset {
    inner: data::Dataset,
}

#[pymethods]
impl Dataset {
    /// Wrap in-memory arrays. Labels, when given, must be one per row.
    #[staticmethod]
    #[pyo3(signature = (x, y = None, name = "arrays"))]
    fn from_arrays(x: Vec<Vec<f64>>, y: Option<Vec<usize>>, name: &str) -> PyResult<Self> {
        let x = matrix("x", &x)?;
        Ok(Self {
            inner: data::Dataset::from_parts(name, x, y).map_err(pyerr)?,
        })
    }

    /// Load a numeric CSV; `label_column` names the class column, if any.
    #[staticmethod]
    #[pyo3(signature = (path, label_column = None))]
    fn load_csv(path: &str, label_column: Option<&str>) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_csv(path, label_column).map_err(pyerr)?,
        })
    }

    /// Load an IDX image file plus its IDX label file (the MNIST container).
    #[staticmethod]
    fn load_idx(images: &str, labels: &str) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_idx(images, labels).map_err(pyerr)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Feature matrix as a list of row lists.
    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.x)
    }

    /// Class labels, or None for unlabeled data.
    #[getter]
    fn y(&self) -> Option<Vec<usize>> {
        self.inner.y.clone()
    }

    /// Original label strings in class-index order, when the labels came
    /// from a CSV column.
    #[getter]
    fn label_names(&self) -> Option<Vec<String>> {
        self.inner.label_names.clone()
    }

    #[getter]
    fn class_count(&self) -> Option<usize> {
        self.inner.class_count()
    }

    /// Per-feature min-max scaling to [0, 1]. The ranges ride along so that
    /// models trained afterwards can scale out-of-sample rows the same way.
    fn scale_minmax(&self) -> Self {
        Self {
            inner: data::scale_minmax(self.inner.clone()),
        }
    }

    /// Deterministic class-stratified subsample of `target` rows.
    #[pyo3(signature = (target, seed = 0))]
    fn subsample(&self, target: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: data::subsample(&self.inner, target, seed).map_err(pyerr)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({:?}, {} rows x {} features, {})",
            self.inner.name,
            self.inner.rows(),
            self.inner.dim(),
            if self.inner.y.is_some() {
                "labeled"
            } else {
                "unlabeled"
            }
        )
    }
}

/// A trained projection model bundled with the scaling ranges and the
/// fingerprint of the data it was trained on.
#[pyclass(module = "sharp")]
struct Model {
    artifact: ModelArtifact,
    history: Vec<LossBreakdown>,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            artifact: load_model(path).map_err(pyerr)?,
            history: Vec::new(),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.artifact, path).map_err(pyerr)
    }

    /// Project rows to 2D. Rows are min-max scaled (clamped) with the ranges
    /// stored at train time before they reach the network.
    fn project(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
        let x = matrix("x", &x)?;
        let x = match (&self.artifact.feature_min, &self.artifact.feature_max) {
            (Some(lo), Some(hi)) => data::apply_minmax(&x, lo, hi).map_err(pyerr)?,
            _ => x,
        };
        let p = self.artifact.model.project(&x).map_err(pyerr)?;
        Ok(p.data().chunks(2).map(|r| (r[0], r[1])).collect())
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.artifact.model.arch.input_dim
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.artifact.model.arch.class_count
    }

    /// Shape spec string in the same grammar `train` accepts.
    #[getter]
    fn shape(&self) -> String {
        scheme_spec(&self.artifact.model.scheme)
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.artifact.train_config.beta
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.artifact.train_config.rho
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.artifact.train_config.seed
    }

    /// Per-epoch mean loss terms from the `train` call that produced this
    /// model; empty after `load`.
    #[getter]
    fn loss_history(&self, py: Python<'_>) -> PyResult<Vec<Py<PyDict>>> {
        self.history
            .iter()
            .map(|b| {
                let d = PyDict::new(py);
                d.set_item("recon", b.recon)?;
                d.set_item("class", b.class)?;
                d.set_item("reg", b.reg)?;
                d.set_item("l2", b.l2)?;
                d.set_item("total", b.total)?;
                Ok(d.unbind())
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({} -> 2, {} classes, shape {:?}, beta {})",
            self.artifact.model.arch.input_dim,
            self.artifact.model.arch.class_count,
            scheme_spec(&self.artifact.model.scheme),
            self.artifact.train_config.beta,
        )
    }
}

/// Train a projection model on a dataset. `labels` overrides the dataset's
/// own labels (pass pseudolabels from `kmeans` or `agglomerative` here);
/// unlabeled data requires it. Shape specs: "gaussian", "gennorm:OMEGA", or
/// "polygon:V[:no-translate]".
#[pyfunction]
#[pyo3(signature = (dataset, labels = None, *, beta = 0.1, rho = 1.0, epochs = 20,
    batch_size = 256, seed = 0, shape = "gaussian", score_function = false,
    deterministic = false, widths = None, learning_rate = 1e-3, l2 = 0.5,
    l2_activity = false, classifier_bottleneck = false))]
#[allow(clippy::too_many_arguments)]
fn train(
    dataset: &Dataset,
    labels: Option<Vec<usize>>,
    beta: f64,
    rho: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    shape: &str,
    score_function: bool,
    deterministic: bool,
    widths: Option<Vec<usize>>,
    learning_rate: f64,
    l2: f64,
    l2_activity: bool,
    classifier_bottleneck: bool,
) -> PyResult<Model> {
    let ds = &dataset.inner;
    let labels = match labels {
        Some(l) => l,
        None => ds.y.clone().ok_or_else(|| {
            PyValueError::new_err("dataset has no labels: pass labels=, e.g. from kmeans()")
        })?,
    };
    let config = TrainConfig {
        rho,
        beta,
        batch_size,
        epochs,
        seed,
        l2_bottleneck: l2,
        l2_mode: if l2_activity {
            L2Mode::Activity
        } else {
            L2Mode::Kernel
        },
        scheme: parse_shape(shape, score_function).map_err(pyerr)?,
        deterministic_bottleneck: deterministic,
        classifier: if classifier_bottleneck {
            ClassifierAttachment::Bottleneck
        } else {
            ClassifierAttachment::DecoderLast
        },
        learning_rate,
    };
    let k = labels.iter().max().map_or(0, |&l| l + 1).max(2);
    let mut arch = Architecture::new(ds.dim(), k);
    if let Some(w) = widths {
        arch = arch.with_widths(w);
    }
    let (model, history) = train_with_arch(&ds.x, &labels, &config, arch).map_err(pyerr)?;
    let fingerprint = dataset_fingerprint(&ds.x, Some(&labels));
    Ok(Model {
        artifact: ModelArtifact::new(
            model,
            config,
            ds.feature_min.clone(),
            ds.feature_max.clone(),
            fingerprint,
        ),
        history,
    })
}

/// Projection quality metrics for points `p` projected from `x`. With
/// labels all six metrics are reported; without, only the label-free four.
#[pyfunction]
#[pyo3(signature = (x, p, y = None, k = 7))]
fn evaluate(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    y: Option<Vec<usize>>,
    k: usize,
) -> PyResult<Py<PyDict>> {
    let x = matrix("x", &x)?;
    let p = matrix("p", &p)?;
    let d = PyDict::new(py);
    match y {
        Some(y) => {
            let r = metrics::evaluate_all(&x, &p, &y, k).map_err(pyerr)?;
            d.set_item("trustworthiness", r.trustworthiness)?;
            d.set_item("continuity", r.continuity)?;
            d.set_item("shepard_correlation", r.shepard_correlation)?;
            d.set_item("normalized_stress", r.normalized_stress)?;
            d.set_item("neighborhood_hit", r.neighborhood_hit)?;
            d.set_item("distance_consistency", r.distance_consistency)?;
        }
        None => {
            d.set_item(
                "trustworthiness",
                metrics::trustworthiness(&x, &p, k).map_err(pyerr)?,
            )?;
            d.set_item("continuity", metrics::continuity(&x, &p, k).map_err(pyerr)?)?;
            d.set_item(
                "shepard_correlation",
                metrics::shepard_correlation(&x, &p).map_err(pyerr)?,
            )?;
            d.set_item(
                "normalized_stress",
                metrics::normalized_stress(&x, &p).map_err(pyerr)?,
            )?;
        }
    }
    d.set_item("k", k)?;
    Ok(d.unbind())
}

/// K-means pseudolabels (seeded, deterministic).
#[pyfunction]
#[pyo3(signature = (x, k, seed = 0, max_iter = 100))]
fn kmeans(x: Vec<Vec<f64>>, k: usize, seed: u64, max_iter: usize) -> PyResult<Vec<usize>> {
    cluster::kmeans(&matrix("x", &x)?, k, seed, max_iter).map_err(pyerr)
}

/// Agglomerative (Ward linkage) pseudolabels.
#[pyfunction]
fn agglomerative(x: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<usize>> {
    cluster::agglomerative(&matrix("x", &x)?, k).map_err(pyerr)
}

/// Shape-regularized neural projection: parametric 2D embeddings whose
/// clusters are pushed toward chosen shapes.
#[pymodule]
fn sharp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(agglomerative, m)?)?;
    Ok(())
}
