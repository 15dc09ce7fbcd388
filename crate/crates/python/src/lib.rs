//! Python bindings for the sipkit toolkit.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use sipkit::bench::{self, ExperimentConfig, SweepConfig};
use sipkit::cluster::{self, LinkageKind};
use sipkit::dctdomain::{self, CoverSourceParams, PixelImage};
use sipkit::embedsim::{self, ChangeRateModel};
use sipkit::features::{self, Schema};
use sipkit::{formats, outlier, project, seeds, setdist};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn block(values: &[f64]) -> PyResult<dctdomain::Block> {
    values
        .try_into()
        .map_err(|_| err(format!("a block has 64 values, got {}", values.len())))
}

fn distance_matrix(rows: &[Vec<f64>]) -> PyResult<setdist::DistanceMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(err("distance matrix must be square"));
    }
    setdist::DistanceMatrix::from_fn(n, |i, j| rows[i][j]).map_err(err)
}

fn dmatrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(err("matrix rows must be non-empty and of equal length"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn columns(basis: &project::ProjectionBasis) -> Vec<Vec<f64>> {
    (0..basis.k()).map(|i| basis.direction(i).iter().copied().collect()).collect()
}

/// Quantized luminance DCT coefficients of one JPEG image.
#[pyclass(name = "CoefArray", module = "sipkit_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCoefArray {
    inner: dctdomain::CoefArray,
}

#[pymethods]
impl PyCoefArray {
    /// `coefs` holds 64 values per block, blocks in raster order.
    #[new]
    fn new(blocks_x: usize, blocks_y: usize, coefs: Vec<i32>, quality: u32) -> PyResult<Self> {
        let table = dctdomain::quality_to_table(quality).map_err(err)?;
        let inner = dctdomain::CoefArray::new(blocks_x, blocks_y, coefs, table).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_stca(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: formats::decode_stca(data).map_err(err)?,
        })
    }

    fn to_stca<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &formats::encode_stca(&self.inner))
    }

    #[getter]
    fn blocks_x(&self) -> usize {
        self.inner.blocks_x()
    }

    #[getter]
    fn blocks_y(&self) -> usize {
        self.inner.blocks_y()
    }

    #[getter]
    fn coefs(&self) -> Vec<i32> {
        self.inner.coefs().to_vec()
    }

    #[getter]
    fn quant_table(&self) -> Vec<u16> {
        self.inner.table().entries().to_vec()
    }

    /// Number of nonzero AC coefficients.
    fn capacity(&self) -> u64 {
        embedsim::capacity(&self.inner)
    }

    fn calibrate(&self) -> PyResult<Self> {
        Ok(Self {
            inner: dctdomain::calibrate(&self.inner).map_err(err)?,
        })
    }

    /// Returns `(width, height, samples)`.
    fn decompress(&self) -> (usize, usize, Vec<f64>) {
        let img = dctdomain::decompress(&self.inner);
        (img.width(), img.height(), img.samples().to_vec())
    }

    fn pev274(&self) -> PyResult<Vec<f64>> {
        Ok(features::pev274(&self.inner).map_err(err)?.into_values())
    }

    fn li250(&self) -> PyResult<Vec<f64>> {
        Ok(features::li250(&self.inner).map_err(err)?.into_values())
    }

    /// Horizontal, vertical, diagonal and minor-diagonal matrices, each as 81
    /// row-major values.
    fn markov_tpm(&self) -> Vec<Vec<f64>> {
        let m = features::markov_tpm(&self.inner);
        m.directions().iter().map(|d| d.to_vec()).collect()
    }

    /// Simulated nsF5 at `payload` bits per nonzero AC coefficient. Returns
    /// the stego array and the number of changed coefficients.
    #[pyo3(signature = (payload, seed, model = "entropy"))]
    fn embed(&self, payload: f64, seed: u64, model: &str) -> PyResult<(Self, u64)> {
        let model = match model {
            "entropy" => ChangeRateModel::Entropy,
            "uncoded" => ChangeRateModel::Uncoded,
            other => return Err(err(format!("unknown change model {other:?}"))),
        };
        if !(0.0..=1.0).contains(&payload) {
            return Err(err(format!("payload must be in [0, 1], got {payload}")));
        }
        let bits = (payload * embedsim::capacity(&self.inner) as f64).round() as u64;
        let mut rng = seeds::rng(seed);
        let (inner, rec) = embedsim::nsf5_simulate_with(&self.inner, bits, model, &mut rng).map_err(err)?;
        Ok((Self { inner }, rec.changes))
    }

    fn __repr__(&self) -> String {
        format!("CoefArray({}x{} blocks)", self.inner.blocks_x(), self.inner.blocks_y())
    }
}

#[pyfunction]
fn block_dct(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(dctdomain::block_dct(&block(&values)?).to_vec())
}

#[pyfunction]
fn block_idct(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(dctdomain::block_idct(&block(&values)?).to_vec())
}

/// Compresses a grayscale image given as row-major samples.
#[pyfunction]
fn compress(width: usize, height: usize, samples: Vec<f64>, quality: u32) -> PyResult<PyCoefArray> {
    let img = PixelImage::new(width, height, samples).map_err(err)?;
    Ok(PyCoefArray {
        inner: dctdomain::compress(&img, quality).map_err(err)?,
    })
}

/// Renders one synthetic cover from a freshly drawn camera profile.
/// Returns row-major samples.
#[pyfunction]
#[pyo3(signature = (seed, width = 64, height = 64, source_id = 0))]
fn synth_cover(seed: u64, width: usize, height: usize, source_id: u32) -> PyResult<Vec<f64>> {
    let mut rng = seeds::rng(seed);
    let params = CoverSourceParams::draw(source_id, width, height, &mut rng);
    Ok(dctdomain::synth_cover(&params, &mut rng).map_err(err)?.samples().to_vec())
}

#[pyfunction]
fn extract(c: &PyCoefArray, schema: &str) -> PyResult<Vec<f64>> {
    let s = Schema::parse(schema).map_err(err)?;
    Ok(s.extract(&c.inner).map_err(err)?.into_values())
}

/// Unbiased MMD between equal-size sets; linear kernel unless `gamma` is
/// given.
#[pyfunction]
#[pyo3(signature = (x, y, gamma = None))]
fn mmd_unbiased(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, gamma: Option<f64>) -> PyResult<f64> {
    let kernel = match gamma {
        Some(g) => setdist::KernelSpec::gaussian(g).map_err(err)?,
        None => setdist::KernelSpec::Linear,
    };
    setdist::mmd_unbiased(&x, &y, &kernel).map_err(err)
}

#[pyfunction]
fn median_gamma(vectors: Vec<Vec<f64>>) -> PyResult<f64> {
    setdist::median_gamma(&vectors).map_err(err)
}

#[pyfunction]
fn lof_scores(distances: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<f64>> {
    outlier::lof_scores(&distance_matrix(&distances)?, k).map_err(err)
}

/// Merge sequence as `(members_a, members_b, height)` tuples.
#[pyfunction]
#[pyo3(signature = (distances, linkage = "single"))]
fn agglomerate(distances: Vec<Vec<f64>>, linkage: &str) -> PyResult<Vec<(Vec<usize>, Vec<usize>, f64)>> {
    let kind: LinkageKind = linkage.parse().map_err(err)?;
    let tree = cluster::agglomerate(&distance_matrix(&distances)?, kind).map_err(err)?;
    Ok(tree.merges.into_iter().map(|m| (m.a, m.b, m.height)).collect())
}

/// Top-k principal directions (as lists) and their eigenvalues.
#[pyfunction]
fn pct(x: Vec<Vec<f64>>, k: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let (basis, values) = project::pct(&dmatrix(&x)?, k).map_err(err)?;
    Ok((columns(&basis), values))
}

#[pyfunction]
fn ols(xs: Vec<Vec<f64>>, ys: Vec<f64>, lambda: f64) -> PyResult<Vec<f64>> {
    let basis = project::ols(&dmatrix(&xs)?, &DVector::from_vec(ys), lambda).map_err(err)?;
    Ok(columns(&basis).remove(0))
}

/// Runs a benchmark described by an experiment config in JSON and returns
/// the report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(err)?;
    let report = py.detach(|| bench::run_experiment(&cfg)).map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn strategy_sweep(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: SweepConfig = serde_json::from_str(config_json).map_err(err)?;
    let report = py.detach(|| bench::strategy_sweep(&cfg)).map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

#[pymodule]
fn sipkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCoefArray>()?;
    m.add_function(wrap_pyfunction!(block_dct, m)?)?;
    m.add_function(wrap_pyfunction!(block_idct, m)?)?;
    m.add_function(wrap_pyfunction!(compress, m)?)?;
    m.add_function(wrap_pyfunction!(synth_cover, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(mmd_unbiased, m)?)?;
    m.add_function(wrap_pyfunction!(median_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(lof_scores, m)?)?;
    m.add_function(wrap_pyfunction!(agglomerate, m)?)?;
    m.add_function(wrap_pyfunction!(pct, m)?)?;
    m.add_function(wrap_pyfunction!(ols, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(strategy_sweep, m)?)?;
    Ok(())
}
