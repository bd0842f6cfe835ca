//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qadapt::quantum::{self, CircuitLayout, GateKind};
use qadapt::trainer::{make_realizable_task, train, Student, TrainOptions};
use qadapt::{AdapterConfig, AdapterParams, MinorOp, Orthogonality};

fn py_err(e: qadapt::Error) -> PyErr {
    match e {
        qadapt::Error::Numerical(m) => PyArithmeticError::new_err(m),
        qadapt::Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for qadapt::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

pub fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("rows must all have the same length".into());
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_arg(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    to_matrix(&rows).map_err(PyValueError::new_err)
}

fn parse_op(op: &str) -> PyResult<MinorOp> {
    op.parse().map_err(|e: qadapt::Error| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn binom(n: usize, k: usize) -> usize {
    qadapt::binom(n, k)
}

/// Largest base dimension whose compounds fit in a block of size `b`.
#[pyfunction]
fn fit_base_dim(b: usize, orders: Vec<usize>) -> PyResult<usize> {
    qadapt::fit_base_dim(b, &orders).py()
}

#[pyfunction]
#[pyo3(signature = (a, k, op = "comp"))]
fn compound(a: Vec<Vec<f64>>, k: usize, op: &str) -> PyResult<Vec<Vec<f64>>> {
    let c = qadapt::compound(&matrix_arg(a)?, k, parse_op(op)?).py()?;
    Ok(from_matrix(&c.entries))
}

#[pyfunction]
fn cayley(p: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(from_matrix(&qadapt::cayley(&matrix_arg(p)?).py()?))
}

#[pyfunction]
fn loader_cost(n: usize, max_weight: usize) -> PyResult<usize> {
    quantum::loader_cost(n, max_weight).py()
}

#[pyfunction]
fn hw_basis(n: usize, k: usize) -> PyResult<Vec<String>> {
    quantum::hw_basis(n, k).py()
}

#[pyclass(name = "AdapterConfig", module = "qadapt", frozen)]
struct PyAdapterConfig {
    inner: AdapterConfig,
}

#[pymethods]
impl PyAdapterConfig {
    #[new]
    #[pyo3(signature = (d, orders, r, op = "comp", gamma = 0, beta = 0, m = 1))]
    fn new(d: usize, orders: Vec<usize>, r: usize, op: &str, gamma: u8, beta: u8, m: usize) -> PyResult<Self> {
        if beta > 1 {
            return Err(PyValueError::new_err(format!("beta must be 0 or 1, got {beta}")));
        }
        let inner = AdapterConfig::new(d, &orders, r)
            .with_op(parse_op(op)?)
            .with_orthogonality(Orthogonality::from_gamma(gamma).py()?)
            .with_block_share(beta == 1)
            .with_num_adapters(m);
        inner.block_spec().py()?;
        Ok(PyAdapterConfig { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn orders(&self) -> Vec<usize> {
        self.inner.orders.clone()
    }

    #[getter]
    fn block_size(&self) -> usize {
        self.inner.block_size()
    }

    #[getter]
    fn base_dim(&self) -> PyResult<usize> {
        Ok(self.inner.block_spec().py()?.n)
    }

    fn param_count(&self) -> PyResult<usize> {
        qadapt::param_count(&self.inner).py()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "AdapterConfig(d={}, orders={:?}, r={}, op='{}', gamma={}, beta={}, m={})",
            c.d,
            c.orders,
            c.num_blocks,
            c.op,
            c.orthogonality.gamma(),
            u8::from(c.block_share),
            c.num_adapters
        )
    }
}

/// Trainable parameters of an adapter stack.
#[pyclass(name = "Adapter", module = "qadapt")]
struct PyAdapter {
    params: AdapterParams,
}

#[pymethods]
impl PyAdapter {
    #[staticmethod]
    fn identity(config: &PyAdapterConfig) -> PyResult<Self> {
        Ok(PyAdapter {
            params: AdapterParams::identity(&config.inner).py()?,
        })
    }

    /// Identity start plus `scale * N(0, 1)` on every parameter.
    #[staticmethod]
    #[pyo3(signature = (config, seed, scale = 0.3))]
    fn random(config: &PyAdapterConfig, seed: u64, scale: f64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyAdapter {
            params: AdapterParams::random(&config.inner, &mut rng, scale).py()?,
        })
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.params.num_params()
    }

    fn params(&self) -> Vec<f64> {
        self.params.to_vec()
    }

    fn set_params(&mut self, values: Vec<f64>) -> PyResult<()> {
        self.params.set_from_slice(&values).py()
    }

    /// Dense `d x d` product of the stacked adapters.
    fn matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_matrix(&self.params.matrix().py()?))
    }

    /// `adapter @ weight`.
    fn apply(&self, weight: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let w = matrix_arg(weight)?;
        let m = self.params.matrix().py()?;
        if w.nrows() != m.ncols() {
            return Err(PyValueError::new_err(format!(
                "weight has {} rows, adapter expects {}",
                w.nrows(),
                m.ncols()
            )));
        }
        Ok(from_matrix(&(m * w)))
    }

    /// Gradient with respect to `params()` given the gradient of a loss with
    /// respect to `matrix()`.
    fn pullback(&self, grad: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.params.pullback(&matrix_arg(grad)?).py()
    }

    #[pyo3(signature = (path, text = false))]
    fn save(&self, path: &str, text: bool) -> PyResult<()> {
        let header = qadapt::export::MatrixHeader::from(self.params.config());
        let m = self.params.matrix().py()?;
        let f = std::fs::File::create(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        let w = std::io::BufWriter::new(f);
        if text {
            qadapt::export::write_text(w, &header, &m).py()
        } else {
            qadapt::export::write_binary(w, &header, &m).py()
        }
    }
}

#[pyclass(name = "Circuit", module = "qadapt", frozen)]
struct PyCircuit {
    layout: CircuitLayout,
}

#[pymethods]
impl PyCircuit {
    #[staticmethod]
    fn pyramid(n: usize) -> PyResult<Self> {
        Ok(PyCircuit {
            layout: quantum::pyramid_layout(n).py()?,
        })
    }

    #[staticmethod]
    fn butterfly(n: usize) -> PyResult<Self> {
        Ok(PyCircuit {
            layout: quantum::butterfly_layout(n).py()?,
        })
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.layout.n
    }

    #[getter]
    fn num_angles(&self) -> usize {
        self.layout.num_angles()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.layout.depth()
    }

    /// `(i, j, angle_index)` per gate, in application order.
    fn gates(&self) -> Vec<(usize, usize, usize)> {
        self.layout.gates.iter().map(|g| (g.i, g.j, g.angle)).collect()
    }

    fn unary_matrix(&self, theta: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_matrix(&quantum::layer_unary_matrix(&self.layout, &theta).py()?))
    }

    #[pyo3(signature = (theta, k, gate = "fbs"))]
    fn sector_action(&self, theta: Vec<f64>, k: usize, gate: &str) -> PyResult<Vec<Vec<f64>>> {
        let kind = match gate {
            "fbs" => GateKind::Fbs,
            "rbs" => GateKind::Rbs,
            other => return Err(PyValueError::new_err(format!("gate must be 'fbs' or 'rbs', got {other:?}"))),
        };
        Ok(from_matrix(&quantum::sector_action(&self.layout, &theta, k, kind).py()?))
    }

    /// Largest deviation between the simulated weight-`k` action and the
    /// `k`-th compound of the unary matrix.
    fn equivalence_error(&self, theta: Vec<f64>, k: usize) -> PyResult<f64> {
        quantum::verify_compound_equivalence(&self.layout, &theta, k).py()
    }
}

/// Trains `config` on a linear task planted from the same family.
#[pyfunction]
#[pyo3(signature = (config, steps = 1000, lr = 0.05, seed = 0))]
fn train_planted<'py>(
    py: Python<'py>,
    config: &PyAdapterConfig,
    steps: usize,
    lr: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let task = make_realizable_task(config.inner.d, &config.inner, seed).py()?;
    let opts = TrainOptions {
        steps,
        lr,
        momentum: 0.0,
        log_every: 1,
    };
    let h = train(&task, &Student::Compound(config.inner.clone()), &opts, seed).py()?;
    let out = PyDict::new(py);
    out.set_item("initial_loss", h.initial_loss())?;
    out.set_item("final_loss", h.final_loss())?;
    out.set_item("losses", h.states.iter().map(|s| s.loss).collect::<Vec<_>>())?;
    out.set_item("num_params", h.num_params)?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "qadapt")]
fn qadapt_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(binom, m)?)?;
    m.add_function(wrap_pyfunction!(fit_base_dim, m)?)?;
    m.add_function(wrap_pyfunction!(compound, m)?)?;
    m.add_function(wrap_pyfunction!(cayley, m)?)?;
    m.add_function(wrap_pyfunction!(loader_cost, m)?)?;
    m.add_function(wrap_pyfunction!(hw_basis, m)?)?;
    m.add_function(wrap_pyfunction!(train_planted, m)?)?;
    m.add_class::<PyAdapterConfig>()?;
    m.add_class::<PyAdapter>()?;
    m.add_class::<PyCircuit>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let m = to_matrix(&rows).unwrap();
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(from_matrix(&m), rows);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(to_matrix(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
