//! Python bindings: states, privacy diagnostics, distillation, classical
//! privacy amplification, the coding bound and the experiment runner.
//!
//! Composite results cross the boundary as plain dicts built from the core
//! crate's serde representations.

use privamp_core::coding::{self, CodingInstance, Decoder};
use privamp_core::distill::{self as pa, DistillOptions, Typicality};
use privamp_core::experiment::{self, ExperimentConfig};
use privamp_core::infotheory;
use privamp_core::privstate;
use privamp_core::states::{self, Subsystem};
use privamp_core::{BinaryMatrix, ComplexMatrix, Error, Label, MultipartiteState, C64};
use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyComplex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::ResourceCap { .. } => PyMemoryError::new_err(e.to_string()),
        Error::Io(_) | Error::Json(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for privamp_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn serialized<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

type PyMatrix<'py> = Vec<Vec<Bound<'py, PyComplex>>>;

fn matrix_to_py<'py>(py: Python<'py>, m: &ComplexMatrix) -> PyMatrix<'py> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| PyComplex::from_doubles(py, m[(i, j)].re, m[(i, j)].im)).collect())
        .collect()
}

fn parse_label(name: &str) -> PyResult<Label> {
    serde_json::from_value(json!(name)).map_err(|_| PyValueError::new_err(format!("unknown label {name:?}")))
}

fn parse_hash(rows: &[String], cols: usize) -> PyResult<BinaryMatrix> {
    if rows.is_empty() {
        return Ok(BinaryMatrix::zeros(0, cols));
    }
    BinaryMatrix::from_bitstrings(rows).py()
}

fn parse_typicality(pgm: &str, delta: f64, n: usize) -> PyResult<Typicality> {
    match pgm {
        "weighted" => Ok(Typicality::Weighted),
        "off" => Ok(Typicality::Off),
        "typical" => Ok(Typicality::On { delta, copies: n }),
        other => Err(PyValueError::new_err(format!("pgm must be weighted, off or typical, got {other:?}"))),
    }
}

/// A pure or mixed state on labelled tensor factors.
#[pyclass(name = "State", module = "privamp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyState {
    inner: MultipartiteState,
}

#[pymethods]
impl PyState {
    /// Pure state from amplitudes and `(label, dim)` factors, normalising.
    #[staticmethod]
    fn pure(amplitudes: Vec<C64>, factors: Vec<(String, usize)>) -> PyResult<Self> {
        let subs = factors
            .iter()
            .map(|(l, d)| Ok(Subsystem(parse_label(l)?, *d)))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = MultipartiteState::pure_normalized(ComplexMatrix::ket(amplitudes), subs).py()?;
        Ok(Self { inner })
    }

    /// Two-state collective attack, Eve holding `|0>` or `cos t|0> + sin t|1>`.
    #[staticmethod]
    fn theta_attack(theta: f64) -> PyResult<Self> {
        Ok(Self { inner: states::theta_attack(theta).py()? })
    }

    /// Collective attack with Eve's states `phi0`, `phi1`.
    #[staticmethod]
    fn attack(phi0: Vec<C64>, phi1: Vec<C64>) -> PyResult<Self> {
        let inner = states::attack_state(&ComplexMatrix::ket(phi0), &ComplexMatrix::ket(phi1)).py()?;
        Ok(Self { inner })
    }

    /// Random private state with Haar twisting and shield/Eve sizes `ds`, `de`.
    #[staticmethod]
    #[pyo3(signature = (ds, de, seed=0))]
    fn random_private(ds: usize, de: usize, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = experiment::random_twisting(ds, de, &mut rng).py()?;
        Ok(Self { inner: states::private_state(&t).py()? })
    }

    #[staticmethod]
    fn bell() -> Self {
        Self { inner: states::bell_state() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Purification on A, B, S, E (pure inputs are returned canonically ordered).
    fn purified(&self) -> PyResult<Self> {
        Ok(Self { inner: pa::purified(&self.inner).py()? })
    }

    fn marginal(&self, labels: Vec<String>) -> PyResult<Self> {
        let labels = labels.iter().map(|l| parse_label(l)).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: self.inner.marginal(&labels).py()? })
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.subsystems().iter().map(|s| format!("{:?}", s.0)).collect()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    #[getter]
    fn is_pure(&self) -> bool {
        self.inner.is_pure()
    }

    /// Density matrix as nested lists of complex numbers.
    fn density<'py>(&self, py: Python<'py>) -> PyMatrix<'py> {
        matrix_to_py(py, &self.inner.density())
    }

    fn __repr__(&self) -> String {
        let parts: Vec<String> =
            self.inner.subsystems().iter().map(|s| format!("{:?}{}", s.0, s.1)).collect();
        format!("State({}, pure={})", parts.join(" "), self.inner.is_pure())
    }
}

/// `{"rate_pa", "rate_psd"}` for a state on A, B, E or its purification.
#[pyfunction]
fn key_rates<'py>(py: Python<'py>, state: &PyState) -> PyResult<Bound<'py, PyAny>> {
    let psi = pa::purified(&state.inner).py()?;
    serialized(py, &infotheory::key_rates(&psi).py()?)
}

/// Both private-state characterisations with their condition deviations.
#[pyfunction]
#[pyo3(signature = (state, tol=1e-8))]
fn diagnose<'py>(py: Python<'py>, state: &PyState, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    serialized(py, &privstate::diagnose(&state.inner, tol).py()?)
}

/// Twisting data recovered from a private state: `(V^0, V^1, xi)`.
#[pyfunction]
fn extract_twisting<'py>(
    py: Python<'py>,
    state: &PyState,
) -> PyResult<(Vec<PyMatrix<'py>>, PyState)> {
    let t = privstate::extract_twisting(&state.inner).py()?;
    let vks = t.vks.iter().map(|v| matrix_to_py(py, v)).collect();
    Ok((vks, PyState { inner: t.xi }))
}

/// `(H(Z_A|E), H(X_A|BS))`.
#[pyfunction]
fn uncertainty_check(state: &PyState) -> PyResult<(f64, f64)> {
    privstate::uncertainty_check(&state.inner).py()
}

/// Distance of a state on A, B, E from the nearest perfect key.
#[pyfunction]
fn epsilon_privacy(state: &PyState) -> PyResult<f64> {
    privstate::epsilon_privacy(&state.inner).py()
}

/// Distils `n` copies announcing `m` hashed bits; `hash` (bit strings) fixes
/// the hash, otherwise a random full-rank one is drawn.
#[pyfunction]
#[pyo3(signature = (state, n, m, seed=0, pgm="weighted", delta=0.1, hash=None))]
#[allow(clippy::too_many_arguments)]
fn distill<'py>(
    py: Python<'py>,
    state: &PyState,
    n: usize,
    m: usize,
    seed: u64,
    pgm: &str,
    delta: f64,
    hash: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = DistillOptions { typicality: parse_typicality(pgm, delta, n)?, ..Default::default() };
    let out = match hash {
        Some(rows) => {
            let u = parse_hash(&rows, n)?;
            if u.rows() != m {
                return Err(PyValueError::new_err(format!("hash has {} rows, expected {m}", u.rows())));
            }
            pa::distill_with_hash(&state.inner, &u, &mut rng, opts)
        }
        None => pa::distill(&state.inner, n, m, &mut rng, opts),
    }
    .py()?;
    let v = json!({
        "n": out.n,
        "m": out.m,
        "hash": out.hash.to_bitstrings(),
        "announced_bits": out.announced_bits,
        "success_probability": out.success_probability,
        "success": out.success,
        "privacy_epsilon": out.privacy_epsilon,
        "trace_distance": out.trace_distance,
        "trace_distance_bound": out.trace_distance_bound,
        "rate_used": out.rate_used,
    });
    to_py(py, &v)
}

/// Hashes measured keys of `n` copies with `key_map` (bit strings).
#[pyfunction]
fn classical_pa<'py>(py: Python<'py>, state: &PyState, n: usize, key_map: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let v = parse_hash(&key_map, n)?;
    let out = pa::classical_pa(&state.inner, n, &v).py()?;
    let v = json!({
        "key_distribution": out.key_distribution,
        "eve_conditionals": out.eve_conditionals,
        "epsilon": out.epsilon,
    });
    to_py(py, &v)
}

/// Compares classical privacy amplification with the virtual path for `hash`.
#[pyfunction]
#[pyo3(signature = (state, n, hash, seed=0))]
fn equivalence_check<'py>(
    py: Python<'py>,
    state: &PyState,
    n: usize,
    hash: Vec<String>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let u = parse_hash(&hash, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    serialized(py, &pa::equivalence_check(&state.inner, n, &u, &mut rng).py()?)
}

#[pyfunction]
fn announced_bits_for_rate(n: usize, rate: f64, margin: f64) -> usize {
    pa::announced_bits_for_rate(n, rate, margin)
}

/// 2-universal linear hash as bit strings.
#[pyfunction]
#[pyo3(signature = (m, n, seed=0, full_rank=true))]
fn random_hash(m: usize, n: usize, seed: u64, full_rank: bool) -> PyResult<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = if full_rank {
        privamp_core::gf2::random_full_rank_hash(m, n, &mut rng).py()?
    } else {
        privamp_core::gf2::random_linear_hash(m, n, &mut rng)
    };
    Ok(h.to_bitstrings())
}

fn coding_instance(theta: f64, n: usize, output_bits: Option<usize>, delta: f64, epsilon: f64) -> PyResult<CodingInstance> {
    let ens = coding::two_state_ensemble(theta);
    let bits = match output_bits {
        Some(b) => b,
        None => {
            let h = infotheory::shannon_entropy(&ens.probabilities());
            let chi = infotheory::holevo_chi(&ens).py()?;
            coding::choose_output_bits(h, chi, delta, n).py()?
        }
    };
    CodingInstance::new(ens, n, bits, delta, epsilon).py()
}

fn parse_decoder(decoder: &str) -> PyResult<Decoder> {
    match decoder {
        "rejecting" => Ok(Decoder::Rejecting),
        "plain" => Ok(Decoder::Plain),
        other => Err(PyValueError::new_err(format!("decoder must be rejecting or plain, got {other:?}"))),
    }
}

/// Coding bound and exact hashed decoding error for the ensemble
/// `{1/2 |0>, 1/2 (cos t|0> + sin t|1>)}`; the error is averaged over the
/// whole linear family when `hash` is omitted.
#[pyfunction]
#[pyo3(signature = (theta, n, delta=0.1, epsilon=0.05, output_bits=None, hash=None, decoder="rejecting"))]
#[allow(clippy::too_many_arguments)]
fn coding_bound<'py>(
    py: Python<'py>,
    theta: f64,
    n: usize,
    delta: f64,
    epsilon: f64,
    output_bits: Option<usize>,
    hash: Option<Vec<String>>,
    decoder: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let inst = coding_instance(theta, n, output_bits, delta, epsilon)?;
    let decoder = parse_decoder(decoder)?;
    let exact = match hash {
        Some(rows) => coding::coding_error_exact(&inst, &parse_hash(&rows, n)?, decoder),
        None => coding::family_average_error(&inst, decoder),
    }
    .py()?;
    let v = json!({
        "n": n,
        "output_bits": inst.output_bits,
        "exact_error": exact,
        "bound": coding::coding_error_bound(&inst).py()?,
    });
    to_py(py, &v)
}

/// Runs a batch experiment from a config dict (same keys as the CLI) and
/// returns `(report_text, failures)`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<(String, Bound<'py, PyAny>)> {
    let text: String = py.import("json")?.call_method1("dumps", (config,))?.extract()?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))?;
    let (report, rendered) = experiment::run_and_write(&cfg).py()?;
    Ok((rendered, serialized(py, &report.failures)?))
}

#[pymodule]
fn privamp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_function(wrap_pyfunction!(key_rates, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    m.add_function(wrap_pyfunction!(extract_twisting, m)?)?;
    m.add_function(wrap_pyfunction!(uncertainty_check, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_privacy, m)?)?;
    m.add_function(wrap_pyfunction!(distill, m)?)?;
    m.add_function(wrap_pyfunction!(classical_pa, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence_check, m)?)?;
    m.add_function(wrap_pyfunction!(announced_bits_for_rate, m)?)?;
    m.add_function(wrap_pyfunction!(random_hash, m)?)?;
    m.add_function(wrap_pyfunction!(coding_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
