//! Python bindings: gain matrices, schedulers, the circuit simulator, policy
//! models, training and the experiment commands.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use qsched::channel::{self, SystemConfig};
use qsched::config::RunConfig;
use qsched::experiment::{self, SweepAxis};
use qsched::model::{top_l_select, AnyModel, CnnModel, HybridModel, ModelFamily, PolicyModel};
use qsched::quantum::{self as q, CircuitParams};
use qsched::rate::{self, Objective, ScheduleVector};
use qsched::training::{self, EpochMetrics, TrainConfig};
use qsched::{rng, Error};

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Numerical(_) => PyArithmeticError::new_err(msg),
        Error::Data(_) | Error::Io(_) | Error::Csv(_) => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for qsched::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn schedule(bits: Vec<u8>) -> PyResult<ScheduleVector> {
    ScheduleVector::from_ints(&bits).py()
}

fn bits(xi: &ScheduleVector) -> Vec<u32> {
    xi.to_ints().into_iter().map(u32::from).collect()
}

/// Nonnegative `K x K` beam-gain matrix with a shared linear SNR.
#[pyclass(name = "GainMatrix", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyGainMatrix {
    inner: channel::GainMatrix,
}

#[pymethods]
impl PyGainMatrix {
    #[new]
    #[pyo3(signature = (rows, beta = 1.0))]
    fn new(rows: Vec<Vec<f64>>, beta: f64) -> PyResult<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(PyValueError::new_err("gain matrix must be square"));
        }
        let inner = channel::GainMatrix::with_uniform_beta(k, rows.concat(), beta).py()?;
        Ok(PyGainMatrix { inner })
    }

    #[getter]
    fn users(&self) -> usize {
        self.inner.users()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()[0]
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.entries().chunks(self.inner.users()).map(<[f64]>::to_vec).collect()
    }

    fn approx_rates(&self, schedule_bits: Vec<u8>) -> PyResult<Vec<f64>> {
        Ok(rate::approx_rates(&self.inner, &schedule(schedule_bits)?))
    }

    fn sum_rate(&self, schedule_bits: Vec<u8>) -> PyResult<f64> {
        Ok(rate::sum_rate(&self.inner, &schedule(schedule_bits)?))
    }

    /// Best size-`budget` schedule and its sum-rate.
    fn exhaustive(&self, budget: usize) -> PyResult<(Vec<u32>, f64)> {
        let (xi, v) = rate::exhaustive_best_schedule(&self.inner, budget, Objective::SumRate).py()?;
        Ok((bits(&xi), v))
    }

    fn greedy(&self, budget: usize) -> Vec<u32> {
        bits(&rate::greedy_schedule(&self.inner, budget))
    }

    fn random_mean(&self, budget: usize) -> PyResult<f64> {
        rate::random_schedule_mean(&self.inner, budget).py()
    }

    fn __repr__(&self) -> String {
        format!("GainMatrix(users={}, beta={})", self.inner.users(), self.beta())
    }
}

/// Sample `n` feature matrices from the correlated Rician channel.
#[pyfunction]
#[pyo3(signature = (n, users = 4, antennas = 16, budget = 2, snr_db = 20.0, rician_k = 10.0, rho = 0.5, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn sample_gains(
    n: usize,
    users: usize,
    antennas: usize,
    budget: usize,
    snr_db: f64,
    rician_k: f64,
    rho: f64,
    seed: u64,
) -> PyResult<Vec<PyGainMatrix>> {
    let sys = SystemConfig { users, antennas, budget, snr_db, rician_k, rho, seed, ..Default::default() };
    let model = channel::ChannelModel::new(&sys).py()?;
    (0..n as u64)
        .map(|i| Ok(PyGainMatrix { inner: model.sample(qsched::dataset::SAMPLE_TAG, i).py()?.gains }))
        .collect()
}

/// Per-qubit Pauli-Z readout of the encoded variational circuit.
#[pyfunction]
fn run_circuit(z_in: Vec<f64>, layers: usize, theta: Vec<f64>) -> PyResult<Vec<f64>> {
    let params = CircuitParams::new(layers, z_in.len(), theta).py()?;
    q::run_circuit(&z_in, &params).py()
}

/// Parameter-shift Jacobian as `(d_theta, d_input)`; row `p` holds `d z_out / d angle_p`.
#[pyfunction]
fn circuit_gradients(z_in: Vec<f64>, layers: usize, theta: Vec<f64>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = z_in.len();
    let params = CircuitParams::new(layers, n, theta).py()?;
    let jac = q::circuit_gradients(&z_in, &params).py()?;
    let rows = |flat: &[f64]| flat.chunks(n).map(<[f64]>::to_vec).collect();
    Ok((rows(&jac.d_theta), rows(&jac.d_input)))
}

/// A scheduling policy: the hybrid quantum model or the CNN benchmark.
#[pyclass(name = "Policy", skip_from_py_object)]
#[derive(Clone)]
pub struct PyPolicy {
    inner: AnyModel,
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (users, family = "hybrid", qubits = 8, layers = 2, seed = 42))]
    fn new(users: usize, family: &str, qubits: usize, layers: usize, seed: u64) -> PyResult<Self> {
        let mut r = rng::substream(seed, "init", 0);
        let inner = match family.parse::<ModelFamily>().py()? {
            ModelFamily::Hybrid => HybridModel::init(users, qubits, layers, &mut r).into(),
            ModelFamily::Cnn => CnnModel::init(users, &mut r).into(),
        };
        Ok(PyPolicy { inner })
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family().to_string()
    }

    #[getter]
    fn users(&self) -> usize {
        self.inner.users()
    }

    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.inner.flat_params()
    }

    fn set_flat_params(&mut self, flat: Vec<f64>) -> PyResult<()> {
        self.inner.set_flat_params(&flat).py()
    }

    fn logits(&self, g: &PyGainMatrix) -> PyResult<Vec<f64>> {
        self.inner.logits(&g.inner).py()
    }

    /// Top-`budget` schedule from the logits.
    fn schedule(&self, g: &PyGainMatrix, budget: usize) -> PyResult<Vec<u32>> {
        Ok(bits(&top_l_select(&self.logits(g)?, budget)))
    }

    /// Train in place; returns one metrics dict per epoch.
    #[pyo3(signature = (train, val, epochs = 30, budget = 2, seed = 42, learning_rate = 0.01, batch_size = 16))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        train: Vec<PyGainMatrix>,
        val: Vec<PyGainMatrix>,
        epochs: usize,
        budget: usize,
        seed: u64,
        learning_rate: f64,
        batch_size: usize,
    ) -> PyResult<Vec<BTreeMap<&'static str, f64>>> {
        let cfg = TrainConfig { epochs, budget, seed, learning_rate, batch_size, ..Default::default() };
        let tr: Vec<_> = train.into_iter().map(|g| g.inner).collect();
        let va: Vec<_> = val.into_iter().map(|g| g.inner).collect();
        let model = self.inner.clone();
        let out = py.detach(move || training::train(model, &tr, &va, &cfg)).py()?;
        self.inner = out.best.model;
        Ok(out.history.iter().map(metrics_dict).collect())
    }

    fn __repr__(&self) -> String {
        format!("Policy(family={}, users={}, params={})", self.family(), self.users(), self.param_count())
    }
}

fn metrics_dict(m: &EpochMetrics) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("epoch", m.epoch as f64),
        ("mean_loss", m.mean_loss),
        ("mean_reward", m.mean_reward),
        ("val_det", m.val_det),
        ("val_sto", m.val_sto),
        ("epsilon", m.epsilon),
        ("alpha", m.alpha),
        ("seconds", m.seconds),
    ])
}

fn run_config(config: &str, overrides: Vec<String>, out_dir: Option<PathBuf>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::parse_text(config).py()?;
    for o in &overrides {
        cfg.apply_override(o).py()?;
    }
    if let Some(out) = out_dir {
        cfg.out_dir = out;
    }
    cfg.validate().py()?;
    Ok(cfg)
}

/// Run one experiment command from config text; returns a short summary dict.
#[pyfunction]
#[pyo3(signature = (command, config = "", overrides = Vec::new(), out_dir = None, checkpoint = None, axis = None, values = Vec::new()))]
#[allow(clippy::too_many_arguments)]
fn run_command(
    py: Python<'_>,
    command: &str,
    config: &str,
    overrides: Vec<String>,
    out_dir: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    axis: Option<String>,
    values: Vec<f64>,
) -> PyResult<BTreeMap<String, f64>> {
    let cfg = run_config(config, overrides, out_dir)?;
    let command = command.to_string();
    py.detach(move || -> qsched::Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        match command.as_str() {
            "gen" => {
                experiment::cmd_gen(&cfg)?;
                out.insert("samples".into(), (cfg.train_samples + cfg.val_samples) as f64);
            }
            "train" => {
                let r = experiment::cmd_train(&cfg)?;
                out.insert("val_det".into(), r.val_det);
                out.insert("best_epoch".into(), r.best_epoch as f64);
                out.insert("param_count".into(), r.param_count as f64);
            }
            "eval" => {
                let path = checkpoint.unwrap_or_else(|| cfg.out_dir.clone());
                let r = experiment::cmd_eval(&cfg, &path)?;
                out.insert("policy_det".into(), r.mean_det);
                out.insert("policy_sto".into(), r.mean_sto);
                out.insert("greedy".into(), r.mean_greedy);
                if let Some(o) = r.mean_oracle {
                    out.insert("oracle".into(), o);
                }
                if let Some(o) = r.mean_random {
                    out.insert("random".into(), o);
                }
            }
            "sweep" => {
                let axis: SweepAxis = axis.as_deref().unwrap_or("snr").parse()?;
                for r in experiment::cmd_sweep(&cfg, axis, &values)? {
                    out.insert(format!("{}", r.axis_value), r.mean_sumrate);
                }
            }
            "compare" => {
                let r = experiment::cmd_compare(&cfg)?;
                out.insert("win_fraction".into(), r.win_fraction());
                out.insert("cells".into(), r.cells.len() as f64);
            }
            other => return Err(Error::Config(format!("unknown command '{other}'"))),
        }
        Ok(out)
    })
    .py()
}

#[pymodule]
pub fn qsched_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGainMatrix>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(sample_gains, m)?)?;
    m.add_function(wrap_pyfunction!(run_circuit, m)?)?;
    m.add_function(wrap_pyfunction!(circuit_gradients, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    m.add("MAX_QUBITS", q::MAX_QUBITS)?;
    Ok(())
}
