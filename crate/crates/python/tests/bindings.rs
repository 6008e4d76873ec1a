use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(qsched_py::qsched_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("qs", m).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) -> PyResult<()> {
    let code = std::ffi::CString::new(code).unwrap();
    py.run(&code, Some(globals), None)
}

#[test]
fn rates_and_schedulers_round_trip() {
    with_module(|py, g| {
        run(
            py,
            g,
            "import math\n\
             m = qs.GainMatrix([[4.0, 0.0], [0.0, 1.0]], beta=10.0)\n\
             assert abs(m.sum_rate([1, 1]) - math.log2(41.0) - math.log2(11.0)) < 1e-12\n\
             best, v = m.exhaustive(1)\n\
             assert best == [1, 0] and m.greedy(1) == [1, 0]\n\
             assert abs(m.random_mean(1) - 0.5 * (math.log2(41.0) + math.log2(11.0))) < 1e-12\n",
        )
        .unwrap();
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, g| {
        let err = run(py, g, "qs.GainMatrix([[1.0, 2.0]])").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let err = run(py, g, "qs.run_command('train', 'qubits = 0\\n')").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let err = run(py, g, "qs.run_command('eval', '', out_dir='/nonexistent/qsched')").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyOSError>(py));
    });
}

#[test]
fn policy_params_round_trip() {
    with_module(|py, g| {
        run(
            py,
            g,
            "p = qs.Policy(3, family='hybrid', qubits=3, layers=1, seed=5)\n\
             x = p.flat_params()\n\
             assert len(x) == p.param_count()\n\
             p.set_flat_params([0.0] * len(x))\n\
             assert p.flat_params() == [0.0] * len(x)\n\
             m = qs.GainMatrix([[1.0, 0.1, 0.2], [0.1, 2.0, 0.0], [0.0, 0.3, 3.0]])\n\
             assert sum(p.schedule(m, 2)) == 2\n",
        )
        .unwrap();
    });
}
