use pyo3::ffi::c_str;
use pyo3::prelude::*;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyModule>)>(f: F) {
    pyo3::append_to_inittab!(hwrec_module);
    Python::initialize();
    Python::attach(|py| {
        let m = py.import("hwrec_py").unwrap();
        f(py, &m);
    });
}

#[pymodule]
#[pyo3(name = "hwrec_py")]
fn hwrec_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    hwrec_py::hwrec_py(m)
}

#[test]
fn bindings_round_trip_through_python() {
    with_module(|py, m| {
        let globals = pyo3::types::PyDict::new(py);
        globals.set_item("hw", m).unwrap();
        py.run(
            c_str!(
                r#"
import json
assert abs(hw.f1_score(0.88, 0.85) - 0.8647) < 5e-5
fwd = hw.Ranking.from_scores({"a": 2, "b": 1, "c": 0})
rev = hw.Ranking.from_scores({"a": 0, "b": 1, "c": 2})
assert hw.kendall_tau(fwd, rev) == -1.0
tied = hw.combine_selectors([("task", fwd), ("hardware", rev)])
assert tied.scores == [1.0, 1.0, 1.0]
w = hw.World.generate(json.dumps({"n_models": 4, "n_hardware": 1, "n_tasks": 1, "dims": 2, "seed": 3}))
cfg = json.dumps({"weights": {"execution_time_ms": 1.0}, "thresholds": {"execution_time_ms": 100}})
measured = hw.weighted_copeland(w.benchmark("t00", "hw00"), cfg)
assert measured.ids == w.true_ranking("t00", "hw00", cfg).ids
try:
    hw.World.generate("{")
    raise AssertionError("accepted malformed JSON")
except ValueError:
    pass
try:
    w.true_ranking("nope", "hw00", cfg)
    raise AssertionError("accepted unknown id")
except KeyError:
    pass
"#
            ),
            Some(&globals),
            None,
        )
        .unwrap();
    });
}
