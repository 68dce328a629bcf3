use std::ffi::CString;

use pycharcd::pycharcd;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) -> PyResult<()> {
    pyo3::append_to_inittab!(pycharcd);
    Python::attach(|py| {
        let globals = PyDict::new(py);
        py.run(&CString::new(code).unwrap(), Some(&globals), None)
    })
}

#[test]
fn module_round_trip() {
    run(r#"
import math, os, tempfile
import pycharcd

assert pycharcd.linearize([2.0, -3.0, 0.5]) == [1.0, -1.25, 0.25]
assert abs(sum(pycharcd.linearize([0.3, -1.1, 2.0], "tanh")) - math.tanh(1.2)) < 1e-12
h, df, p = pycharcd.kruskal_wallis({"a": [1, 2, 3], "b": [4, 5, 6], "c": [7, 8, 9]})
assert (h, df) == (7.2, 2)

model, test, history = pycharcd.train_toy(words=200, max_epochs=2)
word = test[0][0]
beta, gamma = model.decompose(word, [])
assert all(b == 0.0 for b in beta)
with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "m.bin")
    model.save(path)
    assert pycharcd.Model.load(path).logits(word) == model.logits(word)
try:
    model.singleton_scores(word, "Gender", "Fem")
    raise AssertionError("unknown class accepted")
except pycharcd.CharcdError:
    pass
"#)
    .unwrap();
}
