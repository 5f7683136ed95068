use std::ffi::CString;

use compass::compass;
use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn smoke_script_runs_in_embedded_interpreter() {
    pyo3::append_to_inittab!(compass);
    Python::initialize();
    let code = CString::new(include_str!("../python/smoke_test.py")).unwrap();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("__name__", "__main__").unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.display(py);
            panic!("smoke script failed: {e}");
        }
        py.run(c"import sys; sys.stdout.flush()", None, None).unwrap();
    });
}
