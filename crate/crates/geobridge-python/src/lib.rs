use pyo3::prelude::*;

#[pymodule]
fn geobridge_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
