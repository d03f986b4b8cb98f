use pyo3::prelude::*;

use mhdc_py::config_from_json;

fn python(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = PyModule::new(py, "mhdc_py").unwrap();
        mhdc_py::mhdc_py(&m).unwrap();
        py.import("sys").unwrap().getattr("modules").unwrap().set_item("mhdc_py", m).unwrap();
        if let Err(e) = py.run(code, None, None) {
            e.display(py);
            panic!("python check failed");
        }
    });
}

#[test]
fn json_overrides_fill_defaults() {
    let cfg = config_from_json(r#"{"n": 64, "mu": 0.1}"#).unwrap();
    assert_eq!(cfg.n, 64);
    assert_eq!(cfg.d, 2);
    assert!(config_from_json(r#"{"nn": 64}"#).is_err());
    assert!(config_from_json(r#"{"n": 33}"#).is_err());
}

#[test]
fn bindings_from_python() {
    python(
        cr#"
import mhdc_py, json, os, tempfile
cfg = mhdc_py.RunConfig(n=64, mu=0.1, dt=0.1, t_end=2.0, sample_stride=10)
assert mhdc_py.RunConfig.from_toml(cfg.to_toml()) == cfg
assert cfg.to_dict()["n"] == 64
try:
    mhdc_py.RunConfig(bogus=1)
    raise AssertionError("unknown key accepted")
except ValueError:
    pass
s = mhdc_py.generate(cfg.replace(family="alfven_linear"))
assert s.shape == [64, 8] and s.hn_norm()[1] == 0.0
report, last = mhdc_py.simulate(cfg.replace(family="alfven_linear"))
assert report["passed"] and report["alfven_error"] < 1e-10
a = mhdc_py.Array([2, 3], ["i", "j"], [0.5, 1, 2, 3, 4, 5])
with tempfile.TemporaryDirectory() as d:
    p = os.path.join(d, "a.mhdc")
    a.save(p)
    b = mhdc_py.Array.load(p)
    assert b.dims == [2, 3] and b.data == a.data
    try:
        mhdc_py.Array.load(os.path.join(d, "missing.mhdc"))
        raise AssertionError("missing file loaded")
    except OSError:
        pass
"#,
    );
}
