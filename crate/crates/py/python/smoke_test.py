"""Smoke test for the mhdc_py extension: build with `maturin develop` or
`pip install --no-build-isolation ./crates/py`, then run this script."""

import math
import os
import sys
import tempfile

import mhdc_py


def check(cond, msg):
    if not cond:
        print(f"FAIL: {msg}")
        sys.exit(1)
    print(f"ok   {msg}")


def main():
    cfg = mhdc_py.RunConfig(n=64, mu=0.1, dt=0.1, t_end=4.0, sample_stride=10)
    check(mhdc_py.RunConfig.from_toml(cfg.to_toml()) == cfg, "config toml roundtrip")
    check(cfg.replace(seed=3).hash() != cfg.hash(), "hash depends on seed")
    try:
        cfg.replace(n=33)
        check(False, "odd n rejected")
    except ValueError as e:
        check("even" in str(e), "odd n rejected")

    ledger = mhdc_py.estimate_constants(cfg)["ledger"]
    check(ledger["c0"]["value"] > 1.0, f"C0 = {ledger['c0']['value']:.3f} > 1")

    report, state = mhdc_py.run_verify(cfg)
    check(report["passed"], f"verify passed ({len(report['records'])} samples)")
    check(all(r["excess_comparison"] <= r["comparison_tol"] for r in report["records"]), "comparison ordering")

    alfven = cfg.replace(family="alfven_linear")
    sim, last = mhdc_py.simulate(alfven)
    check(sim["alfven_error"] < 1e-10, f"Alfvén error {sim['alfven_error']:.1e}")
    check(last.hn_norm()[1] == 0.0, "z- stays zero")

    constants, times, rho1 = mhdc_py.construct(cfg)
    check(rho1.dims[:2] == [len(times), 2], f"rho1 bundle dims {rho1.dims}")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "state.mhdc")
        arr = state.to_array()
        arr.save(path)
        back = mhdc_py.Array.load(path)
        check(back.data == arr.data and back.labels == arr.labels, "container roundtrip")
        _, manifest = mhdc_py.verify_to_dir(cfg, os.path.join(tmp, "run"))
        check("manifest.json" in manifest["files"], "run directory written")

    check(math.isfinite(state.energy()), f"final energy {state.energy():.3e}")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
