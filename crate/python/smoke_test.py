"""Smoke test for the `qab` extension module.

Build and run from the repository root:

    cargo build --release -p qab-py --features extension-module
    cp target/release/libqab.so python/qab.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import qab


def main():
    cfg = qab.Config.table_one()
    assert cfg.v_dc == [200.0, 180.0, 220.0, 250.0]
    assert abs(cfg.conversion_ratio(2) - 0.9) < 1e-12

    rep = qab.dispatch(cfg)
    assert abs(sum(rep["p"]) - rep["p_copper"]) <= 1e-6 * rep["p_copper"]

    sol = qab.solve(cfg, -rep["p"][1], -rep["p"][3], p13_target=rep["p13"])
    for k in range(1, 4):
        assert abs(sol["delta"][k] - cfg.delta[k]) < 1e-5, sol["delta"]

    z = qab.zvs(qab.Config.low_power_experiment())
    assert z["zvs"] == [True, False, True, False], z
    assert all(i < 0 for i in z["i_sw"])

    wave = qab.simulate(cfg, cycles=1, samples_per_cycle=256)
    assert len(wave["t"]) == 257 and len(wave["i"]) == 4
    assert all(math.isfinite(v) for v in wave["vac"])

    same = qab.Config.from_toml(cfg.to_toml())
    assert same.l_mag == cfg.l_mag

    bad = qab.Config.table_one()
    bad.delta = [0.0, 1.5, 0.0, 0.0]
    try:
        qab.dispatch(bad)
    except qab.ConfigError as e:
        assert "delta" in str(e).lower() or "phase" in str(e).lower(), e
    else:
        raise AssertionError("out-of-range phase shift accepted")

    try:
        qab.solve(cfg, 1e6, 0.0)
    except qab.NonConvergenceError:
        pass
    else:
        raise AssertionError("1 MW demand converged")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
