"""Compiled and fallback kernels must agree."""
import os

import numpy as np
import pytest

from gsn import _pykernels, kernels
from gsn.imagegraph import rgb_to_lab

ckernels = pytest.importorskip("gsn._ckernels")


def test_backend_selected():
    forced = os.environ.get("GSN_PURE_PYTHON") in ("1", "true", "yes")
    assert kernels.BACKEND == ("python" if forced else "cython")


def test_jacobi_backends_agree(rng):
    for n in (1, 2, 5, 17):
        a = rng.normal(size=(n, n))
        m = np.ascontiguousarray(a + a.T)
        wc, vc, _ = ckernels.jacobi_eigh(m, 1e-10, 100)
        wp, vp, _ = _pykernels.jacobi_eigh(m, 1e-10, 100)
        np.testing.assert_allclose(np.sort(wc), np.sort(wp), atol=1e-10)
        for w, v in ((wc, vc), (wp, vp)):
            np.testing.assert_allclose((v * w) @ v.T, m, atol=1e-9)


def test_slic_assign_backends_identical(rng):
    lab = np.ascontiguousarray(rgb_to_lab(rng.random((20, 23, 3))))
    centers = np.column_stack([rng.uniform(0, 100, 6), rng.uniform(-50, 50, (6, 2)),
                               rng.uniform(0, 20, 6), rng.uniform(0, 23, 6)])
    lc, dc = ckernels.slic_assign(lab, np.ascontiguousarray(centers), 6.0, 10.0)
    lp, dp = _pykernels.slic_assign(lab, centers, 6.0, 10.0)
    np.testing.assert_array_equal(lc, lp)
    np.testing.assert_array_equal(dc, dp)


def test_label_components_backends_identical(rng):
    labels = np.ascontiguousarray(rng.integers(0, 3, size=(15, 11)), dtype=np.int64)
    cc, nc = ckernels.label_components(labels)
    cp, np_ = _pykernels.label_components(labels)
    assert nc == np_
    np.testing.assert_array_equal(cc, cp)


def test_label_components_hand_case():
    labels = np.array([[0, 0, 1],
                       [1, 0, 1],
                       [1, 1, 0]], dtype=np.int64)
    comp, n = ckernels.label_components(labels)
    assert n == 4
    np.testing.assert_array_equal(comp, [[0, 0, 1], [2, 0, 1], [2, 2, 3]])


def test_benchmark_script_runs(monkeypatch, capsys):
    import runpy
    import sys
    from pathlib import Path
    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    monkeypatch.setattr(sys, "argv", [str(script), "--repeat", "1"])
    runpy.run_path(str(script), run_name="__main__")
    assert "speed-up" in capsys.readouterr().out
