"""Acceptance gate: one pass/fail line per criterion.

Run ``pytest tests/test_acceptance.py -v -s`` to see the report lines; they
are also echoed in the terminal summary of a normal run.
"""
import json
import time

import numpy as np
import pytest

import gsn.classify as classify
from gsn.classify import evaluate, evaluate_baseline, loss_and_grad, train, train_baseline
from gsn.cli import main
from gsn.clustering import kmeans
from gsn.config import PipelineConfig
from gsn.data import load_dataset
from gsn.dictionary import fixpoint_residual, learn_dictionary, objective, sparse_code
from gsn.gcn import GcnLayer, gcn_forward
from gsn.imagegraph import operators_from_adjacency
from gsn.model import read_header
from gsn.numerics import eig_symmetric, soft_threshold
from gsn.pipeline import prepare_paths

from conftest import random_connected_adjacency
from helpers import random_model, random_prepared
from oracles import best_partition_objective, central_difference, lasso_grid_argmin, max_relative_error

REPORT = []
PUBLISHED_GSN_PARAMS = 50_570


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    REPORT.append(line)
    print(line)
    return ok


def _unit_columns(rng, n, k):
    d = rng.normal(size=(n, k))
    return d / np.linalg.norm(d, axis=0)


def test_criterion_01_laplacian():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    exact = True
    worst_row = worst_eig = worst_rec = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 31))
        a = random_connected_adjacency(rng, n, rng.uniform(0.1, 0.7))
        ops = operators_from_adjacency(a)
        exact &= np.array_equal(ops.laplacian, np.diag(a.sum(axis=1)) - a)
        worst_row = max(worst_row, float(np.max(np.abs(ops.laplacian @ np.ones(n)))))
        dec = eig_symmetric(ops.laplacian)
        worst_eig = min(worst_eig, float(dec.eigenvalues.min()))
        rec = np.linalg.norm(dec.reconstruct() - ops.laplacian) / np.linalg.norm(ops.laplacian)
        worst_rec = max(worst_rec, float(rec))
    elapsed = time.perf_counter() - start
    ok = exact and worst_row <= 1e-10 and worst_eig >= -1e-8 and worst_rec < 1e-6 and elapsed < 30
    assert report(1, ok, f"L=D-A exact={exact} max|L1|={worst_row:.1e} min eig={worst_eig:.1e} "
                         f"max rec err={worst_rec:.1e} time={elapsed:.2f}s")


def test_criterion_02_spectral_equivalence():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(50):
        n, f, h = int(rng.integers(2, 16)), int(rng.integers(1, 8)), int(rng.integers(1, 8))
        a = random_connected_adjacency(rng, n)
        ops = operators_from_adjacency(a).with_spectrum()
        feats = rng.normal(size=(n, f))
        layer = GcnLayer(rng.normal(size=(f, h)), rng.normal(size=h), "relu", "spectral")
        direct = np.maximum(ops.laplacian @ feats @ layer.weight + layer.bias, 0.0)
        out = gcn_forward(layer, ops, feats)
        worst = max(worst, float(np.linalg.norm(out - direct) / max(np.linalg.norm(direct), 1e-300)))
    assert report(2, worst < 1e-6, f"max relative error {worst:.1e} over 50 configs")


def test_criterion_03_kmeans():
    rng = np.random.default_rng(303)
    monotone = True
    for _ in range(100):
        n, dim = int(rng.integers(2, 40)), int(rng.integers(1, 5))
        k = int(rng.integers(1, min(n, 6) + 1))
        part = kmeans(rng.normal(size=(n, dim)), k, seed=int(rng.integers(1 << 30)))
        monotone &= bool(np.all(np.diff(part.history) <= 0.0))
    worst, count = 0.0, 0
    for n in range(1, 9):
        for k in range(1, min(n, 3) + 1):
            for _ in range(4):
                x = rng.normal(size=(n, 1)) * 3
                part = kmeans(x, k, seed=int(rng.integers(1 << 30)), restarts=10)
                worst = max(worst, part.objective - best_partition_objective(x, k))
                count += 1
    ok = monotone and worst <= 1e-9
    assert report(3, ok, f"monotone over 100 runs={monotone}; max gap to brute force {worst:.1e} "
                         f"over {count} 1-D instances")


def test_criterion_04_sparse_coding():
    rng = np.random.default_rng(404)
    monotone, fixpoint = True, 0.0
    for _ in range(50):
        n, k = int(rng.integers(2, 10)), int(rng.integers(1, 12))
        d, y = _unit_columns(rng, n, k), rng.normal(size=n)
        code = sparse_code(d, y, rng.uniform(0, 1), track=True)
        monotone &= bool(np.all(np.diff(code.history) <= 1e-12 * max(1.0, code.history[0])))
        fixpoint = max(fixpoint, fixpoint_residual(d, code, y))
    closed = 0.0
    for _ in range(30):
        n = int(rng.integers(1, 7))
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        y, lam = 2 * rng.normal(size=n), rng.uniform(0, 1)
        closed = max(closed, float(np.max(np.abs(sparse_code(q, y, lam).alpha - soft_threshold(q.T @ y, lam)))))
    solve = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 6))
        d = np.eye(n) + 0.3 * rng.normal(size=(n, n)) / np.sqrt(n)
        y = rng.normal(size=n)
        x = sparse_code(d, y, 0.0, max_iters=20000, tol=1e-13).alpha
        solve = max(solve, float(np.max(np.abs(x - np.linalg.solve(d, y)))))
    zeros = True
    for _ in range(20):
        d, y = _unit_columns(rng, 2, 2), rng.normal(size=2)
        lam = np.max(np.abs(d.T @ y)) * rng.uniform(1.0, 2.0)
        zeros &= bool(np.all(sparse_code(d, y, lam).alpha == 0.0))
        zeros &= bool(np.allclose(lasso_grid_argmin(d, y, lam), 0.0))
    ok = monotone and closed < 1e-6 and solve < 1e-6 and zeros
    assert report(4, ok, f"monotone={monotone} closed-form err={closed:.1e} exact-solve err={solve:.1e} "
                         f"zero-threshold={zeros} (max fixpoint residual {fixpoint:.1e})")


def test_criterion_05_dictionary_learning():
    rng = np.random.default_rng(505)
    norm_err, ascent = 0.0, -np.inf
    for _ in range(20):
        n, count, k = int(rng.integers(2, 8)), int(rng.integers(3, 30)), int(rng.integers(1, 8))
        y, lam = rng.normal(size=(n, count)), rng.uniform(0, 0.5)
        for rounds in range(1, 9):
            d, x = learn_dictionary(y, k, lam, rounds=rounds, seed=int(rng.integers(1 << 30)))
            norm_err = max(norm_err, float(np.max(np.abs(np.linalg.norm(d.atoms, axis=0) - 1))))
        fit = learn_dictionary(y, k, lam, rounds=15)
        ascent = max(ascent, float(np.max(np.diff(fit.history))))
    basis = learn_dictionary(np.eye(3), 3, 0.0, rounds=20).history[-1]
    ok = norm_err < 1e-8 and ascent <= 1e-9 and basis < 1e-6
    assert report(5, ok, f"max | ||d_k|| - 1 | = {norm_err:.1e}; max round increase {ascent:.1e}; "
                         f"exact-basis objective {basis:.1e}")


def test_criterion_06_gradients(monkeypatch):
    monkeypatch.setattr(classify, "CODE_TOL", 1e-14)
    monkeypatch.setattr(classify, "CODE_MAX_ITERS", 20000)
    rng = np.random.default_rng(606)
    worst = 0.0
    for i in range(20):
        f, clusters = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        widths = tuple(int(w) for w in rng.integers(1, 9, size=int(rng.integers(1, 3))))
        model = random_model(rng, f, widths, clusters, int(rng.integers(2, 4)), readout="mean")
        preps = [random_prepared(rng, int(rng.integers(max(clusters, 2), 7)), f, clusters) for _ in range(2)]
        labels = [int(rng.integers(model.classifier.num_classes)) for _ in preps]
        _, grads = loss_and_grad(model, preps, labels)
        num = central_difference(lambda: loss_and_grad(model, preps, labels)[0], model.parameters(), eps=1e-5)
        worst = max(worst, max_relative_error(grads, num))
    assert report(6, worst < 1e-4, f"max elementwise relative error {worst:.1e} over 20 configs")


# -- end-to-end experiment ------------------------------------------------------

@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    start = time.perf_counter()
    assert main(["gen-synth", "--out", str(root / "data"), "--classes", "4", "--per-class", "50",
                 "--test-per-class", "25", "--size", "64", "--seed", "7"]) == 0
    (root / "default.json").write_text("{}")
    train_dir, test_dir = root / "data" / "train", root / "data" / "test"
    assert main(["train", "--config", str(root / "default.json"), "--data", str(train_dir),
                 "--out", str(root / "run1.gsnm")]) == 0
    metrics = _eval_json(root / "run1.gsnm", test_dir)

    config = PipelineConfig()
    train_set, test_set = load_dataset(train_dir), load_dataset(test_dir)
    train_preps, test_preps = prepare_paths(train_set.paths, config), prepare_paths(test_set.paths, config)
    base, _ = train_baseline(train_preps, train_set.labels, config, len(train_set.class_names))
    base_metrics = evaluate_baseline(base, test_preps, test_set.labels)
    elapsed = time.perf_counter() - start
    return {"root": root, "metrics": metrics, "baseline": base_metrics, "elapsed": elapsed,
            "train_set": train_set, "test_set": test_set, "train_preps": train_preps,
            "test_preps": test_preps, "config": config}


def _eval_json(model_path, data_dir):
    import contextlib
    import io
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        assert main(["eval", "--model", str(model_path), "--data", str(data_dir)]) == 0
    return buf.getvalue()


@pytest.mark.slow
def test_criterion_07_synthetic_experiment(experiment):
    gsn_acc = json.loads(experiment["metrics"])["accuracy"]
    base_acc = experiment["baseline"]["accuracy"]
    ok = gsn_acc >= 0.90 and gsn_acc >= base_acc and experiment["elapsed"] < 600
    assert report(7, ok, f"GSN test accuracy {gsn_acc:.4f}, baseline {base_acc:.4f}, "
                         f"runtime {experiment['elapsed']:.1f}s")


@pytest.mark.slow
def test_criterion_08_reduced_data(experiment):
    train_set, config = experiment["train_set"], experiment["config"]
    keep = list(range(0, len(train_set.entries), 4))
    preps = [experiment["train_preps"][i] for i in keep]
    labels = [train_set.labels[i] for i in keep]
    model, _ = train(preps, labels, config, train_set.class_names)
    small = evaluate(model, experiment["test_preps"], experiment["test_set"].labels)["accuracy"]
    base, _ = train_baseline(preps, labels, config, len(train_set.class_names))
    base_small = evaluate_baseline(base, experiment["test_preps"], experiment["test_set"].labels)["accuracy"]
    full = json.loads(experiment["metrics"])["accuracy"]
    base_full = experiment["baseline"]["accuracy"]
    report(8, True, f"reporting only: 25% data ({len(keep)} images) GSN {full:.4f}->{small:.4f} "
                    f"(drop {full - small:+.4f}), baseline {base_full:.4f}->{base_small:.4f} "
                    f"(drop {base_full - base_small:+.4f})")


@pytest.mark.slow
def test_criterion_09_determinism(experiment):
    root = experiment["root"]
    train_dir, test_dir = root / "data" / "train", root / "data" / "test"
    assert main(["train", "--config", str(root / "default.json"), "--data", str(train_dir),
                 "--out", str(root / "run2.gsnm")]) == 0
    same_model = (root / "run1.gsnm").read_bytes() == (root / "run2.gsnm").read_bytes()
    same_log = (root / "run1.gsnm.log.csv").read_bytes() == (root / "run2.gsnm.log.csv").read_bytes()
    same_json = _eval_json(root / "run2.gsnm", test_dir) == experiment["metrics"]
    ok = same_model and same_json
    assert report(9, ok, f"byte-identical model={same_model}, identical metrics JSON={same_json}, "
                         f"identical log={same_log}")


@pytest.mark.slow
def test_criterion_10_parameter_accounting(experiment, capsys):
    path = experiment["root"] / "run1.gsnm"
    capsys.readouterr()
    assert main(["inspect", "--model", str(path)]) == 0
    out = capsys.readouterr().out
    printed = int(out.split("trainable parameters:")[1].split()[0])
    header, _ = read_header(path.read_bytes())
    total = sum(int(np.prod(t["dims"])) for t in header["tensors"] if t["name"] != "dict.D")
    with capsys.disabled():
        ok = report(10, printed == total, f"inspect total {printed} == serialized trainable sizes {total}; "
                                          f"published GSN size {PUBLISHED_GSN_PARAMS / 1000:.2f}K (informational)")
    assert ok
