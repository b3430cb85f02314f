"""Acceptance checks; each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
The two desk-scale benchmark checks train the full model and take several minutes.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, toy_graph_data
from oracles import oracle_prune, random_similarity
from ginn_augment.augment import AugmentConfig, augment, generate_candidates
from ginn_augment.benchmark import run_benchmark, summarize_wins
from ginn_augment.cli import run as cli_run
from ginn_augment.dataset import (Column, EncodedMatrix, Schema, TabularDataset, apply_mcar,
                                  compute_global, encode, fit_layout, load_builtin, make_split,
                                  transform)
from ginn_augment.graph import (INJECTED, LABELED, UNLABELED, build_similarity,
                                propagation_operator, two_step_prune)
from ginn_augment.model import (LossSpec, TrainConfig, autoencoder_loss_and_grad,
                                critic_loss_and_grad, init_critic, init_ginn, mix_rows, train)
from ginn_augment.numerics import finite_difference_check


def _numeric_schema(a):
    return Schema(tuple(Column(f"v{i}", "numerical") for i in range(a))
                  + (Column("y", "label", ("a", "b")),))


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_gradient_correctness():
    t0 = time.perf_counter()
    x, _, l, lt = toy_graph_data(3, n=8, d=6)
    rng = np.random.default_rng(3)
    mask = (rng.random(x.shape) > 0.25).astype(float)
    x[:, 4:] = np.eye(2)[rng.integers(0, 2, 8)]
    mask[:, 5] = mask[:, 4]
    x = x * mask
    g = compute_global(x, mask)
    spec = LossSpec(np.arange(4), np.array([4, 5]), 0.6, 1.0)
    p = init_ginn(6, 4, np.random.default_rng(4))
    c = init_critic(6, 4, np.random.default_rng(5))
    errors = {}

    _, _, grads, _ = autoencoder_loss_and_grad(p, x, x, mask, l, lt, g, spec)
    errors["L_A"] = finite_difference_check(
        lambda q: autoencoder_loss_and_grad(q, x, x, mask, l, lt, g, spec)[0], p, grads).max_rel_error

    _, _, grads, x_hat = autoencoder_loss_and_grad(p, x, x, mask, l, lt, g, spec, c, 1.0)
    errors["L_T"] = finite_difference_check(
        lambda q: autoencoder_loss_and_grad(q, x, x, mask, l, lt, g, spec, c, 1.0)[1],
        p, grads).max_rel_error

    x_mix = mix_rows(x, x_hat, rng)
    _, cgrads = critic_loss_and_grad(x, x_hat, c, 10.0, x_mix)
    errors["critic"] = finite_difference_check(
        lambda q: critic_loss_and_grad(x, x_hat, q, 10.0, x_mix)[0], c, cgrads).max_rel_error
    elapsed = time.perf_counter() - t0
    ok = max(errors.values()) <= 1e-4 and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items())
    assert report("gradient correctness", ok, f"max rel error {detail}; {elapsed:.2f}s")


def test_pruning_oracle():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        s = random_similarity(rng, 50)
        if not np.array_equal(two_step_prune(s).a, np.array(oracle_prune(s.tolist()))):
            mismatches += 1
    assert report("pruning oracle", mismatches == 0, f"{mismatches}/100 matrices disagree")


def test_operator_spectrum():
    rng = np.random.default_rng(11)
    worst, asym = 0.0, 0
    for _ in range(50):
        n = int(rng.integers(2, 21))
        adj = two_step_prune(random_similarity(rng, n), q=float(rng.uniform(0, 97.72)))
        for loops in (True, False):
            op = propagation_operator(adj, loops)
            asym += not np.array_equal(op, op.T)
            ev = np.linalg.eigvalsh(op)
            worst = max(worst, float(np.abs(ev).max()))
    ok = asym == 0 and worst <= 1 + 1e-8
    assert report("operator spectrum", ok, f"max |eigenvalue| {worst:.12f}, {asym} asymmetric")


@pytest.fixture(scope="module")
def ionosphere_model():
    data = load_builtin("ionosphere")
    plan = make_split(len(data), 0.7, 0.1, seed=5)
    train_rows = data.subset(plan.train_indices, keep_labels=False)
    layout = fit_layout(train_rows)
    x, mask = transform(train_rows, layout)
    lab = set(plan.labeled_indices.tolist())
    positions = [i for i, r in enumerate(plan.train_indices) if r in lab]
    tags = [LABELED if r in lab else UNLABELED for r in plan.train_indices]
    adj = two_step_prune(build_similarity(x.values, mask), tags)
    g = compute_global(x.values, mask)
    l, lt = propagation_operator(adj, True), propagation_operator(adj, False)
    model = train(x.values, mask, l, lt, g, layout, TrainConfig(max_epochs=30, seed=1))
    labeled = data.subset(plan.train_indices[positions])
    return model, adj, x, mask, l, lt, positions, labeled


def test_imputation_identity(ionosphere_model):
    model, adj, x, mask, l, lt, _, _ = ionosphere_model
    full = model.impute(x.values, mask, l, lt)
    rng = np.random.default_rng(0)
    holes = mask * (rng.random(mask.shape) > 0.3)
    part = model.impute(x.values * holes, holes, l, lt)
    ok = np.array_equal(full, x.values) and np.array_equal(part[holes > 0], x.values[holes > 0])
    assert report("imputation identity", ok,
                  f"fully observed unchanged={np.array_equal(full, x.values)}, "
                  f"{int((holes > 0).sum())} observed entries preserved bitwise")


def test_damage_contract():
    problems = []
    for name in ("ionosphere", "wine-quality-red", "tic-tac-toe"):
        x, mask = encode(load_builtin(name))
        a = x.layout.n_attributes
        dx, dm = apply_mcar(x, mask, 0.8, seed=7)
        removed = a - x.layout.attribute_mask(dm).sum(axis=1)
        if not np.all(removed == (4 * a) // 5):
            problems.append(f"{name}: removed {set(removed.tolist())} vs {(4 * a) // 5}")
        cands = generate_candidates(EncodedMatrix(x.values[:50], x.layout), mask[:50],
                                    AugmentConfig(10, 0.8, 3))
        if x.layout.attribute_mask(cands.mask).sum(axis=1).min() < 1:
            problems.append(f"{name}: candidate with no attribute")
    # a single attribute must survive
    one, ones = encode(TabularDataset(_numeric_schema(1), [[0.3], [0.7]], ["a", "b"]))
    _, m1 = apply_mcar(one, ones, 0.8, seed=0)
    if m1.sum(axis=1).min() < 1:
        problems.append("single-attribute row emptied")
    ok = not problems
    assert report("damage contract", ok, "; ".join(problems) or
                  "floor(0.8 A) removed on ionosphere/wine/tic-tac-toe, every candidate keeps >= 1")


def test_augmentation_contract(ionosphere_model):
    model, adj, x, mask, _, _, positions, labeled = ionosphere_model
    n_l, n0 = len(labeled), adj.n
    unl = set(adj.nodes_tagged(UNLABELED).tolist())
    problems = []
    for f in (1, 2, 5, 10):
        out = augment(model, adj, x.values, mask, positions, labeled, AugmentConfig(f, 0.8, f))
        if len(out) != f * n_l or any(y is None for y in out.data.labels):
            problems.append(f"f={f}: {len(out)} rows")
        src = out.candidates.source
        if out.data.labels[n_l:] != [labeled.labels[i] for i in src]:
            problems.append(f"f={f}: labels not inherited")
        for r in range(n0, out.graph.n):
            nbrs = set(np.flatnonzero(out.graph.a[r]).tolist())
            if not nbrs or not nbrs <= unl or out.graph.tags[r] != INJECTED:
                problems.append(f"f={f}: node {r} neighbours {sorted(nbrs)[:5]}")
                break
    assert report("augmentation contract", not problems,
                  "; ".join(problems) or f"f in 1,2,5,10 on L={n_l}: f*L rows, labels inherited, "
                  "injected nodes link only to unlabeled nodes")


@pytest.mark.slow
def test_benchmark_determinism(tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        rc = cli_run(["benchmark", "--datasets", "ionosphere", "--trials", "2", "--seed", "7",
                      "--out-dir", str(out)])
        runs.append((rc, (out / "report.csv").read_bytes() if rc == 0 else b""))
    ok = runs[0][0] == runs[1][0] == 0 and runs[0][1] == runs[1][1]
    assert report("determinism", ok, f"report.csv identical: {runs[0][1] == runs[1][1]} "
                  f"({len(runs[0][1])} bytes)")


@pytest.fixture(scope="module")
def desk_scale():
    timings, reports = {}, {}
    for name in ("ionosphere", "wine-quality-red", "tic-tac-toe"):
        t0 = time.perf_counter()
        reports[name] = run_benchmark([(name, load_builtin(name))], trials=5, seed=0)
        timings[name] = time.perf_counter() - t0
    return reports, timings


@pytest.mark.slow
def test_ionosphere_end_to_end(desk_scale):
    reports, timings = desk_scale
    rep = reports["ionosphere"]
    acc = {(r.variant, r.trial): r.accuracy for r in rep.results if r.classifier == "knn"}
    base = [acc[("baseline", t)] for t in range(5)]
    aug = [acc[("2x", t)] for t in range(5)]
    better = sum(a > b for a, b in zip(aug, base))
    mb, ma = 100 * np.mean(base), 100 * np.mean(aug)
    ok = ma >= mb - 1 and better >= 3 and timings["ionosphere"] < 600
    assert report("ionosphere k-NN end to end", ok,
                  f"baseline {mb:.2f}% vs 2x {ma:.2f}%, 2x better in {better}/5 trials, "
                  f"{timings['ionosphere']:.0f}s")


@pytest.mark.slow
def test_win_count_trend(desk_scale):
    reports, timings = desk_scale
    wins = {}
    for rep in reports.values():
        for v, c in summarize_wins(rep).items():
            wins[v] = wins.get(v, 0.0) + c
    total = sum(timings.values())
    ok = wins["10x"] >= wins["baseline"] and total < 45 * 60
    detail = ", ".join(f"{v} {c:g}" for v, c in wins.items())
    assert report("win-count trend", ok, f"wins over 45 cells: {detail}; {total:.0f}s")


def test_non_adversarial_sanity():
    x, mask, l, lt = toy_graph_data(0)
    layout = fit_layout(TabularDataset(_numeric_schema(5), x.tolist(), ["a"] * 8))
    model = train(x, mask, l, lt, compute_global(x, mask), layout,
                  TrainConfig(adversarial=False, max_epochs=500, hidden=16))
    r = model.report
    first, last = r.reconstruction[0], r.reconstruction[r.stop_epoch - 1]
    assert report("non-adversarial sanity", last < first,
                  f"L_A {first:.5f} at epoch 1 -> {last:.5f} at stop epoch {r.stop_epoch}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
