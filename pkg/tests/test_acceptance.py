"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL|SKIP: ...`` line (shown
even under output capture) and then asserts the criterion at its pinned
tolerance.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from hdvqcnn import qsim
from hdvqcnn.circuit import build_layout, count_parameters
from hdvqcnn.complexity import ComplexityConfig, assess, label_sparsity
from hdvqcnn.config import load_scenario
from hdvqcnn.federation import distill, kd_loss, model_accuracy, run_federation
from hdvqcnn.pso import fitness, search
from hdvqcnn.qsim import StateVector
from hdvqcnn.train import finite_difference_gradient, gradient, mean_loss
from hdvqcnn.data import Dataset

from oracles import dense_controlled, dense_single, pair_count_sparsity

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def _random_unitary_pieces(rng, n):
    fixed = [qsim.X, qsim.Y, qsim.Z, qsim.H, qsim.I2]
    rots = [qsim.rx, qsim.ry, qsim.rz]
    if rng.random() < 0.4:
        mat = fixed[rng.integers(len(fixed))]
    else:
        mat = rots[rng.integers(3)](rng.uniform(-2 * np.pi, 2 * np.pi))
    if n > 1 and rng.random() < 0.5:
        c, t = rng.choice(n, size=2, replace=False)
        return "c", mat, int(c), int(t)
    return "s", mat, int(rng.integers(n)), None


def test_1_simulator_matches_dense(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 5))
        v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
        state = StateVector(n, v / np.linalg.norm(v))
        ref = state.amplitudes.copy()
        for _ in range(int(rng.integers(1, 25))):
            kind, mat, a, b = _random_unitary_pieces(rng, n)
            if kind == "s":
                state = qsim.apply_single(state, mat, a)
                ref = dense_single(mat, a, n) @ ref
            else:
                state = qsim.apply_controlled(state, a, b, mat)
                ref = dense_controlled(mat, a, b, n) @ ref
        worst = max(worst, float(np.max(np.abs(state.amplitudes - ref))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 10
    report(1, ok, f"200 circuits, max amplitude error {worst:.2e} (tol 1e-10), {elapsed:.2f}s (< 10s)")
    assert worst <= 1e-10 and elapsed < 10


def test_2_gradient_matches_finite_differences(report):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    failures = 0
    worst = 0.0
    for _ in range(50):
        # 3 qubits is not a power of two, so 2-qubit layouts are the only ones <= 3
        classes = int(rng.integers(2, 5))
        structure = rng.integers(1, 14, size=int(rng.integers(1, 7))).tolist()
        layout = build_layout(2, classes, structure)
        theta = rng.uniform(-np.pi, np.pi, count_parameters(layout))
        sample = Dataset(rng.normal(size=(1, 4)), [int(rng.integers(classes))])
        analytic = gradient(layout, theta, sample)
        numeric = finite_difference_gradient(lambda t: mean_loss(layout, t, sample), theta, 1e-5)
        err = np.abs(analytic - numeric)
        ok = (err <= 1e-6) | (err <= 1e-4 * np.abs(numeric))
        failures += int(not ok.all())
        worst = max(worst, float(err.max()))
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 60
    report(2, ok, f"50 triples, {failures} failing, max abs error {worst:.2e}, {elapsed:.2f}s (< 60s)")
    assert ok


REFERENCE_COUNTS = [
    ("B1 estimated", 2, [13, 9, 2, 9, 10, 3], 12),
    ("B1 fixed 3", 2, [13, 9, 11], 12),
    ("B1 fixed 8", 2, [8, 6, 9, 4, 7, 9, 13, 2], 15),
    ("B2 estimated", 2, [13, 3, 7, 11, 9], 15),
    ("B2 fixed 3", 2, [11, 9, 5], 12),
    ("B2 fixed 8", 2, [3, 8, 9, 11, 7, 5, 12, 7], 21),
    ("B3 estimated", 3, [13, 9, 6, 1, 10, 12, 8], 15),
    ("B3 fixed 3", 3, [4, 5, 3], 9),
    ("B3 fixed 8", 3, [12, 12, 11, 13, 9, 8, 7, 13], 24),
    ("B4 estimated", 2, [4, 10, 11, 2, 2, 12, 12], 15),
    ("B4 fixed 3", 2, [5, 9, 5], 12),
    ("B4 fixed 8", 2, [9, 6, 7, 2, 13, 12, 11, 12], 24),
]


def test_3_reference_parameter_counts(report):
    mismatched = [
        (name, count_parameters(build_layout(8, c, gates)), published)
        for name, c, gates, published in REFERENCE_COUNTS
        if count_parameters(build_layout(8, c, gates)) != published
    ]
    ok = [m[0] for m in mismatched] == ["B1 estimated"]
    report(3, ok, f"{12 - len(mismatched)}/12 rows exact; mismatches {mismatched} (B1 estimated is the suspected erratum)")
    assert ok


def test_4_gate_estimates(report):
    splits = {
        "B1": [0] * 500 + [1] * 500,
        "B2": [0] * 800 + [1] * 200,
        "B3": [0] * 330 + [1] * 330 + [2] * 330,
        "B4": [0] * 2500 + [1] * 2500,
    }
    got = [assess(labels, 256, ComplexityConfig()).gate_count for labels in splits.values()]
    ok = got == [6, 5, 7, 7]
    report(4, ok, f"budgets {got}, expected [6, 5, 7, 7]")
    assert ok


def test_5_sparsity_oracle(report):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(100):
        m = int(rng.integers(1, 201))
        labels = rng.integers(0, int(rng.integers(1, 11)), size=m).tolist()
        bad += label_sparsity(labels) != pair_count_sparsity(labels)
    report(5, bad == 0, f"{100 - bad}/100 random label lists equal the pair count exactly")
    assert bad == 0


def test_6_pso_against_exhaustive(report):
    scenario = load_scenario(CONFIGS / "toy_2qubit.toml")
    start = time.perf_counter()
    gaps = []
    for seed in range(5):
        sc = scenario.with_seed(seed)
        ds = sc.build().clients[1]
        inner = sc.pso.inner.with_seed(seed)
        exhaustive = max(fitness([g], ds, 2, sc.class_count, inner)[0] for g in range(1, 14))
        cfg = replace(sc.pso, swarm_size=8, iterations=10, rng_seed=seed)
        found = search(ds, 1, 2, sc.class_count, cfg).gbest_score
        gaps.append(exhaustive - found)
    elapsed = time.perf_counter() - start
    ok = all(g <= 0.05 for g in gaps) and elapsed < 300
    report(6, ok, f"best-exhaustive minus PSO per seed {[round(g, 4) for g in gaps]} (tol 0.05), {elapsed:.1f}s (< 300s)")
    assert ok


def test_7_kd_loss_values(report):
    value = kd_loss([0.5, 0.5], [0.25, 0.75], 0, 0.7)
    kl_zero = kd_loss([0.3, 0.7], [0.3, 0.7], 1, 1.0)
    ce_zero = kd_loss([0.3, 0.7], [0.0, 1.0], 1, 0.0)
    ok = abs(value - 0.51658) <= 1e-5 and abs(kl_zero) <= 1e-5 and abs(ce_zero) <= 1e-5
    report(7, ok, f"kd_loss {value:.6f} (0.51658 +- 1e-5); limits {kl_zero:.1e}, {ce_zero:.1e}")
    assert ok


@pytest.fixture(scope="module")
def desk_runs():
    """The desk scenario for seeds 0..4: KD run plus a lambda=0 baseline from the same student."""
    scenario = load_scenario(CONFIGS / "desk_blobs.toml")
    runs = []
    start = time.perf_counter()
    for seed in range(5):
        sc = scenario.with_seed(seed)
        data = sc.build()
        cfg = sc.federation_config()
        ids = sc.client_ids()
        result = run_federation([data.clients[i] for i in ids], data.public, sc.class_count, cfg, test=data.test)
        student = next(c for c in result.clients if c.client_id == result.student_id).model
        hard = distill(student, data.public, np.eye(sc.class_count)[data.public.labels], 0.0, cfg.distill)
        runs.append((sc, data, result, model_accuracy(hard, data.test)))
    return runs, time.perf_counter() - start


def test_8_desk_federation(report, desk_runs):
    runs, elapsed = desk_runs
    rows = []
    wins = 0
    for sc, _, result, hard_acc in runs:
        mean_client = result.metrics["mean_client_test_accuracy"]
        kd = result.metrics["global_test_accuracy"]
        a = kd >= mean_client + 0.20
        b = kd > hard_acc
        wins += a and b
        rows.append(f"seed {sc.seed}: clients {mean_client:.3f} kd {kd:.3f} hard {hard_acc:.3f} a={a} b={b}")
    ok = wins >= 3 and elapsed < 900
    report(8, ok, f"{wins}/5 seeds meet (a) and (b) (need 3), {elapsed:.0f}s (< 900s); " + "; ".join(rows))
    assert ok


def test_9_protocol_accounting(report, desk_runs):
    runs, _ = desk_runs
    problems = []
    for sc, data, result, _ in runs:
        m = len(sc.clients)
        t = result.transcript
        student = next(c for c in result.clients if c.client_id == result.student_id).model
        structure = len(student.layout.u_structure) + len(student.theta)
        expected_up = m * len(data.public) * sc.class_count + m + structure
        if len(t.messages) != 2 * m + 1 or t.payload("up") != expected_up:
            problems.append((sc.seed, len(t.messages), t.payload("up"), expected_up))
    ok = not problems
    report(9, ok, f"5 runs: messages = 2m+1 and upload = m*M*C + m + |structure|; problems {problems}")
    assert ok


def test_10_mnist_full_scale(capsys):
    scenario = load_scenario(CONFIGS / "mnist_full.toml")
    paths = [scenario.base_dir / scenario.data[k] for k in
             ("train_images", "train_labels", "holdout_images", "holdout_labels")]
    if not all(p.is_file() for p in paths):
        with capsys.disabled():
            print("\nACCEPTANCE 10 SKIP: MNIST archives not present (optional hours-scale run)")
        pytest.skip("MNIST archives not present")
    data = scenario.build()
    cfg = scenario.federation_config()
    ids = scenario.client_ids()
    result = run_federation([data.clients[i] for i in ids], data.public, scenario.class_count, cfg, test=data.test)
    student = next(c for c in result.clients if c.client_id == result.student_id).model
    hard = distill(student, data.public, np.eye(10)[data.public.labels], 0.0, cfg.distill)
    kd, base = result.metrics["global_test_accuracy"], model_accuracy(hard, data.test)
    ok = kd >= 0.85 and kd > base
    with capsys.disabled():
        print(f"\nACCEPTANCE 10 {'PASS' if ok else 'FAIL'}: global {kd:.4f} (>= 0.85), hard-label {base:.4f}")
    assert ok
