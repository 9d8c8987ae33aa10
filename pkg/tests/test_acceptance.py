"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances.

Run standalone with ``python3 tests/test_acceptance.py`` for the summary, or
under pytest (``pytest tests/test_acceptance.py -s``) where each criterion is
also a test. Seeds and procedures are fixed up front; nothing is retried.
"""

import math
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from gkde import model_bank as mb
from gkde.analysis import loglog_slope, monte_carlo_bias_variance, standard_normal, sweep
from gkde.errors import ContractError
from gkde.kde import ClassPdf, log_density_matrix, log_pdf_density, pdf_density
from gkde.model_bank import ModelBank, TaskEntry
from gkde.network import embed, init_network
from gkde.objective import LossConfig, loss_gradient_check
from gkde.pdf_builder import build_task_pdfs
from gkde.stream import (
    TrainConfig,
    average_accuracy,
    average_forgetting,
    evaluate_stream,
    synth_blobs,
    train_stream,
)

RESULTS = {}


def report(key, title, ok, detail, seconds):
    line = f"[{'PASS' if ok else 'FAIL'}] {key} {title}: {detail} ({seconds:.1f}s)"
    RESULTS[key] = (ok, line)
    print(line)
    return ok


@lru_cache(maxsize=None)
def blob_run(dim=32, bandwidth=0.5):
    """The 5-task x 2-class blob benchmark under strict single-pass training."""
    t0 = time.perf_counter()
    stream = synth_blobs(5, 2, 16, 8.0, 500, seed=0)
    bank = train_stream(stream, TrainConfig(dim=dim, bandwidth=bandwidth, epochs=1, seed=0))
    rep = evaluate_stream(bank, stream)
    return stream, bank, rep, time.perf_counter() - t0


# ----------------------------------------------------------------- criteria


def c1_gradients():
    t0 = time.perf_counter()
    ss = np.random.SeedSequence(2024).spawn(20)
    worst, sizes = 0.0, []
    for s in ss:
        rng = np.random.default_rng(s)
        input_dim, d = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        hidden = tuple(int(w) for w in rng.integers(1, 7, size=rng.integers(0, 3)))
        act = ["tanh", "relu"][int(rng.integers(2))]
        p = init_network(input_dim, hidden, d, rng, activation=act, gain=3**0.5)
        if p.n_params() > 200:
            continue
        b = int(rng.integers(1, 9))
        m = int(rng.integers(1, 4))
        x = rng.standard_normal((b, input_dim))
        y = np.arange(b) % m
        h = float(rng.uniform(0.3, 1.5))
        Z = embed(p, x).data
        pdfs = build_task_pdfs(Z, y, int(rng.integers(1, 6)), h, rng.integers(1 << 30))
        worst = max(worst, loss_gradient_check((x, y, pdfs), p, LossConfig(bandwidth=h)))
        sizes.append(p.n_params())
    dt = time.perf_counter() - t0
    ok = len(sizes) >= 20 and worst <= 1e-5 and dt <= 30
    return report("C1", "gradient correctness", ok,
                  f"worst relative error {worst:.2e} over {len(sizes)} configs (max {max(sizes)} params), limit 1e-5", dt)


def c2_kde_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_lin = worst_log = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 12))
        h = float(rng.uniform(0.2, 2.0))
        anchors = rng.standard_normal((n, d))
        z = rng.standard_normal(d) * 1.5
        p = ClassPdf(0, anchors, h, 1.0)
        naive = 0.0
        for a in anchors:
            s = 0.0
            for k in range(d):
                s += (z[k] - a[k]) ** 2
            naive += math.exp(-s / (2 * h * h)) / (h**d * (2 * math.pi) ** (d / 2))
        naive /= n
        worst_lin = max(worst_lin, abs(pdf_density(p, z) - naive) / naive)
        worst_log = max(worst_log, abs(math.exp(log_pdf_density(p, z)) - naive) / naive)
    dt = time.perf_counter() - t0
    ok = worst_lin <= 1e-12 and worst_log <= 1e-9 and dt <= 5
    return report("C2", "KDE oracle equivalence", ok,
                  f"linear {worst_lin:.1e} (limit 1e-12), exp(log) {worst_log:.1e} (limit 1e-9) on 1000 probes", dt)


def c3_bias():
    t0 = time.perf_counter()
    reps = sweep(standard_normal(1), 0.0, [0.1, 0.2], [1000], replications=2000, seed=0)
    parts, agree = [], True
    for r in reps:
        tol = max(3 * r.se_bias, 0.2 * abs(r.predicted_bias) + 1e-5)
        good = abs(r.measured_bias - r.predicted_bias) <= tol
        agree &= good
        parts.append(f"h={r.h}: measured {r.measured_bias:.3e} vs {r.predicted_bias:.3e} (tol {tol:.1e})")
    slope = loglog_slope([r.h for r in reps], [r.measured_bias for r in reps])
    dt = time.perf_counter() - t0
    ok = agree and abs(slope - 2) <= 0.3 and dt <= 120
    return report("C3", "bias theory", ok, "; ".join(parts) + f"; slope {slope:.3f} (need 2 +/- 0.3)", dt)


def c4_variance():
    t0 = time.perf_counter()
    N1 = standard_normal(1)
    r = monte_carlo_bias_variance(N1, 0.0, 0.2, 1000, replications=2000, seed=0)
    ratio = r.measured_variance / r.predicted_variance
    reps = sweep(N1, 0.0, [0.2], [500, 1000, 2000, 4000], replications=2000, seed=0)
    slope = loglog_slope([q.n for q in reps], [q.measured_variance for q in reps])
    dt = time.perf_counter() - t0
    ok = abs(ratio - 1) <= 0.15 and abs(slope + 1) <= 0.1 and dt <= 120
    return report("C4", "variance theory", ok,
                  f"measured/predicted {ratio:.3f} (need within 15%); 1/n slope {slope:.4f} (need -1 +/- 0.1)", dt)


def c5_no_forgetting():
    stream, bank, rep, dt = blob_run()
    acc, forg = average_accuracy(rep.matrix), average_forgetting(rep.matrix)
    tp = rep.final["tp_acc"]
    ok = acc >= 0.95 and forg == 0.0 and tp >= 0.98 and dt <= 120
    return report("C5", "end-to-end no-forgetting", ok,
                  f"average accuracy {acc:.4f}, forgetting {forg!r}, TP accuracy {tp:.4f}", dt)


def c6_scaling():
    t0 = time.perf_counter()
    stream = synth_blobs(100, 2, 16, 32.0, 100, seed=0)
    bank = train_stream(stream, TrainConfig(epochs=1, seed=0))
    rep = evaluate_stream(bank, stream)
    try:
        bank.add_task(TaskEntry(10_000, bank.entries[0].params, list(bank.entries[0].class_pdfs)))
        rejected = False
    except ContractError:
        rejected = True
    forg = average_forgetting(rep.matrix)
    dt = time.perf_counter() - t0
    ok = len(bank) == 100 and len(bank.labels) == 200 and rejected and forg == 0.0 and dt <= 600
    return report("C6", "100-task scaling", ok,
                  f"{len(bank)} entries, {len(bank.labels)} labels, overlap rejected={rejected}, "
                  f"forgetting {forg!r}, average accuracy {average_accuracy(rep.matrix):.4f}", dt)


def c7_product_consistency():
    t0 = time.perf_counter()
    stream, bank, _, _ = blob_run()
    X, _, _ = stream.test_data()
    preds = bank.predict_many(X)
    worst = max(abs(p.combined_probability - p.tp_probability * p.wp_posterior) for p in preds)

    # shared parameters: every task embeds with task 1's network
    shared = bank.entries[0].params
    sbank = ModelBank()
    for i, t in enumerate(stream.tasks):
        Z = embed(shared, t.x_train).data
        sbank.add_task(TaskEntry(t.task_id, shared, build_task_pdfs(Z, t.y_train, 100, 0.5, i)))
    Zall = embed(shared, X).data
    flat = []
    for e in sbank.entries:
        for p in e.class_pdfs:
            flat.append((math.log(p.prior) + log_density_matrix(p, Zall, sbank.clip), e.task_id, p.class_label))
    scores = np.stack([f[0] for f in flat], axis=1)
    best = np.argmax(scores, axis=1)
    mismatches = sum(
        (p.task_id, p.class_label) != flat[b][1:] for p, b in zip(sbank.predict_many(X), best)
    )
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and mismatches == 0
    return report("C7", "TP x WP product consistency", ok,
                  f"max |combined - tp*wp| {worst:.1e} over {len(preds)} probes; "
                  f"{mismatches} decisions differ from the flat argmax", dt)


def c8_persistence(tmp_dir):
    t0 = time.perf_counter()
    _, bank, _, _ = blob_run()
    mb.save(bank, tmp_dir)
    loaded = mb.load(tmp_dir)
    probes = np.random.default_rng(8).standard_normal((1000, 16)) * 8
    same = bank.predict_many(probes) == loaded.predict_many(probes)
    dt = time.perf_counter() - t0
    return report("C8", "persistence round trip", same and len(loaded) == 5,
                  f"{len(loaded)}-task bank, 1000 probes bit-identical={same}", dt)


def c9_sensitivity():
    t0 = time.perf_counter()
    base = average_accuracy(blob_run()[2].matrix)
    low_d = average_accuracy(blob_run(dim=2)[2].matrix)
    wide_h = average_accuracy(blob_run(bandwidth=10.0)[2].matrix)
    dt = time.perf_counter() - t0
    ok = low_d < base and wide_h < base
    return report("C9", "bandwidth/dimension sensitivity", ok,
                  f"accuracy d=2 {low_d:.4f}, h=10 {wide_h:.4f}, defaults (d=32, h=0.5) {base:.4f}", dt)


# ------------------------------------------------------------------ pytest


def test_c1_gradient_correctness():
    assert c1_gradients()


def test_c2_kde_oracle_equivalence():
    assert c2_kde_oracle()


def test_c3_bias_theory():
    assert c3_bias()


def test_c4_variance_theory():
    assert c4_variance()


def test_c5_end_to_end_no_forgetting():
    assert c5_no_forgetting()


@pytest.mark.slow
def test_c6_hundred_task_scaling():
    assert c6_scaling()


def test_c7_product_consistency():
    assert c7_product_consistency()


def test_c8_persistence(tmp_path):
    assert c8_persistence(tmp_path / "bank")


def test_c9_sensitivity():
    assert c9_sensitivity()


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        steps = [c1_gradients, c2_kde_oracle, c3_bias, c4_variance, c5_no_forgetting, c6_scaling,
                 c7_product_consistency, lambda: c8_persistence(tmp + "/bank"), c9_sensitivity]
        for step in steps:
            step()
    print()
    for key in sorted(RESULTS):
        print(RESULTS[key][1])
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
