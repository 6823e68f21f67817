"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import json
import time
from fractions import Fraction

import numpy as np
import pytest

from ccnn import analysis as A
from ccnn import trace as T
from ccnn import train
from ccnn.nn import functional as F
from ccnn.nn import graph as G
from ccnn.nn.tensor import Tensor
from ccnn.verify import interleave, max_relative_error, random_toy_graph

from conftest import central_difference


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, detail

    return emit


def test_c01_geometry(report):
    t0 = time.perf_counter()
    shapes = [T.apply_sequence(T.TraceState.fresh(16), T.uniform_sequence(2, s)).shape for s in (1, 2, 3)]
    elapsed = time.perf_counter() - t0
    ok = shapes == [(2, 8, 8), (4, 4, 4), (8, 2, 2)] and elapsed < 1.0
    report(1, "16x16 trace geometry 2x8x8 / 4x4x4 / 8x2x2", ok, f"shapes={shapes}, {elapsed:.4f}s")


def test_c02_subset_equivalence(report):
    rng = np.random.default_rng(2024)
    worst, layers_checked = 0.0, 0
    for t in range(6):
        g = random_toy_graph(rng, seed=100 + t)
        c = G.convert_to_ccnn(g)
        x = rng.normal(size=(2, 2, 16, 16))
        for ref, got in zip(G.activations(g, x), G.activations(c, x)):
            worst = max(worst, float(np.abs(got.data[:, :, got.index_of(0, 0)] - ref.data[:, :, 0]).max()))
            layers_checked += 1
    report(2, "submap (0,0) equals traditional output, 6 graphs", worst < 1e-9, f"max abs diff {worst:.2e} over {layers_checked} layers")


def test_c03_dilation_equivalence(report):
    rng = np.random.default_rng(77)
    worst, covered = 0.0, True
    for t in range(4):
        g = random_toy_graph(rng, seed=200 + t)
        complete, dilated = G.to_complete_multisampling(g), G.dilation_equivalent(g)
        x = rng.normal(size=(2, 2, 16, 16))
        for sub, full in zip(G.activations(complete, x), G.activations(dilated, x)):
            rebuilt, hits = interleave(sub, *full.shape[3:])
            covered &= bool((hits == 1).all())
            worst = max(worst, float(np.abs(rebuilt - full.data[:, :, 0]).max()))
    identity = all(A.resolution_after(r, 2, 2, 4, s) == r for r in (1, 64, 1024) for s in range(6))
    ok = worst < 1e-9 and covered and identity
    report(3, "complete multisampling equals dilated network, 4 graphs", ok, f"max abs diff {worst:.2e}, exact cover {covered}, n=k^2 identity {identity}")


def _sequences():
    seqs = {"fixed": T.uniform_sequence(2, 5), "lattice": T.lattice_sequence(5)}
    for seed in range(10):
        seqs[f"random:{seed}"] = T.random_sequence(2, 5, seed)
    return seqs


def test_c04_n_rooks_coverage(report):
    bad = []
    for name, seq in _sequences().items():
        state = T.TraceState.fresh(32)
        for step, line in enumerate(seq.lines, start=1):
            state = T.subsample_step(state, line)
            mask = T.position_mask(state)
            rows, cols = mask.sum(axis=1), mask.sum(axis=0)
            if (rows == 0).any() or (cols == 0).any() or len(set(rows)) != 1 or len(set(cols)) != 1:
                bad.append((name, step))
    report(4, "every row/column represented with equal counts", not bad, f"12 sequences x 5 steps, failures {bad}")


def test_c05_lattice_regularity(report):
    seq = T.lattice_sequence(5)
    state = T.TraceState.fresh(32)
    discrepancies = []
    for s, line in enumerate(seq.lines, start=1):
        state = T.subsample_step(state, line)
        discrepancies.append(T.block_discrepancy(T.position_mask(state), 2**s))
    mask = T.position_mask(state)
    one_each = bool((mask.sum(axis=0) == 1).all() and (mask.sum(axis=1) == 1).all())
    ok = one_each and all(d == 0 for d in discrepancies)
    report(5, "lattice sequence: one sample per row/column, zero block discrepancy", ok, f"discrepancy per step {discrepancies}")


def _grad_error(build, arrays, seed):
    rng = np.random.default_rng(seed)
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*ts)
    proj = rng.normal(size=out.shape)
    (out * proj).sum().backward()
    worst = 0.0
    for t in ts:
        num = central_difference(lambda: float((build(*[Tensor(s.data) for s in ts]).data * proj).sum()), t.data)
        worst = max(worst, max_relative_error(t.grad, num))
    return worst


def test_c06_gradients(report):
    rng = np.random.default_rng(6)
    m1 = (T.SubmapMeta(0, 0, 1, 6, 6),)
    m2 = tuple(T.SubmapMeta(i, i, 2, 4, 4) for i in range(2))
    m3 = tuple(T.SubmapMeta(i, i, 3, 3, 3) for i in range(3))
    cases = {
        "checkered_conv": (
            lambda x, w, b: F.checkered_conv(F.FeatureMap(x, m1), w, b, padding=1).tensor,
            [rng.normal(size=(1, 2, 1, 6, 6)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)],
        ),
        "conv3d_submap": (
            lambda x, w, b: F.conv3d_submap(F.FeatureMap(x, m3), w, b, padding=1).tensor,
            [rng.normal(size=(1, 2, 3, 3, 3)), rng.normal(size=(2, 2, 2, 3, 3)), rng.normal(size=2)],
        ),
        "batchnorm": (
            lambda x, g, b: F.batchnorm(F.FeatureMap(x, m2), g, b, eps=1e-3, training=True).tensor,
            [rng.normal(size=(2, 2, 2, 4, 4)), rng.uniform(0.5, 1.5, 2), rng.normal(size=2)],
        ),
        "mean_over_submaps": (
            lambda x: F.mean_over_submaps(F.FeatureMap(x, m3)).tensor,
            [rng.normal(size=(2, 2, 3, 3, 3))],
        ),
    }
    t0 = time.perf_counter()
    errors = {name: _grad_error(build, arrays, i) for i, (name, (build, arrays)) in enumerate(cases.items())}
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items()) + f"; {elapsed:.2f}s"
    report(6, "reverse-mode vs central differences, rel err < 1e-4", worst < 1e-4 and elapsed < 30, detail)


_EXPECTED = {
    # (memory, compute) as functions of s, written out from the table rows
    ("traditional", "double"): lambda s: (Fraction(1, 2**s), 1),
    ("checkered", "double"): lambda s: (1, 2**s),
    ("dilated", "double"): lambda s: (2**s, 4**s),
    ("traditional", "constant"): lambda s: (Fraction(1, 4**s), Fraction(1, 4**s)),
    ("checkered", "constant"): lambda s: (Fraction(1, 2**s), Fraction(1, 2**s)),
    ("dilated", "constant"): lambda s: (1, 1),
}


def test_c07_complexity_tables(report):
    bad = []
    for (scheme, rule), f in _EXPECTED.items():
        for s in range(7):
            p = A.complexity_profile(scheme, rule, s)
            if (p.memory_factor, p.compute_factor) != f(s):
                bad.append((scheme, rule, s))
    for s in range(7):
        p = A.complexity_profile("checkered", "sqrt2", s)
        # memory 1/2^(s/2): squared is 1/2^s
        if p.memory_factor * p.memory_factor != Fraction(1, 2**s) or p.compute_factor != 1:
            bad.append(("checkered", "sqrt2", s))
    measured_bad = []
    for (scheme, rule), f in _EXPECTED.items():
        for s, pair in enumerate(A.measured_profile(scheme, rule, 6)):
            if pair != f(s):
                measured_bad.append((scheme, rule, s))
    sq = A.measured_profile("checkered", "sqrt2", 6)
    for s in range(0, 7, 2):
        if sq[s] != (Fraction(1, 2 ** (s // 2)), 1):
            measured_bad.append(("checkered", "sqrt2", s))
    # direct ratio of checkered vs traditional dry runs
    trad, chk = A.measured_profile("traditional", "double", 6), A.measured_profile("checkered", "double", 6)
    ratios_ok = all(c[0] / t[0] == 2**s and c[1] / t[1] == 2**s for s, (t, c) in enumerate(zip(trad, chk)))
    ok = not bad and not measured_bad and ratios_ok
    report(7, "complexity tables s=0..6 and measured ratios exact", ok, f"table mismatches {bad}, measured mismatches {measured_bad}")


def test_c08_parameter_conservation(report):
    graphs = [G.LayerGraph.build(train.toy_layers(), 1, seed=0)]
    rng = np.random.default_rng(8)
    graphs += [random_toy_graph(rng, classifier=True, seed=300 + t) for t in range(5)]
    ok = True
    for g in graphs:
        c = G.convert_to_ccnn(g)
        ok &= c.parameter_count() == g.parameter_count()
        before = [t.data.tobytes() for t in g.parameters()]
        after = [t.data.tobytes() for t in c.parameters()]
        ok &= before == after
    report(8, "convert_to_ccnn keeps parameter count and values bit-identical", ok, f"{len(graphs)} graphs")


@pytest.mark.slow
def test_c09_training_demo(report, tmp_path):
    t0 = time.perf_counter()
    results = train.compare(epochs=50, seed=0)
    elapsed = time.perf_counter() - t0
    log = tmp_path / "train_log.json"
    log.write_text(json.dumps(results))
    cnn, ccnn = results["cnn"], results["ccnn"]
    logged = len(cnn) == 50 and len(ccnn) == 50 and json.loads(log.read_text())["ccnn"][-1]["epoch"] == 50
    best = {name: max(r["accuracy"] for r in results[name]) for name in ("cnn", "ccnn")}
    ok = best["cnn"] > 0.95 and best["ccnn"] > 0.95 and elapsed < 300 and logged
    detail = (
        f"best train acc cnn {best['cnn']:.3f}, ccnn {best['ccnn']:.3f}; "
        f"final cnn {cnn[-1]['accuracy']:.3f}, ccnn {ccnn[-1]['accuracy']:.3f}; "
        f"test cnn {results['cnn_test_accuracy']:.3f}, ccnn {results['ccnn_test_accuracy']:.3f}; {elapsed:.1f}s"
    )
    report(9, "CNN and CCNN both exceed 95% train accuracy within 50 epochs, < 5 min", ok, detail)


def test_c10_naive_diagonal(report):
    bad = []
    for s in range(0, 8):
        state = T.apply_sequence(T.TraceState.fresh(128), T.uniform_sequence(2, s))
        bad += [(s, m) for m in state.submaps if m.row_offset != m.col_offset]
    report(10, "all-zeros sequence keeps row_offset == col_offset", not bad, "s = 0..7 on 128x128")
