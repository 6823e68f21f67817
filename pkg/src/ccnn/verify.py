"""Self-check suites run by ``ccnn verify``.

Each suite builds seeded random instances, compares the library against an
independent route (stride-1 convolution plus selection, the dilated network,
finite differences, brute-force enumeration, table constants) and returns a
JSON-friendly summary with a ``passed`` flag.
"""
from __future__ import annotations

import numpy as np

from . import analysis, trace
from .nn import functional as F
from .nn import graph as G
from .nn.functional import FeatureMap
from .nn.tensor import Tensor

SUITES = ("subset", "dilation", "gradients", "coverage", "complexity")


def _randomize_bn(g: G.LayerGraph, rng) -> None:
    for p, b in zip(g.params, g.buffers):
        if "running_mean" in b:
            c = b["running_mean"].shape[0]
            b["running_mean"][:] = rng.normal(0, 0.5, c)
            b["running_var"][:] = rng.uniform(0.5, 2.0, c)
            p["gamma"].data[:] = rng.uniform(0.5, 1.5, c)
            p["beta"].data[:] = rng.normal(0, 0.5, c)


_STRIDED = [
    lambda c: G.Conv(c, k=3, stride=2, pad=1),
    lambda c: G.Conv(c, k=1, stride=2, pad=0),
    lambda c: G.Conv(c, k=2, stride=2, pad=0),
    lambda c: G.MaxPool(k=2, stride=2),
    lambda c: G.MaxPool(k=3, stride=2, pad=1),
]


def random_toy_graph(rng: np.random.Generator, in_channels: int = 2, classifier: bool = False, seed: int = 0):
    """Random conv/bn/relu/pool stack with 2 or 3 stride-2 layers."""
    layers = []
    channels = in_channels
    n_strided = int(rng.integers(2, 4))
    for _ in range(n_strided):
        out = int(rng.integers(2, 5))
        if rng.random() < 0.7:
            k = int(rng.choice([1, 3]))
            layers.append(G.Conv(out, k=k, stride=1, pad=k // 2))
            channels = out
            if rng.random() < 0.6:
                layers.append(G.BatchNorm(channels))
            layers.append(G.ReLU())
        layer = _STRIDED[int(rng.integers(len(_STRIDED)))](out)
        layers.append(layer)
        if isinstance(layer, G.Conv):
            channels = out
    layers.append(G.Conv(3, k=3, pad=1))
    if classifier:
        layers += [G.GlobalPool3d("avg"), G.Linear(3, 4)]
    g = G.LayerGraph.build(layers, in_channels, seed=seed)
    _randomize_bn(g, rng)
    return g


def check_subset(instances: int = 5, seed: int = 0, size: int = 16) -> dict:
    """Submap (0, 0) of every converted layer equals the traditional layer output."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(instances):
        g = random_toy_graph(rng, seed=seed + t)
        cg = G.convert_to_ccnn(g)
        x = rng.normal(size=(2, 2, size, size))
        for ref, got in zip(G.activations(g, x), G.activations(cg, x)):
            sub = got.data[:, :, got.index_of(0, 0)]
            worst = max(worst, float(np.abs(sub - ref.data[:, :, 0]).max()))
    return {"suite": "subset", "instances": instances, "max_abs_diff": worst, "passed": worst < 1e-9}


def interleave(fm: FeatureMap, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Scatter every submap back to its original-image positions.

    Returns the full (B, C, H, W) map and a per-position hit count.
    """
    b, c = fm.shape[:2]
    full = np.zeros((b, c, height, width))
    hits = np.zeros((height, width), dtype=np.int64)
    for i, m in enumerate(fm.metas):
        rs = slice(m.row_offset, m.row_offset + m.step_stride * m.height, m.step_stride)
        cs = slice(m.col_offset, m.col_offset + m.step_stride * m.width, m.step_stride)
        full[:, :, rs, cs] = fm.data[:, :, i]
        hits[rs, cs] += 1
    return full, hits


def check_dilation(instances: int = 3, seed: int = 1, size: int = 16) -> dict:
    """Complete multisampling and the dilated network produce the same activations."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    exact_cover = True
    for t in range(instances):
        g = random_toy_graph(rng, seed=seed + t)
        complete = G.to_complete_multisampling(g)
        dilated = G.dilation_equivalent(g)
        x = rng.normal(size=(2, 2, size, size))
        for sub, full in zip(G.activations(complete, x), G.activations(dilated, x)):
            h, w = full.shape[3:]
            rebuilt, hits = interleave(sub, h, w)
            exact_cover &= bool((hits == 1).all())
            worst = max(worst, float(np.abs(rebuilt - full.data[:, :, 0]).max()))
    identity = analysis.resolution_after(size * size, 2, 2, 4, 3) == size * size
    return {
        "suite": "dilation",
        "instances": instances,
        "max_abs_diff": worst,
        "exact_cover": exact_cover,
        "complete_keeps_resolution": identity,
        "passed": worst < 1e-9 and exact_cover and identity,
    }


def numeric_grad(f, arrays: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of scalar ``f()`` w.r.t. each array, perturbed in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            up = f()
            arr[idx] = old - h
            down = f()
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)
    return float((np.abs(a - b) / denom).max())


def _grad_case(name, build, inputs, rng):
    """``build(*tensors)`` returns a Tensor; loss is its dot product with a fixed random array."""
    tensors = [Tensor(a, requires_grad=True) for a in inputs]
    out = build(*tensors)
    proj = rng.normal(size=out.shape)
    loss = (out * proj).sum()
    loss.backward()
    analytic = [t.grad for t in tensors]

    def f():
        return float((build(*[Tensor(t.data) for t in tensors]).data * proj).sum())

    numeric = numeric_grad(f, [t.data for t in tensors])
    err = max(max_relative_error(a, n) for a, n in zip(analytic, numeric))
    return {"op": name, "max_relative_error": err}


def gradient_cases(seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)

    def fm(t, metas=None):
        m = t.shape[2]
        metas = metas or tuple(trace.SubmapMeta(i, i, m, t.shape[3], t.shape[4]) for i in range(m))
        return FeatureMap(t, metas)

    cases = [
        (
            "checkered_conv",
            lambda x, w, b: F.checkered_conv(fm(x), w, b, padding=1).tensor,
            [rng.normal(size=(1, 2, 1, 6, 6)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)],
        ),
        (
            "checkered_conv_complement",
            lambda x, w, b: F.checkered_conv_complement(fm(x), w, b, padding=1).tensor,
            [rng.normal(size=(1, 2, 2, 6, 6)), rng.normal(size=(2, 2, 3, 3)), rng.normal(size=2)],
        ),
        (
            "conv3d_submap",
            lambda x, w, b: F.conv3d_submap(fm(x), w, b, padding=1).tensor,
            [rng.normal(size=(2, 2, 3, 5, 5)), rng.normal(size=(2, 2, 2, 3, 3)), rng.normal(size=2)],
        ),
        (
            "batchnorm",
            lambda x, g, b: F.batchnorm(fm(x), g, b, eps=1e-5, training=True, running_mean=np.zeros(3), running_var=np.ones(3)).tensor,
            [rng.normal(size=(2, 3, 2, 4, 4)), rng.uniform(0.5, 1.5, 3), rng.normal(size=3)],
        ),
        (
            "mean_over_submaps",
            lambda x: F.mean_over_submaps(fm(x)).tensor,
            [rng.normal(size=(2, 2, 4, 3, 3))],
        ),
        (
            "checkered_maxpool",
            lambda x: F.checkered_maxpool(fm(x)).tensor,
            [rng.permutation(72).reshape(1, 2, 1, 6, 6) / 7.0],
        ),
        (
            "global_pool3d_max",
            lambda x: F.global_pool3d(fm(x), "max"),
            [rng.permutation(36).reshape(1, 2, 2, 3, 3) / 5.0],
        ),
    ]
    return [_grad_case(name, build, inputs, rng) for name, build, inputs in cases]


def check_gradients(seed: int = 0, tolerance: float = 1e-4) -> dict:
    cases = gradient_cases(seed)
    worst = max(c["max_relative_error"] for c in cases)
    return {"suite": "gradients", "cases": cases, "max_relative_error": worst, "passed": worst < tolerance}


def check_coverage(size: int = 32, max_steps: int = 5, seeds=range(10)) -> dict:
    """Every row and column stays represented, with equal counts, for n-rooks sequences."""
    sequences = {"fixed": trace.uniform_sequence(2, max_steps), "lattice": trace.lattice_sequence(max_steps)}
    for s in seeds:
        sequences[f"random:{s}"] = trace.random_sequence(2, max_steps, s)
    failures = []
    for name, seq in sequences.items():
        state = trace.TraceState.fresh(size)
        for step, line in enumerate(seq.lines, start=1):
            state = trace.subsample_step(state, line)
            rep = trace.coverage_stats(state)
            rows_equal = len(set(rep.per_row)) == 1 and len(set(rep.per_col)) == 1
            if rep.rows_covered != size or rep.cols_covered != size or not rows_equal:
                failures.append({"sequence": name, "step": step})
    lattice = trace.apply_sequence(trace.TraceState.fresh(size), trace.lattice_sequence(max_steps))
    rep = trace.coverage_stats(lattice)
    one_each = set(rep.per_row) == {1} and set(rep.per_col) == {1}
    return {
        "suite": "coverage",
        "sequences": len(sequences),
        "failures": failures,
        "lattice_one_per_row_and_column": one_each,
        "passed": not failures and one_each,
    }


def check_complexity(max_steps: int = 6) -> dict:
    """Dry-run cost ratios equal the analytic factors."""
    mismatches = []
    for rule in ("double", "constant"):
        for scheme in analysis.SCHEMES:
            measured = analysis.measured_profile(scheme, rule, max_steps)
            for s, (mem, comp) in enumerate(measured):
                prof = analysis.complexity_profile(scheme, rule, s)
                if prof.memory_factor != mem or prof.compute_factor != comp:
                    mismatches.append({"scheme": scheme, "rule": rule, "s": s})
    measured = analysis.measured_profile("checkered", "sqrt2", max_steps)
    for s in range(0, max_steps + 1, 2):
        prof = analysis.complexity_profile("checkered", "sqrt2", s)
        mem, comp = measured[s]
        if prof.memory_factor != mem or prof.compute_factor != comp:
            mismatches.append({"scheme": "checkered", "rule": "sqrt2", "s": s})
    return {"suite": "complexity", "mismatches": mismatches, "passed": not mismatches}


def run(suite: str, seed: int = 0) -> list[dict]:
    if suite == "all":
        return [run(s, seed)[0] for s in SUITES]
    if suite == "subset":
        return [check_subset(seed=seed)]
    if suite == "dilation":
        return [check_dilation(seed=seed + 1)]
    if suite == "gradients":
        return [check_gradients(seed=seed)]
    if suite == "coverage":
        return [check_coverage()]
    if suite == "complexity":
        return [check_complexity()]
    raise KeyError(suite)
