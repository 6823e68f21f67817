"""Toy training demo: the same network trained as a CNN and as a CCNN."""
from __future__ import annotations

import math
import time

import numpy as np

from .nn import graph as G
from .nn.functional import FeatureMap
from .nn.tensor import cross_entropy, no_grad


def make_dataset(n: int = 256, size: int = 32, seed: int = 0, noise: float = 0.25):
    """Two classes that differ only in a fine, zero-mean texture.

    Each image holds one 6x6 patch at a random place: a one-pixel checkerboard
    for class 0, one-pixel vertical stripes for class 1.  Both patches have the
    same mean and energy, so only detail at the finest scale separates them.
    """
    rng = np.random.default_rng(seed)
    patch = 6
    rows, cols = np.indices((patch, patch))
    textures = [
        np.where((rows + cols) % 2 == 0, 1.0, -1.0),
        np.where(cols % 2 == 0, 1.0, -1.0),
    ]
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    images = rng.normal(0.0, noise, size=(n, 1, size, size))
    for i, label in enumerate(labels):
        r, c = rng.integers(0, size - patch + 1, size=2)
        images[i, 0, r : r + patch, c : c + patch] += textures[label]
    return images, labels


def toy_layers(size: int = 32, width: int = 8, classes: int = 2) -> list:
    """Three stride-2 conv blocks and a linear classifier."""
    final = size // 8
    return [
        G.Conv(width, k=3, stride=2, pad=1),
        G.BatchNorm(width),
        G.ReLU(),
        G.Conv(width, k=3, stride=2, pad=1),
        G.BatchNorm(width),
        G.ReLU(),
        G.Conv(width, k=3, stride=2, pad=1),
        G.BatchNorm(width),
        G.ReLU(),
        G.Linear(width * final * final, classes),
    ]


class SGD:
    """Stochastic gradient descent with (optionally Nesterov) momentum."""

    def __init__(self, params, lr: float = 0.05, momentum: float = 0.9, nesterov: bool = False, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.nesterov = nesterov
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            update = g + self.momentum * v if self.nesterov else v
            p.data -= self.lr * update

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def accuracy(g: G.LayerGraph, images, labels, batch: int = 64) -> float:
    correct = 0
    with no_grad():
        for start in range(0, len(labels), batch):
            logits = G.forward(g, FeatureMap.from_images(images[start : start + batch]), training=False)
            correct += int((logits.data.argmax(axis=1) == labels[start : start + batch]).sum())
    return correct / len(labels)


def train(
    g: G.LayerGraph,
    images,
    labels,
    epochs: int = 20,
    lr: float = 0.05,
    batch: int = 32,
    seed: int = 0,
    momentum: float = 0.9,
    nesterov: bool = False,
    log=None,
) -> list[dict]:
    """Minibatch training; returns one record per epoch (loss, train accuracy, seconds)."""
    rng = np.random.default_rng(seed)
    opt = SGD(g.parameters(), lr=lr, momentum=momentum, nesterov=nesterov)
    history = []
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(labels))
        total = 0.0
        for step, start in enumerate(range(0, len(labels), batch)):
            idx = order[start : start + batch]
            opt.zero_grad()
            logits = G.forward(g, FeatureMap.from_images(images[idx]), training=True, seed=seed * 100003 + epoch * 1009 + step)
            loss = cross_entropy(logits, labels[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        mean_loss = total / len(labels)
        record = {
            "epoch": epoch,
            "loss": mean_loss,
            "accuracy": accuracy(g, images, labels),
            "seconds": time.perf_counter() - t0,
        }
        if not math.isfinite(mean_loss):
            record["diverged"] = True
            history.append(record)
            break
        history.append(record)
        if log is not None:
            log(record)
    return history


def compare(epochs: int = 20, seed: int = 0, n: int = 256, lr: float = 0.05, nesterov: bool = False, log=None) -> dict:
    """Train the toy network as a CNN and, from the same initial weights, as a CCNN."""
    images, labels = make_dataset(n=n, seed=seed)
    test_images, test_labels = make_dataset(n=n, seed=seed + 1)
    cnn = G.LayerGraph.build(toy_layers(), in_channels=1, seed=seed)
    ccnn = G.convert_to_ccnn(cnn)
    results = {"parameters": {"cnn": cnn.parameter_count(), "ccnn": ccnn.parameter_count()}}
    for name, graph in (("cnn", cnn), ("ccnn", ccnn)):
        tag = (lambda r, name=name: log({"model": name, **r})) if log else None
        results[name] = train(graph, images, labels, epochs=epochs, lr=lr, seed=seed, nesterov=nesterov, log=tag)
        results[f"{name}_test_accuracy"] = accuracy(graph, test_images, test_labels)
    with no_grad():
        fm = G.forward(ccnn, FeatureMap.from_images(images[:1]), stop=len(ccnn.layers) - 2)
    results["ccnn_final_map"] = list(fm.shape[2:])
    return results
