"""Keeping every sample is the same as dilating.

With the complete sampler (all four positions of each 2x2 window) no
resolution is lost.  Interleaving the submaps back into a full-size map
gives the activations of the network where stride-2 layers were replaced
by stride 1 and later layers were dilated.
"""
import numpy as np

from ccnn.nn import graph as G
from ccnn.verify import interleave

layers = [
    G.Conv(4, k=3, stride=2, pad=1),
    G.ReLU(),
    G.MaxPool(k=2, stride=2),
    G.Conv(4, k=3, pad=1),
    G.Conv(4, k=3, stride=2, pad=1),
]
g = G.LayerGraph.build(layers, in_channels=2, seed=1)
complete = G.to_complete_multisampling(g)
dilated = G.dilation_equivalent(g)

print("dilated graph:")
print(dilated.to_text())

x = np.random.default_rng(1).normal(size=(1, 2, 16, 16))
for i, (sub, full) in enumerate(zip(G.activations(complete, x), G.activations(dilated, x))):
    rebuilt, hits = interleave(sub, *full.shape[3:])
    diff = np.abs(rebuilt - full.data[:, :, 0]).max()
    print(f"layer {i}: {sub.shape[2]:3d} submaps of {sub.shape[3]}x{sub.shape[4]}, "
          f"every position hit once: {(hits == 1).all()}, max |diff| = {diff:.1e}")
