"""A checkered network contains the ordinary network.

Builds a small CNN with three stride-2 convolutions, converts it, and runs
both on the same random batch.  The submap sitting at offset (0, 0) of each
converted layer is exactly the ordinary layer's output; the remaining
submaps carry the extra samples.
"""
import numpy as np

from ccnn.nn import graph as G
from ccnn.train import toy_layers

rng = np.random.default_rng(0)
cnn = G.LayerGraph.build(toy_layers(), in_channels=1, seed=0)
ccnn = G.convert_to_ccnn(cnn)

print("ordinary:")
print(cnn.to_text())
print("converted:")
print(ccnn.to_text())
print(f"parameters: {cnn.parameter_count()} -> {ccnn.parameter_count()}")

x = rng.normal(size=(4, 1, 32, 32))
for i, (a, b) in enumerate(zip(G.activations(cnn, x), G.activations(ccnn, x))):
    if isinstance(ccnn.layers[i], G.MeanSubmaps):
        break
    first = b.data[:, :, b.index_of(0, 0)]
    diff = np.abs(first - a.data[:, :, 0]).max()
    print(f"layer {i:2d} {type(ccnn.layers[i]).__name__:<12} submaps {b.shape[2]:2d}  max |diff| = {diff:.1e}")
