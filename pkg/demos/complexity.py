"""Cost of a layer after s subsampling steps.

Prints the closed-form memory/compute factors next to ratios counted by a
shape-only dry run of small reference networks.
"""
from ccnn import analysis as A
from ccnn.cli import complexity_tables

print(complexity_tables(5))

# Sample-count arithmetic: 256 pixels, three steps of each kind.
for label, n in (("traditional", 1), ("checkered", 2), ("complete", 4)):
    print(f"{label:<12} 256 -> {A.resolution_after(256, 2, 2, n, 3)}")
