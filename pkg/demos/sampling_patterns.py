"""Where do the samples end up?

Traces a 32x32 image through five checkered subsampling steps with three
different sampler sequences and prints the surviving pixel positions as
ASCII art.  The all-zeros sequence piles its samples onto the diagonal,
while the lattice sequence spreads them one per row and column.

Run:  python demos/sampling_patterns.py [output_dir]
"""
import sys
from pathlib import Path

from ccnn import netpbm
from ccnn import trace as T

SIZE, STEPS = 32, 5

sequences = {
    "fixed": T.uniform_sequence(2, STEPS),
    "lattice": T.lattice_sequence(STEPS),
    "random": T.random_sequence(2, STEPS, seed=3),
}

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else None

for name, seq in sequences.items():
    state = T.apply_sequence(T.TraceState.fresh(SIZE), seq)
    mask = T.position_mask(state)
    rep = T.coverage_stats(state)
    print(f"== {name}: {rep.samples} samples, submaps {state.shape}, block discrepancy {rep.block_discrepancy:.3f}")
    for row in mask:
        print("".join("#" if v else "." for v in row))
    print()
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        netpbm.write(out_dir / f"{name}.pgm", netpbm.render_mask(mask))
        netpbm.write(out_dir / f"{name}.ppm", netpbm.render_labels(T.submap_index_image(state)))

# The sample count grows by a factor 2 per step instead of shrinking by 4
# (n / k^2 = 2/4), so after s steps there are 2^s submaps of (32/2^s)^2.
for s in range(STEPS + 1):
    st = T.apply_sequence(T.TraceState.fresh(SIZE), T.uniform_sequence(2, s))
    print(f"s={s}: {len(st.submaps):2d} submaps of {st.submaps[0].height}x{st.submaps[0].width}")
