"""The three metric branches on a toy query and support class."""

import numpy as np

from mml import MetricConfig, branch_scores
from mml.descriptors import part_view, pixel_view, stack_maps

rng = np.random.default_rng(0)
C, H, W = 8, 4, 4

# A support class of two images sharing a mean pattern, and two queries:
# one drawn from the same class, one from an unrelated class.
pattern = rng.standard_normal((C, H, W))
support = pattern + 0.3 * rng.standard_normal((2, C, H, W))
same = pattern + 0.3 * rng.standard_normal((C, H, W))
other = rng.standard_normal((C, H, W))

# Pixel descriptors are channel fibers (C values per spatial position),
# part descriptors are flattened channel planes (HW values per channel).
stack = stack_maps(support)
print("pixel view", pixel_view(stack).shape, " part view", part_view(stack).shape)

cfg = MetricConfig(xi=3, k=3)
for name, query in [("same class", same), ("other class", other)]:
    s = branch_scores(query, support, cfg)
    print(f"{name:12s} d_part={s.d_part:7.3f}  d_pixel={s.d_pixel:7.3f}  d_dist={s.d_dist:9.3f}")

# Similarities go up and the distribution distance goes down for the matching class.
# The same comparison with the Wasserstein distances:
for kind in ("wass", "wass-exact"):
    cfg = MetricConfig(distribution=kind)
    print(kind, [round(branch_scores(q, support, cfg).d_dist, 3) for q in (same, other)])
