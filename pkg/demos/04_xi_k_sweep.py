"""Grid over the neighbour counts xi (part level) and k (pixel level)."""

import numpy as np

from mml import RunConfig, SyntheticSpec, sweep

spec = SyntheticSpec(num_classes=20, per_class=20, shape=(16, 5, 5), noise_scale=1.5,
                     relu=True, seed=3)
values = [1, 3, 5, 7, 9]
reports = sweep(RunConfig(bank=spec, mode="sweep", tasks=100, seed=3), values, values)

grid = np.array([r.accuracy for r in reports]).reshape(len(values), len(values))
print("rows: xi, columns: k")
print("      " + "".join(f"k={k:<6d}" for k in values))
for xi, row in zip(values, grid):
    print(f"xi={xi:<2d} " + "".join(f"{a:<8.3f}" for a in row))

# every cell saw exactly the same tasks
assert len({r.stream_hash for r in reports}) == 1
