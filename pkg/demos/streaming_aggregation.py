# %% [markdown]
# # Distributed mean and variance
#
# Each node summarises its own readings as (count, mean, M2). Summaries from
# different nodes are combined pairwise. The result is the same as
# summarising all readings in one pass.

# %%
import numpy as np

from barrierlab import make_policy, run
from barrierlab.config import SimConfig
from barrierlab.workloads import local_summary, merge_summaries, tree_merge

rng = np.random.default_rng(0)
chunks = [rng.normal(5.0, 2.0, size=rng.integers(5, 50)) for _ in range(1000)]
merged = tree_merge([local_summary(c.tolist()) for c in chunks])
pooled = np.concatenate(chunks)
print(merged.count, merged.mean, merged.variance)
print(pooled.size, pooled.mean(), pooled.var())

# %% [markdown]
# The merge is commutative, so arrival order at the server does not matter.

# %%
a, b = local_summary([1, 2, 3]), local_summary([4, 5])
print(merge_summaries(a, b), merge_summaries(b, a))

# %% [markdown]
# The same workload can drive the simulator. The server state is the
# running summary; under SSP it tracks the average of node means while
# nodes proceed at different speeds.

# %%
tr = run(SimConfig(num_nodes=50, duration=5.0, workload="aggregation",
                   policy=make_policy("ssp")))
count, mean, m2 = tr.final_model.params
print(f"{int(count)} readings, mean {mean:.3f}, variance {m2 / count:.3f}")
print("distance from node-mean average over time:")
for t, err in tr.loss_curve:
    print(f"  t={t:3.0f}s  {err:.4f}")
