# %% [markdown]
# # Five barrier strategies side by side
#
# Each simulated worker repeatedly computes an SGD step on its own data
# slice, commits the update to a parameter server and then asks its
# barrier whether it may start the next step. Here we run all five
# strategies on the same 200-node population and compare how far the
# nodes got.

# %%
import numpy as np

from barrierlab import make_policy, run
from barrierlab.config import SimConfig, TaskSpec
from barrierlab.metrics import progress_histogram, progress_summary

base = dict(num_nodes=200, duration=10.0, model_dim=50, master_seed=3,
            task=TaskSpec(learning_rate=0.005))

# %% [markdown]
# `pbsp` and `pssp` sample 1% of the population by default (two peers
# here). The others look at every node.

# %%
traces = {}
for name in ("bsp", "ssp", "pbsp", "pssp", "asp"):
    traces[name] = run(SimConfig(policy=make_policy(name), **base))
    s = progress_summary(traces[name])
    print(f"{name:5s} mean={s['mean']:7.1f} std={s['std']:6.2f} "
          f"range=[{s['min']}, {s['max']}]")

# %% [markdown]
# BSP keeps everyone within one step of each other. That costs speed,
# because the whole population waits for the slowest node. ASP is fast and
# widely spread. The sampled variants sit in between.


# %%
def sketch(trace, width=40, bin_width=10):
    hist = progress_histogram(trace, bin_width)
    top = max(n for _, n in hist)
    for start, n in hist:
        if n:
            print(f"{start:5d} | {'#' * max(1, round(width * n / top))} {n}")


for name in ("bsp", "pbsp", "asp"):
    print(f"\n{name}")
    sketch(traces[name])

# %% [markdown]
# The staleness audit records, for each admission, how far the node was
# ahead of the slowest counter it consulted.

# %%
for name in ("ssp", "pssp"):
    tr = traces[name]
    lags = np.array([a.view_lag for a in tr.staleness_audits if a.view_lag is not None])
    print(f"{name}: {len(lags)} admissions, max lag {lags.max()}, "
          f"bound {tr.config.policy.staleness}, violations {tr.staleness_violations}")
