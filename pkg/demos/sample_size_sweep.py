# %% [markdown]
# # How many peers does a probabilistic barrier need?
#
# pBSP applies the BSP rule to a random sample of peers. With no peers it
# is ASP. With every peer and shared state it is BSP. This walks
# through the values in between.

# %%
from barrierlab import make_policy
from barrierlab.config import SimConfig, TaskSpec
from barrierlab.metrics import sweep

cfg = SimConfig(num_nodes=200, duration=10.0, model_dim=20, policy=make_policy("pbsp"),
                task=TaskSpec(learning_rate=0.005))
betas = [0, 1, 2, 4, 8, 16, 32, 64]
rows = sweep(cfg, "pbsp", betas, seeds=[1, 2, 3])

# %% [markdown]
# Average the per-seed spread for each sample size.

# %%
for b in betas:
    sel = [r for r in rows if r.value == b]
    mean = sum(r.mean for r in sel) / len(sel)
    std = sum(r.std for r in sel) / len(sel)
    print(f"beta={b:3d}  mean progress {mean:7.1f}  spread {std:7.2f}")

# %% [markdown]
# Even one or two sampled peers cut the spread by a large factor relative to
# beta=0, and larger samples pull the population closer to lockstep.
