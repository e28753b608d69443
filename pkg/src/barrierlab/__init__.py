"""Barrier-control strategies for distributed SGD, and a deterministic
discrete-event simulator to compare them."""

from .barrier import (BarrierPolicy, Method, StateView, STRATEGIES, asp_may_advance,
                      bsp_may_advance, make_policy, may_advance, psp_sample,
                      ssp_may_advance)
from .config import SimConfig
from .engine import run
from .errors import BarrierLabError, ConfigError, LifecycleError, MembershipError
from .model import ModelState, NodeState, Update, apply_update, read_my_writes_view
from .trace import RunTrace

__version__ = "0.1.0"

__all__ = [
    "BarrierPolicy", "Method", "StateView", "STRATEGIES", "asp_may_advance",
    "bsp_may_advance", "make_policy", "may_advance", "psp_sample", "ssp_may_advance",
    "SimConfig", "run", "BarrierLabError", "ConfigError", "LifecycleError",
    "MembershipError", "ModelState", "NodeState", "Update", "apply_update",
    "read_my_writes_view", "RunTrace", "__version__",
]
