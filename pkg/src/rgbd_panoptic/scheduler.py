"""Adaptive modality dropping for robustness training.

Each step first decides whether to drop anything (probability ``p_drop``), then
which modality. RGB is chosen with probability
``(n_depth + 1) / (n_rgb + n_depth + 2)``, so the modality dropped more often so far
becomes less likely to be dropped next.

``DropState`` is an immutable value: ``next_drop`` returns a new state and never
mutates its argument.
"""

import enum
from dataclasses import dataclass, replace
from typing import Any, Dict, Tuple

import numpy as np


class Decision(str, enum.Enum):
    KEEP_BOTH = "KeepBoth"
    DROP_RGB = "DropRGB"
    DROP_DEPTH = "DropDepth"


@dataclass(frozen=True)
class DropState:
    p_drop: float
    n_rgb_dropped: int = 0
    n_depth_dropped: int = 0
    rng_state: Any = None

    def __post_init__(self):
        if not 0.0 <= self.p_drop <= 1.0:
            raise ValueError(f"p_drop must lie in [0, 1], got {self.p_drop}")
        if self.n_rgb_dropped < 0 or self.n_depth_dropped < 0:
            raise ValueError("drop counters must be non-negative")

    @classmethod
    def initial(cls, p_drop: float, seed: int = 0) -> "DropState":
        return cls(p_drop=p_drop, rng_state=np.random.PCG64(seed).state)

    @property
    def p_drop_rgb(self) -> float:
        """Probability of picking RGB given that something is dropped."""
        return (self.n_depth_dropped + 1) / (self.n_rgb_dropped + self.n_depth_dropped + 2)


def next_drop(state: DropState) -> Tuple[Decision, DropState]:
    bitgen = np.random.PCG64()
    bitgen.state = state.rng_state if state.rng_state is not None else np.random.PCG64(0).state
    u_drop, u_which = np.random.Generator(bitgen).random(2)
    if u_drop >= state.p_drop:
        decision = Decision.KEEP_BOTH
        new = replace(state, rng_state=bitgen.state)
    elif u_which < state.p_drop_rgb:
        decision = Decision.DROP_RGB
        new = replace(state, n_rgb_dropped=state.n_rgb_dropped + 1, rng_state=bitgen.state)
    else:
        decision = Decision.DROP_DEPTH
        new = replace(state, n_depth_dropped=state.n_depth_dropped + 1, rng_state=bitgen.state)
    return decision, new


def simulate(p_drop: float, steps: int, seed: int = 0) -> Dict[str, float]:
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    state = DropState.initial(p_drop, seed)
    max_imbalance = 0
    for _ in range(steps):
        _, state = next_drop(state)
        max_imbalance = max(max_imbalance, abs(state.n_rgb_dropped - state.n_depth_dropped))
    total = state.n_rgb_dropped + state.n_depth_dropped
    return {
        "steps": steps,
        "seed": seed,
        "p_drop": p_drop,
        "total_drops": total,
        "rgb_drops": state.n_rgb_dropped,
        "depth_drops": state.n_depth_dropped,
        "drop_frequency": total / steps,
        "rgb_fraction": state.n_rgb_dropped / total if total else 0.0,
        "imbalance_fraction": abs(state.n_rgb_dropped - state.n_depth_dropped) / total if total else 0.0,
        "max_running_imbalance": max_imbalance,
    }


def format_summary(summary: Dict[str, float]) -> str:
    return "\n".join(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}" for k, v in summary.items())
