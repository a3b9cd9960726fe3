"""On-the-fly steering of input type and running context.

``p_wei`` is the chance of testing a weighted (EFG) sequence next;
``p_ctx[k]`` the chance of picking context k. When a case exposes an
issue, the input type and context that produced it get a little more
probability. Guards are checked before the step, so a single step may land
just past a threshold; the next step in that direction is then blocked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WEIGHTED = "weighted"
RANDOM = "random"


@dataclass(frozen=True)
class SteeringConfig:
    delta_wei: float = 0.05
    delta_context: float = 0.06
    wei_up_threshold: float = 0.8
    wei_down_threshold: float = 0.2
    cxt_up_threshold: float = 0.6
    cxt_down_threshold: float = 0.1

    def __post_init__(self):
        if not 0 < self.wei_down_threshold < self.wei_up_threshold < 1:
            raise ValueError("need 0 < wei_down_threshold < wei_up_threshold < 1")
        if not 0 < self.cxt_down_threshold < self.cxt_up_threshold < 1:
            raise ValueError("need 0 < cxt_down_threshold < cxt_up_threshold < 1")
        if not (self.delta_wei > 0 and self.delta_context > 0):
            raise ValueError("steering deltas must be positive")
        # donors sit above cxt_down_threshold and lose at most delta_context, so this keeps p_ctx >= 0
        if self.delta_context > self.cxt_down_threshold:
            raise ValueError("delta_context must not exceed cxt_down_threshold")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SteeringState:
    p_wei: float
    p_ctx: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict:
        return {"p_wei": self.p_wei, "p_ctx": list(self.p_ctx)}


def init(config: SteeringConfig, n_contexts: int) -> SteeringState:
    if n_contexts < 1:
        raise ValueError("need at least one running context")
    return SteeringState(0.5, (1.0 / n_contexts,) * n_contexts)


def choose(state: SteeringState, rng: np.random.Generator) -> tuple[str, int]:
    """Draw the next input type and context index. Consumes exactly two uniforms."""
    u_type, u_ctx = rng.random(), rng.random()
    input_type = WEIGHTED if u_type < state.p_wei else RANDOM
    cdf = np.cumsum(state.p_ctx)
    k = int(np.searchsorted(cdf, u_ctx * cdf[-1], side="right"))
    k = min(k, len(state.p_ctx) - 1)
    # skip zero-probability slots that searchsorted can land on through rounding
    while state.p_ctx[k] <= 0:
        k -= 1
    return input_type, k


def update_on_issue(state: SteeringState, input_type: str, context: int,
                    config: SteeringConfig) -> SteeringState:
    p_ctx = list(state.p_ctx)
    if not 0 <= context < len(p_ctx):
        raise IndexError(f"context index {context} out of range for {len(p_ctx)} contexts")

    p_wei = state.p_wei
    if input_type == WEIGHTED:
        if p_wei <= config.wei_up_threshold:
            p_wei += config.delta_wei
    elif input_type == RANDOM:
        if p_wei >= config.wei_down_threshold:
            p_wei -= config.delta_wei
    else:
        raise ValueError(f"unknown input type {input_type!r}")

    donors = [j for j, p in enumerate(p_ctx) if j != context and p > config.cxt_down_threshold]
    if p_ctx[context] <= config.cxt_up_threshold and donors:
        share = config.delta_context / len(donors)
        for j in donors:
            p_ctx[j] -= share
        p_ctx[context] += config.delta_context
    return SteeringState(p_wei, tuple(p_ctx))
