"""The random-search space for the gradient-boosted-trees learner."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvariantViolation

COLSAMPLE_CHOICES = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
BOOSTERS = ("gbtree", "dart")


@dataclass(frozen=True)
class GbtHyperparams:
    """One point of the search space.

    The sampler draws from the pinned search ranges; the constructor itself
    accepts the slightly wider diagnostic envelope (sampling ratios up to 1.0,
    zero boosting rounds) used by tests and full-batch sanity runs.
    """

    num_boost_round: int = 64
    learning_rate: float = 0.05
    max_depth: int = 6
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    colsample_bylevel: float = 1.0
    colsample_bynode: float = 1.0
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    reg_alpha: float = 0.0
    booster: str = "gbtree"
    rate_drop: float = 0.0

    def __post_init__(self):
        if not 0 <= self.num_boost_round <= 256:
            raise InvariantViolation(f"num_boost_round {self.num_boost_round} outside 0..256")
        if not 0 < self.learning_rate <= 1:
            raise InvariantViolation(f"learning_rate {self.learning_rate} outside (0, 1]")
        if not 1 <= self.max_depth <= 16:
            raise InvariantViolation(f"max_depth {self.max_depth} outside 1..16")
        for name in ("subsample", "colsample_bytree", "colsample_bylevel", "colsample_bynode"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvariantViolation(f"{name} {value} outside (0, 1]")
        if not 0 <= self.min_child_weight <= 3.0:
            raise InvariantViolation(f"min_child_weight {self.min_child_weight} outside 0..3")
        for name in ("reg_lambda", "reg_alpha"):
            if not 0 <= getattr(self, name) <= 2.0:
                raise InvariantViolation(f"{name} {getattr(self, name)} outside 0..2")
        if self.booster not in BOOSTERS:
            raise InvariantViolation(f"booster must be one of {BOOSTERS}")
        if not 0 <= self.rate_drop < 1:
            raise InvariantViolation(f"rate_drop {self.rate_drop} outside [0, 1)")

    def to_json(self) -> dict:
        return {
            "num_boost_round": self.num_boost_round,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "subsample": self.subsample,
            "colsample_bytree": self.colsample_bytree,
            "colsample_bylevel": self.colsample_bylevel,
            "colsample_bynode": self.colsample_bynode,
            "min_child_weight": self.min_child_weight,
            "reg_lambda": self.reg_lambda,
            "reg_alpha": self.reg_alpha,
            "booster": self.booster,
            "rate_drop": self.rate_drop,
        }


def sample_hyperparameters(n: int = 2048, seed: int = 0) -> list[GbtHyperparams]:
    """Uniform random search points: integer ranges 8..256 (rounds) and 1..16
    (depth), continuous ranges uniform, sampling ratios from the discrete
    choice set, booster uniform over gbtree/dart.  rate_drop is sampled for
    every point but only consulted by the dart booster."""
    if n < 1:
        raise InvariantViolation("need at least one sample")
    rng = np.random.default_rng(seed)
    out: list[GbtHyperparams] = []
    for _ in range(n):
        out.append(GbtHyperparams(
            num_boost_round=int(rng.integers(8, 257)),
            learning_rate=float(rng.uniform(0.001, 0.1)),
            max_depth=int(rng.integers(1, 17)),
            subsample=float(rng.choice(COLSAMPLE_CHOICES)),
            colsample_bytree=float(rng.choice(COLSAMPLE_CHOICES)),
            colsample_bylevel=float(rng.choice(COLSAMPLE_CHOICES)),
            colsample_bynode=float(rng.choice(COLSAMPLE_CHOICES)),
            min_child_weight=float(rng.uniform(0.01, 3.0)),
            reg_lambda=float(rng.uniform(0.1, 2.0)),
            reg_alpha=float(rng.uniform(0.1, 2.0)),
            booster=str(rng.choice(BOOSTERS)),
            rate_drop=float(rng.uniform(0.1, 0.7)),
        ))
    return out
