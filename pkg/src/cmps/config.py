"""Run-time configuration shared by the library and the command-line tool."""
from __future__ import annotations

import os
from dataclasses import dataclass

from .errors import ValidationError

DENSE_ENV = "CMPS_DENSE_BUDGET"
#: largest bond dimension for which the uniform evaluator uses dense linear algebra
DEFAULT_DENSE_BUDGET = 8
#: largest bond dimension for which a dense D^2 x D^2 superoperator may be assembled
DENSE_SUPEROPERATOR_LIMIT = 16


def dense_budget(override: int | None = None) -> int:
    if override is not None:
        return int(override)
    raw = os.environ.get(DENSE_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            return DEFAULT_DENSE_BUDGET
        if value >= 1:
            return value
    return DEFAULT_DENSE_BUDGET


@dataclass(frozen=True)
class RunConfig:
    dense_budget: int = DEFAULT_DENSE_BUDGET
    eig_tol: float = 1e-12
    solve_tol: float = 1e-10
    ode_tol: float = 1e-8
    seed: int | None = None
    output_format: str = "json"
    threads: int = 1

    def __post_init__(self):
        if self.dense_budget < 1:
            raise ValidationError("dense_budget must be at least 1")
        for name in ("eig_tol", "solve_tol", "ode_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.output_format not in ("json", "csv"):
            raise ValidationError("output_format must be 'json' or 'csv'")
        if self.threads < 1:
            raise ValidationError("threads must be at least 1")

    @classmethod
    def from_env(cls, **kwargs) -> "RunConfig":
        kwargs.setdefault("dense_budget", dense_budget())
        return cls(**kwargs)
