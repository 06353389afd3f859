"""One output row per (experiment, d, trial)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

COLUMNS = (
    "experiment_id", "d", "k", "group", "law", "master_seed", "trial_index",
    "rho", "r_plus_target", "r_minus_target", "annulus_coverage", "lp_distance",
    "lhs_mean", "lhs_se", "rhs_mean", "rhs_se", "c_hat", "floor_c", "wall_time_ms",
)


def format_value(v) -> str:
    """Render a cell so identical values give identical bytes."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


@dataclass
class TrialRecord:
    experiment_id: str
    d: int
    group: str
    law: str
    master_seed: int
    trial_index: int
    k: int | None = None
    rho: float | None = None
    r_plus_target: float | None = None
    r_minus_target: float | None = None
    annulus_coverage: float | None = None
    lp_distance: float | None = None
    lhs_mean: float | None = None
    lhs_se: float | None = None
    rhs_mean: float | None = None
    rhs_se: float | None = None
    c_hat: float | None = None
    floor_c: float | None = None
    wall_time_ms: float | None = None
    # not written to CSV; feeds plot data and summaries
    extras: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)
    error: str | None = None

    def row(self) -> list[str]:
        return [format_value(getattr(self, c)) for c in COLUMNS]

    def as_dict(self) -> dict:
        out = {c: getattr(self, c) for c in COLUMNS}
        if self.error is not None:
            out["error"] = self.error
        return out

