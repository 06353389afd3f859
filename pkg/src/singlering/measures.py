"""Atomic probability measures on C, the Levy-Prokhorov metric and ring radii."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_array
from scipy.sparse.csgraph import maximum_flow

from .linalg import eigenvalues, singular_values

DEFAULT_TOL = 1e-4
DEFAULT_MAX_PAIRS = 4_000_000

# Integer capacity scale for the max-flow; rounding error <= (n + m) / 2**30.
_FLOW_SCALE = 1 << 30


class MeasureSizeError(ValueError):
    """Too many atom pairs for the exact LP computation; subsample first."""


@dataclass(frozen=True)
class EmpiricalMeasure:
    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.complex128).ravel()
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if loc.shape != w.shape:
            raise ValueError("locations and weights differ in length")
        if loc.size == 0:
            raise ValueError("measure needs at least one atom")
        if not np.all(np.isfinite(loc)):
            raise ValueError("atom locations must be finite")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, locations) -> "EmpiricalMeasure":
        loc = np.asarray(locations).ravel()
        return cls(loc, np.full(loc.size, 1.0 / loc.size))

    @classmethod
    def normalized(cls, locations, weights) -> "EmpiricalMeasure":
        w = np.asarray(weights, dtype=float)
        return cls(locations, w / w.sum())

    def __len__(self):
        return self.locations.size

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.locations)

    def moment(self, p: float) -> float:
        """``sum_i w_i |z_i|^p``."""
        return float(np.dot(self.weights, self.moduli ** p))

    def scaled(self, c: float) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.locations * c, self.weights)

    def to_json(self) -> dict:
        return {"atoms": [[z.real, z.imag, w] for z, w in zip(self.locations.tolist(), self.weights.tolist())]}

    @classmethod
    def from_json(cls, obj) -> "EmpiricalMeasure":
        if isinstance(obj, str):
            obj = json.loads(obj)
        atoms = np.asarray(obj["atoms"], dtype=float)
        if atoms.ndim != 2 or atoms.shape[1] != 3:
            raise ValueError("'atoms' must be a list of [re, im, weight] triples")
        return cls.normalized(atoms[:, 0] + 1j * atoms[:, 1], atoms[:, 2])


def empirical_eigenvalues(a, tag=None) -> EmpiricalMeasure:
    return EmpiricalMeasure.uniform(eigenvalues(a, tag))


def empirical_singulars(a, tag=None) -> EmpiricalMeasure:
    return EmpiricalMeasure.uniform(singular_values(a, tag))


def _integer_weights(w: np.ndarray) -> np.ndarray:
    # largest-remainder rounding so the capacities sum to exactly _FLOW_SCALE
    raw = w * _FLOW_SCALE
    base = np.floor(raw).astype(np.int64)
    short = _FLOW_SCALE - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


class _CouplingGraph:
    """Bipartite transport network between the atoms of two measures."""

    def __init__(self, alpha: EmpiricalMeasure, beta: EmpiricalMeasure):
        self.n, self.m = len(alpha), len(beta)
        self.dist = np.abs(alpha.locations[:, None] - beta.locations[None, :])
        self.cap_a = _integer_weights(alpha.weights)
        self.cap_b = _integer_weights(beta.weights)
        self.slack = self.n + self.m

    def max_transport(self, eps: float) -> int:
        """Mass (in integer units) movable along pairs at distance <= eps."""
        n, m = self.n, self.m
        ii, jj = np.nonzero(self.dist <= eps)
        if ii.size == 0:
            return 0
        src, sink = n + m, n + m + 1
        rows = np.concatenate([np.full(n, src), ii, n + np.arange(m)])
        cols = np.concatenate([np.arange(n), n + jj, np.full(m, sink)])
        data = np.concatenate([self.cap_a, np.full(ii.size, _FLOW_SCALE), self.cap_b]).astype(np.int32)
        graph = csr_array((data, (rows, cols)), shape=(n + m + 2, n + m + 2))
        return int(maximum_flow(graph, src, sink).flow_value)

    def feasible(self, eps: float) -> bool:
        # Max-flow = min-cut = min over atom sets T of alpha(not T) + beta(T^eps),
        # so flow >= 1 - eps is exactly "alpha(T) <= beta(T^eps) + eps for all T".
        # The cut can equally be taken over beta's atoms, which gives the
        # mirrored condition; one flow therefore decides both.
        return self.max_transport(eps) >= (1.0 - eps) * _FLOW_SCALE - self.slack


def levy_prokhorov(alpha: EmpiricalMeasure, beta: EmpiricalMeasure, tol: float = DEFAULT_TOL,
                   max_pairs: int = DEFAULT_MAX_PAIRS) -> float:
    """Levy-Prokhorov distance between two atomic measures, to within ``tol``.

    Bisection over eps in [0, 1]. Each step decides feasibility with one
    max-flow on the graph joining atoms at distance <= eps (closed
    neighbourhoods), rather than enumerating atom subsets. The returned value
    is the smallest eps found feasible, so it never undershoots by more than
    the rounding slack.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if len(alpha) * len(beta) > max_pairs:
        raise MeasureSizeError(
            f"{len(alpha)} x {len(beta)} atom pairs exceeds cap {max_pairs}; subsample the measures")
    graph = _CouplingGraph(alpha, beta)
    if graph.feasible(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if graph.feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class RingRadii:
    r_minus: float
    r_plus: float

    def __post_init__(self):
        if not (np.isfinite(self.r_minus) and np.isfinite(self.r_plus)):
            raise ValueError("ring radii must be finite")
        if not 0 <= self.r_minus <= self.r_plus * (1 + 1e-12):
            raise ValueError(f"need 0 <= r_minus <= r_plus, got {self.r_minus}, {self.r_plus}")


def ring_radii(mu) -> RingRadii:
    """Inner/outer Single Ring radii from the (inverse) second moment of ``mu``.

    ``mu`` is an :class:`EmpiricalMeasure` of singular values or any law
    exposing ``second_moment()`` and ``inverse_second_moment()``.
    """
    if isinstance(mu, EmpiricalMeasure):
        if np.any(mu.moduli == 0):
            raise ValueError("singular-value measure has an atom at 0; inverse moment diverges")
        m2, m_inv2 = mu.moment(2), mu.moment(-2)
    else:
        m2, m_inv2 = mu.second_moment(), mu.inverse_second_moment()
    return RingRadii(r_minus=float(m_inv2 ** -0.5), r_plus=float(m2 ** 0.5))


def annulus_coverage(measure: EmpiricalMeasure, radii: RingRadii, delta: float) -> float:
    """Mass of atoms with modulus in ``[r_minus - delta, r_plus + delta]``."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    r = measure.moduli
    inside = (r >= radii.r_minus - delta) & (r <= radii.r_plus + delta)
    return float(min(1.0, measure.weights[inside].sum()))


def project_to_annulus(measure: EmpiricalMeasure, radii: RingRadii) -> EmpiricalMeasure:
    """Move every atom radially to the nearest point of the closed annulus."""
    z = measure.locations
    r = np.abs(z)
    target = np.clip(r, radii.r_minus, radii.r_plus)
    phase = np.where(r > 0, z / np.where(r > 0, r, 1.0), 1.0)
    return EmpiricalMeasure(target * phase, measure.weights)
