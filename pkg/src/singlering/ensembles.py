"""Target singular-value laws and the matrices A_d built from them."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import as_array, singular_values
from .measures import EmpiricalMeasure
from .sampling import Group, SeedSpec, as_generator, sample_haar

log = logging.getLogger(__name__)

# Sub-stream ids inside one trial's SeedSpec.
STREAM_ROTATE_LEFT = 11
STREAM_ROTATE_RIGHT = 12
STREAM_IID_SINGULARS = 13


class LawError(ValueError):
    pass


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


class SpectralLaw:
    """Compactly supported law on (0, inf) with more than one support point."""

    def quantile(self, u):
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError

    def inverse_second_moment(self) -> float:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def reference_measure(self, resolution: int = 2000) -> EmpiricalMeasure:
        """Atomic stand-in for the law, used as the LP-distance target."""
        raise NotImplementedError

    def literal(self) -> str:
        raise NotImplementedError

    @property
    def bound(self) -> float:
        """Smallest C with C^-1 <= x <= C on the support."""
        lo, hi = self.support()
        return max(hi, 1.0 / lo)

    def __str__(self):
        return self.literal()


@dataclass(frozen=True)
class FiniteAtoms(SpectralLaw):
    points: tuple
    weights: tuple

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if x.shape != w.shape or x.ndim != 1:
            raise LawError("points and weights must be equal-length lists")
        if np.any(~np.isfinite(x)) or np.any(x <= 0):
            raise LawError("support points must lie in (0, inf)")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise LawError("weights must be positive and sum to 1")
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order] / w.sum()
        if np.unique(x).size < 2:
            raise LawError("support must contain more than one point")
        object.__setattr__(self, "points", tuple(x.tolist()))
        object.__setattr__(self, "weights", tuple(w.tolist()))

    def _cdf_steps(self):
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        return np.asarray(self.points), cum

    def quantile(self, u):
        x, cum = self._cdf_steps()
        idx = np.searchsorted(cum, np.asarray(u), side="left")
        return x[np.minimum(idx, x.size - 1)]

    def second_moment(self):
        return float(np.dot(self.weights, np.square(self.points)))

    def inverse_second_moment(self):
        return float(np.dot(self.weights, np.power(self.points, -2.0)))

    def support(self):
        return self.points[0], self.points[-1]

    def reference_measure(self, resolution=2000):
        return EmpiricalMeasure(np.asarray(self.points), np.asarray(self.weights))

    def literal(self):
        return "atoms:" + ",".join(f"{_num(x)}:{_num(w)}" for x, w in zip(self.points, self.weights))


class TwoAtom(FiniteAtoms):
    """Mass ``p`` at ``a`` and ``1 - p`` at ``b``."""

    def __init__(self, a: float, b: float, p: float = 0.5):
        if not 0 < p < 1:
            raise LawError(f"two-atom weight p must lie in (0, 1), got {p}")
        if a == b:
            raise LawError("support must contain more than one point")
        object.__setattr__(self, "a", float(a))
        object.__setattr__(self, "b", float(b))
        object.__setattr__(self, "p", float(p))
        super().__init__((a, b), (p, 1.0 - p))

    def __repr__(self):
        return f"TwoAtom({self.a!r}, {self.b!r}, {self.p!r})"

    def __eq__(self, other):
        return isinstance(other, TwoAtom) and (self.a, self.b, self.p) == (other.a, other.b, other.p)

    def __hash__(self):
        return hash((TwoAtom, self.a, self.b, self.p))

    def literal(self):
        return f"two-atom:{_num(self.a)},{_num(self.b)},{_num(self.p)}"


@dataclass(frozen=True)
class UniformInterval(SpectralLaw):
    a: float
    b: float

    def __post_init__(self):
        if not (0 < self.a < self.b < np.inf):
            raise LawError(f"uniform law needs 0 < a < b < inf, got a={self.a}, b={self.b}")

    def quantile(self, u):
        return self.a + (self.b - self.a) * np.asarray(u, dtype=float)

    def second_moment(self):
        a, b = self.a, self.b
        return (a * a + a * b + b * b) / 3.0

    def inverse_second_moment(self):
        return 1.0 / (self.a * self.b)

    def support(self):
        return self.a, self.b

    def reference_measure(self, resolution=2000):
        u = (np.arange(resolution) + 0.5) / resolution
        return EmpiricalMeasure.uniform(self.quantile(u))

    def literal(self):
        return f"uniform:{_num(self.a)},{_num(self.b)}"


def parse_law(text: str) -> SpectralLaw:
    """Parse ``two-atom:a,b[,p]``, ``uniform:a,b`` or ``atoms:x1:w1,x2:w2,...``."""
    kind, sep, body = str(text).strip().partition(":")
    kind = kind.strip().lower()
    if not sep or not body.strip():
        raise LawError(f"malformed law literal {text!r}")
    try:
        if kind == "two-atom":
            vals = [float(v) for v in body.split(",")]
            if len(vals) not in (2, 3):
                raise LawError(f"two-atom takes a,b[,p]; got {body!r}")
            return TwoAtom(*vals)
        if kind == "uniform":
            vals = [float(v) for v in body.split(",")]
            if len(vals) != 2:
                raise LawError(f"uniform takes a,b; got {body!r}")
            return UniformInterval(*vals)
        if kind == "atoms":
            pairs = [item.split(":") for item in body.split(",")]
            if any(len(p) != 2 for p in pairs):
                raise LawError(f"atoms takes x:w pairs; got {body!r}")
            return FiniteAtoms(tuple(float(x) for x, _ in pairs), tuple(float(w) for _, w in pairs))
    except ValueError as exc:
        if isinstance(exc, LawError):
            raise
        raise LawError(f"malformed law literal {text!r}: {exc}") from None
    raise LawError(f"unknown law kind {kind!r} in {text!r}")


def quantile_matrix(law: SpectralLaw, d: int, construction: str = "quantile", seed=None) -> np.ndarray:
    """Diagonal A_d whose entries are the midpoint quantiles ``F^-1((i - 1/2)/d)``.

    ``construction="iid"`` instead draws the diagonal i.i.d. from the law
    (robustness runs only; needs ``seed``).
    """
    if d < 2:
        raise ValueError("ensemble dimension must be >= 2")
    if construction == "quantile":
        u = (np.arange(1, d + 1) - 0.5) / d
    elif construction == "iid":
        if seed is None:
            raise ValueError("iid construction needs a seed")
        rng = seed.rng(STREAM_IID_SINGULARS) if isinstance(seed, SeedSpec) else as_generator(seed)
        u = np.sort(rng.random(d))
    else:
        raise ValueError(f"unknown construction {construction!r}")
    return np.diag(law.quantile(u).astype(float))


def rotate_ensemble(a, rotation, seed) -> np.ndarray:
    """``W A V`` with independent Haar ``W, V`` from ``rotation`` (None = identity)."""
    a = as_array(a)
    if rotation is None:
        return a
    group = Group.parse(rotation)
    d = a.shape[-1]
    if isinstance(seed, SeedSpec):
        w = sample_haar(group, d, seed.rng(STREAM_ROTATE_LEFT))
        v = sample_haar(group, d, seed.rng(STREAM_ROTATE_RIGHT))
    else:
        rng = as_generator(seed)
        w = sample_haar(group, d, rng)
        v = sample_haar(group, d, rng)
    return w @ a @ v


def condition_check(a, c: float) -> bool:
    """True iff ``sigma_d(A) >= 1/C`` and ``sigma_1(A) <= C``."""
    if c <= 1:
        raise ValueError("C must exceed 1")
    s = singular_values(a)
    if s[-1] == 0:
        log.warning("condition_check: matrix is singular (sigma_min = 0)")
        return False
    ok = bool(s[-1] >= 1.0 / c and s[0] <= c)
    if not ok:
        log.info("condition_check failed: sigma_min=%g sigma_max=%g C=%g", s[-1], s[0], c)
    return ok
