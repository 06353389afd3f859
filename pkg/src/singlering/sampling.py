"""Seeded samplers for Haar group elements, sphere points and Grassmann frames.

Every sampler takes either a :class:`SeedSpec` or a ready ``numpy`` Generator.
A SeedSpec maps ``(master_seed, trial_index, *stream)`` through numpy's
``SeedSequence`` hash, so trials can run in any order on any worker and still
draw the same numbers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .linalg import RankDeficientError, qr_unitary

_MASK64 = (1 << 64) - 1
_MAX_RESAMPLE = 16


class Group(str, enum.Enum):
    SU = "SU"
    SO = "SO"
    U = "U"
    O = "O"

    @property
    def is_complex(self) -> bool:
        return self in (Group.SU, Group.U)

    @property
    def field(self) -> str:
        return "complex" if self.is_complex else "real"

    @property
    def special(self) -> bool:
        return self in (Group.SU, Group.SO)

    @classmethod
    def parse(cls, text) -> "Group":
        if isinstance(text, Group):
            return text
        key = str(text).strip().upper()
        if key.endswith("(D)"):
            key = key[:-3]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown group {text!r}; expected one of SU, SO, U, O") from None


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    trial_index: int = 0

    def __post_init__(self):
        if self.trial_index < 0:
            raise ValueError("trial_index must be nonnegative")

    def sequence(self, *stream: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.master_seed & _MASK64, self.trial_index, *stream])

    def rng(self, *stream: int) -> np.random.Generator:
        """Independent generator for one named sub-stream of this trial."""
        return np.random.Generator(np.random.PCG64(self.sequence(*stream)))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.rng()
    raise TypeError(f"expected SeedSpec or numpy Generator, got {type(seed).__name__}")


def _shape(size, *tail):
    if size is None:
        return tail
    if isinstance(size, int):
        return (size, *tail)
    return (*size, *tail)


def sample_ginibre(d: int, field="complex", seed=None, size=None) -> np.ndarray:
    """i.i.d. standard Gaussian entries; complex entries have E|z|^2 = 1."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = as_generator(seed)
    shape = _shape(size, d, d)
    if field == "real":
        return rng.standard_normal(shape)
    if field != "complex":
        raise ValueError(f"unknown field {field!r}")
    z = rng.standard_normal((*shape, 2))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def sample_haar(group, d: int, seed, size=None) -> np.ndarray:
    """Haar-distributed element(s) of U(d), O(d), SU(d) or SO(d).

    Ginibre + phase-corrected QR gives Haar on U(d)/O(d). For the special
    groups the last column is multiplied by ``conj(det Q)``, a map that
    commutes with left translation by the subgroup and so keeps Haar measure.
    """
    group = Group.parse(group)
    rng = as_generator(seed)
    for _ in range(_MAX_RESAMPLE):
        g = sample_ginibre(d, group.field, rng, size)
        try:
            q = qr_unitary(g)
            break
        except RankDeficientError:
            continue
    else:
        raise RankDeficientError("repeated rank-deficient Ginibre draws")
    if group.special:
        det = np.linalg.det(q)
        # real case: fix is exactly +-1
        fix = np.conj(det) / np.abs(det)
        q[..., :, -1] *= fix[..., None]
    return q


def sample_sphere(n: int, seed, field="real", size=None) -> np.ndarray:
    """Uniform point(s) on the unit sphere of R^n, or of C^n when complex.

    The complex case is the sphere S^{2n-1} realised inside C^n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed)
    shape = _shape(size, n)
    for _ in range(_MAX_RESAMPLE):
        if field == "real":
            v = rng.standard_normal(shape)
        elif field == "complex":
            z = rng.standard_normal((*shape, 2))
            v = z[..., 0] + 1j * z[..., 1]
        else:
            raise ValueError(f"unknown field {field!r}")
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.all(norm > 0):
            return v / norm
    raise RankDeficientError("repeated zero Gaussian vectors")


@dataclass(frozen=True)
class GrassmannFrame:
    """Orthonormal ``d x k`` frame spanning a uniform k-plane."""

    columns: np.ndarray

    @property
    def dim(self) -> int:
        return self.columns.shape[-2]

    @property
    def k(self) -> int:
        return self.columns.shape[-1]

    def residual(self) -> float:
        u = self.columns
        gram = np.conj(np.swapaxes(u, -1, -2)) @ u
        return float(np.max(np.abs(gram - np.eye(self.k))))


def sample_grassmann_frame(d: int, k: int, field="complex", seed=None, size=None) -> GrassmannFrame:
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    group = Group.U if field == "complex" else Group.O
    u = sample_haar(group, d, seed, size)
    return GrassmannFrame(np.ascontiguousarray(u[..., :, :k]))
