"""Dense decompositions used by every experiment.

All routines accept either a single ``(d, d)`` array or a stack ``(..., d, d)``
and are backed by LAPACK through numpy. Eigenvalues are returned sorted by
descending modulus, singular values in descending order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal

import numpy as np

Field = Literal["real", "complex"]

# |R_jj| below this is treated as a rank-deficient draw.
RANK_FLOOR = 1e-300


class NumericalError(RuntimeError):
    """A decomposition failed; ``tag`` identifies the offending matrix/seed."""

    def __init__(self, message, tag=None):
        if tag is not None:
            message = f"{message} [{tag}]"
        super().__init__(message)
        self.tag = tag


class RankDeficientError(NumericalError):
    """Raised by :func:`qr_unitary`; callers should resample."""


@dataclass(frozen=True)
class Matrix:
    """Square matrix with an explicit field tag, used for JSON interchange."""

    entries: np.ndarray
    field: Field = "complex"

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"matrix must be square and non-empty, got shape {a.shape}")
        if self.field not in ("real", "complex"):
            raise ValueError(f"unknown field {self.field!r}")
        if self.field == "real" and np.iscomplexobj(a) and np.any(a.imag != 0):
            raise ValueError("field is 'real' but entries have nonzero imaginary parts")
        a = a.astype(np.float64 if self.field == "real" else np.complex128)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def to_json(self) -> dict:
        a = self.entries
        out = {"dim": self.dim, "field": self.field, "re": np.real(a).ravel().tolist()}
        if self.field == "complex":
            out["im"] = np.imag(a).ravel().tolist()
        return out

    @classmethod
    def from_json(cls, obj) -> "Matrix":
        if isinstance(obj, str):
            obj = json.loads(obj)
        d = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        if re.size != d * d:
            raise ValueError(f"'re' has {re.size} entries, expected {d * d}")
        field = obj.get("field", "complex")
        im = obj.get("im")
        if im is None:
            a = re.reshape(d, d)
        else:
            im = np.asarray(im, dtype=float)
            if im.size != d * d:
                raise ValueError(f"'im' has {im.size} entries, expected {d * d}")
            a = (re + 1j * im).reshape(d, d)
        return cls(a, field)


def as_array(a) -> np.ndarray:
    if isinstance(a, Matrix):
        return a.entries
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrix (or stack), got shape {a.shape}")
    if not np.issubdtype(a.dtype, np.inexact):
        a = a.astype(np.float64)
    return a


def _check_finite(a, tag):
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries", tag)


def sort_by_modulus(lam: np.ndarray) -> np.ndarray:
    # stable sort so equal moduli keep LAPACK order
    order = np.argsort(-np.abs(lam), axis=-1, kind="stable")
    return np.take_along_axis(lam, order, axis=-1)


def eigenvalues(a, tag=None) -> np.ndarray:
    """Eigenvalues (with multiplicity) sorted by descending modulus.

    LAPACK ``geev`` balances, reduces to Hessenberg form and runs shifted QR.
    Non-convergence raises :class:`NumericalError` carrying ``tag``.
    """
    a = as_array(a)
    _check_finite(a, tag)
    try:
        lam = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration did not converge: {exc}", tag) from exc
    if not np.all(np.isfinite(lam)):
        raise NumericalError("eigensolver returned non-finite values", tag)
    return sort_by_modulus(lam.astype(np.complex128))


def singular_values(a, tag=None) -> np.ndarray:
    a = as_array(a)
    _check_finite(a, tag)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}", tag) from exc


def spectral_radius(a, tag=None):
    return np.abs(eigenvalues(a, tag)[..., 0])


def qr_unitary(g, tag=None) -> np.ndarray:
    """Q factor of ``g`` normalised so that ``diag(R)`` is real and positive.

    Column ``j`` of the raw Householder Q is multiplied by the phase of
    ``R_jj``; without this step Q is not Haar distributed.
    """
    g = as_array(g)
    q, r = np.linalg.qr(g)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    mod = np.abs(diag)
    if np.any(mod < RANK_FLOOR):
        raise RankDeficientError("rank-deficient QR input", tag)
    phase = diag / mod
    return q * phase[..., None, :]


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    singulars: np.ndarray

    @property
    def dim(self) -> int:
        return self.singulars.shape[-1]

    def check(self, det_abs=None, rtol=None) -> None:
        """Assert the determinant identity and ``|lambda_1| <= sigma_1``."""
        d = self.dim
        rtol = 1e-8 * d if rtol is None else rtol
        log_lam = np.sum(np.log(np.abs(self.eigenvalues)))
        log_sig = np.sum(np.log(self.singulars))
        if abs(log_lam - log_sig) > rtol:
            raise AssertionError(f"prod|lambda| != prod sigma (log gap {log_lam - log_sig:.3e})")
        if det_abs is not None and abs(log_sig - np.log(det_abs)) > rtol:
            raise AssertionError("prod sigma != |det|")
        if abs(self.eigenvalues[0]) > self.singulars[0] * (1 + 1e-10) + 1e-10:
            raise AssertionError("spectral radius exceeds operator norm")


def spectrum(a, tag=None) -> Spectrum:
    return Spectrum(eigenvalues(a, tag), singular_values(a, tag))
