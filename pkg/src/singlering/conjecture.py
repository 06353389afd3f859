"""Monte Carlo estimators for both sides of the Dedieu-Shub inequality,
sphere concentration of ``||A v||`` and the single-ring spectral radius trial.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ensembles import SpectralLaw, quantile_matrix, rotate_ensemble
from .linalg import NumericalError, as_array, eigenvalues, singular_values
from .measures import (
    EmpiricalMeasure, annulus_coverage, levy_prokhorov, project_to_annulus, ring_radii,
)
from .records import TrialRecord
from .sampling import Group, SeedSpec, as_generator, sample_grassmann_frame, sample_haar, sample_sphere
from .stats import MCEstimate, RunningStats, merge_all

STREAM_HAAR_U = 1
STREAM_LHS = 21
STREAM_RHS = 22
STREAM_SPHERE = 23

N_SE = 4.0
# Upper bound on matrix entries generated per Monte Carlo chunk.
_CHUNK_ENTRIES = 1 << 21


def _chunk_sizes(n: int, d: int):
    size = max(1, min(n, _CHUNK_ENTRIES // (d * d)))
    full, rest = divmod(n, size)
    return [size] * full + ([rest] if rest else [])


def _stream(seed, *tag):
    if isinstance(seed, SeedSpec):
        return seed.rng(*tag)
    return as_generator(seed)


def log_top_eigs(m, k: int) -> np.ndarray | float:
    """Sum of ``log|lambda_i|`` over the ``k`` largest-modulus eigenvalues.

    Works on a single matrix or a stack; ties at the k-th modulus do not
    change the sum.
    """
    m = as_array(m)
    d = m.shape[-1]
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    top = np.abs(eigenvalues(m)[..., :k])
    if np.any(top == 0):
        raise NumericalError("zero eigenvalue among the top k; matrix is singular")
    out = np.sum(np.log(top), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Distortion:
    """Volume distortion of A on a k-plane, kept on the log scale."""

    log_volume: np.ndarray | float

    @property
    def volume(self):
        return np.exp(self.log_volume)

    @property
    def gram_det(self):
        """``det((A U_k)^* (A U_k))``, the square of :attr:`volume`."""
        return np.exp(2 * self.log_volume)

    @property
    def log_gram_det(self):
        return 2 * self.log_volume


def grassmann_distortion(a, frame) -> Distortion:
    """``sqrt(det((A U_k)^* (A U_k)))`` via the R factor of ``A U_k``."""
    a = as_array(a)
    u = frame.columns if hasattr(frame, "columns") else np.asarray(frame)
    r = np.linalg.qr(a @ u, mode="r")
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    scale = np.max(np.abs(a)) if a.size else 1.0
    if np.any(diag <= 1e-14 * scale * u.shape[-2]):
        raise NumericalError("A U_k is rank deficient")
    out = np.sum(np.log(diag), axis=-1)
    return Distortion(float(out) if np.ndim(out) == 0 else out)


def estimate_lhs(a, group, k: int, n: int, seed) -> MCEstimate:
    """Mean of ``sum_{i<=k} log|lambda_i(U A)|`` over ``n`` Haar draws of ``U``."""
    if n < 2:
        raise ValueError("need n >= 2 samples")
    a = as_array(a)
    group = Group.parse(group)
    d = a.shape[-1]
    parts = []
    for c, size in enumerate(_chunk_sizes(n, d)):
        u = sample_haar(group, d, _stream(seed, STREAM_LHS, c), size=size)
        try:
            vals = log_top_eigs(u @ a, k)
        except NumericalError as exc:
            raise NumericalError(f"lhs sample failed in chunk {c}: {exc}", seed) from exc
        parts.append((c, RunningStats.of(vals)))
    return merge_all(parts).estimate()


def estimate_rhs(a, k: int, n: int, seed, field="real", gram=False) -> MCEstimate:
    """Mean of ``log det A|g_k`` over ``n`` uniform k-planes.

    The volume-distortion convention is the default; ``gram=True`` returns the
    log Gram determinant (exactly twice the value) instead. For ``k = 1``
    this is ``E log ||A v||`` over the unit sphere.
    """
    if n < 2:
        raise ValueError("need n >= 2 samples")
    a = as_array(a)
    d = a.shape[-1]
    parts = []
    for c, size in enumerate(_chunk_sizes(n, d)):
        frames = sample_grassmann_frame(d, k, field, _stream(seed, STREAM_RHS, c), size=size)
        vals = grassmann_distortion(a, frames).log_volume
        if gram:
            vals = 2 * vals
        parts.append((c, RunningStats.of(vals)))
    return merge_all(parts).estimate()


def binomial_floor(d: int, k: int) -> tuple[float, float]:
    """``(1/binom(d, k), log binom(d, k))``; exact integer binomial up to d = 60."""
    if d <= 60:
        b = math.comb(d, k)
        return 1.0 / b, math.log(b)
    log_b = math.lgamma(d + 1) - math.lgamma(k + 1) - math.lgamma(d - k + 1)
    return math.exp(-log_b), log_b


@dataclass(frozen=True)
class ConjectureReport:
    d: int
    k: int
    group: str
    lhs: MCEstimate
    rhs: MCEstimate
    floor_c: float
    log_binom: float
    n_se: float = N_SE

    @property
    def rhs_gram(self) -> MCEstimate:
        """Right-hand side under the raw Gram-determinant reading."""
        return MCEstimate(2 * self.rhs.mean, self.rhs.n, 4 * self.rhs.variance)

    @property
    def c_hat_defined(self) -> bool:
        return abs(self.rhs.mean) > self.n_se * self.rhs.se + 1e-12

    @property
    def c_hat(self) -> float:
        return self.lhs.mean / self.rhs.mean if self.c_hat_defined else math.nan

    def _margin(self, c: float) -> float:
        se = math.hypot(self.lhs.se, c * self.rhs.se)
        return self.lhs.mean - c * self.rhs.mean + self.n_se * se

    @property
    def floor_pass(self) -> bool:
        return self._margin(self.floor_c) >= -1e-12

    @property
    def unit_pass(self) -> bool:
        return self._margin(1.0) >= -1e-12

    def as_dict(self) -> dict:
        return {
            "d": self.d, "k": self.k, "group": self.group,
            "lhs": self.lhs.as_dict(), "rhs": self.rhs.as_dict(), "rhs_gram": self.rhs_gram.as_dict(),
            "c_hat": self.c_hat, "floor_c": self.floor_c,
            "floor_pass": self.floor_pass, "unit_pass": self.unit_pass,
        }


def conjecture_report(a, group, k: int, n: int, seed, n_se: float = N_SE) -> ConjectureReport:
    """Estimate both sides for one matrix and compare against 1/binom(d,k) and 1.

    The Grassmannian side uses complex planes for SU/U and real planes for
    SO/O, matching the group's field.
    """
    a = as_array(a)
    group = Group.parse(group)
    d = a.shape[-1]
    lhs = estimate_lhs(a, group, k, n, seed)
    rhs = estimate_rhs(a, k, n, seed, field=group.field)
    floor_c, log_b = binomial_floor(d, k)
    return ConjectureReport(d, k, group.value, lhs, rhs, floor_c, log_b, n_se)


@dataclass(frozen=True)
class ConcentrationStats:
    """Summary of ``||A v||`` and ``f(v) = ||A v||^2`` over uniform sphere points."""

    d: int
    n: int
    field: str
    norm_mean: float
    norm_median: float
    norm_variance: float
    sq_mean: float
    sq_median: float
    sq_variance: float
    sq_expected: float
    log_norm: MCEstimate
    lipschitz: float
    eps: np.ndarray = field(repr=False)
    tail: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)
    c_used: float = math.nan
    c_fit: float = math.nan

    @property
    def sq_se(self) -> float:
        return math.sqrt(self.sq_variance / self.n)

    @property
    def norm_se(self) -> float:
        return math.sqrt(self.norm_variance / self.n)

    def as_dict(self) -> dict:
        return {
            "d": self.d, "n": self.n, "field": self.field,
            "norm_mean": self.norm_mean, "norm_median": self.norm_median, "norm_variance": self.norm_variance,
            "sq_mean": self.sq_mean, "sq_median": self.sq_median, "sq_variance": self.sq_variance,
            "sq_expected": self.sq_expected, "log_norm": self.log_norm.as_dict(),
            "lipschitz": self.lipschitz, "c_used": self.c_used, "c_fit": self.c_fit,
        }


def fit_levy_constant(eps, tail, dim: int, lipschitz: float) -> float:
    """Largest ``c`` with ``2 exp(-c dim eps^2 / L^2) >= tail`` at every grid point."""
    eps, tail = np.asarray(eps), np.asarray(tail)
    mask = (tail > 0) & (eps > 0)
    if not np.any(mask):
        return math.inf
    cs = -np.log(tail[mask] / 2.0) * lipschitz ** 2 / (dim * eps[mask] ** 2)
    return float(np.min(cs))


def sphere_pushforward_stats(a, n: int, seed, field="real", eps=None, c=None) -> ConcentrationStats:
    """Concentration of ``||A v||`` for ``v`` uniform on the unit sphere.

    Tails ``P(| ||Av||^2 - mean | >= eps)`` are compared with
    ``2 exp(-c m eps^2 / L^2)`` where ``L = 2 sigma_1(A)^2`` and ``m`` is the
    real dimension of the ambient space (d, or 2d for the complex sphere).
    When ``c`` is not given the fitted constant is used for the reference.
    """
    if n < 2:
        raise ValueError("need n >= 2 samples")
    a = as_array(a)
    d = a.shape[-1]
    chunks = []
    for ci, size in enumerate(_chunk_sizes(n, d)):
        v = sample_sphere(d, _stream(seed, STREAM_SPHERE, ci), field=field, size=size)
        chunks.append(np.linalg.norm(v @ a.T, axis=-1))
    norms = np.concatenate(chunks)
    sq = norms ** 2
    sq_mean = float(sq.mean())
    dev = np.abs(sq - sq_mean)
    if eps is None:
        top = float(dev.max())
        eps = np.linspace(0.0, top, 33)[1:] if top > 0 else np.array([1e-12])
    eps = np.asarray(eps, dtype=float)
    # sorted deviations give every tail probability with one searchsorted
    dev_sorted = np.sort(dev)
    tail = 1.0 - np.searchsorted(dev_sorted, eps, side="left") / n
    lip = 2.0 * float(singular_values(a)[0]) ** 2
    dim = d if field == "real" else 2 * d
    c_fit = fit_levy_constant(eps, tail, dim, lip)
    c_used = c_fit if c is None else float(c)
    ref = 2.0 * np.exp(-c_used * dim * eps ** 2 / lip ** 2) if math.isfinite(c_used) else np.zeros_like(eps)
    return ConcentrationStats(
        d=d, n=n, field=field,
        norm_mean=float(norms.mean()), norm_median=float(np.median(norms)),
        norm_variance=float(norms.var(ddof=1)),
        sq_mean=sq_mean, sq_median=float(np.median(sq)), sq_variance=float(sq.var(ddof=1)),
        sq_expected=float(np.sum(np.abs(a) ** 2) / d),
        log_norm=MCEstimate.of(np.log(norms)),
        lipschitz=lip, eps=eps, tail=tail, reference=ref, c_used=c_used, c_fit=c_fit,
    )


def single_ring_trial(law: SpectralLaw, d: int, group, seed: SeedSpec, delta: float = 0.1,
                      rotation=None, construction="quantile", lp_tol=1e-4,
                      experiment_id="single-ring") -> TrialRecord:
    """One Haar draw of ``U`` and the spectrum of ``U A_d``.

    The LP distance compares the eigenvalue cloud with its radial projection
    onto the closed annulus ``R_- <= |z| <= R_+``: a support-level check, as
    the limiting density is not known in closed form.
    """
    t0 = time.perf_counter()
    group = Group.parse(group)
    a = quantile_matrix(law, d, construction, seed)
    a = rotate_ensemble(a, rotation, seed)
    u = sample_haar(group, d, seed.rng(STREAM_HAAR_U))
    lam = eigenvalues(u @ a, tag=f"seed={seed.master_seed},trial={seed.trial_index},d={d}")
    radii = ring_radii(law)
    cloud = EmpiricalMeasure.uniform(lam)
    coverage = annulus_coverage(cloud, radii, delta)
    lp = levy_prokhorov(cloud, project_to_annulus(cloud, radii), tol=lp_tol)
    rho = float(np.abs(lam[0]))
    return TrialRecord(
        experiment_id=experiment_id, d=d, group=group.value, law=law.literal(),
        master_seed=seed.master_seed, trial_index=seed.trial_index,
        rho=rho, r_plus_target=radii.r_plus, r_minus_target=radii.r_minus,
        annulus_coverage=coverage, lp_distance=lp,
        wall_time_ms=(time.perf_counter() - t0) * 1e3,
        extras={"eigenvalues": lam, "delta": delta},
    )
