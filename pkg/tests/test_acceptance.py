"""Exit criteria, one test per criterion, each at its stated tolerance.

A PASS/FAIL line per criterion is printed in the pytest terminal summary.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import brute_force_lp, quad_lhs_so2, quad_rhs_circle
from singlering.conjecture import conjecture_report, estimate_lhs, estimate_rhs, sphere_pushforward_stats
from singlering.ensembles import TwoAtom, quantile_matrix
from singlering.experiment import parse_config, run_experiment, run_trials
from singlering.measures import EmpiricalMeasure, levy_prokhorov
from singlering.sampling import SeedSpec, sample_haar

pytestmark = pytest.mark.slow

R_PLUS = math.sqrt(2.5)   # (int x^2 dmu)^(1/2) for TwoAtom(1, 2, 1/2)
R_MINUS = math.sqrt(1.6)  # (int x^-2 dmu)^(-1/2)
N_SE = 4.0


def report(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def single_ring_runs():
    cfg = parse_config('kind = "sweep"\nseed = 20261015\ndims = [64, 256, 512]\ntrials = 50\n'
                       'group = "SU"\nlaw = "two-atom:1,2,0.5"\ndelta = 0.1\n'
                       '[sweep]\nexperiment = "single-ring"\n')
    t0 = time.perf_counter()
    records = run_trials(cfg)
    elapsed = time.perf_counter() - t0
    assert all(r.error is None for r in records)
    by_d = {d: [r for r in records if r.d == d] for d in cfg.dims}
    return by_d, elapsed


@pytest.fixture(scope="module")
def sphere_stats():
    a_of = {d: quantile_matrix(TwoAtom(1, 2), d) for d in (64, 128, 256, 512)}
    return {d: sphere_pushforward_stats(a, 10_000, SeedSpec(31337, d), field="real") for d, a in a_of.items()}


@pytest.fixture(scope="module")
def small_reports():
    t0 = time.perf_counter()
    r3 = conjecture_report(np.diag([1.0, 2.0, 4.0]), "SO", 1, 100_000, SeedSpec(5, 0))
    r4 = conjecture_report(np.diag([1.0, 2.0, 4.0, 8.0]), "SO", 2, 100_000, SeedSpec(5, 1))
    return r3, r4, time.perf_counter() - t0


def test_01_single_ring_outer_radius(single_ring_runs):
    by_d, elapsed = single_ring_runs
    gaps = {d: np.array([abs(r.rho - R_PLUS) for r in rs]) for d, rs in by_d.items()}
    assert all(r.r_plus_target == pytest.approx(R_PLUS, rel=1e-14) for r in by_d[512])
    frac = float(np.mean(gaps[512] <= 0.08))
    med = [float(np.median(gaps[d])) for d in (64, 256, 512)]
    decreasing = med[0] > med[1] > med[2]
    ok = frac >= 0.9 and decreasing and elapsed <= 15 * 60
    report(1, "single ring rho -> R+", ok,
           f"d=512 fraction |rho-R+|<=0.08 = {frac:.2f} (need >= 0.90); "
           f"median gaps d=64,256,512 = {med[0]:.4f} > {med[1]:.4f} > {med[2]:.4f}: {decreasing}; "
           f"runtime {elapsed:.0f}s (budget 900s)")


def test_02_annulus_support(single_ring_runs):
    by_d, _ = single_ring_runs
    recs = by_d[512]
    assert all(r.r_minus_target == pytest.approx(R_MINUS, rel=1e-14) for r in recs)
    cov = np.array([r.annulus_coverage for r in recs])
    frac = float(np.mean(cov >= 0.99))
    report(2, "annulus support (delta=0.1)", frac >= 0.95,
           f"d=512 fraction of trials with coverage >= 0.99 = {frac:.2f} (need >= 0.95); "
           f"min coverage {cov.min():.4f}")


def test_03_sphere_concentration(sphere_stats):
    dims = sorted(sphere_stats)
    z = {d: (sphere_stats[d].sq_mean - 2.5) / sphere_stats[d].sq_se for d in dims}
    assert all(sphere_stats[d].sq_expected == pytest.approx(2.5) for d in dims)
    within = all(abs(v) <= N_SE for v in z.values())
    var = [sphere_stats[d].norm_variance for d in dims]
    slope = float(np.polyfit(np.log(dims), np.log(var), 1)[0])
    ok = within and -1.3 <= slope <= -0.7
    report(3, "sphere concentration", ok,
           "z-scores of mean ||Av||^2 vs 2.5: " + ", ".join(f"d={d}: {z[d]:+.2f}" for d in dims)
           + f"; log-var slope {slope:.3f} (need in [-1.3, -0.7])")


def test_04_quadratic_mean_corollary(sphere_stats):
    st = sphere_stats[512]
    gap_norm = abs(st.norm_mean - R_PLUS)
    gap_log = abs(st.log_norm.mean - math.log(R_PLUS))
    report(4, "E||Av|| -> R+, E log||Av|| -> log R+", gap_norm <= 0.02 and gap_log <= 0.02,
           f"|E||Av|| - sqrt(2.5)| = {gap_norm:.5f}, |E log||Av|| - log sqrt(2.5)| = {gap_log:.5f} (tol 0.02)")


def test_05_armentano_floor(small_reports):
    r3, r4, elapsed = small_reports
    assert r3.floor_c == pytest.approx(1 / 3) and r4.floor_c == pytest.approx(1 / 6)
    margin3 = r3.lhs.mean - r3.floor_c * r3.rhs.mean + N_SE * r3.lhs.se
    margin4 = r4.lhs.mean - r4.floor_c * r4.rhs.mean + N_SE * r4.lhs.se
    ok = r3.floor_pass and r4.floor_pass and margin3 >= 0 and margin4 >= 0 and elapsed <= 300
    report(5, "floor constant 1/binom(d,k)", ok,
           f"d=3,k=1: lhs {r3.lhs.mean:.4f} >= (1/3) rhs {r3.rhs.mean:.4f}; "
           f"d=4,k=2: lhs {r4.lhs.mean:.4f} >= (1/6) rhs {r4.rhs.mean:.4f}; runtime {elapsed:.1f}s")


def test_06_unit_constant(small_reports):
    r3, r4, _ = small_reports
    d = 64
    a = quantile_matrix(TwoAtom(1, 2), d)
    su = conjecture_report(a, "SU", 1, 4000, SeedSpec(6, 0))
    # only the SU(d), d >= 64, k = 1 case is binding; the small SO cases are evidence
    report(6, "unit constant c=1", su.unit_pass,
           f"SU(64),k=1: lhs {su.lhs.mean:.4f} vs rhs {su.rhs.mean:.4f} (c_hat {su.c_hat:.4f}) "
           f"binding={su.unit_pass}; evidence SO(3),k=1 c_hat {r3.c_hat:.4f} pass={r3.unit_pass}, "
           f"SO(4),k=2 c_hat {r4.c_hat:.4f} pass={r4.unit_pass}")


def _random_measure(rng, max_atoms=6):
    n = int(rng.integers(1, max_atoms + 1))
    z = rng.uniform(-1.5, 1.5, n) + 1j * rng.uniform(-1.5, 1.5, n)
    if rng.random() < 0.3:
        z = np.round(z, 1)  # exercise ties and coincident atoms
    return EmpiricalMeasure.normalized(z, rng.uniform(0.05, 1.0, n))


def test_07_lp_metric():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        a, b = _random_measure(rng), _random_measure(rng)
        want = brute_force_lp(a.locations, a.weights, b.locations, b.weights)
        worst = max(worst, abs(levy_prokhorov(a, b) - want))
    axioms = True
    for _ in range(200):
        a, b, c = (_random_measure(rng) for _ in range(3))
        ab, ba = levy_prokhorov(a, b), levy_prokhorov(b, a)
        ac, bc = levy_prokhorov(a, c), levy_prokhorov(b, c)
        axioms &= ab == ba and 0 <= ab <= 1 and levy_prokhorov(a, a) == 0.0 and ac <= ab + bc + 2e-4
    half = levy_prokhorov(EmpiricalMeasure.uniform([0.0, 1.0]), EmpiricalMeasure.uniform([0.0]))
    dirac = [levy_prokhorov(EmpiricalMeasure.uniform([0.0]), EmpiricalMeasure.uniform([y])) for y in (0.3, 2.0)]
    documented = abs(half - 0.5) <= 1e-4 and abs(dirac[0] - 0.3) <= 1e-4 and abs(dirac[1] - 1.0) <= 1e-4
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and axioms and documented and elapsed <= 60
    report(7, "Levy-Prokhorov correctness", ok,
           f"max |flow - subset oracle| over 200 pairs = {worst:.2e} (tol 1e-4); axioms on 200 triples: {axioms}; "
           f"documented values {half:.5f}, {dirac[0]:.5f}, {dirac[1]:.5f}; runtime {elapsed:.1f}s")


def test_08_haar_sampler():
    n, d = 2000, 32
    u = sample_haar("SU", d, SeedSpec(8), size=n)
    tr = np.trace(u, axis1=-2, axis2=-1)
    mean = tr.mean()
    sq = np.abs(tr - mean) ** 2
    var, var_se = sq.mean(), sq.std(ddof=1) / math.sqrt(n)
    mean_ok = abs(mean) <= 4 / math.sqrt(n) * math.sqrt(var)
    var_ok = abs(var - 1.0) <= N_SE * var_se
    gram = np.conj(np.swapaxes(u, -1, -2)) @ u
    resid = float(np.max(np.abs(gram - np.eye(d))))
    det_err = float(np.max(np.abs(np.linalg.det(u) - 1.0)))
    ok = mean_ok and var_ok and resid <= 1e-12 * d and det_err <= 1e-10
    report(8, "Haar sampler SU(32)", ok,
           f"|E tr U| = {abs(mean):.4f} (bound {4 / math.sqrt(n) * math.sqrt(var):.4f}); Var tr = {var:.4f} "
           f"+- {var_se:.4f}; max unitarity residual {resid:.1e} (<= {1e-12 * d:.1e}); max |det-1| {det_err:.1e}")


DETERMINISM_CONFIGS = {
    "single-ring": 'kind = "single-ring"\nseed = 7\ndims = [128]\ntrials = 5\n',
    "conjecture": 'kind = "conjecture"\nseed = 9\ndims = [6]\nk = 2\ngroup = "SO"\ntrials = 4\nsamples = 3000\n',
    "concentration": 'kind = "concentration"\nseed = 11\ndims = [32, 64]\ntrials = 3\nsamples = 2000\n',
    "sweep": 'kind = "sweep"\nseed = 13\ndims = [16, 32, 64]\ntrials = 3\n[sweep]\nexperiment = "single-ring"\n',
}


def test_09_determinism(tmp_path):
    identical = {}
    for name, text in DETERMINISM_CONFIGS.items():
        cfg = parse_config(text)
        outputs = []
        for threads in (1, 2, 4):
            out = tmp_path / f"{name}_{threads}"
            run_experiment(cfg, threads=threads, out_dir=out)
            outputs.append((out / "records.csv").read_bytes())
        identical[name] = all(o == outputs[0] for o in outputs)
    report(9, "byte-identical CSV at 1/2/4 threads", all(identical.values()),
           ", ".join(f"{k}: {v}" for k, v in identical.items()))


def test_10_quadrature_cross_check():
    a = np.diag([1.0, 2.0])
    lhs_q, rhs_q = quad_lhs_so2(a), quad_rhs_circle(a)
    lhs = estimate_lhs(a, "SO", 1, 100_000, SeedSpec(10, 0))
    rhs = estimate_rhs(a, 1, 100_000, SeedSpec(10, 1), field="real")
    z_l, z_r = (lhs.mean - lhs_q) / lhs.se, (rhs.mean - rhs_q) / rhs.se
    report(10, "d=2 quadrature cross-check", abs(z_l) <= N_SE and abs(z_r) <= N_SE,
           f"lhs {lhs.mean:.5f} vs SO(2) quadrature {lhs_q:.5f} (z={z_l:+.2f}); "
           f"rhs {rhs.mean:.5f} vs S^1 quadrature {rhs_q:.5f} (z={z_r:+.2f})")
