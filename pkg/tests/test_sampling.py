import numpy as np
import pytest
from scipy import stats

from singlering.sampling import (
    Group, SeedSpec, sample_ginibre, sample_grassmann_frame, sample_haar, sample_sphere,
)


def test_seedspec_determinism_and_independence():
    a = sample_ginibre(2, "complex", SeedSpec(42, 3))
    b = sample_ginibre(2, "complex", SeedSpec(42, 3))
    c = sample_ginibre(2, "complex", SeedSpec(42, 4))
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_seedspec_accepts_full_64bit_range():
    big = SeedSpec(2**64 - 1, 0).rng().random()
    neg = SeedSpec(-1, 0).rng().random()
    assert big == neg


def test_ginibre_second_moment():
    g = sample_ginibre(1000, "complex", SeedSpec(1))
    assert 0.99 <= np.mean(np.abs(g) ** 2) <= 1.01
    assert abs(g.mean()) <= 4 / np.sqrt(g.size)
    r = sample_ginibre(1000, "real", SeedSpec(2))
    assert abs(r.mean()) <= 4 / np.sqrt(r.size)


@pytest.mark.parametrize("group,det", [("SO", 1.0), ("SU", 1.0)])
@pytest.mark.parametrize("d", [1, 2, 3, 10, 33])
def test_special_groups_have_unit_determinant(group, det, d):
    for t in range(5):
        u = sample_haar(group, d, SeedSpec(9, t))
        assert np.max(np.abs(u.conj().T @ u - np.eye(d))) <= 1e-12 * d
        assert abs(np.linalg.det(u) - det) <= 1e-10


@pytest.mark.parametrize("group", ["U", "O"])
def test_full_groups_have_unimodular_determinant(group):
    u = sample_haar(group, 12, SeedSpec(3), size=50)
    assert np.allclose(np.abs(np.linalg.det(u)), 1.0, atol=1e-10)
    if group == "O":
        assert np.isrealobj(u)
        # both components of O(d) are hit
        dets = np.round(np.linalg.det(u))
        assert {-1.0, 1.0} <= set(dets)


def test_so3_example():
    q = sample_haar(Group.SO, 3, SeedSpec(0))
    assert np.linalg.det(q) == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-12)


def test_su_trace_mean_is_zero():
    n = 2000
    u = sample_haar("SU", 6, SeedSpec(17), size=n)
    tr = np.trace(u, axis1=-2, axis2=-1)
    assert abs(tr.mean()) <= 4 / np.sqrt(n)


def test_left_invariance_of_trace_distribution():
    d, n = 5, 3000
    v = sample_haar("SU", d, SeedSpec(100))
    u1 = sample_haar("SU", d, SeedSpec(101), size=n)
    u2 = sample_haar("SU", d, SeedSpec(102), size=n)
    t_plain = np.trace(u1, axis1=-2, axis2=-1).real
    t_shift = np.trace(v @ u2, axis1=-2, axis2=-1).real
    assert stats.ks_2samp(t_plain, t_shift).pvalue > 1e-3


def test_naive_qr_is_detectably_not_haar():
    # sanity check of the test itself: unnormalised QR skews diag(Q)
    g = sample_ginibre(4, "real", SeedSpec(5), size=4000)
    q_raw, _ = np.linalg.qr(g)
    q = sample_haar("O", 4, SeedSpec(6), size=4000)
    p = stats.ks_2samp(q_raw[:, 0, 0], q[:, 0, 0]).pvalue
    assert p < 1e-6


def test_sphere_unit_norm():
    v = sample_sphere(7, SeedSpec(1), size=500)
    np.testing.assert_allclose(np.linalg.norm(v, axis=-1), 1.0, atol=1e-12)
    w = sample_sphere(7, SeedSpec(1), field="complex", size=500)
    assert np.iscomplexobj(w)
    np.testing.assert_allclose(np.linalg.norm(w, axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("field", ["real", "complex"])
def test_sphere_coordinate_second_moments(field):
    d, n = 5, 20000
    v = sample_sphere(d, SeedSpec(8), field=field, size=n)
    sq = np.abs(v) ** 2
    mean, se = sq.mean(axis=0), sq.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(mean - 1.0 / d) <= 4 * se)
    # coordinates are exchangeable
    assert abs(mean[0] - mean[-1]) <= 4 * np.hypot(se[0], se[-1])


def test_grassmann_full_frame_is_group_element():
    f = sample_grassmann_frame(6, 6, "complex", SeedSpec(2))
    u = sample_haar("U", 6, SeedSpec(2))
    np.testing.assert_array_equal(f.columns, u)
    assert f.residual() <= 1e-12 * 6


def test_grassmann_orthonormal():
    f = sample_grassmann_frame(40, 7, "real", SeedSpec(2), size=10)
    gram = np.swapaxes(f.columns, -1, -2) @ f.columns
    assert np.max(np.abs(gram - np.eye(7))) <= 1e-12 * 40
    assert (f.dim, f.k) == (40, 7)


@pytest.mark.parametrize("field", ["real", "complex"])
def test_grassmann_line_matches_sphere(field):
    d, n = 6, 4000
    f = sample_grassmann_frame(d, 1, field, SeedSpec(30), size=n)
    v = sample_sphere(d, SeedSpec(31), field=field, size=n)
    assert stats.ks_2samp(np.abs(f.columns[:, 0, 0]), np.abs(v[:, 0])).pvalue > 1e-3


def test_grassmann_rejects_bad_k():
    with pytest.raises(ValueError):
        sample_grassmann_frame(3, 4, "real", SeedSpec(0))
    with pytest.raises(ValueError):
        sample_grassmann_frame(3, 0, "real", SeedSpec(0))


def test_group_parse():
    assert Group.parse("su(d)") is Group.SU
    assert Group.parse("O") is Group.O
    with pytest.raises(ValueError):
        Group.parse("Sp")
