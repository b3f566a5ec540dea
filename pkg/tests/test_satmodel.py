import numpy as np
import pytest

from satcert.satmodel import (SatLimits, SaturatedSystem, UnsupportedLimitsError, acl,
                              closed_loop_rhs, closed_loop_rhs_dz, dz, is_acl_hurwitz,
                              lipschitz_bound, sat)

OSC = np.array([[0.0, 1.0], [-1.0, 0.0]])
DI = np.array([[0.0, 1.0], [0.0, 0.0]])


def test_sat_examples():
    np.testing.assert_array_equal(sat([0.3]), [0.3])
    np.testing.assert_array_equal(sat([3.0, -0.5]), [1.0, -0.5])
    np.testing.assert_array_equal(sat([-7.0], SatLimits([-2.0], [1.0])), [-2.0])


def test_dz_examples():
    K = np.array([1.0, 3.5])
    assert K @ np.array([-4.0, 2.0]) == 3.0
    np.testing.assert_array_equal(dz([3.0]), [2.0])
    np.testing.assert_array_equal(dz([0.0]), [0.0])
    np.testing.assert_array_equal(dz([3.0, -0.5]), [2.0, 0.0])


def test_limits_validation():
    with pytest.raises(ValueError):
        SatLimits([0.0], [1.0])
    with pytest.raises(ValueError):
        SatLimits([-1.0], [np.inf])
    with pytest.raises(ValueError):
        SatLimits([-1.0, -1.0], [1.0])


def test_sat_dz_exact_decomposition():
    # exact for dyadic limits: u - sat(u) is then computed without rounding
    rng = np.random.default_rng(0)
    u = rng.standard_normal((100_000, 3)) * 10.0 ** rng.uniform(-3, 3, (100_000, 1))
    lim = SatLimits([-1.0, -2.0, -0.5], [1.0, 1.0, 3.0])
    assert np.array_equal(sat(u, lim) + dz(u, lim), u)
    assert np.array_equal(sat(u) + dz(u), u)
    inside = (u >= lim.lower) & (u <= lim.upper)
    assert np.all(dz(u, lim)[inside] == 0.0)


def test_sat_dz_non_dyadic_limit_within_one_ulp():
    # with a limit like 0.7 some u are not reachable as fl(d + 0.7) for any d
    rng = np.random.default_rng(1)
    u = rng.uniform(-10, 10, 100_000)
    lim = SatLimits([-0.3], [0.7])
    r = sat(u[:, None], lim)[:, 0] + dz(u[:, None], lim)[:, 0]
    assert np.all(np.abs(r - u) <= np.spacing(np.abs(u)))


def test_sector_inequality():
    rng = np.random.default_rng(1)
    u = rng.standard_normal((20_000, 4)) * 5
    T0 = np.abs(rng.standard_normal((20_000, 4))) * (rng.random((20_000, 4)) > 0.3)
    lim = SatLimits([-1.0, -0.2, -3.0, -1.0], [1.0, 2.0, 0.5, 1.0])
    vals = 2 * np.sum(dz(u, lim) * T0 * sat(u, lim), axis=1)
    assert vals.min() >= 0.0


def test_dimension_checks():
    with pytest.raises(ValueError):
        SaturatedSystem(np.zeros((2, 3)), np.zeros((2, 1)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        SaturatedSystem(np.zeros((2, 2)), np.zeros((3, 1)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        SaturatedSystem(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        SaturatedSystem(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((1, 2)),
                        SatLimits.unit(2))
    with pytest.raises(ValueError):
        SaturatedSystem([[np.nan]], [[1.0]], [[1.0]])


def test_closed_loop_examples():
    s = SaturatedSystem(DI, [[0.0], [1.0]], [[1.0, 1.0]])
    np.testing.assert_array_equal(closed_loop_rhs(s, [0.0, 0.0]), [0.0, 0.0])
    np.testing.assert_allclose(closed_loop_rhs(s, [0.0, 0.5]), [0.5, -0.5])
    si = SaturatedSystem([[0.0]], [[1.0]], [[2.0]], SatLimits([-3.0], [0.5]))
    np.testing.assert_array_equal(closed_loop_rhs(si, [1e4]), [-0.5])
    np.testing.assert_array_equal(closed_loop_rhs(si, [-1e4]), [3.0])


def test_two_forms_agree():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n, m = rng.integers(1, 6), rng.integers(1, 4)
        lo = -rng.uniform(0.1, 3, m)
        hi = rng.uniform(0.1, 3, m)
        s = SaturatedSystem(rng.standard_normal((n, n)), rng.standard_normal((n, m)),
                            rng.standard_normal((m, n)), SatLimits(lo, hi))
        X = rng.standard_normal((200, n)) * 10
        a, b = closed_loop_rhs(s, X), closed_loop_rhs_dz(s, X)
        scale = np.abs(X).max() * (np.abs(s.A0).sum() + np.abs(s.B @ s.K).sum())
        assert np.abs(a - b).max() <= 1e-14 * scale


def test_lipschitz_bound_holds():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n, m = rng.integers(1, 6), rng.integers(1, 4)
        s = SaturatedSystem(rng.standard_normal((n, n)), rng.standard_normal((n, m)),
                            rng.standard_normal((m, n)) * 3)
        L = lipschitz_bound(s)
        X, Y = rng.standard_normal((500, n)) * 3, rng.standard_normal((500, n)) * 3
        lhs = np.linalg.norm(closed_loop_rhs(s, X) - closed_loop_rhs(s, Y), axis=1)
        assert np.all(lhs <= L * np.linalg.norm(X - Y, axis=1) * (1 + 1e-12))


def test_acl_hurwitz_examples():
    di = SaturatedSystem(DI, [[0.0], [1.0]], [[1.0, 1.0]])
    np.testing.assert_array_equal(acl(di), [[0.0, 1.0], [-1.0, -1.0]])
    assert is_acl_hurwitz(di)
    assert not is_acl_hurwitz(SaturatedSystem(OSC, [[0.0], [1.0]], [[-2.0, 1.0]]))
    assert not is_acl_hurwitz(SaturatedSystem(OSC, [[0.0], [1.0]], [[0.0, 0.0]]))


def test_limit_normalization():
    s = SaturatedSystem(DI, [[0.0], [1.0]], [[1.0, 2.0]], SatLimits([-2.0], [2.0]))
    u = s.normalize_limits()
    assert u.limits.is_unit
    X = np.random.default_rng(4).standard_normal((100, 2)) * 5
    np.testing.assert_allclose(closed_loop_rhs(s, X), closed_loop_rhs(u, X), atol=1e-13)
    with pytest.raises(UnsupportedLimitsError):
        SaturatedSystem(DI, [[0.0], [1.0]], [[1.0, 2.0]], SatLimits([-1.0], [2.0])).normalize_limits()
    with pytest.raises(UnsupportedLimitsError):
        s.require_unit_limits()


def test_similarity_preserves_flow():
    rng = np.random.default_rng(5)
    s = SaturatedSystem(rng.standard_normal((3, 3)), rng.standard_normal((3, 2)),
                        rng.standard_normal((2, 3)))
    T = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    z = s.similar(T)
    Z = rng.standard_normal((50, 3))
    np.testing.assert_allclose(closed_loop_rhs(z, Z) @ T.T, closed_loop_rhs(s, Z @ T.T),
                               atol=1e-12)
