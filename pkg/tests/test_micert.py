import json

import numpy as np
import pytest
import scipy.linalg

from satcert import fixtures, symcore
from satcert.forms import CertKind, PositivityCertificate, certify, eval_form
from satcert.micert import (Layout, LMISolution, MICertificate, assemble_lmi, certify_mi,
                            decompose_check, eval_V_mi, V_form_mi, match_mi, omega_mi,
                            solution_from_z, solve_lmi, vdot_Q_mi, verify_solution)
from satcert.satmodel import SaturatedSystem, closed_loop_rhs
from satcert.sdp import (FEASIBLE, INDETERMINATE, INFEASIBLE, BackendResult, BarrierBackend,
                         Block, ConicProblem)
from satcert.sicert import (PrototypeKind, certify_si, eval_V_si, match_si,
                            prototype_certificate, vdot_Q_si)

SI, DI = PrototypeKind.SINGLE_INTEGRATOR, PrototypeKind.DOUBLE_INTEGRATOR
OSC, IOSC = PrototypeKind.OSCILLATOR, PrototypeKind.INTEGRAL_OSCILLATOR
GAINS = {SI: (2.0,), DI: (1.0, 1.5), OSC: (-0.5, 1.0), IOSC: (-0.5, 1.0, 1.0)}


def split_h(h, P0, K):
    """``(Hp, Hn)`` with ``Hp - Hn = h`` and ``P0 - K'HnK >= 0`` for the prototype data."""
    if h > 0:
        return h, 0.0
    eps = 0.25 * symcore.min_eig(P0 - (-h) * np.outer(K, K)) / float(K @ K)
    return eps, eps - h


def block_system(rng, kinds):
    """Decoupled prototypes (one input each) under a random state similarity,
    with the certificate assembled from the closed-form pieces."""
    parts = [prototype_certificate(k, GAINS[k]) for k in kinds]
    A = scipy.linalg.block_diag(*[p[0].A0 for p in parts])
    B = scipy.linalg.block_diag(*[p[0].B for p in parts])
    K = scipy.linalg.block_diag(*[p[0].K for p in parts])
    P = scipy.linalg.block_diag(*[p[1] for p in parts])
    hs = [split_h(p[2], p[1], p[0].K[0]) for p in parts]
    T = rng.standard_normal((A.shape[0],) * 2) + 3 * np.eye(A.shape[0])
    Ti = np.linalg.inv(T)
    sys = SaturatedSystem(T @ A @ Ti, T @ B, K @ Ti)
    return sys, Ti.T @ P @ Ti, np.array([h[0] for h in hs]), np.array([h[1] for h in hs])


def cert_of(sys, P0, Hp, Hn, **kw):
    rep = certify_mi(sys, P0, Hp, Hn, **kw)
    assert rep.passed, rep.summary()
    return rep.certificate


# -- V and its pieces ------------------------------------------------------

def test_eval_V_reduces_to_single_input():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        sys = SaturatedSystem(rng.standard_normal((n, n)), rng.standard_normal((n, 1)),
                              rng.standard_normal((1, n)) * 2)
        G = rng.standard_normal((n, n))
        P0, h = G @ G.T, rng.normal()
        X = rng.standard_normal((20, n)) * 3
        assert np.array_equal(eval_V_mi((P0, [h]), sys, X), eval_V_si((P0, h), sys, X))
    assert eval_V_mi((np.eye(2), [1.0, 2.0]), SaturatedSystem(np.zeros((2, 2)), np.eye(2),
                                                              np.eye(2)), [0.0, 0.0]) == 0.0


def test_eval_V_cart_printed_certificate():
    sys = fixtures.get("cart-pendulum")
    P0, h = fixtures.CART_LMI_P0, fixtures.CART_LMI_H
    rng = np.random.default_rng(1)
    for x in rng.standard_normal((20, 4)) * 0.5:
        u = float(sys.K[0] @ x)
        d = u - max(-1.0, min(1.0, u))
        ref = 0.5 * (x @ P0 @ x + h * (u * u - d * d))
        assert eval_V_mi((P0, [h]), sys, x) == pytest.approx(ref, rel=1e-13)


def test_decompose_check_examples():
    K = np.array([[1.0, 2.0]])
    assert decompose_check(np.diag([1.0, 0.0]), [1.0], [0.0], K)
    sys, P0, h = prototype_certificate(OSC, (1.0, 1.0))
    assert h > 0 and decompose_check(P0, [h], [0.0], sys.K)
    for k1 in (-0.5, -0.9):
        sys, P0, h = prototype_certificate(OSC, (k1, 1.0))
        assert h < 0
        eps = 1e-3
        assert decompose_check(P0, [eps], [eps - h], sys.K)
    assert not decompose_check(np.eye(2), [0.0], [0.0], K)
    assert not decompose_check(np.eye(2), [1.0], [5.0], K)


def test_match_mi_examples():
    rng = np.random.default_rng(2)
    for kind, g in GAINS.items():
        sys, P0, h = prototype_certificate(kind, g)
        M, res = match_mi(sys, P0, [h])
        mu, res1 = match_si(sys, P0, h)
        assert M[0] == pytest.approx(mu, rel=1e-14, abs=1e-15)
        assert res == pytest.approx(res1, abs=1e-15)
    cf = fixtures.cart_closed_form()
    md = cf["modal"]
    modal = SaturatedSystem(md["At"], md["Bt"].reshape(4, 1), cf["Kt"])
    M, res = match_mi(modal, cf["Pt"], [cf["h"]])
    k1, k2 = fixtures.CART_GAINS
    assert M[0] == pytest.approx(k1 / (k1 ** 2 + k2 ** 2), rel=1e-12)
    assert res < 1e-8
    n, m = 4, 2
    B = rng.standard_normal((n, m))
    U = scipy.linalg.null_space(B.T)
    sys = SaturatedSystem(rng.standard_normal((n, n)), B, rng.standard_normal((m, n)))
    M, res = match_mi(sys, U @ U.T, [0.0, 0.0])
    assert np.abs(M).max() <= 1e-14 and res <= 1e-14


def test_match_mi_zero_gain_row_is_unmatched():
    sys = SaturatedSystem(np.zeros((2, 2)), np.eye(2), [[1.0, 0.0], [0.0, 0.0]])
    M, res = match_mi(sys, np.eye(2), [1.0, 1.0])
    assert M[1] == 0.0 and res == pytest.approx(1.0)


# -- Vdot --------------------------------------------------------------------

def test_vdot_Q_mi_reduces_and_is_symmetric():
    for kind, g in GAINS.items():
        sys, P0, h = prototype_certificate(kind, g)
        c1 = certify_si(sys, P0, h).certificate
        c2 = cert_of(sys, P0, *split_h(h, P0, sys.K[0]))
        f1, f2 = vdot_Q_si(c1, sys), vdot_Q_mi(c2, sys)
        np.testing.assert_allclose(f2.Q, f1.Q, atol=1e-13)
        assert np.array_equal(f2.Q, f2.Q.T)
        assert np.array_equal(f2.Q22, c2.Omega)


def test_vdot_mi_identity_on_random_certs():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        sys = SaturatedSystem(rng.standard_normal((n, n)), rng.standard_normal((n, m)),
                              rng.standard_normal((m, n)))
        G = rng.standard_normal((n, n))
        rep = certify_mi(sys, G @ G.T, rng.uniform(0.1, 2, m), rng.uniform(0, 1, m))
        c = rep.certificate
        K, M = sys.K, np.diag(c.M)
        R = 2 * M + c.Omega
        F = np.hstack([K, -np.eye(m)])
        Sig0 = np.block([[np.zeros((n, n)), K.T @ M], [M @ K, -2 * M]])
        D = vdot_Q_mi(c, sys).Q - F.T @ R @ F - Sig0
        ref = scipy.linalg.block_diag(c.S0, np.zeros((m, m)))
        assert np.abs(D - ref).max() <= 1e-12 * max(1.0, np.abs(vdot_Q_mi(c, sys).Q).max())


def test_vdot_mi_certificate_on_block_systems():
    rng = np.random.default_rng(4)
    combos = [(SI, DI), (OSC, IOSC), (DI, OSC, SI), (IOSC,), (OSC, OSC)]
    for kinds in combos:
        for _ in range(10):
            sys, P0, Hp, Hn = block_system(rng, kinds)
            c = cert_of(sys, P0, Hp, Hn, tol=1e-8)
            W = 2 * np.diag(c.M) + c.Omega
            rep = certify(vdot_Q_mi(c, sys),
                          PositivityCertificate(CertKind.LOWER_BOUND, T0=c.M, R=W), tol=1e-8)
            assert rep.passed, (kinds, rep.summary())


@pytest.mark.parametrize("kinds", [(SI, DI), (OSC, IOSC), (DI, OSC, SI)])
def test_vdot_mi_finite_difference(kinds):
    rng = np.random.default_rng(5)
    sys, P0, Hp, Hn = block_system(rng, kinds)
    c = cert_of(sys, P0, Hp, Hn, tol=1e-8)
    f = vdot_Q_mi(c, sys)
    X = rng.standard_normal((4000, sys.n)) * np.exp(rng.uniform(-2, 2, (4000, 1)))
    U = X @ sys.K.T
    X = X[np.all(np.abs(np.abs(U) - 1.0) > 1e-3, axis=1)][:1000]
    F = closed_loop_rhs(sys, X)
    eps = 1e-6
    fd = (eval_V_mi(c, sys, X + eps * F) - eval_V_mi(c, sys, X - eps * F)) / (2 * eps)
    an = -0.5 * eval_form(f, X)
    gradscale = np.linalg.norm(F, axis=1) ** 2 * max(1.0, symcore.norm2(P0))
    err = np.abs(fd - an) / np.maximum(np.abs(an), 1e-2 * gradscale)
    assert err.max() <= 1e-4


# -- V as an extended form (multi-input) ----------------------------------------

def random_V_form_data(rng):
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    K = rng.standard_normal((m, n))
    hp = rng.uniform(0.05, 3, m)
    hn = rng.uniform(0, 3, m) * (rng.random(m) > 0.4)
    G = rng.standard_normal((n, int(rng.integers(0, n + 1))))
    P0 = K.T @ np.diag(hn) @ K + G @ G.T
    return P0, hp, hn, K


def test_V_form_mi_is_a_certificate():
    rng = np.random.default_rng(6)
    done = 0
    while done < 300:
        P0, hp, hn, K = random_V_form_data(rng)
        if symcore.rel_min_eig(P0 + K.T @ np.diag(hp - hn) @ K) < 1e-6:
            continue
        done += 1
        f = V_form_mi(P0, hp, hn, K)
        rep = certify(f, PositivityCertificate(CertKind.PD_RU, T0=hp / 2), tol=1e-10)
        assert rep.passed, rep.summary()
        # the same statement without the factor 1/2 takes T0 = Hp
        g = type(f).from_Q(2 * f.Q, K)
        assert certify(g, PositivityCertificate(CertKind.PD_RU, T0=hp), tol=1e-10).passed
        sys = SaturatedSystem(np.zeros((K.shape[1],) * 2), np.zeros((K.shape[1], K.shape[0])), K)
        X = rng.standard_normal((20, K.shape[1])) * 4
        np.testing.assert_allclose(eval_form(f, X), eval_V_mi((P0, hp - hn), sys, X),
                                   rtol=1e-10, atol=1e-10)


def test_V_form_mi_half_scale_with_full_hp_is_not_a_certificate():
    # scalar case P0 = 0, H = Hp = 1, K = 1: Q - Sigma0(T0 = 1) = [[1/2, -1], [-1, 3/2]]
    f = V_form_mi(np.zeros((1, 1)), [1.0], [0.0], [[1.0]])
    assert not certify(f, PositivityCertificate(CertKind.PD_RU, T0=[1.0])).passed
    assert certify(f, PositivityCertificate(CertKind.PD_RU, T0=[0.5])).passed


# -- certify_mi verdicts ------------------------------------------------------

def test_certify_mi_matches_certify_si():
    rng = np.random.default_rng(7)
    for kind in (SI, DI, OSC, IOSC):
        for _ in range(20):
            g = np.array(GAINS[kind]) * rng.uniform(0.5, 1.5, len(GAINS[kind]))
            if kind is OSC:
                g[0] = rng.uniform(-0.9, 3)
            if kind is IOSC:
                g[0] = -rng.uniform(0, 0.9) * g[2]
            sys, P0, h = prototype_certificate(kind, g)
            si = certify_si(sys, P0, h).passed
            mi = certify_mi(sys, P0, *split_h(h, P0, sys.K[0])).passed
            assert si and mi


def test_certify_mi_integral_oscillator_positive_k1():
    sys, P0, h = prototype_certificate(IOSC, (0.5, 1.0, 1.0), check_domain=False)
    rep = certify_mi(sys, P0, *split_h(h, P0, sys.K[0]) if h <= 0 else (h, 0.0))
    assert not rep.passed and "M >= 0" in rep.failed()


def test_cart_printed_certificate_passes():
    sys = fixtures.get("cart-pendulum")
    rep = certify_mi(sys, fixtures.CART_LMI_P0, [fixtures.CART_LMI_H], [0.0],
                     tol=1e-3, strict_margin=1e-9, match_tol=1e-3)
    assert rep.passed, rep.summary()
    assert min(c.slack for c in rep.conditions) >= -1e-3


def test_certify_mi_input_errors():
    sys = fixtures.get("double-integrator")
    with pytest.raises(ValueError):
        certify_mi(sys, np.eye(3), [1.0], [0.0])
    with pytest.raises(ValueError, match="diagonal"):
        certify_mi(SaturatedSystem(np.zeros((2, 2)), np.eye(2), np.eye(2)), np.eye(2),
                   [[1.0, 0.1], [0.1, 1.0]], [0.0, 0.0])


# -- LMI program ---------------------------------------------------------------

MATRIX_BLOCKS = {"P0 - K'HnK >= 0", "P0 + K'HK >= I", "P0 + K'HK <= kappa I",
                 "2M + Omega >= eps I", "P0A0 + A0'P0 <= 0"}


def test_layout_sizes():
    assert assemble_lmi(fixtures.get("double-integrator")).n_decision == 7
    assert assemble_lmi(fixtures.get("cart-pendulum")).n_decision == 14
    lay = Layout(3, 2)
    z = np.arange(lay.size, dtype=float)
    assert np.array_equal(lay.pack(*lay.unpack(z)), z)


def test_five_matrix_blocks():
    # with a Hurwitz part the Lyapunov block is present; on the imaginary axis
    # it turns into the equality rows S0 Vc = 0
    sys = SaturatedSystem(np.diag([-1.0, 0.0]), [[1.0], [1.0]], [[1.0, 1.0]])
    p = assemble_lmi(sys)
    names = {b.name for b in p.conic.blocks} & MATRIX_BLOCKS
    assert names == MATRIX_BLOCKS
    eq = p.conic.eq_names
    assert sum(e.startswith("matching") for e in eq) == sys.n * sys.m
    assert sum(e.startswith("S0 Vc") for e in eq) == sys.n * 1
    p = assemble_lmi(fixtures.get("oscillator"))
    assert {b.name for b in p.conic.blocks} & MATRIX_BLOCKS == MATRIX_BLOCKS - {"P0A0 + A0'P0 <= 0"}
    assert sum(e.startswith("S0 Vc") for e in p.conic.eq_names) == 4


@pytest.mark.parametrize("name", ["single-integrator", "double-integrator", "oscillator",
                                  "integral-oscillator", "cart-pendulum"])
def test_lmi_feasible_and_verified(name):
    sys = fixtures.get(name)
    p = assemble_lmi(sys)
    sol = solve_lmi(p)
    assert sol.status == FEASIBLE
    assert sol.verified, sol.verification.summary()
    assert min(c.slack for c in sol.verification.conditions) >= -1e-7
    rep = certify_mi(sys, sol.P0, sol.Hp, sol.Hn)
    assert rep.passed, rep.summary()
    assert sol.kappa >= 1.0


def test_lmi_single_integrator_solution():
    sys = SaturatedSystem([[0.0]], [[1.0]], [[3.0]])
    sol = solve_lmi(assemble_lmi(sys))
    assert sol.verified
    assert sol.P0[0, 0] + (sol.Hp[0] - sol.Hn[0]) * 9.0 >= 1.0 - 1e-7


def test_lmi_oscillator_negative_k2_infeasible():
    sys = SaturatedSystem([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [1.0]], [[1.0, -1.0]])
    sol = solve_lmi(assemble_lmi(sys))
    assert sol.status == INFEASIBLE and not sol.verified


def closed_form_point(problem, P0, hp, hn, M):
    K = problem.sys.K
    hp, hn = np.asarray(hp, dtype=float), np.asarray(hn, dtype=float)
    c = 1.0 / symcore.min_eig(P0 + K.T @ np.diag(hp - hn) @ K)
    P0, hp, hn, M = c * P0, c * np.asarray(hp), c * np.asarray(hn), c * np.asarray(M)
    kappa = symcore.norm2(P0 + K.T @ np.diag(hp - hn) @ K) * (1 + 1e-12)
    z = problem.layout.pack(kappa, P0, hp, hn, M / problem.alpha)
    return solution_from_z(problem, z)


def test_closed_form_certificates_are_feasible_points():
    for kind, g in GAINS.items():
        sys, P0, h = prototype_certificate(kind, g)
        hp, hn = split_h(h, P0, sys.K[0])
        mu, _ = match_si(sys, P0, h)
        p = assemble_lmi(sys)
        rep = verify_solution(p, closed_form_point(p, P0, [hp], [hn], [max(mu, 0.0)]))
        assert rep.passed, (kind, rep.summary())
    cf = fixtures.cart_closed_form()
    p = assemble_lmi(fixtures.get("cart-pendulum"))
    rep = verify_solution(p, closed_form_point(p, cf["P0"], [cf["h"]], [0.0], [cf["mu"]]))
    assert rep.passed, rep.summary()


def test_fault_injection_is_rejected():
    p = assemble_lmi(fixtures.get("cart-pendulum"))
    sol = solve_lmi(p)
    assert sol.verified

    def mutant(**kw):
        d = dict(kappa=sol.kappa, P0=sol.P0.copy(), Hp=sol.Hp.copy(), Hn=sol.Hn.copy(),
                 M=sol.M.copy())
        d.update(kw)
        return LMISolution(FEASIBLE, "mutant", None, **d)

    i = int(np.argmax(np.abs(np.diag(sol.P0))))
    flipped = sol.P0.copy()
    flipped[i, i] = -flipped[i, i]
    cases = {
        "flip P0 entry": mutant(P0=flipped),
        "zero": mutant(kappa=0.0, P0=np.zeros((4, 4)), Hp=np.zeros(1), Hn=np.zeros(1),
                       M=np.zeros(1)),
        "negative Hn": mutant(Hn=np.array([-0.5 * sol.Hp[0] - 1.0])),
        "shifted M": mutant(M=sol.M * 1.5 + 1.0),
        "small kappa": mutant(kappa=0.5 * sol.kappa),
        "scaled P0": mutant(P0=0.5 * sol.P0),
    }
    for label, bad in cases.items():
        rep = verify_solution(p, bad)
        assert not rep.passed, label
        assert rep.failed(), label
    rep = verify_solution(p, cases["zero"])
    assert "P0 + K'HK >= I" in rep.failed()
    assert "P0 + K'HK >= I" in verify_solution(p, cases["flip P0 entry"]).failed() or \
        "P0 - K'HnK >= 0" in verify_solution(p, cases["flip P0 entry"]).failed()


class _RogueBackend:
    name = "rogue"

    def __init__(self, status):
        self.status = status

    def solve(self, prob):
        return BackendResult(self.status, np.ones(prob.n_vars), 1.0)


def test_backend_results_are_always_reverified():
    p = assemble_lmi(fixtures.get("double-integrator"))
    sol = solve_lmi(p, _RogueBackend(FEASIBLE))
    assert sol.status == FEASIBLE and not sol.verified
    sol = solve_lmi(p, _RogueBackend(INDETERMINATE))
    assert sol.status == INDETERMINATE and not sol.verified


def test_sdp_toys():
    F0 = np.array([[-1.0]])
    # variables (kappa, p): p >= 1, kappa >= p, minimize kappa
    prob = ConicProblem(["kappa", "p"],
                        [Block("p >= 1", F0, np.array([[[0.0]], [[1.0]]])),
                         Block("kappa >= p", np.zeros((1, 1)), np.array([[[1.0]], [[-1.0]]]))],
                        np.zeros((0, 2)), np.zeros(0), c=np.array([1.0, 0.0]))
    r = BarrierBackend().solve(prob)
    assert r.status == FEASIBLE
    assert r.objective == pytest.approx(1.0, rel=1e-3) and r.z[1] == pytest.approx(1.0, rel=1e-3)
    I2 = np.eye(2)
    prob = ConicProblem(["p"], [Block("p >= I", -I2, I2[None]), Block("-p >= I", -I2, -I2[None])],
                        np.zeros((0, 1)), np.zeros(0))
    assert BarrierBackend().solve(prob).status == INFEASIBLE


def test_sdp_is_deterministic():
    p = assemble_lmi(fixtures.get("integral-oscillator"))
    a, b = BarrierBackend().solve(p.conic), BarrierBackend().solve(p.conic)
    assert np.array_equal(a.z, b.z)


def test_lmi_json_round_trip():
    p = assemble_lmi(fixtures.get("double-integrator"))
    d = json.loads(json.dumps(p.to_dict()))
    assert d["layout"]["variables"] == p.layout.names
    q = ConicProblem.from_dict(d["problem"])
    for b1, b2 in zip(p.conic.blocks, q.blocks):
        assert b1.name == b2.name and np.array_equal(b1.F0, b2.F0) and np.array_equal(b1.F, b2.F)
    assert np.array_equal(q.A_eq, p.conic.A_eq) and np.array_equal(q.c, p.conic.c)
    r1, r2 = BarrierBackend().solve(p.conic), BarrierBackend().solve(q)
    assert r1.status == r2.status == FEASIBLE and np.array_equal(r1.z, r2.z)
    sol = solve_lmi(p)
    json.dumps(sol.to_dict())


def test_cvxpy_backend_conforms():
    cp = pytest.importorskip("cvxpy")
    from satcert.sdp import CvxpyBackend
    if "SCS" not in cp.installed_solvers() and "CLARABEL" not in cp.installed_solvers():
        pytest.skip("no conic solver for cvxpy")
    p = assemble_lmi(fixtures.get("oscillator"))
    sol = solve_lmi(p, CvxpyBackend())
    assert sol.status == FEASIBLE
    # conformance is decided by the independent verifier alone
    assert sol.verification is not None
