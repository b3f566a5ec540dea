"""Multi-input certificates and the LMI analysis program.

    V(x) = 1/2 (x'P0x + x'K'HKx - dz(Kx)'H dz(Kx)),   H = Hp - Hn,

with diagonal ``Hp > 0``, ``Hn >= 0``.  Hypotheses checked by
:func:`certify_mi`:

* ``P0 >= 0`` and ``S0 = -(A0'P0 + P0A0) >= 0``;
* ``P0 + K'HK > 0`` and ``P0 - K'HnK >= 0``;
* ``P0 B - A0'K'H = K'M`` with diagonal ``M >= 0``;
* ``2M + Omega > 0`` where ``Omega = HKB + B'K'H``.

Along the closed loop ``Vdot = -1/2 xi' Q xi`` with

    Q = [[S0 + K'(2M+Omega)K, -K'(M+Omega)], [-(M+Omega)K, Omega]].

The LMI program searches ``(P0, Hp, Hn, M)`` minimizing the condition
number bound ``kappa`` of ``P0 + K'HK`` (normalized to ``>= I``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import symcore
from .checks import CheckReport, flag, nonstrict, residual, strict
from .forms import ExtendedForm
from .satmodel import SaturatedSystem, acl, dz
from .sdp import (FEASIBLE, INDETERMINATE, INFEASIBLE, BarrierBackend, Block,
                  ConicProblem, BackendResult)
from .symcore import DEFAULT_TOL, sym

MU_TOL = 1e-12
EPS_STRICT = 1e-6
SCHEMA_VERSION = 1


def _diag(v, m, name) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 2:
        if a.shape != (m, m):
            raise ValueError(f"{name} must be {m}x{m}")
        if np.any(a - np.diag(np.diag(a))):
            raise ValueError(f"{name} must be diagonal")
        a = np.diag(a)
    a = np.broadcast_to(np.atleast_1d(a), (m,)).astype(float)
    if not np.all(np.isfinite(a)):
        raise symcore.NonFiniteError(f"{name} has non-finite entries")
    return a.copy()


@dataclass
class MICertificate:
    P0: np.ndarray
    Hp: np.ndarray  # diagonal entries
    Hn: np.ndarray
    M: np.ndarray
    Omega: np.ndarray
    S0: np.ndarray
    residual: float = 0.0

    @property
    def H(self) -> np.ndarray:
        return np.diag(self.Hp - self.Hn)

    def to_dict(self) -> dict:
        return {"P0": self.P0.tolist(), "Hp": self.Hp.tolist(), "Hn": self.Hn.tolist(),
                "M": self.M.tolist(), "Omega": self.Omega.tolist(), "S0": self.S0.tolist(),
                "matching_residual": self.residual}


def eval_V_mi(cert, sys: SaturatedSystem, x):
    """``V(x)``; ``cert`` is an :class:`MICertificate` or a ``(P0, H)`` pair."""
    if isinstance(cert, MICertificate):
        P0, hd = cert.P0, cert.Hp - cert.Hn
    else:
        P0, H = cert
        hd = _diag(H, sys.m, "H")
    x = np.asarray(x, dtype=float)
    u = x @ sys.K.T
    d = dz(u, None)
    v = 0.5 * (np.einsum("...i,ij,...j->...", x, np.asarray(P0, float), x)
               + np.sum(hd * (u * u - d * d), axis=-1))
    return float(v) if np.ndim(v) == 0 else v


def decompose_check(P0, Hp, Hn, K, tol=DEFAULT_TOL) -> bool:
    """``Hp > 0``, ``Hn >= 0`` and ``P0 - K'HnK >= 0``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m = K.shape[0]
    hp, hn = _diag(Hp, m, "Hp"), _diag(Hn, m, "Hn")
    P0 = sym(P0, "P0")
    sc = max(1.0, np.abs(hp).max(), np.abs(hn).max())
    return bool(hp.min() > tol * sc and hn.min() >= -tol * sc
                and symcore.is_psd(P0 - K.T @ np.diag(hn) @ K, tol))


def omega_mi(sys: SaturatedSystem, H) -> np.ndarray:
    Hm = np.diag(_diag(H, sys.m, "H"))
    X = Hm @ sys.K @ sys.B
    return sym(X + X.T)


def match_scale_mi(sys: SaturatedSystem, P0, H, M=None) -> float:
    """Sum of the norms of the three terms of the matching identity."""
    Hm = np.diag(_diag(H, sys.m, "H"))
    km = 0.0 if M is None else np.linalg.norm(sys.K.T * _diag(M, sys.m, "M"))
    return float(np.linalg.norm(P0 @ sys.B) + np.linalg.norm(sys.A0.T @ sys.K.T @ Hm) + km)


def match_mi(sys: SaturatedSystem, P0, H) -> tuple:
    """Column-wise least squares for diagonal ``M`` in ``P0 B - A0'K'H = K'M``.

    Returns ``(M, residual)`` with ``M`` the diagonal entries and the
    Frobenius norm of the misfit.  A zero row of ``K`` facing a nonzero
    column leaves ``M_j = 0`` and shows up in the residual.
    """
    P0 = sym(P0, "P0")
    Hm = np.diag(_diag(H, sys.m, "H"))
    R = P0 @ sys.B - sys.A0.T @ sys.K.T @ Hm
    M = np.zeros(sys.m)
    for j in range(sys.m):
        kj = sys.K[j]
        kk = float(kj @ kj)
        if kk > 0:
            M[j] = float(kj @ R[:, j]) / kk
    return M, float(np.linalg.norm(R - sys.K.T * M))


def vdot_Q_mi(cert: MICertificate, sys: SaturatedSystem) -> ExtendedForm:
    K = sys.K
    Mm = np.diag(cert.M)
    Om = cert.Omega
    return ExtendedForm(cert.S0 + K.T @ (2 * Mm + Om) @ K, -K.T @ (Mm + Om), Om, K, sys.limits)


def V_form_mi(P0, Hp, Hn, K) -> ExtendedForm:
    """``V`` as the extended form ``1/2 blkdiag(P0 + K'HK, -H)``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m, n = K.shape
    H = np.diag(_diag(Hp, m, "Hp") - _diag(Hn, m, "Hn"))
    return ExtendedForm(0.5 * sym(P0 + K.T @ H @ K), np.zeros((n, m)), -0.5 * H, K)


def certify_mi(sys: SaturatedSystem, P0, Hp, Hn, tol=DEFAULT_TOL,
               strict_margin=DEFAULT_TOL, match_tol=DEFAULT_TOL) -> CheckReport:
    sys.require_unit_limits()
    m, n = sys.m, sys.n
    P0 = sym(P0, "P0")
    if P0.shape != (n, n):
        raise ValueError(f"P0 must be {n}x{n}")
    hp, hn = _diag(Hp, m, "Hp"), _diag(Hn, m, "Hn")
    hd = hp - hn
    H = np.diag(hd)
    A0, K = sys.A0, sys.K
    rep = CheckReport()

    Acl = acl(sys)
    re = float(np.max(np.linalg.eigvals(Acl).real))
    rep.add(strict("A_cl Hurwitz", -re / max(1.0, symcore.norm2(Acl)), strict_margin, tol))

    hsc = max(1.0, np.abs(hp).max(), np.abs(hn).max())
    rep.add(strict("Hp > 0", hp.min() / hsc, strict_margin, tol))
    rep.add(nonstrict("Hn >= 0", hn.min() / hsc, tol))
    rep.add(nonstrict("P0 >= 0", symcore.rel_min_eig(P0), tol))
    S0 = sym(-(A0.T @ P0 + P0 @ A0))
    rep.add(nonstrict("S0 >= 0", symcore.rel_min_eig(S0, 2 * symcore.norm2(P0) * symcore.norm2(A0)),
                      tol))
    rep.add(strict("P0 + K'HK > 0", symcore.rel_min_eig(P0 + K.T @ H @ K), strict_margin, tol))
    D = P0 - K.T @ np.diag(hn) @ K
    rep.add(nonstrict("P0 - K'HnK >= 0",
                      symcore.rel_min_eig(D, max(symcore.norm2(P0), symcore.norm2(K.T @ np.diag(hn) @ K))),
                      tol))

    M, res = match_mi(sys, P0, hd)
    scale = match_scale_mi(sys, P0, hd, M)
    rel = res / scale if scale > 0 else (0.0 if res == 0 else np.inf)
    rep.add(residual("matching", rel, match_tol))
    mu_scale = scale / max(symcore.norm2(K), 1e-300) if scale > 0 else 1.0
    m_slack = M.min() / max(mu_scale, 1e-300)
    rep.add(nonstrict("M >= 0", m_slack, MU_TOL))
    M = np.where((M < 0) & (M / max(mu_scale, 1e-300) >= -MU_TOL), 0.0, M)

    Om = omega_mi(sys, hd)
    W = 2 * np.diag(M) + Om
    rep.add(strict("2M + Omega > 0",
                   symcore.min_eig(W) / max(1.0, 2 * np.abs(M).max() + symcore.norm2(Om)),
                   strict_margin, tol))

    from .ancbi import kernel_inclusion
    cert = MICertificate(P0, hp, hn, M, Om, S0, rel)
    rep.data.update({"method": "mi", "certificate": cert.to_dict(),
                     "max_real_eig_Acl": re,
                     "kernel_inclusion": kernel_inclusion(P0, A0)})
    rep.certificate = cert
    return rep


# ---------------------------------------------------------------------------
# LMI program

def _vech_index(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


@dataclass
class Layout:
    n: int
    m: int

    @property
    def names(self) -> list:
        out = ["kappa"] + [f"P0[{i},{j}]" for i, j in _vech_index(self.n)]
        out += [f"Hp[{i}]" for i in range(self.m)] + [f"Hn[{i}]" for i in range(self.m)]
        out += [f"M[{i}]" for i in range(self.m)]
        return out

    @property
    def size(self) -> int:
        return 1 + self.n * (self.n + 1) // 2 + 3 * self.m

    def unpack(self, z) -> tuple:
        z = np.asarray(z, dtype=float)
        n, m = self.n, self.m
        k = 1 + n * (n + 1) // 2
        P0 = np.zeros((n, n))
        for val, (i, j) in zip(z[1:k], _vech_index(n)):
            P0[i, j] = P0[j, i] = val
        return float(z[0]), P0, z[k:k + m].copy(), z[k + m:k + 2 * m].copy(), z[k + 2 * m:k + 3 * m].copy()

    def pack(self, kappa, P0, Hp, Hn, M) -> np.ndarray:
        vech = [P0[i, j] for i, j in _vech_index(self.n)]
        return np.concatenate([[kappa], vech, Hp, Hn, M]).astype(float)


def _affine_block(fun, N, name, tag):
    F0 = sym(fun(np.zeros(N)))
    F = np.stack([sym(fun(e)) - F0 for e in np.eye(N)])
    return Block(name, F0, F, tag)


def _affine_rows(fun, N):
    b0 = np.asarray(fun(np.zeros(N)), dtype=float).ravel()
    A = np.stack([np.asarray(fun(e), dtype=float).ravel() - b0 for e in np.eye(N)], axis=1)
    return A, -b0


def center_subspace(A0, tol_eig=None) -> tuple:
    """Orthonormal bases ``(Vc, W)``: invariant subspace of the eigenvalues on
    the imaginary axis, and its orthogonal complement."""
    from .ancbi import defect_radius
    n = A0.shape[0]
    scale = max(1.0, symcore.norm2(A0))
    if tol_eig is None:
        tol_eig = 1e-7 * scale
    r = defect_radius(n, scale, tol_eig)
    _, U, sdim = scipy.linalg.schur(A0, output="real", sort=lambda re, im: abs(re) <= r)
    return U[:, :sdim], U[:, sdim:]


def _common_kernel_of_P0(layout, A_eq, b_eq, tol=1e-10):
    N = layout.size
    if A_eq.shape[0]:
        z0, *_ = np.linalg.lstsq(A_eq, b_eq, rcond=None)
        Nm = symcore.null_space(A_eq, 1e-12)
    else:
        z0, Nm = np.zeros(N), np.eye(N)
    P0s = [layout.unpack(z0)[1]]
    base = layout.unpack(np.zeros(N))[1]
    for k in range(Nm.shape[1]):
        P0s.append(layout.unpack(Nm[:, k])[1] - base)
    stack = np.vstack(P0s)
    return symcore.null_space(stack, tol) if np.abs(stack).max() > 0 else np.eye(layout.n)


@dataclass
class LMIProblem:
    sys: SaturatedSystem
    eps_strict: float
    alpha: float  # time pre-scaling: the program uses A0/alpha, B/alpha
    layout: Layout
    conic: ConicProblem
    implied: list = field(default_factory=list)  # names of implied constraints added

    @property
    def n_decision(self) -> int:
        return self.layout.size

    def to_dict(self) -> dict:
        s = self.sys
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "satcert-lmi",
            "system": {"n": s.n, "m": s.m, "A0": s.A0.tolist(), "B": s.B.tolist(),
                       "K": s.K.tolist()},
            "eps_strict": self.eps_strict,
            "time_scale": self.alpha,
            "layout": {"variables": self.layout.names,
                       "note": "z = [kappa, vech(P0) upper triangle row-major, Hp, Hn, M]; "
                               "M is in the time-scaled program (multiply by time_scale)"},
            "implied_constraints": list(self.implied),
            "problem": self.conic.to_dict(),
        }


def _blocks_for(sys_s, layout, eps, W):
    n, m = layout.n, layout.m
    N = layout.size
    K, A, B = sys_s.K, sys_s.A0, sys_s.B
    I = np.eye(n)

    def parts(z):
        kappa, P0, hp, hn, M = layout.unpack(z)
        return kappa, P0, np.diag(hp), np.diag(hn), np.diag(M)

    def b1(z):
        _, P0, Hp, Hn, _ = parts(z)
        return P0 - K.T @ Hn @ K

    def b2(z):
        _, P0, Hp, Hn, _ = parts(z)
        return P0 + K.T @ (Hp - Hn) @ K - I

    def b3(z):
        kappa, P0, Hp, Hn, _ = parts(z)
        return kappa * I - P0 - K.T @ (Hp - Hn) @ K

    def b4(z):
        _, _, Hp, Hn, M = parts(z)
        X = (Hp - Hn) @ K @ B
        return 2 * M + X + X.T - eps * np.eye(m)

    def b5(z):
        _, P0, *_ = parts(z)
        return W.T @ (-(P0 @ A + A.T @ P0)) @ W

    blocks = [
        _affine_block(b1, N, "P0 - K'HnK >= 0", "decomposition"),
        _affine_block(b2, N, "P0 + K'HK >= I", "normalization"),
        _affine_block(b3, N, "P0 + K'HK <= kappa I", "objective bound"),
        _affine_block(b4, N, "2M + Omega >= eps I", "strict decrease"),
    ]
    if W.shape[1]:
        blocks.append(_affine_block(b5, N, "P0A0 + A0'P0 <= 0", "Lyapunov"))
    for i in range(m):
        blocks.append(_affine_block(lambda z, i=i: [[layout.unpack(z)[2][i] - eps]], N,
                                    f"Hp[{i}] >= eps", "sign"))
        blocks.append(_affine_block(lambda z, i=i: [[layout.unpack(z)[3][i]]], N,
                                    f"Hn[{i}] >= 0", "sign"))
        blocks.append(_affine_block(lambda z, i=i: [[layout.unpack(z)[4][i]]], N,
                                    f"M[{i}] >= 0", "sign"))
    return blocks


def assemble_lmi(sys: SaturatedSystem, eps_strict=EPS_STRICT) -> LMIProblem:
    """Assemble the min-kappa program with exact implied constraints.

    Beyond the program itself two families of consequences are added, each
    implied by the original constraints, so that the reduced problem has
    an interior whenever a certificate exists:

    * ``S0 Vc = 0`` for a basis ``Vc`` of the imaginary-axis invariant
      subspace (a nonincreasing, bounded-below quasi-polynomial is constant,
      so ``x'S0x`` vanishes there and ``S0 >= 0`` gives ``S0 Vc = 0``); the
      Lyapunov block is then restricted to the orthogonal complement;
    * ``Hn_i = 0`` for every channel that sees a vector common to the
      kernels of all admissible ``P0`` (from ``P0 - K'HnK >= 0``).
    """
    sys.require_unit_limits()
    n, m = sys.n, sys.m
    layout = Layout(n, m)
    N = layout.size
    alpha = max(1.0, symcore.norm2(sys.A0) / 100.0)
    sys_s = SaturatedSystem(sys.A0 / alpha, sys.B / alpha, sys.K, sys.limits)
    A, B, K = sys_s.A0, sys_s.B, sys_s.K
    Vc, W = center_subspace(A)

    def matching(z):
        _, P0, hp, hn, M = layout.unpack(z)
        return P0 @ B - A.T @ K.T @ np.diag(hp - hn) - K.T @ np.diag(M)

    A_eq, b_eq = _affine_rows(matching, N)
    names = [f"matching[{i},{j}]" for i in range(n) for j in range(m)]
    implied = []
    if Vc.shape[1]:
        def s0vc(z):
            _, P0, *_ = layout.unpack(z)
            return (P0 @ A + A.T @ P0) @ Vc
        A2, b2 = _affine_rows(s0vc, N)
        A_eq, b_eq = np.vstack([A_eq, A2]), np.concatenate([b_eq, b2])
        names += [f"S0 Vc = 0 [{i},{j}]" for i in range(n) for j in range(Vc.shape[1])]
        implied.append(f"S0 vanishes on the {Vc.shape[1]}-dimensional imaginary-axis subspace")
    NP = _common_kernel_of_P0(layout, A_eq, b_eq)
    if NP.shape[1]:
        for i in range(m):
            if np.linalg.norm(K[i] @ NP) > 1e-9 * max(1.0, np.linalg.norm(K[i])):
                row = np.zeros(N)
                row[1 + n * (n + 1) // 2 + m + i] = 1.0
                A_eq = np.vstack([A_eq, row])
                b_eq = np.append(b_eq, 0.0)
                names.append(f"Hn[{i}] = 0")
                implied.append(f"Hn[{i}] = 0 (channel sees the common kernel of P0)")
    blocks = _blocks_for(sys_s, layout, eps_strict, W)
    c = np.zeros(N)
    c[0] = 1.0
    conic = ConicProblem(layout.names, blocks, A_eq, b_eq, names, c, 1.0)
    return LMIProblem(sys, eps_strict, alpha, layout, conic, implied)


@dataclass
class LMISolution:
    status: str
    backend: str
    z: np.ndarray | None = None
    kappa: float | None = None
    P0: np.ndarray | None = None
    Hp: np.ndarray | None = None
    Hn: np.ndarray | None = None
    M: np.ndarray | None = None  # original time scale
    iterations: int = 0
    info: dict = field(default_factory=dict)
    verification: CheckReport | None = None

    @property
    def verified(self) -> bool:
        return self.verification is not None and self.verification.passed

    def to_dict(self) -> dict:
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return {"status": self.status, "backend": self.backend, "kappa": self.kappa,
                "P0": arr(self.P0), "Hp": arr(self.Hp), "Hn": arr(self.Hn), "M": arr(self.M),
                "iterations": self.iterations, "info": _plain(self.info),
                "verified": self.verified,
                "verification": None if self.verification is None else self.verification.to_dict()}


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def solution_from_z(problem: LMIProblem, z, status=FEASIBLE, backend="manual") -> LMISolution:
    kappa, P0, hp, hn, Ms = problem.layout.unpack(z)
    return LMISolution(status, backend, np.asarray(z, dtype=float), kappa, P0, hp, hn,
                       Ms * problem.alpha)


def solve_lmi(problem: LMIProblem, backend=None) -> LMISolution:
    """Run ``backend`` (default: the built-in barrier solver) and verify independently."""
    backend = backend or BarrierBackend()
    res: BackendResult = backend.solve(problem.conic)
    name = getattr(backend, "name", type(backend).__name__)
    if res.status != FEASIBLE or res.z is None:
        return LMISolution(res.status, name, res.z, iterations=res.iterations, info=res.info)
    sol = solution_from_z(problem, res.z, res.status, name)
    sol.iterations = res.iterations
    sol.info = res.info
    sol.verification = verify_solution(problem, sol)
    return sol


def verify_solution(problem: LMIProblem, solution: LMISolution, tol=1e-7) -> CheckReport:
    """Recompute every constraint of the program from the extracted values.

    Works on the unreduced constraints (full Lyapunov block, no implied
    equalities), with relative slacks, then replays :func:`certify_mi`.
    """
    rep = CheckReport()
    if solution.P0 is None:
        rep.add(flag("solution present", False))
        return rep
    sys = problem.sys
    a = problem.alpha
    A, B, K = sys.A0 / a, sys.B / a, sys.K
    n, m = sys.n, sys.m
    eps = problem.eps_strict
    kappa = float(solution.kappa)
    P0 = sym(solution.P0)
    hp = _diag(solution.Hp, m, "Hp")
    hn = _diag(solution.Hn, m, "Hn")
    Ms = _diag(solution.M, m, "M") / a
    H = np.diag(hp - hn)
    I = np.eye(n)

    def psd(name, X, scale=None):
        X = sym(X)
        sc = symcore.norm2(X) if scale is None else scale
        rep.add(nonstrict(name, symcore.min_eig(X) / max(1.0, sc), tol))

    KHK = K.T @ H @ K
    KHnK = K.T @ np.diag(hn) @ K
    psd("P0 - K'HnK >= 0", P0 - KHnK, max(symcore.norm2(P0), symcore.norm2(KHnK)))
    psd("P0 + K'HK >= I", P0 + KHK - I, symcore.norm2(P0 + KHK))
    psd("P0 + K'HK <= kappa I", kappa * I - P0 - KHK, max(kappa, symcore.norm2(P0 + KHK)))
    X = H @ K @ B
    W = 2 * np.diag(Ms) + X + X.T
    psd("2M + Omega >= eps I", W - eps * np.eye(m), symcore.norm2(W))
    psd("P0A0 + A0'P0 <= 0", -(P0 @ A + A.T @ P0), 2 * symcore.norm2(P0) * symcore.norm2(A))
    R = P0 @ B - A.T @ K.T @ H - K.T @ np.diag(Ms)
    sc = np.linalg.norm(P0 @ B) + np.linalg.norm(A.T @ K.T @ H) + np.linalg.norm(K.T @ np.diag(Ms))
    rel = np.linalg.norm(R) / sc if sc > 0 else (0.0 if np.linalg.norm(R) == 0 else np.inf)
    rep.add(residual("matching", rel, tol))
    hs = max(1.0, np.abs(hp).max(), np.abs(hn).max())
    for i in range(m):
        rep.add(nonstrict(f"Hp[{i}] >= eps", (hp[i] - eps) / hs, tol))
        rep.add(nonstrict(f"Hn[{i}] >= 0", hn[i] / hs, tol))
        rep.add(nonstrict(f"M[{i}] >= 0", Ms[i] / max(1.0, np.abs(Ms).max()), tol))

    cm = certify_mi(sys, P0, hp, hn)
    rep.add(flag("certify_mi replay", cm.passed,
                 "" if cm.passed else "failed: " + ", ".join(cm.failed())))
    rep.data["certify_mi"] = cm.to_dict()
    rep.certificate = cm.certificate
    return rep


# ---------------------------------------------------------------------------
# the eligibility program for A0 alone

def assemble_condition4(A0) -> ConicProblem:
    """Feasibility of ``P0 >= Pi``, ``A0'P0 + P0A0 <= 0`` with ``Pi`` the
    projector onto ``range(A0')``; feasible exactly when some ``P0 >= 0``
    has ``ker P0 ⊆ ker A0`` and ``S0 >= 0`` (the problem is homogeneous)."""
    A = symcore.as_matrix(A0, "A0")
    n = A.shape[0]
    a = max(1.0, symcore.norm2(A))
    A = A / a
    idx = _vech_index(n)
    Nv = len(idx)

    def unpackP(z):
        P = np.zeros((n, n))
        for v, (i, j) in zip(z, idx):
            P[i, j] = P[j, i] = v
        return P

    Ub = symcore.range_basis(A.T, 1e-9)
    Pi = Ub @ Ub.T
    Vc, W = center_subspace(A)
    blocks = [_affine_block(lambda z: unpackP(z) - Pi, Nv, "P0 >= Pi", "kernel inclusion")]
    if W.shape[1]:
        blocks.append(_affine_block(lambda z: W.T @ (-(unpackP(z) @ A + A.T @ unpackP(z))) @ W,
                                    Nv, "S0 >= 0", "Lyapunov"))
    if Vc.shape[1]:
        A_eq, b_eq = _affine_rows(lambda z: (unpackP(z) @ A + A.T @ unpackP(z)) @ Vc, Nv)
    else:
        A_eq, b_eq = np.zeros((0, Nv)), np.zeros(0)
    return ConicProblem([f"P0[{i},{j}]" for i, j in idx], blocks, A_eq, b_eq)


def condition4_feasible(A0, backend=None) -> str:
    """Backend status of :func:`assemble_condition4`.

    Ineligible spectra (a zero block of size 3 or more) give weakly infeasible
    programs whose phase-one optimum approaches zero only along an unbounded
    ray, so the default backend gets a larger Newton budget here.
    """
    backend = backend or BarrierBackend(max_newton=2000)
    return backend.solve(assemble_condition4(A0)).status
