"""Single-input certificates

    V(x) = 1/2 (x'P0x + h((Kx)^2 - dz(Kx)^2)),

with the matching identity ``P0 B - h A0'K' = mu K'`` (``mu >= 0``),
``omega = 2hKB`` and, along the closed loop,

    Vdot = -1/2 xi' Q xi,   Q = [[S0 + (2mu+omega) K'K, -(mu+omega) K'],
                                 [-(mu+omega) K,          omega       ]],

``xi = [x; dz(Kx)]``, ``S0 = -(A0'P0 + P0A0)``.  Closed-form certificates
for the four prototype plants live here too.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import symcore
from .checks import CheckReport, flag, nonstrict, residual, strict
from .forms import ExtendedForm
from .satmodel import SaturatedSystem, dz, acl
from .symcore import DEFAULT_TOL, as_matrix, sym

MU_TOL = 1e-12


class GainDomainError(ValueError):
    def __init__(self, violated):
        self.violated = list(violated)
        super().__init__("gain outside the admissible domain: violates " + ", ".join(self.violated))


@dataclass
class SICertificate:
    P0: np.ndarray
    h: float
    mu: float
    omega: float
    S0: np.ndarray
    residual: float = 0.0  # relative matching misfit

    def to_dict(self) -> dict:
        return {"P0": self.P0.tolist(), "h": self.h, "mu": self.mu, "omega": self.omega,
                "S0": self.S0.tolist(), "matching_residual": self.residual}


def _require_si(sys: SaturatedSystem):
    if sys.m != 1:
        raise ValueError(f"single-input certificate needs m = 1, got m = {sys.m}")
    sys.require_unit_limits()


def s0_of(A0, P0) -> np.ndarray:
    return sym(-(A0.T @ P0 + P0 @ A0))


def eval_V_si(cert, sys: SaturatedSystem, x):
    """``V(x)``; ``cert`` is an :class:`SICertificate` or a ``(P0, h)`` pair."""
    P0, h = (cert.P0, cert.h) if isinstance(cert, SICertificate) else cert
    P0 = np.asarray(P0, dtype=float)
    x = np.asarray(x, dtype=float)
    u = (x @ sys.K.T)[..., 0]
    d = dz(u, None)
    v = 0.5 * (np.einsum("...i,ij,...j->...", x, P0, x) + h * (u * u - d * d))
    return float(v) if np.ndim(v) == 0 else v


def match_scale(sys: SaturatedSystem, P0, h) -> float:
    return float(np.linalg.norm(P0 @ sys.B) + abs(h) * np.linalg.norm(sys.A0.T @ sys.K.T))


def match_si(sys: SaturatedSystem, P0, h) -> tuple:
    """Least-squares ``mu`` in ``P0 B - h A0'K' = mu K'`` and the misfit norm."""
    _require_si(sys)
    P0 = sym(P0, "P0")
    k = sys.K[0]
    kk = float(k @ k)
    if kk == 0.0:
        raise ValueError("matching is undefined for K = 0")
    v = (P0 @ sys.B)[:, 0] - h * (sys.A0.T @ k)
    mu = float(k @ v) / kk
    return mu, float(np.linalg.norm(v - mu * k))


def omega_si(sys: SaturatedSystem, h) -> float:
    return float(2.0 * h * (sys.K @ sys.B)[0, 0])


def vdot_Q_si(cert: SICertificate, sys: SaturatedSystem) -> ExtendedForm:
    """Quadratic form with ``Vdot = -1/2 Y`` along the closed loop."""
    K = sys.K
    mu, om = cert.mu, cert.omega
    Q11 = cert.S0 + (2 * mu + om) * (K.T @ K)
    Q12 = -(mu + om) * K.T
    Q22 = np.array([[om]])
    return ExtendedForm(Q11, Q12, Q22, K, sys.limits)


def V_form_si(P0, h, K) -> ExtendedForm:
    """``V`` written as an extended form: ``1/2 [[P0 + hK'K, 0], [0, -h]]``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    P0 = sym(P0, "P0")
    return ExtendedForm(0.5 * (P0 + h * K.T @ K), np.zeros((K.shape[1], 1)),
                        np.array([[-0.5 * h]]), K)


def certify_si(sys: SaturatedSystem, P0, h, tol=DEFAULT_TOL,
               strict_margin=DEFAULT_TOL, match_tol=DEFAULT_TOL) -> CheckReport:
    """GAS verdict for ``V`` built from ``(P0, h)``.

    Conditions: A_cl Hurwitz; P0 >= 0; P0 + hK'K > 0; S0 >= 0; matching with
    mu >= 0; 2mu + omega > 0.  All slacks are relative.  ``tol`` governs the
    non-strict inequalities, ``strict_margin`` the strict ones and
    ``match_tol`` the matching misfit.
    """
    _require_si(sys)
    P0 = sym(P0, "P0")
    if P0.shape != (sys.n, sys.n):
        raise ValueError(f"P0 must be {sys.n}x{sys.n}")
    h = float(h)
    A0, K = sys.A0, sys.K
    rep = CheckReport()

    Acl = acl(sys)
    re = float(np.max(np.linalg.eigvals(Acl).real))
    rep.add(strict("A_cl Hurwitz", -re / max(1.0, symcore.norm2(Acl)), strict_margin, tol))

    rep.add(nonstrict("P0 >= 0", symcore.rel_min_eig(P0), tol))
    Pk = P0 + h * K.T @ K
    rep.add(strict("P0 + hK'K > 0", symcore.rel_min_eig(Pk), strict_margin, tol))

    S0 = s0_of(A0, P0)
    s_scale = 2.0 * symcore.norm2(P0) * symcore.norm2(A0)
    rep.add(nonstrict("S0 >= 0", symcore.rel_min_eig(S0, s_scale), tol))

    mu, res = match_si(sys, P0, h)
    scale = match_scale(sys, P0, h)
    rel = res / scale if scale > 0 else (0.0 if res == 0 else np.inf)
    rep.add(residual("matching", rel, match_tol))
    mu_scale = scale / np.linalg.norm(K) if scale > 0 else 1.0
    mu_slack = mu / max(mu_scale, 1e-300)
    rep.add(nonstrict("mu >= 0", mu_slack, MU_TOL))
    if -MU_TOL <= mu_slack < 0:
        mu = 0.0

    om = omega_si(sys, h)
    rep.add(strict("2mu + omega > 0", (2 * mu + om) / max(1.0, abs(2 * mu) + abs(om)),
                   strict_margin, tol))

    cert = SICertificate(P0, h, mu, om, S0, rel)
    rep.data.update({"method": "si", "certificate": cert.to_dict(),
                     "max_real_eig_Acl": re})
    rep.certificate = cert
    return rep


# ---------------------------------------------------------------------------
# prototype plants

class PrototypeKind(enum.Enum):
    SINGLE_INTEGRATOR = "single-integrator"
    DOUBLE_INTEGRATOR = "double-integrator"
    OSCILLATOR = "oscillator"
    INTEGRAL_OSCILLATOR = "integral-oscillator"


_N_STATES = {PrototypeKind.SINGLE_INTEGRATOR: 1, PrototypeKind.DOUBLE_INTEGRATOR: 2,
             PrototypeKind.OSCILLATOR: 2, PrototypeKind.INTEGRAL_OSCILLATOR: 3}


@dataclass(frozen=True)
class Prototype:
    """A prototype plant with its physical parameters.

    ``omega`` is the oscillator frequency, ``zeta`` the integral-oscillator
    coupling and ``b`` the input gain.  Defaults reproduce the physical
    forms: ``b = omega`` for the oscillator, ``b = zeta / omega^2`` for the
    integral oscillator and ``b = 1`` for the integrators.
    """
    kind: PrototypeKind
    omega: float = 1.0
    zeta: float = 1.0
    b: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PrototypeKind(self.kind))
        if self.omega <= 0:
            raise ValueError("oscillator frequency must be positive")
        if self.zeta == 0:
            raise ValueError("zeta must be nonzero")
        if self.b is None:
            b = {PrototypeKind.OSCILLATOR: self.omega,
                 PrototypeKind.INTEGRAL_OSCILLATOR: self.zeta / self.omega ** 2}.get(self.kind, 1.0)
            object.__setattr__(self, "b", float(b))
        if self.b == 0:
            raise ValueError("input gain must be nonzero")

    @property
    def n(self) -> int:
        return _N_STATES[self.kind]

    def plant(self) -> tuple:
        """Physical ``(A0, B)``."""
        w, z, b = self.omega, self.zeta, self.b
        if self.kind is PrototypeKind.SINGLE_INTEGRATOR:
            return np.zeros((1, 1)), np.array([[b]])
        if self.kind is PrototypeKind.DOUBLE_INTEGRATOR:
            return np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [b]])
        if self.kind is PrototypeKind.OSCILLATOR:
            return np.array([[0.0, w], [-w, 0.0]]), np.array([[0.0], [b]])
        return (np.array([[0.0, w, 0.0], [-w, 0.0, z], [0.0, 0.0, 0.0]]),
                np.array([[0.0], [0.0], [b]]))

    def system(self, K) -> SaturatedSystem:
        A0, B = self.plant()
        return SaturatedSystem(A0, B, np.asarray(K, dtype=float).reshape(1, -1))


@dataclass(frozen=True)
class Normalization:
    """``x = S xi`` and ``tau = time_scale * t`` map the physical loop to the normalized one.

    ``A_n = S^-1 A0 S / time_scale``, ``B_n = S^-1 B / time_scale``,
    ``K_n = K S``.  Certificates transfer as ``P0 = S^-T P0_n S^-1`` with the
    same ``h``; ``mu`` and ``omega`` scale with ``time_scale``.
    """
    S: np.ndarray
    time_scale: float

    @property
    def T(self) -> np.ndarray:
        # state map with the overall gain removed (third state rescaled)
        return self.S / self.S[0, 0]

    def to_normalized(self, sys: SaturatedSystem) -> SaturatedSystem:
        Si = np.linalg.inv(self.S)
        return SaturatedSystem(Si @ sys.A0 @ self.S / self.time_scale,
                               Si @ sys.B / self.time_scale, sys.K @ self.S, sys.limits)

    def gains_to_physical(self, Kn) -> np.ndarray:
        return np.atleast_2d(Kn) @ np.linalg.inv(self.S)

    def certificate_to_physical(self, P0n, h) -> tuple:
        Si = np.linalg.inv(self.S)
        return sym(Si.T @ P0n @ Si), float(h)


def normalize_prototype(proto: Prototype) -> Normalization:
    w, z, b = proto.omega, proto.zeta, proto.b
    k = proto.kind
    if k is PrototypeKind.SINGLE_INTEGRATOR:
        return Normalization(np.array([[b]]), 1.0)
    if k is PrototypeKind.DOUBLE_INTEGRATOR:
        return Normalization(np.diag([b, b]), 1.0)
    if k is PrototypeKind.OSCILLATOR:
        return Normalization((b / w) * np.eye(2), w)
    c = z * b / w ** 2
    return Normalization(c * np.diag([1.0, 1.0, w / z]), w)


def normalized_plant(kind: PrototypeKind) -> tuple:
    return Prototype(PrototypeKind(kind)).plant() if kind is not PrototypeKind.OSCILLATOR \
        else (np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([[0.0], [1.0]]))


def gain_conditions(kind: PrototypeKind, gains) -> list:
    """``(name, holds)`` for each gain-domain inequality in normalized coordinates."""
    kind = PrototypeKind(kind)
    g = np.asarray(gains, dtype=float).ravel()
    if g.size != _N_STATES[kind]:
        raise ValueError(f"{kind.value} needs {_N_STATES[kind]} gains, got {g.size}")
    if kind is PrototypeKind.SINGLE_INTEGRATOR:
        return [("k > 0", g[0] > 0)]
    if kind is PrototypeKind.DOUBLE_INTEGRATOR:
        return [("k1 > 0", g[0] > 0), ("k2 > 0", g[1] > 0)]
    if kind is PrototypeKind.OSCILLATOR:
        return [("k1 > -1", g[0] > -1), ("k2 > 0", g[1] > 0)]
    k1, k2, k3 = g
    return [("(i) k3 > 0", k3 > 0), ("(ii) k2*k3 > k1", k2 * k3 > k1),
            ("(iii) k1 + k3 > 0", k1 + k3 > 0), ("(iv*) k1 <= 0", k1 <= 0)]


def _formula_certificate(kind, g):
    if kind is PrototypeKind.SINGLE_INTEGRATOR:
        return np.zeros((1, 1)), 1.0
    if kind is PrototypeKind.DOUBLE_INTEGRATOR:
        return np.diag([0.0, 1.0]), 1.0 / g[0]
    if kind is PrototypeKind.OSCILLATOR:
        return np.eye(2), g[0] / float(g @ g)
    k1, k2, k3 = g
    N = k1 ** 2 + k2 ** 2
    p33 = (k2 ** 2 - k1 * k3) / N
    return np.array([[1.0, 0.0, -1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, p33]]), k2 / N


def prototype_certificate(kind, gains, check_domain=True) -> tuple:
    """Closed-form ``(sys_normalized, P0, h)`` for a prototype and normalized gains."""
    kind = PrototypeKind(kind)
    g = np.asarray(gains, dtype=float).ravel()
    conds = gain_conditions(kind, g)
    bad = [name for name, ok in conds if not ok]
    if check_domain and bad:
        raise GainDomainError(bad)
    A0, B = normalized_plant(kind)
    sys = SaturatedSystem(A0, B, g.reshape(1, -1))
    P0, h = _formula_certificate(kind, g)
    return sys, P0, h


def certify_prototype(kind, gains, **kw) -> CheckReport:
    """Gain-domain conditions followed by :func:`certify_si` on the closed-form certificate."""
    kind = PrototypeKind(kind)
    g = np.asarray(gains, dtype=float).ravel()
    conds = gain_conditions(kind, g)
    rep = CheckReport()
    for name, ok in conds:
        rep.add(flag("gain " + name, bool(ok)))
    try:
        sys, P0, h = prototype_certificate(kind, g, check_domain=False)
        if not np.all(np.isfinite(P0)) or not np.isfinite(h):
            raise ZeroDivisionError
    except (ZeroDivisionError, FloatingPointError, symcore.NonFiniteError):
        rep.add(flag("closed-form certificate defined", False))
        return rep
    inner = certify_si(sys, P0, h, **kw)
    rep.conditions.extend(inner.conditions)
    rep.data.update(inner.data)
    rep.certificate = inner.certificate
    rep.data["prototype"] = kind.value
    return rep


def sylvester_minors_integrosc(gains) -> tuple:
    """Leading principal minors of ``(k1^2+k2^2)(P0 + hK'K)`` in closed form."""
    k1, k2, k3 = np.asarray(gains, dtype=float).ravel()
    N = k1 ** 2 + k2 ** 2
    m1 = k2 ** 2 + k1 ** 2 * (1 + k2)
    m2 = N ** 2 * (1 + k2)
    m3 = N ** 2 * (k1 + k3) * (k2 * k3 - k1)
    return float(m1), float(m2), float(m3)


def mu_omega_formulas(kind, gains) -> tuple:
    """Closed-form ``(mu, omega)`` of the prototype certificates."""
    kind = PrototypeKind(kind)
    g = np.asarray(gains, dtype=float).ravel()
    if kind is PrototypeKind.SINGLE_INTEGRATOR:
        return 0.0, 2.0 * g[0]
    if kind is PrototypeKind.DOUBLE_INTEGRATOR:
        return 0.0, 2.0 * g[1] / g[0]
    if kind is PrototypeKind.OSCILLATOR:
        N = float(g @ g)
        return g[1] / N, 2.0 * g[0] * g[1] / N
    k1, k2, k3 = g
    N = k1 ** 2 + k2 ** 2
    return -k1 / N, 2.0 * k2 * k3 / N


def detect_prototype(sys: SaturatedSystem, tol=1e-9) -> list:
    """Prototypes whose physical form matches ``(A0, B)`` exactly up to ``tol``.

    Returns a list of :class:`Prototype`; more than one entry is an ambiguity.
    """
    if sys.m != 1:
        return []
    A0, B = sys.A0, sys.B[:, 0]
    n = sys.n
    sc = max(1.0, symcore.norm2(A0), np.linalg.norm(B))
    close = lambda X, Y: np.max(np.abs(np.asarray(X) - np.asarray(Y)), initial=0.0) <= tol * sc
    out = []
    if n == 1 and close(A0, 0) and abs(B[0]) > tol * sc:
        out.append(Prototype(PrototypeKind.SINGLE_INTEGRATOR, b=B[0]))
    if n == 2 and close(B[0], 0) and abs(B[1]) > tol * sc:
        if close(A0, [[0, 1], [0, 0]]):
            out.append(Prototype(PrototypeKind.DOUBLE_INTEGRATOR, b=B[1]))
        w = A0[0, 1]
        if w > tol * sc and close(A0, [[0, w], [-w, 0]]):
            out.append(Prototype(PrototypeKind.OSCILLATOR, omega=w, b=B[1]))
    if n == 3 and close(B[:2], 0) and abs(B[2]) > tol * sc:
        w, z = A0[0, 1], A0[1, 2]
        if w > tol * sc and abs(z) > tol * sc and close(A0, [[0, w, 0], [-w, 0, z], [0, 0, 0]]):
            out.append(Prototype(PrototypeKind.INTEGRAL_OSCILLATOR, omega=w, zeta=z, b=B[2]))
    return out


def physical_prototype_certificate(proto: Prototype, K, check_domain=True) -> tuple:
    """``(P0, h, K_normalized)`` for a physical prototype loop with gain ``K``."""
    nz = normalize_prototype(proto)
    Kn = (np.atleast_2d(np.asarray(K, dtype=float)) @ nz.S).ravel()
    _, P0n, h = prototype_certificate(proto.kind, Kn, check_domain)
    P0, h = nz.certificate_to_physical(P0n, h)
    return P0, h, Kn
