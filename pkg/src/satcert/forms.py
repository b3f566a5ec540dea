"""Sign-indefinite extended quadratic forms and their positivity certificates.

A form is ``Y(x) = xi' Q xi`` with ``xi = [x; dz(Kx)]`` and
``Q = [[Q11, Q12], [Q12', Q22]]``.  Positivity is certified with two
multiplier matrices: the sector multiplier

    Sigma0(T0) = [[0, K'T0], [T0 K, -2 T0]],   T0 diagonal >= 0,

which encodes ``2 dz(u)' T0 sat(u) >= 0``, and

    SigmaR(R) = [K'; -I] R [K, -I],             R >= 0,

whose quadratic form equals ``sat(Kx)' R sat(Kx)``.  The four certificate
kinds and the matrix inequalities they check:

=============  ===================  =============================  ==========================
kind           multipliers          inequalities                   conclusion
=============  ===================  =============================  ==========================
PSD            T0 >= 0, R >= 0      Q - Sigma0 - SigmaR >= 0       Y >= 0
LOWER_BOUND    T0 >= 0, R > 0       Q - Sigma0 - SigmaR >= 0       Y >= lmin(R) |sat(Kx)|^2
PD             R > 0                Q11 > 0, Q - SigmaR >= 0       Y positive definite
PD_RU          T0 > 0               Q11 > 0, Q - Sigma0 >= 0       Y pos. def., radially unbounded
=============  ===================  =============================  ==========================
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import symcore
from .checks import CheckReport, nonstrict, strict
from .satmodel import SatLimits, dz, sat
from .symcore import as_matrix, sym, DEFAULT_TOL


class MultiplierClassError(ValueError):
    """The multipliers do not belong to the sign class the requested item needs."""


class ConstructionInapplicable(ValueError):
    pass


class CertKind(enum.Enum):
    PSD = "i"
    LOWER_BOUND = "ii"
    PD = "iii"
    PD_RU = "iv"


@dataclass(frozen=True)
class ExtendedForm:
    Q11: np.ndarray
    Q12: np.ndarray
    Q22: np.ndarray
    K: np.ndarray
    limits: SatLimits = None

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 1:
            K = K.reshape(1, -1)
        K = as_matrix(K, "K")
        m, n = K.shape
        Q11 = sym(np.asarray(self.Q11, dtype=float).reshape(n, n), "Q11")
        Q12 = as_matrix(np.asarray(self.Q12, dtype=float).reshape(n, m), "Q12")
        Q22 = sym(np.asarray(self.Q22, dtype=float).reshape(m, m), "Q22")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Q11", Q11)
        object.__setattr__(self, "Q12", Q12)
        object.__setattr__(self, "Q22", Q22)
        if self.limits is None:
            object.__setattr__(self, "limits", SatLimits.unit(m))

    @classmethod
    def from_Q(cls, Q, K, limits=None) -> "ExtendedForm":
        K = np.atleast_2d(np.asarray(K, dtype=float))
        m, n = K.shape
        Q = sym(Q, "Q")
        if Q.shape != (n + m, n + m):
            raise ValueError(f"Q must be {(n + m, n + m)}, got {Q.shape}")
        return cls(Q[:n, :n], Q[:n, n:], Q[n:, n:], K, limits)

    @property
    def n(self) -> int:
        return self.K.shape[1]

    @property
    def m(self) -> int:
        return self.K.shape[0]

    @property
    def Q(self) -> np.ndarray:
        return np.block([[self.Q11, self.Q12], [self.Q12.T, self.Q22]])

    def xi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, dz(x @ self.K.T, self.limits)], axis=-1)


@dataclass
class PositivityCertificate:
    kind: CertKind
    T0: np.ndarray = None  # diagonal entries
    R: np.ndarray = None

    def __post_init__(self):
        self.kind = CertKind(self.kind)
        if self.T0 is not None:
            T0 = np.asarray(self.T0, dtype=float)
            self.T0 = np.diag(T0).copy() if T0.ndim == 2 else np.atleast_1d(T0)
        if self.R is not None:
            self.R = sym(np.atleast_2d(np.asarray(self.R, dtype=float)), "R")


def eval_form(f: ExtendedForm, x) -> np.ndarray | float:
    """``Y(x)``; ``x`` may be one state or a batch of states (rows)."""
    xi = f.xi(x)
    val = np.einsum("...i,ij,...j->...", xi, f.Q, xi)
    return float(val) if np.ndim(val) == 0 else val


def sigma0(K, T0) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    t = np.asarray(T0, dtype=float)
    t = np.diag(t) if t.ndim == 2 else np.atleast_1d(t)
    if np.any(t < 0):
        raise MultiplierClassError("T0 must be diagonal and positive semidefinite")
    m, n = K.shape
    T = np.diag(t)
    return np.block([[np.zeros((n, n)), K.T @ T], [T @ K, -2.0 * T]])


def sigmaR(K, R) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    R = sym(np.atleast_2d(R), "R")
    if not symcore.is_psd(R):
        raise MultiplierClassError("R must be positive semidefinite")
    m = K.shape[0]
    F = np.hstack([K, -np.eye(m)])
    return sym(F.T @ R @ F)


def _check_multipliers(f: ExtendedForm, cert: PositivityCertificate, tol):
    kind = cert.kind
    need_T0 = kind in (CertKind.PSD, CertKind.LOWER_BOUND, CertKind.PD_RU)
    need_R = kind in (CertKind.PSD, CertKind.LOWER_BOUND, CertKind.PD)
    if need_T0:
        if cert.T0 is None:
            raise MultiplierClassError(f"item ({kind.value}) needs a diagonal T0")
        if cert.T0.shape != (f.m,):
            raise MultiplierClassError(f"T0 must have {f.m} diagonal entries")
        if kind is CertKind.PD_RU:
            if np.any(cert.T0 <= 0):
                raise MultiplierClassError(
                    "item (iv) needs T0 positive definite; a zero diagonal entry "
                    "does not guarantee positive definiteness of Y")
        elif np.any(cert.T0 < 0):
            raise MultiplierClassError(f"item ({kind.value}) needs T0 >= 0")
    if need_R:
        if cert.R is None:
            raise MultiplierClassError(f"item ({kind.value}) needs R")
        if cert.R.shape != (f.m, f.m):
            raise MultiplierClassError(f"R must be {f.m}x{f.m}")
        if kind is CertKind.PSD:
            if not symcore.is_psd(cert.R, tol):
                raise MultiplierClassError("item (i) needs R >= 0")
        elif not symcore.is_pd(cert.R, tol):
            raise MultiplierClassError(f"item ({kind.value}) needs R > 0")


def certify(f: ExtendedForm, cert: PositivityCertificate, tol=DEFAULT_TOL) -> CheckReport:
    """Check the matrix inequalities of the requested positivity item.

    Raises :class:`MultiplierClassError` when the multipliers are outside the
    sign class of the item.  A failed check means the certificate failed,
    not that ``Y`` lacks the property.
    """
    _check_multipliers(f, cert, tol)
    Q = f.Q
    rep = CheckReport(data={"kind": cert.kind.value})
    kind = cert.kind
    if kind in (CertKind.PD, CertKind.PD_RU):
        rep.add(strict("Q11 > 0", symcore.rel_min_eig(f.Q11), tol, tol))
    if kind in (CertKind.PSD, CertKind.LOWER_BOUND):
        M = Q - sigma0(f.K, cert.T0) - sigmaR(f.K, cert.R)
        rep.add(nonstrict("Q - Sigma0 - SigmaR >= 0", symcore.rel_min_eig(M), tol))
    elif kind is CertKind.PD:
        M = Q - sigmaR(f.K, cert.R)
        rep.add(nonstrict("Q - SigmaR >= 0", symcore.rel_min_eig(M), tol))
    else:
        M = Q - sigma0(f.K, cert.T0)
        rep.add(nonstrict("Q - Sigma0 >= 0", symcore.rel_min_eig(M), tol))
    rep.data["min_eig"] = symcore.min_eig(M)
    if cert.R is not None:
        rep.data["lambda_min_R"] = symcore.min_eig(cert.R)
    return rep


# ---------------------------------------------------------------------------
# exact evaluation along rays

def _ray_pieces(f: ExtendedForm, d):
    """Split ``alpha -> Y(alpha d)``, alpha >= 0, into quadratic pieces.

    Returns a list of ``(a_lo, a_hi, c2, c1, c0)`` with
    ``Y(alpha d) = c2 alpha^2 + c1 alpha + c0`` on ``[a_lo, a_hi]``.
    """
    d = np.asarray(d, dtype=float)
    u = f.K @ d
    lo, hi = f.limits.lower, f.limits.upper
    breaks = []
    for i, ui in enumerate(u):
        if ui > 0:
            breaks.append(hi[i] / ui)
        elif ui < 0:
            breaks.append(lo[i] / ui)
    edges = np.unique(np.concatenate([[0.0], breaks, [np.inf]]))
    Q = f.Q
    pieces = []
    for a_lo, a_hi in zip(edges[:-1], edges[1:]):
        mid = a_lo + 1.0 if np.isinf(a_hi) else 0.5 * (a_lo + a_hi)
        um = mid * u
        over = um > hi
        under = um < lo
        s = (over | under).astype(float)
        c = np.where(over, hi, np.where(under, lo, 0.0))
        a = np.concatenate([d, s * u])
        b = np.concatenate([np.zeros_like(d), -c])
        pieces.append((a_lo, a_hi, a @ Q @ a, 2.0 * (a @ Q @ b), b @ Q @ b))
    return pieces


def ray_minimum(f: ExtendedForm, d, alpha_min=0.0, alpha_max=np.inf):
    """Exact minimum of ``Y(alpha d)`` over ``alpha in [alpha_min, alpha_max]``."""
    best_a, best_v = None, np.inf
    for a_lo, a_hi, c2, c1, c0 in _ray_pieces(f, d):
        lo, hi = max(a_lo, alpha_min), min(a_hi, alpha_max)
        if lo > hi:
            continue
        cands = [lo] + ([hi] if np.isfinite(hi) else [])
        if c2 > 0:
            cands.append(min(max(-c1 / (2 * c2), lo), hi if np.isfinite(hi) else np.inf))
        elif (c2 < 0 or (c2 == 0 and c1 < 0)) and not np.isfinite(hi):
            return np.inf, -np.inf
        for a in cands:
            if not np.isfinite(a):
                continue
            v = c2 * a * a + c1 * a + c0
            if v < best_v:
                best_a, best_v = a, v
    return best_a, best_v


def ray_sup(f: ExtendedForm, d, alpha_lo=1.0, alpha_hi=1e4) -> float:
    """Exact supremum of ``Y(alpha d)`` over ``[alpha_lo, alpha_hi]``."""
    best = -np.inf
    for a_lo, a_hi, c2, c1, c0 in _ray_pieces(f, d):
        lo, hi = max(a_lo, alpha_lo), min(a_hi, alpha_hi)
        if lo > hi:
            continue
        cands = [lo, hi]
        if c2 < 0:
            cands.append(min(max(-c1 / (2 * c2), lo), hi))
        best = max(best, max(c2 * a * a + c1 * a + c0 for a in cands))
    return best


def ray_profile(f: ExtendedForm, d, alphas=(10.0, 1e2, 1e3, 1e4)) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    return np.array([eval_form(f, a * d) for a in alphas])


def ray_grows(f: ExtendedForm, d, alphas=(10.0, 1e2, 1e3, 1e4), factor=5.0) -> bool:
    """Operational radial-growth test along one direction.

    Values on the alpha grid must increase strictly from the second grid
    point on, and the last value must exceed ``factor`` times the value at
    the second grid point.
    """
    v = ray_profile(f, d, alphas)
    tail = v[1:]
    return bool(np.all(np.diff(tail) > 0) and tail[-1] > factor * max(tail[0], 0.0)
                and tail[-1] > 0)


def ray_bounded(f: ExtendedForm, d, alpha_hi=1e4, factor=2.0) -> tuple:
    """``(bounded, sup_near, sup_far)``: compares sups over [1, 1e2] and [1, alpha_hi]."""
    near = ray_sup(f, d, 1.0, 1e2)
    far = ray_sup(f, d, 1.0, alpha_hi)
    bounded = far <= factor * max(abs(near), 1e-300)
    return bool(bounded), near, far


# ---------------------------------------------------------------------------
# counterexample search

@dataclass
class FalsifyReport:
    seed: int
    evaluations: int
    counterexample: np.ndarray | None = None
    value: float | None = None
    rays: list = field(default_factory=list)  # (direction, sup_near, sup_far, bounded)

    @property
    def found(self) -> bool:
        return self.counterexample is not None

    def bounded_rays(self) -> list:
        return [r[0] for r in self.rays if r[3]]


def _is_counterexample(f, x, tol, rmin):
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) < rmin:
        return False, None
    xi = f.xi(x)
    y = float(xi @ f.Q @ xi)
    qn = max(1.0, symcore.norm2(f.Q))
    return (y <= tol and y <= tol * qn * float(xi @ xi)), y


def falsify(f: ExtendedForm, budget=100_000, seed=0, radii=(0.1, 1.0, 10.0, 1e3),
            rays=None, tol=DEFAULT_TOL, rmin=1e-6) -> FalsifyReport:
    """Seeded search for ``x != 0`` with ``Y(x) <= 0`` and for bounded rays.

    Three passes: exact minimization along rays through the ``x``-parts of
    kernel vectors of ``Q``, uniform samples on spheres of the given radii,
    and exact minimization along random rays.  ``rays`` (extra directions)
    together with the kernel directions and the rows of ``K`` get a
    boundedness verdict.  Results do not depend on anything but ``seed``.
    """
    rng = np.random.default_rng(seed)
    n = f.n
    rep = FalsifyReport(seed=seed, evaluations=0)

    kernel_dirs = []
    w, V = np.linalg.eigh(f.Q)
    qn = max(1.0, abs(w).max())
    for j in np.flatnonzero(np.abs(w) <= 1e-8 * qn):
        z1 = V[:n, j]
        if np.linalg.norm(z1) > 1e-12:
            kernel_dirs += [z1, -z1]
    for j in np.flatnonzero(w < -1e-8 * qn):
        z1 = V[:n, j]
        if np.linalg.norm(z1) > 1e-12:
            kernel_dirs += [z1, -z1]

    def try_ray(d):
        nd = np.linalg.norm(d)
        if nd == 0:
            return False
        d = d / nd
        a, v = ray_minimum(f, d, alpha_min=rmin)
        rep.evaluations += f.m + 2
        if a is None:
            return False
        if not np.isfinite(a):
            a = 1e6
        ok, y = _is_counterexample(f, a * d, tol, rmin)
        if ok:
            rep.counterexample, rep.value = a * d, y
        return ok

    for d in kernel_dirs:
        if try_ray(d):
            break

    if not rep.found:
        per_radius = max(1, (budget // 2) // len(radii))
        for r in radii:
            X = rng.standard_normal((per_radius, n))
            X *= r / np.linalg.norm(X, axis=1, keepdims=True)
            Y = eval_form(f, X)
            Y = np.atleast_1d(Y)
            rep.evaluations += per_radius
            Xi = f.xi(X)
            thresh = np.minimum(tol, tol * max(1.0, symcore.norm2(f.Q)) * np.sum(Xi * Xi, axis=1))
            hits = np.flatnonzero(Y <= thresh)
            if hits.size:
                k = hits[np.argmin(Y[hits])]
                rep.counterexample, rep.value = X[k], float(Y[k])
                break

    if not rep.found:
        n_rays = max(1, min(5000, (budget // 2) // (f.m + 2)))
        D = rng.standard_normal((n_rays, n))
        for d in D:
            if try_ray(d):
                break

    probe = list(kernel_dirs[::2]) + [f.K[i] for i in range(f.m)]
    if rays is not None:
        probe += [np.asarray(r, dtype=float) for r in rays]
    for d in probe:
        nd = np.linalg.norm(d)
        if nd == 0:
            continue
        d = d / nd
        bounded, near, far = ray_bounded(f, d)
        rep.rays.append((d, near, far, bounded))
    return rep


# ---------------------------------------------------------------------------
# constructions from the worked examples

def build_nonradial_example(K, R, W, limits=None) -> ExtendedForm:
    """Positive definite but not radially unbounded form.

    ``Q12 = -K'R``, ``Q22 = R``, ``Q11 = K'RK + Pi W Pi`` with the projector
    ``Pi = I - K'(KK')^-1 K``.  Along ``x = K'y`` the form stays bounded.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m, n = K.shape
    R = sym(np.atleast_2d(R), "R")
    W = sym(np.atleast_2d(W), "W")
    KKt = K @ K.T
    if symcore.rank_svd(KKt) < m:
        raise ConstructionInapplicable("K must have full row rank")
    Pi = np.eye(n) - K.T @ np.linalg.solve(KKt, K)
    X11 = Pi.T @ W @ Pi
    return ExtendedForm(K.T @ R @ K + X11, -K.T @ R, R, K, limits)


def gain_from_kernel(Q, n, tol=1e-9) -> tuple:
    """Single-input gain making ``Y`` vanish away from the origin.

    For ``z = (z1, z2)`` in ``ker Q`` with ``z2 > 0`` and ``z1 != 0``, the
    gain ``K = z1'`` (with ``z`` rescaled so that ``K z1 > z2``) gives
    ``xi = [lam z1; dz(lam K z1)] = lam z`` at ``lam = 1/(K z1 - z2)``.

    Returns ``(K, x_star)``.
    """
    Q = sym(Q, "Q")
    if Q.shape[0] != n + 1:
        raise ValueError("gain_from_kernel handles the single-input shape only")
    N = symcore.null_space(Q, tol)
    if N.shape[1] == 0:
        raise ConstructionInapplicable("construction inapplicable: Q has an empty kernel")
    for j in range(N.shape[1]):
        z = N[:, j]
        if z[n] < 0:
            z = -z
        z1, z2 = z[:n], z[n]
        if z2 <= tol or np.linalg.norm(z1) <= tol:
            continue
        s = max(1.0, 2.0 * z2 / float(z1 @ z1))
        z1, z2 = s * z1, s * z2
        K = z1.reshape(1, -1).copy()
        lam = 1.0 / (float(K[0] @ z1) - z2)
        x_star = lam * z1
        f = ExtendedForm.from_Q(Q, K)
        if abs(eval_form(f, x_star)) <= 1e-9 * max(1.0, symcore.norm2(Q)) * float(x_star @ x_star + 1):
            return K, x_star
    raise ConstructionInapplicable(
        "construction inapplicable: no kernel vector with z2 > 0 and z1 != 0")
