"""Plant/feedback data model and the saturation and deadzone nonlinearities.

The closed loop is ``xdot = A0 x - B sat(K x) = (A0 - B K) x + B dz(K x)``
with decentralized saturation ``sat`` clamping each input channel to
``[lower_i, upper_i]`` and ``dz(u) = u - sat(u)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .symcore import as_matrix, DEFAULT_TOL


class UnsupportedLimitsError(ValueError):
    """Certificate construction needs symmetric saturation limits."""


@dataclass(frozen=True)
class SatLimits:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper limits must be 1-D with equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("saturation limits must be finite")
        if not (np.all(lo < 0) and np.all(hi > 0)):
            raise ValueError("saturation limits must satisfy lower < 0 < upper on every channel")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, m: int) -> "SatLimits":
        return cls(-np.ones(m), np.ones(m))

    @property
    def m(self) -> int:
        return self.lower.size

    @property
    def symmetric(self) -> bool:
        return bool(np.all(self.lower == -self.upper))

    @property
    def is_unit(self) -> bool:
        return bool(np.all(self.upper == 1.0) and self.symmetric)


def sat(u, limits: SatLimits | None = None) -> np.ndarray:
    """Component-wise clamp. Works on a vector or on a batch with channels last."""
    u = np.asarray(u, dtype=float)
    if limits is None:
        return np.clip(u, -1.0, 1.0)
    return np.clip(u, limits.lower, limits.upper)


def dz(u, limits: SatLimits | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u - sat(u, limits)


@dataclass(frozen=True)
class SaturatedSystem:
    A0: np.ndarray
    B: np.ndarray
    K: np.ndarray
    limits: SatLimits = field(default=None)
    labels: tuple = ()

    def __post_init__(self):
        A0 = as_matrix(self.A0, "A0")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        B = as_matrix(B, "B")
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 1:
            K = K.reshape(1, -1)
        K = as_matrix(K, "K")
        n = A0.shape[0]
        if A0.shape != (n, n):
            raise ValueError(f"A0 must be square, got {A0.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        if K.shape != (m, n):
            raise ValueError(f"K must be {m}x{n}, got {K.shape}")
        limits = self.limits if self.limits is not None else SatLimits.unit(m)
        if limits.m != m:
            raise ValueError(f"limits have {limits.m} channels, system has {m}")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "limits", limits)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def with_gain(self, K) -> "SaturatedSystem":
        return SaturatedSystem(self.A0, self.B, K, self.limits, self.labels)

    def require_unit_limits(self):
        """Certificates use ``|Kx|^2 - dz(Kx)^2 = 2 int sat``, valid for unit symmetric limits."""
        if not self.limits.symmetric:
            raise UnsupportedLimitsError(
                "asymmetric saturation limits are not supported for certificates")
        if not self.limits.is_unit:
            raise UnsupportedLimitsError(
                "certificates assume unit limits; call normalize_limits() first")

    def normalize_limits(self) -> "SaturatedSystem":
        """Rescale a symmetric-limit system to unit limits.

        With ``L = diag(upper)``, ``B sat_L(Kx) = (B L) sat_1(L^-1 K x)``.
        """
        if not self.limits.symmetric:
            raise UnsupportedLimitsError(
                "asymmetric saturation limits are not supported for certificates")
        L = self.limits.upper
        return SaturatedSystem(self.A0, self.B * L, self.K / L[:, None],
                               SatLimits.unit(self.m), self.labels)

    def similar(self, T) -> "SaturatedSystem":
        """The same loop in coordinates ``z`` with ``x = T z``."""
        T = as_matrix(T, "T")
        Ti = np.linalg.inv(T)
        return SaturatedSystem(Ti @ self.A0 @ T, Ti @ self.B, self.K @ T,
                               self.limits, self.labels)


def closed_loop_rhs(sys: SaturatedSystem, x) -> np.ndarray:
    """``A0 x - B sat(Kx)``; ``x`` may be a single state or a batch (rows)."""
    x = np.asarray(x, dtype=float)
    u = x @ sys.K.T
    return x @ sys.A0.T - sat(u, sys.limits) @ sys.B.T


def closed_loop_rhs_dz(sys: SaturatedSystem, x) -> np.ndarray:
    """The equivalent form ``(A0 - BK) x + B dz(Kx)``."""
    x = np.asarray(x, dtype=float)
    u = x @ sys.K.T
    return x @ acl(sys).T + dz(u, sys.limits) @ sys.B.T


def acl(sys: SaturatedSystem) -> np.ndarray:
    return sys.A0 - sys.B @ sys.K


def is_acl_hurwitz(sys: SaturatedSystem, tol=DEFAULT_TOL) -> bool:
    return bool(np.max(np.linalg.eigvals(acl(sys)).real) < -tol)


def lipschitz_bound(sys: SaturatedSystem) -> float:
    return float(np.linalg.norm(sys.A0, 2)
                 + np.linalg.norm(sys.B, 2) * np.linalg.norm(sys.K, 2))
