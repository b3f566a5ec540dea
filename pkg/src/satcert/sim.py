"""Fixed-step integration of the saturated loop ``xdot = A0 x - B sat(Kx)``
and empirical checks of Lyapunov decrease and convergence.

The right-hand side is globally Lipschitz with constant at most
``L = |A0| + |B||K|``; steps are classical RK4 with ``dt * L <= 0.1``.
Validation runs are streamed, so that long horizons do not store
trajectories.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .satmodel import SaturatedSystem, acl, lipschitz_bound
from . import _kernel
from .symcore import NonFiniteError

DT_GUARD = 0.1
MAX_DOUBLINGS = 3


class StepSizeError(ValueError):
    """``dt`` violates the stability guard ``dt * L <= 0.1``."""


def default_dt(sys: SaturatedSystem) -> float:
    L = lipschitz_bound(sys)
    return DT_GUARD / L if L > 0 else DT_GUARD


def check_dt(sys: SaturatedSystem, dt) -> float:
    dt = float(dt)
    if not dt > 0 or not math.isfinite(dt):
        raise StepSizeError(f"dt must be positive and finite, got {dt}")
    L = lipschitz_bound(sys)
    if dt * L > DT_GUARD * (1 + 1e-12):
        raise StepSizeError(
            f"dt={dt:.6g} violates dt*L <= {DT_GUARD} (L={L:.6g}); use dt <= {DT_GUARD / L:.6g}")
    return dt


# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray  # (N+1,)
    x: np.ndarray  # (N+1, n)
    u: np.ndarray  # (N+1, m), u = Kx
    s: np.ndarray  # (N+1, m), sat(Kx)
    dt: float
    richardson: float | None = None  # estimated error of x(T), relative

    def __len__(self):
        return self.t.size

    def to_csv(self, path, V=None) -> str:
        """Write ``t,x1..xn,u1..um,sat1..satm`` and optional ``V`` columns.

        ``V`` is a series (column ``V``) or a mapping ``name -> series``
        (columns ``V_name``).
        """
        n, m = self.x.shape[1], self.u.shape[1]
        header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
                  + [f"sat{j + 1}" for j in range(m)])
        cols = [self.t[:, None], self.x, self.u, self.s]
        if V is not None:
            if isinstance(V, dict):
                for name, series in V.items():
                    header.append(f"V_{name}")
                    cols.append(np.asarray(series, float)[:, None])
            else:
                header.append("V")
                cols.append(np.asarray(V, float)[:, None])
        data = np.hstack(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in data:
                w.writerow([repr(float(v)) for v in row])
        return str(path)


def _steps(duration, dt) -> int:
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    return int(math.ceil(duration / dt - 1e-9))


def _run(sys, x0, dt, N):
    return _kernel.path(sys.A0, sys.B, sys.K, sys.limits.lower, sys.limits.upper,
                        x0.copy(), float(dt), int(N))


def integrate(sys: SaturatedSystem, x0, duration, dt=None, richardson=True) -> Trajectory:
    """Classical RK4 on a uniform grid of ``ceil(duration/dt) + 1`` samples.

    With ``richardson`` the run is repeated at ``dt/2`` and the relative
    final-state difference divided by 15 is reported as the error estimate.
    """
    dt = check_dt(sys, default_dt(sys) if dt is None else dt)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != sys.n:
        raise ValueError(f"x0 must have {sys.n} entries")
    if not np.all(np.isfinite(x0)):
        raise NonFiniteError("x0 has non-finite entries")
    N = _steps(duration, dt)
    X = _run(sys, x0, dt, N)
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("trajectory left the finite range")
    est = None
    if richardson and N > 0:
        Xh = _run(sys, x0, dt / 2, 2 * N)
        est = float(np.linalg.norm(Xh[-1] - X[-1]) / 15.0
                    / max(1.0, np.linalg.norm(Xh[-1])))
    U = X @ sys.K.T
    S = np.clip(U, sys.limits.lower, sys.limits.upper)
    return Trajectory(np.arange(N + 1) * dt, X, U, S, dt, est)


def lyapunov_trace(traj: Trajectory, V) -> dict:
    """``V`` at every sample and the largest increment between samples."""
    v = np.asarray(V(traj.x), dtype=float).reshape(-1)
    inc = float(np.max(np.diff(v))) if v.size > 1 else 0.0
    return {"V": v, "max_increment": inc, "monotone": inc <= 0.0,
            "V0": float(v[0]) if v.size else 0.0}


def convergence_check(traj: Trajectory, radius) -> tuple:
    """``(ok, settling_time)``: ``|x(t)| <= radius`` for every sample from the
    settling time on.  ``settling_time`` is ``inf`` when the last sample is
    outside the ball."""
    r = np.linalg.norm(traj.x, axis=1)
    out = np.nonzero(r > radius)[0]
    if out.size == 0:
        return True, 0.0
    if out[-1] == r.size - 1:
        return False, math.inf
    return True, float(traj.t[out[-1] + 1])


# ---------------------------------------------------------------------------
# horizon policy and streamed validation

def slowest_time_constant(sys: SaturatedSystem) -> float:
    """``1/|max Re eig(A_cl)|``; ``inf`` when ``A_cl`` is not Hurwitz."""
    re = float(np.max(np.linalg.eigvals(acl(sys)).real))
    return 1.0 / -re if re < 0 else math.inf


def saturation_rate(cert) -> float:
    """Lower bound on ``-2 Vdot`` while some channel is saturated.

    Along the loop ``-2 Vdot = x'S0x + s'(2M + Omega)s + 2 s'M dz`` with
    ``s = sat(Kx)``; the last term is nonnegative and ``|s| >= 1`` once a
    unit-limited channel saturates.
    """
    if hasattr(cert, "Hp"):
        W = 2 * np.diag(cert.M) + np.asarray(cert.Omega, float)
        return float(np.linalg.eigvalsh(0.5 * (W + W.T))[0])
    return float(2 * cert.mu + cert.omega)


def transit_allowance(sys: SaturatedSystem, x0, cert=None) -> float:
    """Time allowed for the saturated phase.

    With a certificate: the bound ``2 V(x0) / rate`` on the total time spent
    saturated (see :func:`saturation_rate`).  Without one: the time for a
    unit-rate saturated drift to cover ``2|x0|``, in units of ``|B|``.
    """
    if cert is not None:
        rate = saturation_rate(cert)
        if rate > 0:
            return 2.0 * max(float(VSpec.of(cert)(sys, np.asarray(x0, float))), 0.0) / rate
    nb = float(np.linalg.norm(sys.B, 2))
    return 2.0 * float(np.linalg.norm(x0)) / nb if nb > 0 else 0.0


def horizon(sys: SaturatedSystem, x0, cert=None) -> float:
    """``10 * tau_slowest + transit allowance``."""
    tau = slowest_time_constant(sys)
    if not math.isfinite(tau):
        rho = float(np.max(np.abs(np.linalg.eigvals(acl(sys)))))
        tau = max(1.0, 1.0 / rho) if rho > 0 else 1.0
    return 10.0 * tau + transit_allowance(sys, x0, cert)


def _linear_trap(sys: SaturatedSystem, radius):
    """``(Pcl, c)`` such that ``x'Pcl x <= c`` is invariant for the loop and
    contained in the ball of ``radius``; ``None`` if ``A_cl`` is not Hurwitz.

    The ellipsoid lies inside the linear region ``sat(Kx) = Kx``, where the
    loop is ``xdot = A_cl x`` and ``A_cl'Pcl + Pcl A_cl = -I``.
    """
    Acl = acl(sys)
    if np.max(np.linalg.eigvals(Acl).real) >= 0:
        return None
    P = scipy.linalg.solve_continuous_lyapunov(Acl.T, -np.eye(sys.n))
    P = 0.5 * (P + P.T)
    lo = np.minimum(-sys.limits.lower, sys.limits.upper)
    Pi = np.linalg.inv(P)
    # x'Px <= c implies |k_j x| <= sqrt(c k_j P^-1 k_j')
    c_lin = min(float(lo[j] ** 2 / (sys.K[j] @ Pi @ sys.K[j])) if np.any(sys.K[j]) else math.inf
                for j in range(sys.m))
    c_ball = float(np.linalg.eigvalsh(P)[0]) * radius ** 2
    return P, 0.999 * min(c_lin, c_ball)


@dataclass
class RunResult:
    x0: np.ndarray
    horizon: float
    V0: float | None
    max_increment: float | None
    settled: bool
    settling_time: float
    doublings: int  # horizon doublings used; -1 when never settled
    max_abs_u: float
    final: np.ndarray
    steps: int = 0
    budget_exhausted: bool = False

    @property
    def flagged(self) -> bool:
        return not self.settled

    def decrease_ok(self, rtol=1e-6) -> bool:
        if self.max_increment is None:
            return True
        return self.max_increment <= rtol * max(1.0, self.V0)

    def to_dict(self) -> dict:
        return {"x0": self.x0.tolist(), "horizon": self.horizon, "V0": self.V0,
                "max_increment": self.max_increment, "settled": self.settled,
                "settling_time": self.settling_time, "doublings": self.doublings,
                "max_abs_u": self.max_abs_u, "steps": self.steps,
                "budget_exhausted": self.budget_exhausted}


@dataclass
class VSpec:
    """``V(x) = 1/2 (x'P0x + sum_j h_j ((Kx)_j^2 - dz_j^2))`` with the
    loop's own ``K`` and limits."""
    P0: np.ndarray
    h: np.ndarray

    @classmethod
    def of(cls, cert) -> "VSpec":
        if hasattr(cert, "Hp"):
            return cls(np.asarray(cert.P0, float), np.asarray(cert.Hp - cert.Hn, float))
        return cls(np.asarray(cert.P0, float), np.array([float(cert.h)]))

    def __call__(self, sys: SaturatedSystem, X):
        return quadratic_sat_V(self.P0, self.h, sys.K, sys.limits)(X)


def simulate_batch(systems, X0, V=None, radius=1e-3, dt=None, horizons=None,
                   max_doublings=MAX_DOUBLINGS, max_steps=None) -> list:
    """Independent streamed runs, one per row of ``X0``.

    ``systems`` is a single loop or one loop per row; ``V`` is ``None``, a
    :class:`VSpec` or one per row.  Each run uses its own ``dt`` (default
    ``0.1/L``) and horizon (default :func:`horizon`), extended by up to
    ``max_doublings`` doublings while the state has not settled.  A run is
    settled once it enters an invariant ellipsoid of the linearized loop
    inside both the linear region and the ``radius`` ball; the settling
    time is the first sample time after the last sample with
    ``|x| > radius``.  ``max_steps`` caps the work of a single run.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    b = X0.shape[0]
    sys_list = [systems] * b if isinstance(systems, SaturatedSystem) else list(systems)
    V_list = [V] * b if V is None or isinstance(V, VSpec) else list(V)
    if len(sys_list) != b or len(V_list) != b:
        raise ValueError("one system and one V per initial state expected")
    out = []
    cache = {}
    for i in range(b):
        s, x0, vs = sys_list[i], X0[i], V_list[i]
        if x0.size != s.n:
            raise ValueError(f"x0 must have {s.n} entries")
        d = check_dt(s, default_dt(s) if dt is None else dt)
        H = horizon(s, x0) if horizons is None else float(np.broadcast_to(horizons, (b,))[i])
        nmax = _steps(H * 2 ** max_doublings, d)
        capped = max_steps is not None and nmax > max_steps
        if capped:
            nmax = int(max_steps)
        key = id(s)
        if key not in cache:
            cache[key] = _linear_trap(s, radius)
        trap = cache[key]
        Pt, ct = trap if trap is not None else (np.zeros((s.n, s.n)), -1.0)
        P0, h = (vs.P0, vs.h) if vs is not None else (np.zeros((s.n, s.n)), np.zeros(s.m))
        steps, settled, last, inc, umax, xf, finite = _kernel.stream(
            s.A0, s.B, s.K, s.limits.lower, s.limits.upper, P0, np.asarray(h, float),
            vs is not None, x0.copy(), d, nmax, Pt, float(ct), float(radius))
        if not finite:
            raise NonFiniteError("trajectory left the finite range")
        if settled:
            ts = (last + 1) * d if last >= 0 else 0.0
            dbl = 0
            while steps * d > H * 2 ** dbl * (1 + 1e-12):
                dbl += 1
        else:
            ts, dbl = math.inf, -1
        V0 = None if vs is None else float(vs(s, x0))
        inc_v = None if vs is None else (float(inc) if np.isfinite(inc) else 0.0)
        out.append(RunResult(x0.copy(), float(H), V0, inc_v, bool(settled), float(ts), dbl,
                             float(umax), np.array(xf), int(steps),
                             bool(capped and not settled)))
    return out


def quadratic_sat_V(P0, hdiag, K, limits=None):
    """Evaluator ``x -> 1/2 (x'P0x + sum_j h_j ((Kx)_j^2 - dz_j^2))``.

    Arguments may carry a leading batch axis matching the states.
    """
    P0 = np.asarray(P0, float)
    K = np.asarray(K, float)
    h = np.asarray(hdiag, float)
    lo = -1.0 if limits is None else limits.lower
    hi = 1.0 if limits is None else limits.upper

    def V(X):
        u = np.einsum("...ij,...j->...i", K, X)
        d = u - np.clip(u, lo, hi)
        return 0.5 * (np.einsum("...i,...ij,...j->...", X, P0, X)
                      + np.sum(h * (u * u - d * d), axis=-1))
    return V


def certificate_V(cert, sys: SaturatedSystem):
    """Batched evaluator for an SI or MI certificate on ``sys``."""
    vs = VSpec.of(cert)
    return quadratic_sat_V(vs.P0, vs.h, sys.K, sys.limits)


def balancing_transform(sys: SaturatedSystem, min_gain=2.0, max_cond=1e6):
    """A real modal basis ``T`` (``x = T z``) when it lowers the Lipschitz
    bound by at least ``min_gain``; otherwise ``None``.

    Each real mode, or each real/imaginary pair, is scaled by one factor
    that balances its rows of ``T^-1 B`` against its columns of ``K T``.
    """
    w, v = np.linalg.eig(sys.A0)
    if np.linalg.matrix_rank(v) < sys.n:
        return None
    try:
        _, T = scipy.linalg.cdf2rdf(w, v)
    except ValueError:
        return None
    if not np.all(np.isfinite(T)) or np.linalg.cond(T) > max_cond:
        return None
    Ti = np.linalg.inv(T)
    groups, i = [], 0
    while i < sys.n:
        k = 2 if abs(w[i].imag) > 0 and i + 1 < sys.n else 1
        groups.append(slice(i, i + k))
        i += k
    d = np.ones(sys.n)
    for g in groups:
        nb = np.linalg.norm((Ti @ sys.B)[g])
        nk = np.linalg.norm((sys.K @ T)[:, g])
        if nb > 0 and nk > 0:
            d[g] = np.sqrt(nb / nk)
    T = T * d
    if np.linalg.cond(T) > max_cond:
        return None
    if lipschitz_bound(sys.similar(T)) * min_gain > lipschitz_bound(sys):
        return None
    return T


def validate_certificate(cert, sys: SaturatedSystem, X0, radius=1e-3, balance=False,
                         **kw) -> list:
    """Lyapunov decrease and convergence for each initial state, under the
    horizon policy with the certificate's transit allowance.

    With ``balance`` the loop is integrated in a real modal basis ``x = Tz``
    when that permits a much larger step.  The larger step also enlarges
    the error committed when a step jumps across the linear region, so
    balancing is meant for exploration rather than for decrease checks.  ``V`` is the same function in
    either basis; the ``radius`` ball in ``x`` is replaced by the smaller
    ball ``|z| <= radius/|T|``, so the reported settling is conservative.
    """
    X0 = np.atleast_2d(np.asarray(X0, float))
    H = [horizon(sys, x0, cert) for x0 in X0]
    vs = VSpec.of(cert)
    T = balancing_transform(sys) if balance else None
    if T is None:
        return simulate_batch(sys, X0, vs, radius, horizons=H, **kw)
    zsys = sys.similar(T)
    zvs = VSpec(T.T @ vs.P0 @ T, vs.h)
    nT = float(np.linalg.norm(T, 2))
    res = simulate_batch(zsys, X0 @ np.linalg.inv(T).T, zvs, radius / nT, horizons=H, **kw)
    for r, x0 in zip(res, X0):
        r.x0 = x0.copy()
        r.final = T @ r.final
    return res


def sweep(family, gains, x0s, radius=1e-3, horizon_override=None, max_steps=None,
          certificates=None) -> list:
    """Convergence table over a gain grid and an initial-state grid.

    ``family(gain) -> SaturatedSystem``.  ``certificates(gain)``, when
    given, returns a certificate or ``None``; a certificate sets the
    horizon through its transit allowance.  Rows come out gain-major, in
    the order given, independent of how the batch is evaluated.
    """
    gains = list(gains)
    x0s = [np.asarray(x, float) for x in x0s]
    if not gains or not x0s:
        return []
    systems, X0, keys, H = [], [], [], []
    for g in gains:
        s = family(g)
        cert = None if certificates is None else certificates(g)
        for x in x0s:
            systems.append(s)
            X0.append(x)
            keys.append(g)
            H.append(horizon(s, x, cert) if horizon_override is None else horizon_override)
    res = simulate_batch(systems, np.array(X0), None, radius, horizons=np.array(H, float),
                         max_steps=max_steps)
    rows = []
    for g, x, r in zip(keys, X0, res):
        rows.append({"gain": tuple(np.atleast_1d(np.asarray(g, float)).tolist()),
                     "x0": x.tolist(), "converged": r.settled,
                     "settling_time": r.settling_time, "max_abs_u": r.max_abs_u,
                     "horizon": r.horizon, "budget_exhausted": r.budget_exhausted})
    return rows
