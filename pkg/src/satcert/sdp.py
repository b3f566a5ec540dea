"""Small dense semidefinite feasibility problems and a log-det barrier solver.

A :class:`ConicProblem` asks for ``z`` with

    F_j(z) = F_j0 + sum_i z_i F_ji  >= 0   for every block j,
    A_eq z = b_eq,

optionally minimizing ``c'z``.  :class:`BarrierBackend` eliminates the
equalities (``z = z0 + N y``), removes directions every block annihilates,
and decides feasibility with the phase-I program

    min s   s.t.  F_j(y) + s I >= 0,  s >= -1,  |y| <= R

by path following on the log-det barrier.  The objective is handled by
bisection over feasibility problems with the cap ``c'z <= kappa``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INDETERMINATE = "indeterminate"


@dataclass
class Block:
    name: str
    F0: np.ndarray  # (d, d)
    F: np.ndarray  # (N, d, d)
    tag: str = ""

    @property
    def dim(self) -> int:
        return self.F0.shape[0]

    def value(self, z) -> np.ndarray:
        M = self.F0 + np.tensordot(np.asarray(z, dtype=float), self.F, axes=1)
        return 0.5 * (M + M.T)


@dataclass
class ConicProblem:
    var_names: list
    blocks: list
    A_eq: np.ndarray
    b_eq: np.ndarray
    eq_names: list = field(default_factory=list)
    c: np.ndarray | None = None
    objective_lower: float | None = None

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def to_dict(self) -> dict:
        return {
            "variables": list(self.var_names),
            "blocks": [{"name": b.name, "tag": b.tag, "dim": b.dim, "F0": b.F0.tolist(),
                        "F": b.F.tolist()} for b in self.blocks],
            "equalities": {"A": self.A_eq.tolist(), "b": self.b_eq.tolist(),
                           "names": list(self.eq_names)},
            "objective": None if self.c is None else {
                "c": self.c.tolist(), "lower_bound": self.objective_lower},
        }

    @classmethod
    def from_dict(cls, d) -> "ConicProblem":
        N = len(d["variables"])
        blocks = []
        for b in d["blocks"]:
            F0 = np.asarray(b["F0"], dtype=float)
            F = np.asarray(b["F"], dtype=float).reshape(N, F0.shape[0], F0.shape[0])
            blocks.append(Block(b["name"], F0, F, b.get("tag", "")))
        eq = d["equalities"]
        A = np.asarray(eq["A"], dtype=float).reshape(-1, N)
        obj = d.get("objective")
        return cls(list(d["variables"]), blocks, A, np.asarray(eq["b"], dtype=float),
                   list(eq.get("names", [])),
                   None if obj is None else np.asarray(obj["c"], dtype=float),
                   None if obj is None else obj.get("lower_bound"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class BackendResult:
    status: str
    z: np.ndarray | None
    objective: float | None = None
    iterations: int = 0
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------

def _nullspace(M, rtol, ref=None):
    """Kernel basis; singular values below ``rtol * ref`` count as zero
    (``ref`` defaults to the largest singular value of ``M``)."""
    if M.size == 0:
        return np.eye(M.shape[1])
    _, s, Vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    ref = smax if ref is None else ref
    r = int(np.sum(s > rtol * ref)) if ref > 0 else 0
    return Vt[r:].T


def _chol_ok(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None


@dataclass
class _Reduced:
    z0: np.ndarray
    N: np.ndarray
    C: list  # constant parts (normalized)
    A: list  # (p, d, d) coefficient stacks (normalized)
    names: list
    dropped: list
    projected: list


class BarrierBackend:
    """Reference solver for desk-scale problems.

    Parameters
    ----------
    max_newton : Newton-step cap for one feasibility solve.
    margin : a point is accepted when ``s <= -margin`` (normalized blocks).
    kappa_rtol : relative width at which the objective bisection stops.
    radius : bound on the norm of the reduced variable.
    """

    name = "builtin-barrier"

    def __init__(self, max_newton=500, margin=1e-7, kappa_rtol=1e-4, radius=1e8,
                 null_rtol=1e-10):
        self.max_newton = max_newton
        self.margin = margin
        self.kappa_rtol = kappa_rtol
        self.radius = radius
        self.null_rtol = null_rtol

    # -- preprocessing -----------------------------------------------------
    def _reduce(self, prob: ConicProblem):
        N_all = prob.n_vars
        A, b = prob.A_eq, prob.b_eq
        if A.shape[0]:
            sA = np.linalg.norm(A, 2)
            z0, *_ = np.linalg.lstsq(A, b, rcond=None)
            res = np.linalg.norm(A @ z0 - b)
            if res > 1e-9 * max(1.0, sA * np.linalg.norm(z0), np.linalg.norm(b)):
                return None, f"equalities inconsistent (residual {res:.3e})"
            Nmat = _nullspace(A, 1e-12)
        else:
            z0 = np.zeros(N_all)
            Nmat = np.eye(N_all)
        C, As, names, dropped, projected = [], [], [], [], []
        zscale = max(1.0, np.linalg.norm(z0))
        for blk in prob.blocks:
            # reference size of the block over the region of interest
            ref = max(np.linalg.norm(blk.F0), zscale * np.max(np.linalg.norm(blk.F, axis=(1, 2)),
                                                                  initial=0.0))
            c = blk.value(z0)
            a = np.tensordot(Nmat.T, blk.F, axes=1)
            a = 0.5 * (a + a.transpose(0, 2, 1))
            d = c.shape[0]
            stack = np.vstack([c] + list(a))
            W = _nullspace(stack, self.null_rtol, ref)
            if W.shape[1] == d:
                dropped.append(blk.name)
                continue
            if W.shape[1]:
                Qc = _nullspace(W.T, 1e-12)  # orthonormal complement
                c = Qc.T @ c @ Qc
                a = np.einsum("ji,pjk,kl->pil", Qc, a, Qc)
                projected.append((blk.name, W.shape[1]))
            sig = max(np.linalg.norm(c), np.max(np.linalg.norm(a, axis=(1, 2)), initial=0.0))
            if np.max(np.linalg.norm(a, axis=(1, 2)), initial=0.0) <= self.null_rtol * max(sig, ref):
                # constant block: decide now
                w = np.linalg.eigvalsh(c)
                if w[0] < -1e-12 * max(1.0, abs(w).max()):
                    return None, f"block '{blk.name}' is constant and not PSD"
                dropped.append(blk.name)
                continue
            C.append(c / sig)
            As.append(a / sig)
            names.append(blk.name)
        return _Reduced(z0, Nmat, C, As, names, dropped, projected), ""

    # -- phase I -----------------------------------------------------------
    def _phase1(self, C, As, y0, extra=None):
        """Returns (status, y, s, iterations)."""
        p = As[0].shape[0] if As else len(y0)
        R2 = self.radius ** 2
        dims = [c.shape[0] for c in C]
        nu = sum(dims) + 2
        y = np.array(y0, dtype=float)
        if y @ y >= 0.25 * R2:
            y = np.zeros(p)

        def F(j, yy, s):
            return C[j] + np.tensordot(yy, As[j], axes=1) + s * np.eye(dims[j])

        s = max([-np.linalg.eigvalsh(F(j, y, 0.0))[0] for j in range(len(C))] + [-1.0]) + 1.0
        s = max(s, -0.5)

        def phi(yy, ss, t):
            if ss <= -1.0 or yy @ yy >= R2:
                return np.inf
            val = t * ss - np.log(1.0 + ss) - np.log(R2 - yy @ yy)
            for j in range(len(C)):
                L = _chol_ok(F(j, yy, ss))
                if L is None:
                    return np.inf
                val -= 2.0 * np.sum(np.log(np.diag(L)))
            return val

        t = 1.0
        iters = 0
        while True:
            # centering
            for _ in range(100):
                if s <= -self.margin:
                    return FEASIBLE, y, s, iters
                if iters >= self.max_newton:
                    return INDETERMINATE, y, s, iters
                iters += 1
                g = np.zeros(p + 1)
                H = np.zeros((p + 1, p + 1))
                g[p] = t - 1.0 / (1.0 + s)
                H[p, p] = 1.0 / (1.0 + s) ** 2
                den = R2 - y @ y
                g[:p] += 2.0 * y / den
                H[:p, :p] += 2.0 * np.eye(p) / den + 4.0 * np.outer(y, y) / den ** 2
                for j in range(len(C)):
                    Finv = np.linalg.inv(F(j, y, s))
                    G = np.concatenate([As[j], np.eye(dims[j])[None]], axis=0)
                    FG = np.einsum("ab,pbc->pac", Finv, G)
                    g -= np.einsum("paa->p", FG)
                    H += np.einsum("pab,qba->pq", FG, FG)
                H = 0.5 * (H + H.T) + 1e-14 * np.trace(H) / (p + 1) * np.eye(p + 1)
                try:
                    dv = -np.linalg.solve(H, g)
                except np.linalg.LinAlgError:
                    dv = -np.linalg.lstsq(H, g, rcond=None)[0]
                lam2 = -g @ dv
                if lam2 / 2.0 <= 1e-10:
                    break
                f0 = phi(y, s, t)
                a = 1.0
                while a > 1e-12:
                    fn = phi(y + a * dv[:p], s + a * dv[p], t)
                    if fn <= f0 - 0.01 * a * lam2:
                        break
                    a *= 0.5
                if a <= 1e-12:
                    break
                y = y + a * dv[:p]
                s = s + a * dv[p]
            if s <= -self.margin:
                return FEASIBLE, y, s, iters
            if s - nu / t >= -self.margin:
                return INFEASIBLE, y, s, iters
            t *= 8.0

    # -- public entry ------------------------------------------------------
    def solve(self, prob: ConicProblem) -> BackendResult:
        red, why = self._reduce(prob)
        if red is None:
            return BackendResult(INFEASIBLE, None, info={"reason": why})
        info = {"dropped_blocks": red.dropped, "projected_blocks": red.projected,
                "reduced_dim": int(red.N.shape[1])}
        p = red.N.shape[1]
        if not red.C:
            z = red.z0
            obj = None if prob.c is None else float(prob.c @ z)
            return BackendResult(FEASIBLE, z, obj, 0, info)
        if p == 0:
            ok = all(np.linalg.eigvalsh(c)[0] >= 0 for c in red.C)
            return BackendResult(FEASIBLE if ok else INFEASIBLE, red.z0,
                                 None if prob.c is None else float(prob.c @ red.z0), 0, info)

        status, y, s, it = self._phase1(red.C, red.A, np.zeros(p))
        total = it
        info["phase1_s"] = float(s)
        if status != FEASIBLE:
            return BackendResult(status, red.z0 + red.N @ y, None, total, info)
        if prob.c is None:
            z = red.z0 + red.N @ y
            return BackendResult(FEASIBLE, z, None, total, info)

        # bisection on the objective
        g0 = float(prob.c @ red.z0)
        d = red.N.T @ prob.c
        best_y = y
        hi = g0 + float(d @ y)
        lo = prob.objective_lower if prob.objective_lower is not None else hi - max(1.0, abs(hi))
        steps = 0
        indeterminate = 0
        while hi - lo > self.kappa_rtol * max(1.0, abs(hi)) and steps < 60:
            mid = 0.5 * (lo + hi)
            sc = max(1.0, abs(mid), np.linalg.norm(d))
            Ccap = np.array([[(mid - g0) / sc]])
            Acap = (-d / sc).reshape(p, 1, 1)
            st, y2, s2, it = self._phase1(red.C + [Ccap], red.A + [Acap], best_y)
            total += it
            steps += 1
            if st == FEASIBLE:
                best_y = y2
                hi = min(mid, g0 + float(d @ y2))
            else:
                indeterminate += st == INDETERMINATE
                lo = mid
        z = red.z0 + red.N @ best_y
        info.update({"bisection_steps": steps, "bisection_lower": lo,
                     "bisection_indeterminate": indeterminate})
        return BackendResult(FEASIBLE, z, float(prob.c @ z), total, info)


class CvxpyBackend:
    """Same contract through cvxpy (optional dependency)."""

    name = "cvxpy"

    def __init__(self, solver=None, **kw):
        self.solver = solver
        self.kw = kw

    def solve(self, prob: ConicProblem) -> BackendResult:
        import cvxpy as cp

        z = cp.Variable(prob.n_vars)
        cons = []
        for b in prob.blocks:
            expr = b.F0 + sum(z[i] * b.F[i] for i in range(prob.n_vars) if np.any(b.F[i]))
            cons.append(0.5 * (expr + expr.T) >> 0)
        if prob.A_eq.shape[0]:
            cons.append(prob.A_eq @ z == prob.b_eq)
        obj = cp.Minimize(prob.c @ z) if prob.c is not None else cp.Minimize(0)
        pr = cp.Problem(obj, cons)
        try:
            pr.solve(solver=self.solver, **self.kw)
        except cp.error.SolverError as e:
            return BackendResult(INDETERMINATE, None, info={"reason": str(e)})
        st = pr.status
        if st in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            zz = np.asarray(z.value, dtype=float)
            return BackendResult(FEASIBLE, zz, None if prob.c is None else float(prob.c @ zz),
                                 0, {"cvxpy_status": st})
        if st in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return BackendResult(INFEASIBLE, None, info={"cvxpy_status": st})
        return BackendResult(INDETERMINATE, None, info={"cvxpy_status": st})
