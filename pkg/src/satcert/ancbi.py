"""Eligibility of ``A0`` for a certificate with ``P0 >= 0``, ``A0'P0 + P0A0 <= 0``
and ``ker P0 ⊆ ker A0``, and a constructive choice of such a ``P0``.

Jordan structure is read off rank chains of matrix powers, never from a
Jordan decomposition:

* zero eigenvalue: the largest block has size ``k``, the smallest integer
  with ``rank(A^k) == rank(A^(k+1))``;
* pair ``±i beta``: blocks are simple iff
  ``rank(A^2 + beta^2 I) == rank((A^2 + beta^2 I)^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import symcore
from .symcore import as_matrix, sym


class ClusteringError(ValueError):
    """Eigenvalue clusters too close to separate reliably."""


class IneligibleError(ValueError):
    pass


class IllConditionedError(ValueError):
    pass


RANK_TOL = 1e-8


@dataclass
class Cluster:
    value: complex  # representative; upper half plane for conjugate pairs
    multiplicity: int  # algebraic, counting one member of a pair
    block_size: int  # largest Jordan block (0 if not computed)

    @property
    def kind(self) -> str:
        if abs(self.value) == 0.0:
            return "zero"
        if self.value.real == 0.0:
            return "imaginary"
        return "rhp" if self.value.real > 0 else "lhp"


@dataclass
class SpectralStructure:
    n: int
    clusters: list = field(default_factory=list)
    has_open_RHP: bool = False
    origin_block_gt2: bool = False
    imaginary_nonsimple: bool = False

    @property
    def eligible(self) -> bool:
        return not (self.has_open_RHP or self.origin_block_gt2 or self.imaginary_nonsimple)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "clusters": [{"value": [c.value.real, c.value.imag], "kind": c.kind,
                          "multiplicity": c.multiplicity, "block_size": c.block_size}
                         for c in self.clusters],
            "has_open_RHP": self.has_open_RHP,
            "origin_block_gt2": self.origin_block_gt2,
            "imaginary_nonsimple": self.imaginary_nonsimple,
            "eligible": self.eligible,
        }


def _kernel_dims(N, tol):
    """``dim ker N^k`` for ``k = 0, 1, ...`` until the chain stops growing.

    The nested kernels are computed without forming powers: ``x`` is in
    ``ker N^(k+1)`` iff ``N x`` lies in ``ker N^k``, so each step is a
    nullspace of ``N`` followed by the projector off the previous kernel,
    judged against the absolute threshold ``tol``.
    """
    n = N.shape[0]
    dims = [0]
    Z = np.zeros((n, 0))
    for _ in range(n):
        M = N - Z @ (Z.T @ N)
        _, s, Vt = np.linalg.svd(M)
        Zk = Vt[int(np.sum(s > tol)):].T
        if Zk.shape[1] == Z.shape[1]:
            break
        Z = Zk
        dims.append(Z.shape[1])
    return dims


def _chain_block_size(N, n, scale):
    """Largest Jordan block of the zero eigenvalue of ``N``: the smallest
    ``k`` with ``rank(N^k) == rank(N^(k+1))``."""
    return len(_kernel_dims(N, RANK_TOL * max(scale, 1e-300))) - 1


def _cluster(ev, tol):
    """Group eigenvalues into clusters of radius ``tol`` around a seed."""
    remaining = list(ev)
    groups = []
    while remaining:
        seed = remaining.pop(0)
        members = [seed]
        rest = []
        for z in remaining:
            (members if abs(z - seed) <= tol else rest).append(z)
        remaining = rest
        groups.append(members)
    return groups


def defect_radius(n, scale, tol_eig) -> float:
    """Radius within which rounding can split one defective eigenvalue.

    A Jordan block of size ``k`` perturbed at the level ``eps |A|`` spreads
    its eigenvalues over about ``eps^(1/k) |A|``.
    """
    if n <= 1:
        return tol_eig
    return max(tol_eig, scale * min(1e-3, (10.0 * n * np.finfo(float).eps) ** (1.0 / n)))


def _merge_defective(A, groups, loose, scale):
    """Merge ``tol``-clusters lying within ``loose`` of each other when a
    rank test confirms a single defective eigenvalue; otherwise raise."""
    n = A.shape[0]
    centers = [np.mean(g) for g in groups]
    label = list(range(len(groups)))

    def find(i):
        while label[i] != i:
            i = label[i]
        return i

    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            if abs(centers[i] - centers[j]) <= loose:
                label[find(j)] = find(i)
    merged = {}
    for i, g in enumerate(groups):
        merged.setdefault(find(i), []).extend(g)
    out = []
    for i, g in merged.items():
        if sum(1 for k in range(len(groups)) if find(k) == i) > 1:
            c = np.mean(g)
            a = len(g)
            if abs(c.imag) <= loose:
                N, need, sc = A - c.real * np.eye(n), a, scale
            else:
                N = A @ A - 2 * c.real * A + abs(c) ** 2 * np.eye(n)
                need, sc = 2 * a, scale ** 2
            if _kernel_dims(N, RANK_TOL * sc)[-1] < need:
                raise ClusteringError(
                    f"eigenvalues near {c:.6g} are within {loose:.3g} of each other but do "
                    "not form one defective eigenvalue; refine tol_eig")
        out.append(g)
    return out


def spectral_structure(A0, tol_eig=None) -> SpectralStructure:
    A = as_matrix(A0, "A0")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A0 must be square")
    nrm = symcore.norm2(A)
    if tol_eig is None:
        tol_eig = 1e-7 * max(nrm, 1.0)
    scale = max(nrm, 1.0)
    loose = defect_radius(n, scale, tol_eig)
    ev = np.linalg.eigvals(A) if n else np.zeros(0, complex)
    groups = _merge_defective(A, _cluster(ev, tol_eig), loose, scale)
    centers = [np.mean(g) for g in groups]
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            if abs(centers[i] - centers[j]) <= 10 * tol_eig:
                raise ClusteringError(
                    f"eigenvalue clusters {centers[i]:.6g} and {centers[j]:.6g} are within "
                    f"10*tol_eig={10 * tol_eig:.3g}; refine tol_eig")

    st = SpectralStructure(n=n)
    for g, c in zip(groups, centers):
        if c.imag < -loose:
            continue  # the conjugate partner carries the information
        on_axis = abs(c.real) <= loose
        at_zero = abs(c) <= loose
        mult = len(g)
        if at_zero:
            k = _chain_block_size(A, n, scale)
            cl = Cluster(0j, mult, k)
            st.origin_block_gt2 |= k > 2
        elif on_axis:
            beta = abs(c.imag)
            N = A @ A + beta ** 2 * np.eye(n)
            k = _chain_block_size(N, n, scale ** 2)
            cl = Cluster(complex(0.0, beta), mult, k)
            st.imaginary_nonsimple |= k > 1
        else:
            value = complex(c.real, abs(c.imag) if abs(c.imag) > loose else 0.0)
            cl = Cluster(value, mult, 0)
            st.has_open_RHP |= c.real > 0
        st.clusters.append(cl)
    return st


def check_prop1(A0, tol_eig=None) -> bool:
    """True iff ``A0`` admits ``P0`` as in the module docstring."""
    return spectral_structure(A0, tol_eig).eligible


def kernel_inclusion(P0, A0, tol=RANK_TOL) -> bool:
    """``ker P0 ⊆ ker A0``.

    Equivalent to ``rank([P0; A0]) == rank(P0)``; computed as ``A0 N ≈ 0``
    for an orthonormal basis ``N`` of the numerical kernel of ``P0``, with
    each matrix judged against its own norm.
    """
    P = sym(P0, "P0")
    A = as_matrix(A0, "A0")
    nP = symcore.norm2(P)
    if nP == 0.0:
        return symcore.norm2(A) == 0.0
    w, V = np.linalg.eigh(P)
    N = V[:, np.abs(w) <= tol * nP]
    if N.shape[1] == 0:
        return True
    return bool(symcore.norm2(A @ N) <= tol * max(symcore.norm2(A), 1e-300) * 10)


@dataclass
class Condition4Certificate:
    P0: np.ndarray
    S0: np.ndarray
    kernel_ok: bool
    cond_T: float = 1.0
    scale: float = 1.0  # rounding scale of S0, 2 ||P0|| ||A0||

    def check(self, tol=1e-9) -> bool:
        sc = max(1.0, self.scale)
        return bool(symcore.min_eig(self.P0) >= -tol * sc
                    and symcore.min_eig(self.S0) >= -tol * sc
                    and self.kernel_ok)


def _block_diagonalize(A, select):
    """Split ``A`` into ``blkdiag(A11, A22)`` under ``T``, ``A = T blkdiag T^-1``.

    ``select(re, im)`` picks the eigenvalues of the leading block.
    """
    n = A.shape[0]
    Tm, U, sdim = scipy.linalg.schur(A, output="real", sort=select)
    if sdim in (0, n):
        return Tm, U, sdim
    A11, A12, A22 = Tm[:sdim, :sdim], Tm[:sdim, sdim:], Tm[sdim:, sdim:]
    # A11 X - X A22 = -A12 zeroes the coupling
    X = scipy.linalg.solve_sylvester(A11, -A22, -A12)
    W = np.eye(n)
    W[:sdim, sdim:] = X
    Tm2 = np.zeros_like(Tm)
    Tm2[:sdim, :sdim] = A11
    Tm2[sdim:, sdim:] = A22
    return Tm2, U @ W, sdim


def _block_P(Ab, kind, beta=None):
    k = Ab.shape[0]
    if kind == "hurwitz":
        return symcore.lyap_solve_hurwitz(Ab)
    if kind == "zero":
        # Z^2 = 0 here, so Z'Z has ker Z'Z = ker Z and Z'(Z'Z) + (Z'Z)Z = 0
        return Ab.T @ Ab
    # oscillator cluster: average of e^{A't} e^{At} over one period.  The
    # integrand is a trigonometric polynomial of degree 2, so an 8-point
    # uniform rule is exact and the average is invariant under the flow.
    period = 2 * np.pi / beta
    P = np.zeros((k, k))
    N = 8
    for j in range(N):
        E = scipy.linalg.expm(Ab * (j * period / N))
        P += E.T @ E
    return sym(P / N)


def synthesize_P0(A0, tol_eig=None, max_cond=1e8) -> Condition4Certificate:
    """Block-diagonal construction of ``P0`` in a real Schur-based basis.

    Hurwitz part: Lyapunov solution with right-hand side ``-I``.  Zero
    eigenvalue part (blocks of size at most 2): ``Z'Z``.  Each imaginary
    pair ``±i beta``: period average of ``e^{A't} e^{At}``.  The result is
    mapped back with ``P0 = T^-T blkdiag(...) T^-1``.
    """
    A = as_matrix(A0, "A0")
    n = A.shape[0]
    st = spectral_structure(A, tol_eig)
    if not st.eligible:
        why = [k for k, v in (("open right half-plane eigenvalue", st.has_open_RHP),
                              ("zero eigenvalue with Jordan block larger than 2",
                               st.origin_block_gt2),
                              ("non-simple imaginary-axis eigenvalue",
                               st.imaginary_nonsimple)) if v]
        raise IneligibleError("A0 is not eligible: " + ", ".join(why))
    if tol_eig is None:
        tol_eig = 1e-7 * max(symcore.norm2(A), 1.0)
    loose = defect_radius(n, max(symcore.norm2(A), 1.0), tol_eig)

    # peel clusters off one at a time: Hurwitz part first, then each
    # axis cluster by its |imag|
    pieces = []
    T = np.eye(n)
    rest = A.copy()
    targets = [("hurwitz", None)]
    for c in st.clusters:
        if c.kind == "zero":
            targets.append(("zero", 0.0))
        elif c.kind == "imaginary":
            targets.append(("osc", c.value.imag))
    offset = 0
    for kind, beta in targets:
        if rest.shape[0] == 0:
            break
        if kind == "hurwitz":
            sel = lambda re, im: re < -loose
        else:
            sel = (lambda b: lambda re, im: abs(re) <= loose and abs(abs(im) - b) <= loose)(beta)
        Tm, W, sdim = _block_diagonalize(rest, sel)
        if sdim == 0:
            continue
        # embed the local transformation of the remaining trailing block
        Wfull = np.eye(n)
        Wfull[offset:, offset:] = W
        T = T @ Wfull
        pieces.append((kind, beta, Tm[:sdim, :sdim]))
        rest = Tm[sdim:, sdim:]
        offset += sdim
    if offset != n:
        raise ClusteringError("block decomposition did not exhaust the spectrum")

    cond = float(np.linalg.cond(T))
    if cond > max_cond:
        raise IllConditionedError(
            f"block transformation condition number {cond:.3e} exceeds {max_cond:.1e}; "
            "eigenvalue clusters are too close for a reliable decomposition")
    blocks = [_block_P(Ab, kind, beta) for kind, beta, Ab in pieces]
    PJ = scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))
    Ti = np.linalg.inv(T)
    P0 = sym(Ti.T @ PJ @ Ti)
    nP = symcore.norm2(P0)
    if nP > 0:
        P0 = P0 / nP
    S0 = sym(-(A.T @ P0 + P0 @ A))
    return Condition4Certificate(P0, S0, kernel_inclusion(P0, A), cond,
                                 2.0 * symcore.norm2(P0) * symcore.norm2(A))
