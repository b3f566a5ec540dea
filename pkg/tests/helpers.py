"""Random generators shared by the test modules."""
import numpy as np
import scipy.linalg

from satcert.forms import CertKind, ExtendedForm, PositivityCertificate, sigma0, sigmaR


def random_psd(rng, k, rank=None, scale=1.0):
    rank = rng.integers(0, k + 1) if rank is None else rank
    G = rng.standard_normal((k, rank)) * scale
    return G @ G.T


def random_certified_form(rng, kind):
    """A form built as ``Sigma0 + SigmaR + X`` (items i, ii) or ``Sigma0 + X``
    (item iv) with ``X >= 0``, together with its multipliers."""
    kind = CertKind(kind)
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    K = rng.standard_normal((m, n)) * rng.uniform(0.3, 3)
    if kind is CertKind.PD_RU:
        T0 = rng.uniform(0.1, 2.0, m)
    else:
        T0 = rng.uniform(0.0, 2.0, m) * (rng.random(m) > 0.3)
    X = random_psd(rng, n + m)
    if kind is CertKind.PD_RU:
        X[:n, :n] += rng.uniform(0.1, 1.0) * np.eye(n)
        Q = sigma0(K, T0) + X
        cert = PositivityCertificate(kind, T0=T0)
    else:
        R = random_psd(rng, m)
        if kind is CertKind.LOWER_BOUND:
            R += rng.uniform(0.05, 1.0) * np.eye(m)
        Q = sigma0(K, T0) + sigmaR(K, R) + X
        cert = PositivityCertificate(kind, T0=T0, R=R)
    return ExtendedForm.from_Q(Q, K), cert


def sample_states(rng, n, count, rmin=1e-2, rmax=1e2):
    X = rng.standard_normal((count, n))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X * np.exp(rng.uniform(np.log(rmin), np.log(rmax), (count, 1)))


def random_orthogonal_ish(rng, n, cond_max=30.0):
    while True:
        T = rng.standard_normal((n, n))
        if np.linalg.cond(T) < cond_max:
            return T


def hurwitz_block(rng, k):
    """Real block with eigenvalues of real part <= -0.3, well separated."""
    if k == 0:
        return np.zeros((0, 0))
    ev = -(0.3 + 0.5 * np.arange(k)) - rng.uniform(0, 0.1)
    return np.diag(ev)


def osc_block(beta):
    return np.array([[0.0, beta], [-beta, 0.0]])


def structured_A0(rng, label):
    """Similarity transform of a block-diagonal matrix with a known label.

    Labels: ``eligible``, ``rhp``, ``origin_gt2``, ``imag_nonsimple``.
    """
    blocks = []
    n_h = int(rng.integers(0, 3))
    blocks.append(hurwitz_block(rng, n_h))
    betas = list(rng.permutation([1.0, 1.7, 2.5, 3.3])[:rng.integers(0, 3)])
    if label == "eligible":
        z = rng.integers(0, 3)
        if z == 1:
            blocks.append(np.zeros((1, 1)))
        elif z == 2:
            blocks.append(np.array([[0.0, 1.0], [0.0, 0.0]]))
        if rng.random() < 0.5:
            blocks.append(np.zeros((1, 1)))  # a second, simple zero block
        for b in betas:
            blocks.append(osc_block(b))
    elif label == "rhp":
        blocks.append(np.array([[rng.uniform(0.2, 1.5)]]))
        for b in betas[:1]:
            blocks.append(osc_block(b))
    elif label == "origin_gt2":
        blocks.append(np.diag([1.0, 1.0], 1))  # 3x3 nilpotent Jordan block
    elif label == "imag_nonsimple":
        b = 1.3
        J = np.zeros((4, 4))
        J[:2, :2] = osc_block(b)
        J[2:, 2:] = osc_block(b)
        J[:2, 2:] = np.eye(2)
        blocks.append(J)
    else:
        raise ValueError(label)
    blocks = [b for b in blocks if b.size] or [np.zeros((1, 1))]
    J = scipy.linalg.block_diag(*blocks)
    T = random_orthogonal_ish(rng, J.shape[0])
    return T @ J @ np.linalg.inv(T)
