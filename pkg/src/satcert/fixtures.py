"""Built-in systems, including the spring-cart-pendulum and its two certificates."""
from __future__ import annotations

import numpy as np

from .satmodel import SaturatedSystem

CART_A0 = np.array([[0.0, 0.0, 1.0, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                    [-330.46, -2.44, 0.0, 0.0],
                    [-812.61, -30.1, 0.0, 0.0]])
CART_B = np.array([[0.0], [0.0], [-1.5810], [-3.8878]])
CART_B1 = 4.1814
CART_B2 = 0.2936
CART_GAINS = (1.0, 0.2)
CART_LMI_P0 = 1e3 * np.array([[8.6265, -1.5941, 0.0, 0.0],
                              [-1.5941, 0.6151, 0.0, 0.0],
                              [0.0, 0.0, 0.1951, -0.0687],
                              [0.0, 0.0, -0.0687, 0.0260]])
CART_LMI_H = 0.0833

SONTAG_A0 = np.array([[0.0, 1.0, 0.0, 0.0],
                      [0.0, 0.0, 1.0, 0.0],
                      [0.0, 0.0, 0.0, 1.0],
                      [-1.0, 0.0, -2.0, 0.0]])
SONTAG_B = np.array([[0.0], [0.0], [0.0], [1.0]])
SONTAG_K = np.array([[1.0, 1.0, 2.0, 1.0]])


def cart_frequencies(A0=CART_A0) -> tuple:
    """``(omega1, omega2)``, the larger first."""
    w = np.sort(np.abs(np.linalg.eigvals(A0).imag))
    return float(w[-1]), float(w[0])


def cart_modal(A0=CART_A0, B=CART_B, b1=CART_B1, b2=CART_B2) -> dict:
    """Modal coordinates ``x = G z`` of the cart-pendulum.

    ``G`` solves ``A0 G = G At`` with ``At = blkdiag([[0,-w1],[w1,0]], [[0,w2],[-w2,0]])``
    and ``G (b1, 0, -b2, 0)' = B``, a linear system in ``vec(G)`` with a
    unique solution.
    """
    w1, w2 = cart_frequencies(A0)
    At = np.zeros((4, 4))
    At[0, 1], At[1, 0] = -w1, w1
    At[2, 3], At[3, 2] = w2, -w2
    Bt = np.array([b1, 0.0, -b2, 0.0])
    I = np.eye(4)
    # column-major vec: vec(A0 G - G At) = (I kron A0 - At' kron I) vec(G)
    L = np.vstack([np.kron(I, A0) - np.kron(At.T, I), np.kron(Bt.reshape(1, -1), I)])
    rhs = np.concatenate([np.zeros(16), np.asarray(B, dtype=float).ravel()])
    g, *_ = np.linalg.lstsq(L, rhs, rcond=None)
    G = g.reshape(4, 4, order="F")
    return {"G": G, "At": At, "Bt": Bt, "omega1": w1, "omega2": w2}


def cart_gain(k1=CART_GAINS[0], k2=CART_GAINS[1], modal=None) -> np.ndarray:
    """``K = Kt G^-1`` for the modal gain ``Kt`` parametrized by ``k1, k2``."""
    md = modal or cart_modal()
    w1, w2 = md["omega1"], md["omega2"]
    s = k1 ** 2 + k2 ** 2
    d = k1 ** 2 * w1 ** 2 + k2 ** 2 * w2 ** 2
    Kt = np.array([k1, k2, -k1 * s * w1 ** 2 / d, k2 * s * w1 * w2 / d])
    return (Kt @ np.linalg.inv(md["G"])).reshape(1, 4)


def cart_closed_form(k1=CART_GAINS[0], k2=CART_GAINS[1], modal=None) -> dict:
    """``P0 = G^-T blkdiag(I/b1, I/b2) G^-1``, ``h``, ``mu`` and the modal data."""
    md = modal or cart_modal()
    Gi = np.linalg.inv(md["G"])
    b1, b2 = md["Bt"][0], -md["Bt"][2]
    Pt = np.diag([1 / b1, 1 / b1, 1 / b2, 1 / b2])
    s = k1 ** 2 + k2 ** 2
    return {"P0": Gi.T @ Pt @ Gi, "Pt": Pt, "h": k2 / (s * md["omega1"]), "mu": k1 / s,
            "Kt": cart_gain(k1, k2, md) @ md["G"], "modal": md}


def _cart():
    return SaturatedSystem(CART_A0, CART_B, cart_gain(), labels=("p", "theta", "p_dot", "theta_dot"))


def _builtin():
    return {
        "single-integrator": SaturatedSystem([[0.0]], [[1.0]], [[1.0]]),
        "double-integrator": SaturatedSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0, 1.0]]),
        "oscillator": SaturatedSystem([[0.0, 2.0], [-2.0, 0.0]], [[0.0], [2.0]], [[1.0, 1.0]]),
        "integral-oscillator": SaturatedSystem([[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 0.0, 0.0]],
                                               [[0.0], [0.0], [1.0]], [[-0.5, 1.0, 1.0]]),
        "cart-pendulum": _cart(),
        "sontag-4th-order": SaturatedSystem(SONTAG_A0, SONTAG_B, SONTAG_K),
    }


FIXTURE_NAMES = ("single-integrator", "double-integrator", "oscillator",
                 "integral-oscillator", "cart-pendulum", "sontag-4th-order")


def get(name) -> SaturatedSystem:
    table = _builtin()
    if name not in table:
        raise KeyError(f"unknown fixture '{name}'; known: {', '.join(FIXTURE_NAMES)}")
    return table[name]
