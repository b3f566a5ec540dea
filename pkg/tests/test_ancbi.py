import numpy as np
import pytest

from satcert import symcore
from satcert.ancbi import (ClusteringError, IllConditionedError, IneligibleError,
                           check_prop1, kernel_inclusion, spectral_structure, synthesize_P0)
from satcert.fixtures import CART_A0, SONTAG_A0
from satcert.micert import condition4_feasible
from satcert.sdp import FEASIBLE, INFEASIBLE

from helpers import structured_A0

INTEGROSC = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 0.0, 0.0]])


def assert_cert(A0, c, tol=1e-9):
    sc = max(1.0, 2 * symcore.norm2(c.P0) * symcore.norm2(A0))
    assert symcore.min_eig(c.P0) >= -tol * sc
    assert symcore.min_eig(c.S0) >= -tol * sc
    assert c.kernel_ok
    assert kernel_inclusion(c.P0, A0)
    np.testing.assert_allclose(c.S0, -(A0.T @ c.P0 + c.P0 @ A0), atol=1e-12 * sc)


def test_spectral_structure_examples():
    J = np.zeros((4, 4))
    J[:2, 2:] = np.eye(2)  # [[0, I], [0, 0]]: blocks of size 2, eligible
    assert not spectral_structure(J).origin_block_gt2
    T = np.diag([1.0, 1.0], 1)  # chain x1' = x2, x2' = x3, x3' = 0
    assert spectral_structure(T).origin_block_gt2

    st = spectral_structure(INTEGROSC)
    kinds = sorted((c.kind, c.multiplicity, c.block_size) for c in st.clusters)
    assert kinds == [("imaginary", 1, 1), ("zero", 1, 1)]
    assert st.eligible
    assert abs(st.clusters[[c.kind for c in st.clusters].index("imaginary")].value.imag - 1) < 1e-12

    assert spectral_structure(np.diag([1.0, -1.0])).has_open_RHP


def test_multiplicities_sum_to_n():
    rng = np.random.default_rng(0)
    for label in ("eligible", "rhp", "origin_gt2", "imag_nonsimple"):
        for _ in range(10):
            A = structured_A0(rng, label)
            st = spectral_structure(A)
            total = sum(c.multiplicity * (2 if c.value.imag > 0 else 1) for c in st.clusters)
            assert total == A.shape[0]
            assert all(c.block_size >= 1 for c in st.clusters if c.kind in ("zero", "imaginary"))


def test_split_defective_eigenvalue_is_one_cluster():
    # rounding spreads a triple zero block over about eps^(1/3) |A|
    rng = np.random.default_rng(8)
    T = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    A = T @ np.diag([1.0, 1.0], 1) @ np.linalg.inv(T)
    st = spectral_structure(A)
    assert [(c.kind, c.multiplicity, c.block_size) for c in st.clusters] == [("zero", 3, 3)]


def test_clustering_ambiguity_is_an_error():
    A = np.diag([-1.0, -1.0 - 5e-7])
    with pytest.raises(ClusteringError):
        spectral_structure(A, tol_eig=1e-7)


def test_check_prop1_examples():
    assert not check_prop1(SONTAG_A0)
    assert check_prop1(CART_A0)
    assert check_prop1(np.array([[-1.0, 3.0], [0.0, -2.0]]))


def test_synthesize_examples():
    c = synthesize_P0(np.zeros((1, 1)))
    assert c.P0[0, 0] == 0.0 and c.kernel_ok
    c = synthesize_P0(np.array([[0.0, 1.0], [0.0, 0.0]]))
    np.testing.assert_allclose(c.P0, [[0.0, 0.0], [0.0, 1.0]], atol=1e-14)
    np.testing.assert_allclose(c.S0, 0.0, atol=1e-14)
    c = synthesize_P0(np.array([[0.0, 2.0], [-2.0, 0.0]]))
    np.testing.assert_allclose(c.P0, np.eye(2) / 1.0, atol=1e-12)
    np.testing.assert_allclose(c.S0, 0.0, atol=1e-12)


def test_synthesize_fixtures():
    for A0 in (CART_A0, INTEGROSC, np.array([[-1.0, 3.0], [0.0, -2.0]])):
        assert_cert(A0, synthesize_P0(A0))


def test_synthesize_rejects_ineligible():
    with pytest.raises(IneligibleError, match="Jordan block larger than 2"):
        synthesize_P0(np.diag([1.0, 1.0], 1))
    with pytest.raises(IneligibleError, match="right half-plane"):
        synthesize_P0(np.diag([1.0, -1.0]))
    with pytest.raises(IneligibleError, match="non-simple"):
        synthesize_P0(SONTAG_A0)


def test_synthesize_ill_conditioned():
    T = np.array([[1.0, 1.0, 0.0], [0.0, 1e-3, 0.0], [0.0, 0.0, 1.0]])
    J = np.zeros((3, 3))
    J[0, 0] = -1.0
    J[1:, 1:] = [[0.0, 1.0], [-1.0, 0.0]]
    A = T @ J @ np.linalg.inv(T)
    assert_cert(A, synthesize_P0(A))
    with pytest.raises(IllConditionedError, match="condition number"):
        synthesize_P0(A, max_cond=10.0)


def test_kernel_inclusion_examples():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert kernel_inclusion(np.eye(2), A)
    assert kernel_inclusion(np.diag([0.0, 1.0]), A)
    assert not kernel_inclusion(np.zeros((2, 2)), A)
    assert not kernel_inclusion(np.diag([1.0, 0.0]), A)
    # equivalent rank formulation
    for P in (np.eye(2), np.diag([0.0, 1.0]), np.zeros((2, 2)), np.diag([1.0, 0.0])):
        same = symcore.rank_svd(np.vstack([P, A])) == symcore.rank_svd(P) if P.any() else \
            not A.any()
        assert kernel_inclusion(P, A) == same


def test_round_trip_200_structures():
    rng = np.random.default_rng(1)
    for _ in range(200):
        A = structured_A0(rng, "eligible")
        assert check_prop1(A)
        assert_cert(A, synthesize_P0(A))
    for label in ("rhp", "origin_gt2", "imag_nonsimple"):
        for _ in range(30):
            assert not check_prop1(structured_A0(rng, label))


@pytest.mark.parametrize("label", ["eligible", "rhp", "origin_gt2", "imag_nonsimple"])
def test_condition4_program_agrees(label):
    rng = np.random.default_rng({"eligible": 2, "rhp": 3, "origin_gt2": 4,
                                 "imag_nonsimple": 5}[label])
    for _ in range(6):
        while True:
            A = structured_A0(rng, label)
            if A.shape[0] <= 4:
                break
        status = condition4_feasible(A)
        assert status == (FEASIBLE if label == "eligible" else INFEASIBLE), (label, A)
