import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import superoperator_by_columns

from cmps.core import (
    FiniteCMPS,
    TransferDressing,
    UniformCMPS,
    bosons,
    build_species_table,
    construct_left_orthonormal,
    dense_transfer,
    fermions,
    left_orthonormal_residual,
    random_uniform,
    right_orthonormal_residual,
    transfer_apply,
)
from cmps.errors import DuplicateSpecies, NotHermitian, ShapeError, TooLargeForDense


def test_eta_single_boson():
    assert build_species_table([("b", "boson")]).eta.tolist() == [[1]]


def test_eta_single_fermion():
    assert build_species_table([("f", "fermion")]).eta.tolist() == [[-1]]


def test_eta_mixed_table():
    eta = build_species_table([("b", "boson"), ("f", "fermion")]).eta
    assert eta.tolist() == [[1, 1], [1, -1]]


def test_duplicate_species_rejected():
    with pytest.raises(DuplicateSpecies):
        build_species_table([("a", "boson"), ("a", "fermion")])


def test_species_lookup_by_name_and_index():
    table = build_species_table([("up", "fermion"), ("down", "fermion")])
    assert table.index("down") == 1
    assert table.index(0) == 0
    assert table.is_fermion(1)


def test_transfer_scalar_example_vanishes():
    out = transfer_apply(np.array([[-0.5]]), [np.array([[1.0]])], [1.0], np.array([[1.0]]), "right")
    assert abs(out[0, 0]) == 0.0


def test_left_orthonormal_state_annihilates_identity_on_the_left(rng):
    D = 3
    K = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    K = K + K.conj().T
    R = rng.standard_normal((2, D, D)) + 1j * rng.standard_normal((2, D, D))
    s = construct_left_orthonormal(K, R, bosons(2))
    out = transfer_apply(s.Q, s.R, np.ones(2), np.eye(D), "left")
    assert np.linalg.norm(out) < 1e-13


@pytest.mark.parametrize("side", ["right", "left"])
def test_transfer_apply_matches_column_assembled_superoperator(rng, side):
    s = random_uniform(3, fermions(2), rng)
    signs = np.array([1.0, -1.0])
    f = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    M = superoperator_by_columns(s.Q, s.R, signs, side)
    assert np.allclose(transfer_apply(s.Q, s.R, signs, f, side).ravel(), M @ f.ravel(), atol=1e-13)


def test_dense_transfer_matches_column_assembly(rng):
    s = random_uniform(3, bosons(2), rng)
    assert np.allclose(dense_transfer(s), superoperator_by_columns(s.Q, s.R), atol=1e-13)


def test_dense_transfer_scalar_examples():
    assert abs(dense_transfer(UniformCMPS(np.array([[-0.5]]), [np.array([[1.0]])]))[0, 0]) == 0.0
    assert abs(dense_transfer(UniformCMPS(np.array([[1j]]), [np.array([[0.0]])]))[0, 0]) == 0.0


def test_double_dressing_equals_plain(rng):
    s = random_uniform(3, build_species_table([("b", "boson"), ("f", "fermion")]), rng)
    for a in range(2):
        assert np.array_equal(dense_transfer(s, TransferDressing.double(a, a)), dense_transfer(s))


def test_single_fermion_dressing_flips_sign(rng):
    s = random_uniform(2, fermions(1), rng)
    one = np.eye(2)
    expected = np.kron(s.Q, one) + np.kron(one, s.Q.conj()) - np.kron(s.R[0], s.R[0].conj())
    assert np.allclose(dense_transfer(s, TransferDressing.single(0)), expected)


def test_dense_budget_exceeded():
    s = random_uniform(5, bosons(1), np.random.default_rng(0))
    with pytest.raises(TooLargeForDense):
        dense_transfer(s, max_dim=4)


def test_construct_left_orthonormal_examples():
    s = construct_left_orthonormal(np.zeros((1, 1)), [np.array([[1.0]])])
    assert s.Q[0, 0] == -0.5
    R = np.array([[0.0, 1.0], [0.0, 0.0]])
    K = np.diag([1.0, -1.0])
    s = construct_left_orthonormal(K, [R])
    assert np.allclose(s.Q, -1j * K - 0.5 * np.diag([0.0, 1.0]))
    assert left_orthonormal_residual(s) <= 1e-12


def test_non_hermitian_generator_rejected():
    with pytest.raises(NotHermitian):
        construct_left_orthonormal(np.array([[0.0, 1.0], [0.0, 0.0]]), [np.eye(2)])


def test_residual_scalar_example():
    assert left_orthonormal_residual(UniformCMPS(np.zeros((1, 1)), [np.ones((1, 1))])) == pytest.approx(1.0)


def test_residual_matches_superoperator_row(rng):
    s = random_uniform(3, bosons(2), rng)
    left_map = superoperator_by_columns(s.Q, s.R, side="left")
    expected = np.linalg.norm(left_map @ np.eye(3).ravel())
    assert abs(left_orthonormal_residual(s) - expected) < 1e-14


def test_right_residual_is_mirror(rng):
    s = random_uniform(2, bosons(1), rng)
    M = s.Q + s.Q.conj().T + s.R[0] @ s.R[0].conj().T
    assert right_orthonormal_residual(s) == pytest.approx(np.linalg.norm(M))


def test_shape_errors():
    with pytest.raises(ShapeError):
        UniformCMPS(np.zeros((2, 3)), np.zeros((1, 2, 2)))
    with pytest.raises(ShapeError):
        UniformCMPS(np.zeros((2, 2)), np.zeros((1, 3, 3)))
    with pytest.raises(ShapeError):
        UniformCMPS(np.zeros((2, 2)), np.zeros((2, 2, 2)), bosons(1))


def test_periodic_state_requires_matching_ends():
    Q = np.zeros((5, 1, 1), dtype=complex)
    R = np.zeros((1, 5, 1, 1), dtype=complex)
    FiniteCMPS(1.0, Q, R, boundary="periodic")
    Q[-1] = 0.3
    with pytest.raises(ShapeError):
        FiniteCMPS(1.0, Q, R, boundary="periodic")


def test_finite_grid_properties():
    s = FiniteCMPS.from_uniform(random_uniform(2, bosons(1), np.random.default_rng(1)), 2.0, 10)
    assert s.N == 10 and s.h == pytest.approx(0.2)
    assert s.grid[0] == -1.0 and s.grid[-1] == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31))
def test_transfer_is_hermiticity_preserving(D, q, seed):
    rng = np.random.default_rng(seed)
    s = random_uniform(D, bosons(q), rng)
    f = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    f = f + f.conj().T
    out = transfer_apply(s.Q, s.R, np.ones(q), f)
    assert np.allclose(out, out.conj().T, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31))
def test_left_and_right_maps_are_adjoint(D, seed):
    rng = np.random.default_rng(seed)
    s = random_uniform(D, fermions(2), rng)
    signs = np.array([1.0, -1.0])
    x = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    y = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    lhs = np.vdot(transfer_apply(s.Q, s.R, signs, x, "left"), y)
    rhs = np.vdot(x, transfer_apply(s.Q, s.R, signs, y, "right"))
    assert abs(lhs - rhs) < 1e-11 * max(1.0, abs(lhs))
