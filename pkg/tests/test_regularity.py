import numpy as np
import pytest
from oracles import naive_commutator

from cmps.core import FiniteCMPS, UniformCMPS, bosons, build_species_table, fermions, random_uniform
from cmps.errors import BadOrder, ShapeError
from cmps.regularity import (
    ParityStructure,
    build_parity_state,
    check_first_order,
    check_higher_order,
    check_parity,
)


def test_single_boson_always_regular(rng):
    for D in (1, 2, 4):
        report = check_first_order(random_uniform(D, bosons(1), rng))
        assert report.passed and report.max_residual == 0.0


def test_nilpotent_fermion_is_regular():
    R = np.array([[0.0, 1.0], [0.0, 0.0]])
    report = check_first_order(UniformCMPS(np.zeros((2, 2)), [R], fermions(1)))
    assert report.passed and report.max_residual == 0.0


def test_fermion_with_identity_generator_fails():
    D = 3
    report = check_first_order(UniformCMPS(np.zeros((D, D)), [np.eye(D)], fermions(1)))
    assert not report.passed
    assert report.max_residual == pytest.approx(2 * np.sqrt(D))


def test_two_bosons_need_commuting_generators(rng):
    s = random_uniform(2, bosons(2), rng)
    report = check_first_order(s)
    expected = np.linalg.norm(naive_commutator(s.R[1], s.R[0]))
    assert report.residuals[0, 1] == pytest.approx(expected)
    assert report.residuals[0, 0] == 0.0


def test_finite_state_reports_grid_maximum():
    x = np.linspace(-1, 1, 11)
    R = np.array([[[[0.0, t], [t, 0.0]] for t in x]])
    s = FiniteCMPS(2.0, np.zeros((11, 2, 2)), R, species=fermions(1))
    assert check_first_order(s).max_residual == pytest.approx(np.linalg.norm(2 * np.eye(2)))


def test_higher_order_scalar_vanishes(rng):
    s = UniformCMPS(np.array([[0.3 - 0.2j]]), [np.array([[1.1 + 0.4j]])])
    for n in (2, 3, 4):
        assert check_higher_order(s, n).max_residual == 0.0


def test_commuting_q_and_r_give_zero_second_order():
    Q = np.diag([-1.0, -2.0])
    R = np.diag([0.5, 1.5])
    assert check_higher_order(UniformCMPS(Q, [R]), 2).max_residual == 0.0


def test_second_order_matches_naive_nested_commutators(rng):
    s = random_uniform(2, bosons(2), rng)
    report = check_higher_order(s, 2)
    for a in range(2):
        for b in range(2):
            expected = naive_commutator(naive_commutator(s.Q, s.R[a]), s.R[b])
            assert report.residuals[a, b] == pytest.approx(np.linalg.norm(expected), rel=1e-12)


def test_order_bounds():
    s = random_uniform(2, bosons(1), np.random.default_rng(0))
    with pytest.raises(BadOrder):
        check_higher_order(s, 1)
    with pytest.raises(BadOrder):
        check_higher_order(s, 5)


def test_finite_second_order_uses_derivative_samples():
    # R(x) = e^{x} R0 with Q = 0: the bracket [R', R] = 0 for a single boson
    x = np.linspace(-1, 1, 41)
    R0 = np.array([[0.0, 1.0], [2.0, 0.0]])
    R = np.array([[np.exp(t) * R0 for t in x]])
    s = FiniteCMPS(2.0, np.zeros((41, 2, 2)), R)
    assert check_higher_order(s, 2, dR_samples=R).max_residual < 1e-12


def test_parity_examples():
    parity = ParityStructure(1, 1)
    Q = np.diag([-1.0, -0.5])
    ok, table = check_parity(UniformCMPS(Q, [np.array([[0.0, 1.0], [1.0, 0.0]])], fermions(1)), parity)
    assert ok and table["f0"] == 0.0
    ok, table = check_parity(UniformCMPS(Q, [np.eye(2)], fermions(1)), parity)
    assert not ok and table["f0"] == pytest.approx(1.0)
    eps = 1e-3
    Qe = Q + np.array([[0.0, eps], [0.0, 0.0]])
    ok, table = check_parity(UniformCMPS(Qe, [np.diag([1.0, 2.0])], bosons(1)), parity, tol=1e-6)
    assert not ok and table["Q"] == pytest.approx(eps)


def test_parity_dimension_mismatch():
    with pytest.raises(ShapeError):
        check_parity(random_uniform(3, bosons(1), np.random.default_rng(0)), ParityStructure(1, 1))


def test_build_parity_state_examples():
    s, parity = build_parity_state([[0.0]], [[0.0]], [([[1.0]], [[1.0]])], fermions(1))
    assert np.array_equal(s.R[0], np.array([[0, 1], [1, 0]]))
    assert parity.Dplus == 1 and parity.Dminus == 1
    s, _ = build_parity_state([[0.0]], [[0.0]], [([[2.0]], [[3.0]])], bosons(1))
    assert np.array_equal(s.R[0], np.diag([2.0, 3.0]))


def test_assembled_random_state_passes_parity(rng):
    species = build_species_table([("b", "boson"), ("f", "fermion")])
    g = lambda *shape: rng.standard_normal(shape) + 1j * rng.standard_normal(shape)  # noqa: E731
    s, parity = build_parity_state(g(2, 2), g(1, 1), [(g(2, 2), g(1, 1)), (g(2, 1), g(1, 2))], species)
    ok, table = check_parity(s, parity)
    assert ok and max(table.values()) == 0.0


def test_inconsistent_blocks_rejected():
    with pytest.raises(ShapeError):
        build_parity_state([[0.0]], [[0.0]], [([[1.0, 2.0]], [[1.0]])], fermions(1))
