import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from conftest import smooth_finite_state
from oracles import dense_fixed_points, random_gauge

from cmps import finite, gauge, uniform
from cmps.core import (
    FiniteCMPS,
    UniformCMPS,
    bosons,
    construct_left_orthonormal,
    dense_transfer,
    left_orthonormal_residual,
    random_uniform,
    right_orthonormal_residual,
)
from cmps.errors import ShapeError, SingularGauge


def test_constant_scalar_gauge_is_trivial(boson_d3):
    out = gauge.gauge_uniform(boson_d3, 2.5j * np.eye(3))
    assert np.allclose(out.Q, boson_d3.Q) and np.allclose(out.R, boson_d3.R)


def test_unitary_gauge_keeps_transfer_spectrum(boson_d3, rng):
    U, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    before = np.linalg.eigvals(dense_transfer(boson_d3))
    after = np.linalg.eigvals(dense_transfer(gauge.gauge_uniform(boson_d3, U)))
    assert max(np.min(np.abs(after - ev)) for ev in before) < 1e-12


def test_random_gauge_keeps_density(boson_d3, rng):
    before = uniform.density(*uniform.normalize(boson_d3))
    after = uniform.density(*uniform.normalize(gauge.gauge_uniform(boson_d3, random_gauge(3, rng))))
    assert after == pytest.approx(before, abs=1e-10)


def test_singular_gauge_rejected(boson_d2):
    with pytest.raises(SingularGauge):
        gauge.gauge_uniform(boson_d2, np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(ShapeError):
        gauge.gauge_uniform(boson_d2, np.eye(3))


def test_identity_finite_gauge_is_trivial():
    s = smooth_finite_state(N=50)
    out = gauge.gauge_finite(s, np.broadcast_to(np.eye(2), s.Q.shape))
    assert np.allclose(out.Q, s.Q) and np.allclose(out.R, s.R)
    assert np.allclose(out.vL, s.vL) and np.allclose(out.vR, s.vR)


def test_scalar_exponential_gauge_shifts_q():
    s = smooth_finite_state(N=400)
    mu = 0.3
    g = np.exp(mu * s.grid)[:, None, None] * np.eye(2)
    out = gauge.gauge_finite(s, g, mu * g)
    assert np.allclose(out.Q, s.Q + mu * np.eye(2))
    assert finite.norm(out) == pytest.approx(finite.norm(s), rel=1e-8)


def test_smooth_gauge_keeps_density_profile(rng):
    s = smooth_finite_state(N=2000)
    A = 0.3 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    x = s.grid
    g = np.array([scipy.linalg.expm(np.sin(t) * A) for t in x])
    dg = np.array([np.cos(t) * A @ gk for t, gk in zip(x, g)])
    before = finite.density_profile(s)
    after = finite.density_profile(gauge.gauge_finite(s, g, dg))
    assert np.max(np.abs(after - before)) < 1e-6


def test_left_canonical_form_is_idempotent(boson_d3):
    once, _, w1 = gauge.left_canonicalize_uniform(boson_d3)
    twice, g, w2 = gauge.left_canonicalize_uniform(once)
    assert np.allclose(g / g[0, 0], np.eye(3), atol=1e-10)
    assert np.allclose(twice.Q, once.Q, atol=1e-10) and np.allclose(w1, w2, atol=1e-12)


def test_scalar_canonical_forms_unchanged():
    r = 0.8 + 0.3j
    s = UniformCMPS(np.array([[-abs(r) ** 2 / 2]]), [np.array([[r]])])
    for canon in (gauge.left_canonicalize_uniform, gauge.right_canonicalize_uniform):
        out, _, diag = canon(s)
        assert np.allclose(out.Q, s.Q) and np.allclose(out.R, s.R)
        assert np.allclose(diag, [1.0])


def test_left_canonical_fixed_points_from_scratch(boson_d3):
    out, _, w = gauge.left_canonicalize_uniform(boson_d3)
    assert left_orthonormal_residual(out) <= 1e-10
    mu, l, r = dense_fixed_points(out.Q, out.R)
    assert abs(mu) < 1e-10
    assert np.allclose(l / l[0, 0], np.eye(3), atol=1e-9)
    assert np.allclose(r, np.diag(w), atol=1e-9)
    assert np.all(np.diff(w) <= 0)


def test_right_then_left_keeps_spectrum(boson_d3):
    left, _, w = gauge.left_canonicalize_uniform(boson_d3)
    right, _, _ = gauge.right_canonicalize_uniform(left)
    again, _, w2 = gauge.left_canonicalize_uniform(right)
    assert np.allclose(w, w2, atol=1e-10)
    assert left_orthonormal_residual(again) <= 1e-10


def test_right_canonical_residual(boson_d2):
    out, _, _ = gauge.right_canonicalize_uniform(boson_d2)
    assert right_orthonormal_residual(out) <= 1e-10


def test_left_orthonormal_finite_scalar_matches_quadrature():
    q, r = -0.2 + 0.5j, 0.9
    s = FiniteCMPS.from_functions(lambda x: np.array([[q + 0.3 * np.sin(x)]]),
                                  lambda x: np.array([[[r * (1 + 0.2 * x)]]]), 3.0, 600)
    out, g = gauge.left_orthonormalize_finite(s)
    x = s.grid
    rate = (2 * (q.real + 0.3 * np.sin(x)) + (r * (1 + 0.2 * x)) ** 2) / 2
    expected = np.exp(-scipy.integrate.cumulative_simpson(rate, x=x, initial=0.0))
    ratio = g[:, 0, 0] / g[0, 0, 0]
    assert np.allclose(ratio, expected, rtol=1e-7)
    assert np.max(gauge.pointwise_left_residual(out)) < 1e-8


def test_already_orthonormal_scalar_state_gets_constant_gauge():
    r = 0.7
    s = FiniteCMPS.from_functions(lambda x: np.array([[-r**2 / 2]]), lambda x: np.array([[[r]]]), 2.0, 100)
    out, g = gauge.left_orthonormalize_finite(s)
    assert np.allclose(g, g[0], atol=1e-8)
    assert np.max(gauge.pointwise_left_residual(out)) <= 1e-8


def test_left_orthonormal_finite_bulk_residual():
    residuals = []
    for N in (500, 1000):
        out, _ = gauge.left_orthonormalize_finite(smooth_finite_state(N=N))
        pointwise = gauge.pointwise_left_residual(out)
        residuals.append(np.max(pointwise[N // 20:]))
    out, _ = gauge.left_orthonormalize_finite(smooth_finite_state(N=4000))
    assert np.max(gauge.pointwise_left_residual(out)[200:]) <= 1e-6
    # the exact-derivative variant is already at round-off
    assert residuals[1] <= max(residuals[0] / 3.5, 1e-12)


def test_central_derivative_variant_converges_second_order():
    residuals = []
    for N in (400, 800):
        out, _ = gauge.left_orthonormalize_finite(smooth_finite_state(N=N), derivative="central")
        pointwise = gauge.pointwise_left_residual(out)
        residuals.append(np.max(pointwise[N // 20:-N // 20]))
    assert 3.5 <= residuals[0] / residuals[1] <= 4.5


def test_eliminate_q_of_zero_q_is_identity():
    s = smooth_finite_state(N=100).replace(Q=np.zeros((101, 2, 2)))
    out = gauge.eliminate_Q_gauge(s)
    assert np.allclose(out.R, s.R) and np.allclose(out.vR, s.vR)


def test_eliminate_q_scalar():
    q = -0.4 + 0.3j
    s = FiniteCMPS.from_functions(lambda x: np.array([[q]]), lambda x: np.array([[[1 + x]]]), 2.0, 200)
    out = gauge.eliminate_Q_gauge(s)
    assert np.allclose(out.R, s.R) and np.all(out.Q == 0)
    assert out.vR[0] == pytest.approx(np.exp(q * 2.0) * s.vR[0], rel=1e-9)


def test_eliminate_q_uniform_matches_matrix_exponentials():
    u = random_uniform(2, bosons(1), np.random.default_rng(5))
    s = FiniteCMPS.from_uniform(u, 2.0, 400)
    out = gauge.eliminate_Q_gauge(s)
    for k in (0, 100, 250, 400):
        t = s.grid[k] + 1.0
        expected = scipy.linalg.expm(u.Q * t) @ u.R[0] @ scipy.linalg.expm(-u.Q * t)
        assert np.allclose(out.R[0, k], expected, atol=1e-8)
    assert finite.norm(out) == pytest.approx(finite.norm(s), rel=1e-8)


def test_q_elimination_gauge_samples_start_at_identity():
    s = smooth_finite_state(N=100)
    g = gauge.q_elimination_gauge(s)
    assert np.allclose(g[0], np.eye(2))


def test_left_orthonormal_needs_open_boundary():
    u = random_uniform(2, bosons(1), np.random.default_rng(5))
    s = FiniteCMPS.from_uniform(u, 2.0, 20).replace(boundary="periodic")
    with pytest.raises(ShapeError):
        gauge.left_orthonormalize_finite(s)


def test_left_orthonormal_uniform_input_keeps_state():
    K = np.diag([0.5, -0.5])
    s = construct_left_orthonormal(K, [np.array([[0.2, 0.5], [0.1, -0.3]])])
    ns, fp = uniform.normalize(s)
    out, g, _ = gauge.left_canonicalize_uniform(ns)
    assert left_orthonormal_residual(out) <= 1e-12
