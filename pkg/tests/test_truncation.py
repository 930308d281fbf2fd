import math

import numpy as np
import pytest

import homcont as hc
from homcont.errors import SizeMismatch, WindowOverflow
from homcont.truncation import (
    adapt_window,
    assemble_jacobian,
    assemble_residual,
    banded_jacobian_lu,
    embed_window,
    tail_mass,
    truncated_problem,
)
from homcont._linalg import det_sign_dense

ALPHA, BETA = 0.5, 2.0


def kernel_window(system, N):
    seq = hc.analytic_kernel_basis(system.a_plus(math.pi), system.a_minus(math.pi), N)[0]
    return seq.ravel()


def test_zero_residual_at_origin(paper7_perturbed):
    p = truncated_problem(paper7_perturbed, 1.3, 25)
    assert np.array_equal(assemble_residual(p, np.zeros(p.size)), np.zeros(p.size))


def test_problem_is_square(paper7_linear):
    for theta in (0.0, 1.0, math.pi):
        p = truncated_problem(paper7_linear, theta, 17)
        assert p.size == p.d * (2 * p.N + 1)
        assert p.left_rows.shape[0] + p.right_rows.shape[0] == p.d
        # boundary rows annihilate their subspaces
        split_m = hc.hyperbolic_splitting(paper7_linear.a_minus(theta))
        split_p = hc.hyperbolic_splitting(paper7_linear.a_plus(theta))
        assert np.linalg.norm(p.left_rows @ split_m.unstable_frame) <= 1e-10
        assert np.linalg.norm(p.right_rows @ split_p.stable_frame) <= 1e-10


def test_kernel_sequence_residual(paper7_linear):
    N = 40
    p = truncated_problem(paper7_linear, math.pi, N)
    r = assemble_residual(p, kernel_window(paper7_linear, N))
    interior, boundary = r[: 2 * N * p.d], r[2 * N * p.d:]
    assert np.max(np.abs(interior)) <= 1e-12
    assert np.max(np.abs(boundary)) <= ALPHA ** N + BETA ** (-N)


def test_scalar_delta_residual():
    system = hc.linear_family(1, lambda t: np.array([[0.5]]), lambda t: np.array([[0.5]]))
    N = 6
    p = truncated_problem(system, 0.0, N)
    x = np.zeros(p.size)
    x[N] = 1.0  # unit block at n = 0
    r = assemble_residual(p, x)
    nonzero = np.nonzero(r)[0]
    # row for n = -1 sees x_0 arriving (+1); row for n = 0 sees -0.5 x_0
    assert list(nonzero) == [N - 1, N]
    assert r[N - 1] == 1.0
    assert r[N] == -0.5


def test_jacobian_blocks_at_origin(paper7_perturbed):
    N, theta = 8, 0.7
    p = truncated_problem(paper7_perturbed, theta, N)
    jac = assemble_jacobian(p, np.zeros(p.size))
    lin = hc.linearization_at_zero(paper7_perturbed, theta)
    for i, n in enumerate(range(-N, N)):
        block = jac[2 * i:2 * i + 2, 2 * i:2 * i + 2]
        assert np.array_equal(block, -lin(n))
        assert np.array_equal(jac[2 * i:2 * i + 2, 2 * i + 2:2 * i + 4], np.eye(2))


def test_jacobian_matches_finite_differences(paper7_perturbed):
    rng = np.random.default_rng(8)
    N, eps = 12, 1e-6
    for _ in range(50):
        theta = float(rng.uniform(0, 2 * math.pi))
        p = truncated_problem(paper7_perturbed, theta, N)
        x = 0.3 * rng.standard_normal(p.size)
        v = rng.standard_normal(p.size)
        jac = assemble_jacobian(p, x)
        fd = (assemble_residual(p, x + eps * v) - assemble_residual(p, x - eps * v)) / (2 * eps)
        denom = max(1.0, np.linalg.norm(jac @ v))
        assert np.linalg.norm(jac @ v - fd) <= 1e-6 * denom


def test_linear_system_has_constant_jacobian(paper7_linear):
    p = truncated_problem(paper7_linear, 2.0, 10)
    rng = np.random.default_rng(9)
    j0 = assemble_jacobian(p, np.zeros(p.size))
    j1 = assemble_jacobian(p, rng.standard_normal(p.size))
    assert np.array_equal(j0, j1)


def test_det_sign_matches_dense_oracle(paper7_linear):
    for N in (10, 20, 40):
        p = truncated_problem(paper7_linear, 0.0, N)
        jac = assemble_jacobian(p, np.zeros(p.size))
        oracle_sign, _ = np.linalg.slogdet(jac)
        assert det_sign_dense(jac) == int(oracle_sign) != 0


def test_banded_factorization_agrees_with_dense(paper7_perturbed):
    rng = np.random.default_rng(10)
    for theta, N in ((0.4, 9), (2.5, 21)):
        p = truncated_problem(paper7_perturbed, theta, N)
        x = 0.2 * rng.standard_normal(p.size)
        jac = assemble_jacobian(p, x)
        lu = banded_jacobian_lu(p, x)
        rhs = rng.standard_normal(p.size)
        assert np.allclose(lu.solve(rhs), np.linalg.solve(jac, rhs), atol=1e-10)
        norm = float(np.linalg.norm(jac, 2))
        assert lu.det_sign(norm=norm) == det_sign_dense(jac, norm=norm)


def test_smin_geometric_decay_certificate(paper7_linear):
    # At theta = pi the boundary conditions align with the kernel exactly,
    # so smin saturates machine precision immediately; the geometric rate is
    # asserted as the one-sided certificate smin <= 10 * max(alpha, 1/beta)^N.
    rate = max(ALPHA, 1.0 / BETA)
    for N in (10, 20, 40):
        p = truncated_problem(paper7_linear, math.pi, N)
        smin = np.linalg.svd(assemble_jacobian(p, np.zeros(p.size)), compute_uv=False)[-1]
        assert smin <= 10.0 * rate ** N


def test_tail_mass_examples(paper7_linear):
    N = 40
    assert tail_mass(np.zeros(2 * (2 * N + 1)), 0.25, 2) == 0.0
    kern = kernel_window(paper7_linear, N)
    tm = tail_mass(kern, 0.25, 2)
    assert 0.0 < tm <= max(ALPHA ** 30, BETA ** (-30)) + 1e-15
    unit_edge = np.zeros(2 * (2 * N + 1))
    unit_edge[-2:] = [1.0, 0.0]  # unit block at n = N
    assert tail_mass(unit_edge, 0.25, 2) == 1.0


def test_tail_mass_validation():
    with pytest.raises(ValueError):
        tail_mass(np.zeros(10), 1.5, 2)
    with pytest.raises(SizeMismatch):
        tail_mass(np.zeros(11), 0.25, 2)


def geometric_window(rate, N, d=1):
    ns = np.arange(-N, N + 1)
    return (rate ** np.abs(ns)).repeat(d)


def test_adapt_window_already_fine(paper7_linear):
    N = 20
    p = truncated_problem(paper7_linear, math.pi, N)
    x = kernel_window(paper7_linear, N) * 1e-3
    p2, x2 = adapt_window(p, x, tail_tol=1e-2)
    assert p2.N == N
    assert np.array_equal(x2, x)


def test_adapt_window_doubles_to_predicted_width():
    system = hc.linear_family(1, lambda t: np.array([[0.5]]), lambda t: np.array([[0.5]]))
    p = truncated_problem(system, 0.0, 20)
    x = geometric_window(0.5, 20)
    p2, x2 = adapt_window(p, x, tail_tol=1e-9)
    assert p2.N == 40
    assert x2.shape == (81,)
    assert np.array_equal(x2[20:61], x)
    assert np.all(x2[:20] == 0.0) and np.all(x2[61:] == 0.0)


def test_adapt_window_overflow_on_slow_decay():
    system = hc.linear_family(1, lambda t: np.array([[0.5]]), lambda t: np.array([[0.5]]))
    p = truncated_problem(system, 0.0, 20)
    x = geometric_window(0.999, 20)
    with pytest.raises(WindowOverflow):
        adapt_window(p, x, tail_tol=1e-9)


def test_embed_window_roundtrip():
    x = np.arange(10.0)  # d=2, N=2
    out = embed_window(x, 2, 2, 4)
    assert out.shape == (18,)
    assert np.array_equal(out[4:14], x)


def test_size_mismatch_raised(paper7_linear):
    p = truncated_problem(paper7_linear, 0.0, 10)
    with pytest.raises(SizeMismatch):
        assemble_residual(p, np.zeros(p.size + 2))
