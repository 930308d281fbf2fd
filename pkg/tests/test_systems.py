import math

import numpy as np
import pytest

import homcont as hc
from homcont.errors import InvalidConfig
from homcont.systems import rotating_matrix


ALPHA, BETA = 0.5, 2.0


def test_rotating_matrix_endpoints():
    assert np.array_equal(rotating_matrix(0.0, ALPHA, BETA), np.diag([ALPHA, BETA]))
    assert np.allclose(rotating_matrix(math.pi, ALPHA, BETA), np.diag([BETA, ALPHA]), atol=1e-15)


def test_rotating_matrix_quarter_turn():
    assert np.allclose(
        rotating_matrix(math.pi / 2, ALPHA, BETA),
        np.array([[1.25, -0.75], [-0.75, 1.25]]),
        atol=1e-15,
    )


def test_config_validation():
    with pytest.raises(InvalidConfig):
        hc.Paper7Config(alpha=1.2)
    with pytest.raises(InvalidConfig):
        hc.Paper7Config(beta=0.9)
    with pytest.raises(InvalidConfig):
        hc.Paper7Config(coupling=-0.1)
    with pytest.raises(InvalidConfig):
        hc.Paper7Config(envelope_scale=0.0)


def test_unperturbed_family_is_linear(paper7_linear):
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(-30, 30))
        theta = float(rng.uniform(0, 2 * math.pi))
        x = rng.standard_normal(2)
        a_n = rotating_matrix(theta, ALPHA, BETA) if n >= 0 else np.diag([ALPHA, BETA])
        assert np.array_equal(paper7_linear.f(n, theta, x), a_n @ x)
        assert np.array_equal(paper7_linear.dfdx(n, theta, x), a_n)


def test_zero_is_stationary(paper7_perturbed):
    rng = np.random.default_rng(1)
    zero = np.zeros(2)
    for _ in range(1000):
        n = int(rng.integers(-100, 100))
        theta = float(rng.uniform(-10, 10))
        assert np.array_equal(paper7_perturbed.f(n, theta, zero), zero)


def test_derivative_matches_finite_differences(paper7_perturbed):
    rng = np.random.default_rng(2)
    eps = 1e-6
    for _ in range(50):
        n = int(rng.integers(-20, 20))
        theta = float(rng.uniform(0, 2 * math.pi))
        x = rng.uniform(-2, 2, size=2)
        jac = paper7_perturbed.dfdx(n, theta, x)
        fd = np.zeros((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = eps
            fd[:, j] = (
                paper7_perturbed.f(n, theta, x + e) - paper7_perturbed.f(n, theta, x - e)
            ) / (2 * eps)
        assert np.linalg.norm(jac - fd, 2) <= 1e-6 * max(1.0, np.linalg.norm(jac, 2))


def test_periodicity(paper7_perturbed):
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(-20, 20))
        theta = float(rng.uniform(0, 2 * math.pi))
        x = rng.standard_normal(2)
        delta = paper7_perturbed.f(n, theta, x) - paper7_perturbed.f(n, theta + 2 * math.pi, x)
        assert np.linalg.norm(delta) <= 1e-12


def test_spectrum_is_theta_independent():
    for theta in np.linspace(0, 2 * math.pi, 101):
        a = rotating_matrix(theta, ALPHA, BETA)
        assert np.trace(a) == pytest.approx(ALPHA + BETA, abs=1e-12)
        assert np.linalg.det(a) == pytest.approx(ALPHA * BETA, abs=1e-12)


def test_perturbation_envelope_bound(paper7_perturbed):
    c, tau, m_radius = 0.1, 5.0, 2.0
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(-60, 60))
        theta = float(rng.uniform(0, 2 * math.pi))
        x = rng.uniform(-1, 1, 2)
        x *= m_radius / max(1.0, np.linalg.norm(x))
        linear = paper7_perturbed.dfdx(n, theta, np.zeros(2)) @ x
        h = paper7_perturbed.f(n, theta, x) - linear
        assert np.linalg.norm(h) <= c * m_radius ** 2 * 2.0 / (1.0 + (n / tau) ** 2) + 1e-14


def test_asymptotic_maps(paper7_perturbed):
    x = np.array([0.3, -0.7])
    for theta in (0.0, 1.0, math.pi):
        assert np.allclose(
            paper7_perturbed.f_inf_plus(theta, x),
            rotating_matrix(theta, ALPHA, BETA) @ x,
        )
        assert np.allclose(paper7_perturbed.f_inf_minus(theta, x), np.diag([ALPHA, BETA]) @ x)


def test_linearization_at_zero(paper7_perturbed):
    lin0 = hc.linearization_at_zero(paper7_perturbed, 0.0)
    assert np.array_equal(lin0(-3), np.diag([ALPHA, BETA]))
    lin_pi = hc.linearization_at_zero(paper7_perturbed, math.pi)
    assert np.allclose(lin_pi(7), np.diag([BETA, ALPHA]), atol=1e-15)
    # quadratic perturbation does not touch the linearization at zero
    linear = hc.paper7_family(hc.Paper7Config(coupling=0.0))
    for n in (-5, 0, 5):
        assert np.array_equal(lin_pi(n), hc.linearization_at_zero(linear, math.pi)(n))


def test_direct_sum_evaluations(paper7_linear):
    other = hc.linear_family(2, lambda t: np.diag([0.3, 3.0]), lambda t: np.diag([0.3, 3.0]))
    combined = hc.direct_sum(paper7_linear, other)
    assert combined.d == 4
    x = np.array([1.0, 2.0, 3.0, 4.0])
    out = combined.f(2, 1.0, x)
    assert np.array_equal(out[:2], paper7_linear.f(2, 1.0, x[:2]))
    assert np.array_equal(out[2:], other.f(2, 1.0, x[2:]))
    jac = combined.dfdx(2, 1.0, x)
    assert np.array_equal(jac[:2, :2], paper7_linear.dfdx(2, 1.0, x[:2]))
    assert np.all(jac[:2, 2:] == 0.0) and np.all(jac[2:, :2] == 0.0)


def test_hypotheses_pass_on_builtin(paper7_perturbed, grid64):
    report = hc.check_hypotheses(paper7_perturbed, grid64, N=40, M=2.0, seed=0)
    assert [c.status for c in report.checks()] == ["pass"] * 4
    assert not report.any_fail


def test_hypotheses_a1_pass_unperturbed(paper7_linear, grid64):
    report = hc.check_hypotheses(paper7_linear, grid64, N=40, M=2.0, seed=0)
    assert report.a1.status == "pass"
    assert len(report.a1.evidence["moduli"]) == 3


def test_hypotheses_detect_stable_dimension_mismatch(grid64):
    system = hc.linear_family(
        2, lambda t: np.diag([0.5, 2.0]), lambda t: np.diag([0.5, 0.4])
    )
    report = hc.check_hypotheses(system, grid64, N=20, M=1.0, seed=0)
    assert report.a2.status == "fail"
    assert report.a2.evidence.get("IndexMismatch") is True
    assert report.any_fail


def test_hypotheses_argument_validation(paper7_linear, grid64):
    with pytest.raises(ValueError):
        hc.check_hypotheses(paper7_linear, grid64, N=5, M=1.0)
    with pytest.raises(ValueError):
        hc.check_hypotheses(paper7_linear, grid64, N=20, M=0.0)
