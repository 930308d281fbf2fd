import math

import numpy as np
import pytest

import homcont as hc
from homcont.errors import NoKernel, NoSignChange, NumericallySingular
from homcont.truncation import assemble_jacobian, truncated_problem


def test_det_sign_basics():
    assert hc.det_sign(np.eye(5)) == 1
    assert hc.det_sign(np.diag([1.0, 1.0, 1.0, -1.0])) == -1
    with pytest.raises(NumericallySingular):
        hc.det_sign(np.diag([1.0, 1.0, 1e-15]))


def test_det_sign_matches_slogdet_oracle(paper7_linear):
    for N in (10, 20, 30, 40):
        p = truncated_problem(paper7_linear, 0.0, N)
        jac = assemble_jacobian(p, np.zeros(p.size))
        reference = int(np.linalg.slogdet(jac)[0])
        assert hc.det_sign(jac) == reference
        # reproducible across repeated evaluations
        assert hc.det_sign(jac.copy()) == reference


def test_kernel_vector_trivial_cases():
    v = hc.kernel_vector(np.diag([1.0, 1.0, 1e-15]))
    assert np.allclose(v, [0.0, 0.0, 1.0], atol=1e-12)
    with pytest.raises(NoKernel):
        hc.kernel_vector(np.eye(4))


def test_kernel_vector_sign_convention_deterministic(paper7_linear):
    p = truncated_problem(paper7_linear, math.pi, 30)
    jac = assemble_jacobian(p, np.zeros(p.size))
    v1 = hc.kernel_vector(jac, block_size=2)
    v2 = hc.kernel_vector(jac.copy(), block_size=2)
    assert np.array_equal(v1, v2)
    assert np.linalg.norm(v1) == pytest.approx(1.0, abs=1e-12)


def test_scan_parity_builtin(paper7_linear, grid64):
    scan = hc.scan_parity(paper7_linear, grid64, 40)
    assert scan.loop_parity == -1
    assert len(scan.sign_change_intervals) == 1
    lo, hi = scan.sign_change_intervals[0]
    assert lo < math.pi < hi
    # parity consistency: count and endpoint product agree by construction
    assert (-1) ** len(scan.sign_change_intervals) == scan.det_signs[0] * scan.det_signs[-1]


def test_scan_parity_constant_system(grid64):
    system = hc.linear_family(2, lambda t: np.diag([0.5, 2.0]), lambda t: np.diag([0.5, 2.0]))
    scan = hc.scan_parity(system, grid64, 20)
    assert scan.loop_parity == 1
    assert scan.sign_change_intervals == []
    assert np.all(scan.det_signs != 0)


def test_scan_parity_chart_shift(paper7_linear, grid64):
    shift = math.pi / 3

    def a_plus(theta):
        return paper7_linear.a_plus(theta + shift)

    shifted = hc.linear_family(2, a_plus, paper7_linear.a_minus)
    scan = hc.scan_parity(shifted, grid64, 40)
    assert scan.loop_parity == -1
    lo, hi = scan.sign_change_intervals[0]
    assert lo < math.pi - shift < hi


def test_scan_parity_grid_and_window_stability(paper7_linear):
    parities = set()
    for m in (64, 128, 256):
        parities.add(hc.scan_parity(paper7_linear, hc.CircleGrid.uniform(m), 40).loop_parity)
    for N in (20, 40, 80):
        parities.add(hc.scan_parity(paper7_linear, hc.CircleGrid.uniform(64), N).loop_parity)
    assert parities == {-1}


def test_locate_bifurcation_builtin(paper7_linear):
    cand = hc.locate_bifurcation(paper7_linear, (math.pi - 0.5, math.pi + 0.5), 40, 1e-6)
    assert abs(cand.theta_star - math.pi) <= 1e-6
    assert cand.smin_at_star <= 1e-8 * 3.0
    assert np.linalg.norm(cand.kernel_vector) == pytest.approx(1.0, abs=1e-12)


def test_located_kernel_matches_analytic_oracle(paper7_linear):
    N = 40
    cand = hc.locate_bifurcation(paper7_linear, (math.pi - 0.5, math.pi + 0.5), N, 1e-6)
    seq = hc.analytic_kernel_basis(
        paper7_linear.a_plus(math.pi), paper7_linear.a_minus(math.pi), N
    )[0].ravel()
    oracle = seq / np.linalg.norm(seq)
    assert abs(oracle @ cand.kernel_vector) >= 1.0 - 1e-8


def test_locate_bifurcation_no_crossing(paper7_linear):
    with pytest.raises(NoSignChange):
        hc.locate_bifurcation(paper7_linear, (0.5, 1.0), 30, 1e-4)


def test_even_multiplicity_dip_detection():
    # two identical rotating blocks give a double kernel crossing: the
    # determinant does not change sign, but the smin dip flags the node
    from homcont.systems import rotating_matrix

    phi = math.pi / 8
    rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    const = rot @ np.diag([0.4, 2.5]) @ rot.T
    theta_star = 2 * phi + math.pi  # stable(+) line parallel to unstable(-) line

    def a_plus(theta):
        out = np.zeros((4, 4))
        out[:2, :2] = rotating_matrix(theta, 0.5, 2.0)
        out[2:, 2:] = rotating_matrix(theta, 0.5, 2.0)
        return out

    def a_minus(theta):
        out = np.zeros((4, 4))
        out[:2, :2] = const
        out[2:, 2:] = const
        return out

    system = hc.linear_family(4, a_plus, a_minus)
    scan = hc.scan_parity(system, hc.CircleGrid.uniform(64), 30)
    assert scan.loop_parity == 1
    assert scan.sign_change_intervals == []
    assert len(scan.dip_intervals) == 1
    lo, hi = scan.dip_intervals[0]
    assert lo <= theta_star <= hi

    with pytest.warns(UserWarning, match="even-multiplicity"):
        cand = hc.locate_bifurcation(system, (lo, hi), 30, 1e-6)
    assert abs(cand.theta_star - theta_star) <= 1e-5


def test_scan_rejects_singular_base_point(paper7_linear):
    # chart rotated so the kernel crossing sits exactly at theta = 0: the
    # endpoint determinant is meaningless and the scan must say so
    from homcont.errors import InconsistentParity

    shifted = hc.linear_family(
        2, lambda t: paper7_linear.a_plus(t + math.pi), paper7_linear.a_minus
    )
    with pytest.raises(InconsistentParity, match="base point"):
        hc.scan_parity(shifted, hc.CircleGrid.uniform(64), 30)


def test_scan_excludes_near_singular_node(paper7_linear):
    # theta = pi lands exactly on a 64-node grid; that node must be flagged
    scan = hc.scan_parity(paper7_linear, hc.CircleGrid.uniform(64), 40)
    idx = int(np.argmin(np.abs(scan.grid.nodes - math.pi)))
    assert scan.grid.nodes[idx] == pytest.approx(math.pi, abs=1e-12)
    assert scan.det_signs[idx] == 0
    assert scan.smin[idx] < 1e-10
