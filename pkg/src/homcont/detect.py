"""Parity scans and bifurcation localization along the parameter loop.

The truncated linearization at the trivial solution is assembled at every
grid node with boundary rows taken from continuously transported frames.
Its determinant sign is then a well-defined function of theta whose flips
locate kernel crossings; the product of the endpoint signs (initial frames
at 0 versus transported frames at 2*pi) is the loop parity, which must
match (-1)^(number of sign changes).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._linalg import det_sign_dense, smallest_singular_pair
from .bundles import CircleGrid, transport_along_path, transport_frames
from .errors import (
    InconsistentParity,
    MaxIterations,
    NoKernel,
    NoSignChange,
    NumericallySingular,
)
from .truncation import assemble_jacobian, complement_families, truncated_problem

DEFAULT_KERNEL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ParityScan:
    """Determinant signs of the truncated linearization along the loop.

    det_signs holds +1/-1 per node, with 0 marking nodes excluded as
    near-singular (smin below the kernel threshold); excluded nodes do not
    enter the sign-change count but end up inside candidate intervals.
    dip_intervals brackets nodes whose smin dips four orders of magnitude
    below the grid median without a determinant sign change: candidate
    even-multiplicity crossings, which carry no parity certificate.
    """

    grid: CircleGrid
    det_signs: np.ndarray
    smin: np.ndarray
    sign_change_intervals: list[tuple[float, float]]
    dip_intervals: list[tuple[float, float]]
    loop_parity: int


@dataclass(frozen=True, eq=False)
class BifurcationCandidate:
    theta_star: float
    smin_at_star: float
    kernel_vector: np.ndarray
    bracket: tuple[float, float]


def det_sign(j: np.ndarray) -> int:
    """Sign of det(j) via LU with partial pivoting (pivot signs times
    permutation parity); raises NumericallySingular instead of returning 0."""
    return det_sign_dense(j)


def kernel_vector(
    j: np.ndarray, kernel_tol: float | None = None, block_size: int | None = None
) -> np.ndarray:
    """Unit right singular vector for the smallest singular value of j.

    kernel_tol is an absolute threshold on that singular value (default
    1e-8 * ||j||); NoKernel is raised when j is not nearly singular.  Sign
    convention: the largest-magnitude entry of the first block (of size
    block_size, default the whole vector) is made positive.
    """
    smin, v, smax = smallest_singular_pair(j)
    tol = kernel_tol if kernel_tol is not None else DEFAULT_KERNEL_TOL * smax
    if smin > tol:
        raise NoKernel(f"smallest singular value {smin:.3e} exceeds {tol:.3e}")
    head = v[: block_size if block_size else len(v)]
    lead = int(np.argmax(np.abs(head)))
    if head[lead] < 0:
        v = -v
    return v


def _transport_on_common_grid(left, right, grid: CircleGrid):
    """Transport both complement families, merging any adaptively refined
    nodes so both frame sequences live on one grid."""
    for _ in range(5):
        tl = transport_frames(left, grid)
        tr = transport_frames(right, grid)
        if tl.grid.m == tr.grid.m == grid.m:
            return grid, tl.frames, tr.frames
        merged = np.union1d(tl.grid.nodes, tr.grid.nodes)
        grid = CircleGrid(m=len(merged) - 1, nodes=merged)
    raise InconsistentParity("transport refinement did not stabilize on a common grid")


def scan_parity(
    system,
    grid: CircleGrid,
    N: int,
    gap_tol: float = 1e-6,
    kernel_tol: float = DEFAULT_KERNEL_TOL,
) -> ParityScan:
    """Determinant-sign scan of the truncated linearization over the loop.

    The loop parity is computed both as (-1)^(sign changes between
    consecutive non-excluded nodes) and as the product of the determinant
    signs at theta = 0 (initial frames) and theta = 2*pi (transported
    frames); InconsistentParity is raised if the two disagree or if either
    endpoint is itself near-singular.
    """
    left, right = complement_families(system, gap_tol)
    grid, left_frames, right_frames = _transport_on_common_grid(left, right, grid)

    n_nodes = grid.m + 1
    signs = np.zeros(n_nodes, dtype=int)
    smins = np.zeros(n_nodes)
    for i in range(n_nodes):
        theta = float(grid.nodes[i])
        p = truncated_problem(
            system, theta, N, gap_tol=gap_tol,
            left_rows=left_frames[i].T, right_rows=right_frames[i].T,
        )
        jac = assemble_jacobian(p, np.zeros(p.size))
        smin, _, smax = smallest_singular_pair(jac)
        smins[i] = smin
        if smin < kernel_tol * smax:
            continue  # excluded from sign bookkeeping
        try:
            signs[i] = det_sign_dense(jac, norm=smax)
        except NumericallySingular:
            signs[i] = 0

    if signs[0] == 0 or signs[-1] == 0:
        raise InconsistentParity(
            "endpoint linearization is near-singular; rotate the chart so the "
            "base point theta = 0 is regular"
        )

    intervals: list[tuple[float, float]] = []
    prev_idx = 0
    for i in range(1, n_nodes):
        if signs[i] == 0:
            continue
        if signs[i] != signs[prev_idx]:
            intervals.append((float(grid.nodes[prev_idx]), float(grid.nodes[i])))
        prev_idx = i

    # smin dips four orders below the grid median, without a sign change:
    # even-multiplicity suspects, bracketed by their neighbor nodes.
    dips: list[tuple[float, float]] = []
    median = float(np.median(smins))
    for i in range(1, n_nodes - 1):
        if smins[i] >= 1e-4 * median:
            continue
        lo, hi = float(grid.nodes[i - 1]), float(grid.nodes[i + 1])
        if any(a <= grid.nodes[i] <= b for a, b in intervals):
            continue
        if dips and dips[-1][1] >= lo:
            dips[-1] = (dips[-1][0], hi)
        else:
            dips.append((lo, hi))

    parity_count = -1 if len(intervals) % 2 else 1
    parity_endpoints = int(signs[0] * signs[-1])
    if parity_count != parity_endpoints:
        raise InconsistentParity(
            f"sign-change count gives parity {parity_count} but endpoint "
            f"determinants give {parity_endpoints}; refine the grid"
        )
    return ParityScan(
        grid=grid,
        det_signs=signs,
        smin=smins,
        sign_change_intervals=intervals,
        dip_intervals=dips,
        loop_parity=parity_count,
    )


class _PathProblems:
    """Truncated problems along a theta path with continuously carried rows."""

    def __init__(self, system, N: int, theta0: float, gap_tol: float):
        self.system = system
        self.N = N
        self.gap_tol = gap_tol
        self.left_fn, self.right_fn = complement_families(system, gap_tol)
        self.theta = float(theta0)
        self.left = self.left_fn(self.theta)
        self.right = self.right_fn(self.theta)

    def move(self, theta: float):
        self.left = transport_along_path(self.left_fn, self.left, self.theta, theta)
        self.right = transport_along_path(self.right_fn, self.right, self.theta, theta)
        self.theta = float(theta)

    def jacobian_at(self, theta: float) -> np.ndarray:
        left = transport_along_path(self.left_fn, self.left, self.theta, theta)
        right = transport_along_path(self.right_fn, self.right, self.theta, theta)
        p = truncated_problem(
            self.system, theta, self.N, gap_tol=self.gap_tol,
            left_rows=left.T, right_rows=right.T,
        )
        return assemble_jacobian(p, np.zeros(p.size))


def locate_bifurcation(
    system,
    bracket: tuple[float, float],
    N: int,
    tol_theta: float,
    gap_tol: float = 1e-6,
    kernel_tol: float = DEFAULT_KERNEL_TOL,
    max_iter: int = 200,
) -> BifurcationCandidate:
    """Narrow a bracket onto a kernel crossing of the truncated linearization.

    Bisection on the determinant sign (with frame-consistent rows carried
    along the path) continues until the bracket is below tol_theta and the
    smallest singular value clears the kernel threshold, so the returned
    candidate always carries a usable kernel vector.  Brackets without a
    sign change fall back to golden-section minimization of the smallest
    singular value; candidates found that way carry no parity certificate
    and are reported with a warning.
    """
    a, b = float(bracket[0]), float(bracket[1])
    if not b > a:
        raise ValueError("bracket must satisfy theta_lo < theta_hi")
    path = _PathProblems(system, N, a, gap_tol)

    def probe(theta: float):
        jac = path.jacobian_at(theta)
        smin, _, smax = smallest_singular_pair(jac)
        if smin < kernel_tol * smax:
            return smin, smax, None
        try:
            return smin, smax, det_sign_dense(jac, norm=smax)
        except NumericallySingular:
            return smin, smax, None

    def endpoint_sign(theta: float, inward: float):
        smin, smax, sign = probe(theta)
        if sign is None:
            smin, smax, sign = probe(theta + inward * 1e-3 * (b - a))
        return sign

    s_a = endpoint_sign(a, +1.0)
    s_b = endpoint_sign(b, -1.0)
    if s_a is None or s_b is None or s_a == s_b:
        return _golden_fallback(system, path, (a, b), tol_theta, kernel_tol, max_iter)

    for _ in range(max_iter):
        width = b - a
        mid = 0.5 * (a + b)
        smin_mid, smax_mid, s_mid = probe(mid)
        if width <= tol_theta and smin_mid <= kernel_tol * smax_mid:
            return _finish_candidate(system, path, mid, (a, b), N, gap_tol, kernel_tol)
        if s_mid is not None:
            if s_mid == s_a:
                a = mid
                path.move(a)
            else:
                b = mid
        else:
            # Near-singular midpoint: shrink from both sides with off-center
            # probes, keeping the crossing inside.
            lo, hi = a + 0.35 * width, a + 0.65 * width
            _, _, s_lo = probe(lo)
            _, _, s_hi = probe(hi)
            if s_lo == s_a:
                a = lo
                path.move(a)
            if s_hi == s_b and s_hi is not None:
                b = hi
            if s_lo is None and s_hi is None:
                if smin_mid <= kernel_tol * smax_mid:
                    return _finish_candidate(system, path, mid, (a, b), N, gap_tol, kernel_tol)
                raise MaxIterations("bracket collapsed onto a non-resolvable singular set")
    raise MaxIterations(f"bisection did not converge within {max_iter} iterations")


def _golden_fallback(system, path, bracket, tol_theta, kernel_tol, max_iter):
    """Golden-section search on the relative smallest singular value.

    Shrinks past tol_theta if needed until the dip clears the kernel
    threshold, so a genuine (even-multiplicity) crossing yields a usable
    kernel vector; a dip that bottoms out above the threshold is rejected.
    """
    a, b = bracket
    phi = 0.5 * (3.0 - np.sqrt(5.0))

    def rel_smin(theta: float) -> float:
        jac = path.jacobian_at(theta)
        smin, _, smax = smallest_singular_pair(jac)
        return smin / smax

    x1, x2 = a + phi * (b - a), b - phi * (b - a)
    f1, f2 = rel_smin(x1), rel_smin(x2)
    for _ in range(max_iter):
        width = b - a
        if width <= tol_theta and min(f1, f2) <= kernel_tol:
            break
        if width <= 1e-13 * max(1.0, abs(a)):
            break  # dip fully resolved; the threshold decides below
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = a + phi * (b - a)
            f1 = rel_smin(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = b - phi * (b - a)
            f2 = rel_smin(x2)
    else:
        raise MaxIterations("golden-section search exceeded its budget")
    mid = x1 if f1 <= f2 else x2
    jac = path.jacobian_at(mid)
    smin, _, smax = smallest_singular_pair(jac)
    if smin > kernel_tol * smax:
        raise NoSignChange(
            f"no determinant sign change in the bracket and the smallest "
            f"singular-value dip ({smin:.3e}) stays above the kernel threshold"
        )
    warnings.warn(
        "even-multiplicity crossing: candidate located by smin dip only, "
        "no parity certificate",
        stacklevel=2,
    )
    return _finish_candidate(system, path, mid, (a, b), path.N, path.gap_tol, kernel_tol)


def _finish_candidate(system, path, theta_star, bracket, N, gap_tol, kernel_tol):
    jac = path.jacobian_at(theta_star)
    smin, _, smax = smallest_singular_pair(jac)
    vec = kernel_vector(jac, kernel_tol=kernel_tol * smax, block_size=system.d)
    return BifurcationCandidate(
        theta_star=float(theta_star),
        smin_at_star=float(smin),
        kernel_vector=vec,
        bracket=(float(bracket[0]), float(bracket[1])),
    )
