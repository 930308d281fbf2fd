"""Newton correction and pseudo-arclength continuation of homoclinic branches.

The unknown is the pair (X, theta) with X a window vector; branch switching
replaces the parameter equation by an amplitude constraint <phi, X> = s0
against the kernel direction phi (the trivial branch violates it), and
continuation replaces it by the arclength constraint t . (z - z_pred) = 0
with secant tangents.  theta is carried as a lifted real, so branches wind
past 2*pi without seams.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._linalg import det_sign_dense
from .detect import BifurcationCandidate
from .errors import (
    DegenerateKernel,
    InvalidConfig,
    NoConvergence,
    NumericallySingular,
    SingularJacobian,
    StartInvalid,
    WindowOverflow,
)
from .truncation import (
    DEFAULT_N_MAX,
    TAIL_FRACTION,
    adapt_window,
    assemble_dresidual_dtheta,
    assemble_jacobian,
    assemble_residual,
    banded_jacobian_lu,
    complement_families,
    embed_window,
    tail_mass,
    truncated_problem,
)
from .bundles import transport_along_path

log = logging.getLogger(__name__)

# Dense solves below this augmented size; sparse LU above.
_DENSE_LIMIT = 2000
# Banded LU is the fixed-theta solve path from this half-width upward.
_BANDED_FROM_N = 128

DEFAULT_NEWTON_TOL = 1e-10
DEFAULT_MAX_ITER = 25
MAX_HALVINGS = 8


@dataclass(frozen=True)
class AffineConstraint:
    """Affine functional w_x . X + w_theta * theta = offset closing the
    augmented system when theta is freed."""

    w_x: np.ndarray
    w_theta: float
    offset: float

    def value(self, x: np.ndarray, theta: float) -> float:
        return float(self.w_x @ x + self.w_theta * theta - self.offset)


@dataclass(frozen=True, eq=False)
class BranchPoint:
    """One converged point of the homoclinic branch."""

    theta: float
    X: np.ndarray
    amplitude: float
    sup_norm: float
    l2_norm: float
    residual_norm: float
    det_sign: int
    N: int


@dataclass(frozen=True)
class ContinuationControls:
    ds0: float = 1e-3
    ds_min: float = 1e-8
    ds_max: float = 0.01
    max_steps: int = 200
    amplitude_cap: float = 0.5
    tail_tol: float = 1e-8
    min_norm: float = 0.0
    n_max: int = DEFAULT_N_MAX


@dataclass(frozen=True, eq=False)
class Branch:
    points: list[BranchPoint]
    origin: BifurcationCandidate | None
    stop_reason: str


def _block_sup_norm(x: np.ndarray, d: int) -> float:
    return float(np.max(np.linalg.norm(x.reshape(-1, d), axis=1)))


def _solve_fixed(p, x, rhs):
    if p.N >= _BANDED_FROM_N:
        return banded_jacobian_lu(p, x).solve(rhs)
    jac = assemble_jacobian(p, x)
    try:
        return np.linalg.solve(jac, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(str(exc)) from exc


def _augmented_dense(p, x, constraint):
    size = p.size
    aug = np.zeros((size + 1, size + 1))
    aug[:size, :size] = assemble_jacobian(p, x)
    aug[:size, size] = assemble_dresidual_dtheta(p, x)
    aug[size, :size] = constraint.w_x
    aug[size, size] = constraint.w_theta
    return aug


def _augmented_sparse(p, x, constraint):
    blocks = p.blocks(x)
    d, N, size = p.d, p.N, p.size
    rows, cols, data = [], [], []

    def add_block(r0, c0, m):
        for l in range(m.shape[0]):
            for j in range(m.shape[1]):
                if m[l, j] != 0.0:
                    rows.append(r0 + l)
                    cols.append(c0 + j)
                    data.append(m[l, j])

    eye = np.eye(d)
    for i, n in enumerate(range(-N, N)):
        add_block(i * d, i * d, -np.asarray(p.system.dfdx(n, p.theta, blocks[i]), dtype=float))
        add_block(i * d, (i + 1) * d, eye)
    base = 2 * N * d
    add_block(base, 0, p.left_rows)
    add_block(base + p.left_rows.shape[0], 2 * N * d, p.right_rows)
    dth = assemble_dresidual_dtheta(p, x)
    for i, v in enumerate(dth):
        if v != 0.0:
            rows.append(i)
            cols.append(size)
            data.append(v)
    for j, v in enumerate(constraint.w_x):
        if v != 0.0:
            rows.append(size)
            cols.append(j)
            data.append(v)
    rows.append(size)
    cols.append(size)
    data.append(constraint.w_theta)  # keep the corner structurally present
    return sp.csc_matrix((data, (rows, cols)), shape=(size + 1, size + 1))


def _solve_augmented(p, x, constraint, rhs):
    if p.size + 1 <= _DENSE_LIMIT:
        try:
            return np.linalg.solve(_augmented_dense(p, x, constraint), rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
    try:
        return spla.splu(_augmented_sparse(p, x, constraint)).solve(rhs)
    except RuntimeError as exc:
        raise SingularJacobian(str(exc)) from exc


def _perm_parity(perm: np.ndarray) -> int:
    perm = np.asarray(perm)
    seen = np.zeros(len(perm), dtype=bool)
    sign = 1
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _augmented_det_sign(p, x, constraint) -> int:
    """Determinant sign of the augmented Jacobian; 0 if near-singular."""
    if p.size + 1 <= _DENSE_LIMIT:
        try:
            return det_sign_dense(_augmented_dense(p, x, constraint))
        except NumericallySingular:
            return 0
    lu = spla.splu(_augmented_sparse(p, x, constraint))
    diag = lu.U.diagonal()
    if np.min(np.abs(diag)) == 0.0:
        return 0
    sign = int(np.prod(np.sign(diag)))
    return sign * _perm_parity(lu.perm_r) * _perm_parity(lu.perm_c)


def _newton(p, guess, constraint, newton_tol, max_iter):
    """Damped Newton on the (possibly augmented) truncated system.

    Returns (x, theta, residual_norm, iterations); theta equals p.theta in
    fixed-theta mode.  Damping is a halving line search on the residual
    norm, at most MAX_HALVINGS halvings per step.
    """
    x = np.asarray(guess, dtype=float).copy()
    theta = p.theta

    def norms(x_, theta_):
        p_ = p if theta_ == p.theta else replace(p, theta=float(theta_))
        r = assemble_residual(p_, x_)
        if constraint is None:
            return p_, r, float(np.linalg.norm(r))
        c = constraint.value(x_, theta_)
        return p_, np.concatenate([r, [c]]), max(float(np.linalg.norm(r)), abs(c))

    p_cur, r, rn = norms(x, theta)
    for it in range(max_iter):
        if rn <= newton_tol:
            return x, theta, float(np.linalg.norm(r[: p.size])), it
        if constraint is None:
            step = _solve_fixed(p_cur, x, -r)
            dx, dtheta = step, 0.0
        else:
            step = _solve_augmented(p_cur, x, constraint, -r)
            dx, dtheta = step[:-1], float(step[-1])
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            x_try = x + scale * dx
            theta_try = theta + scale * dtheta
            p_try, r_try, rn_try = norms(x_try, theta_try)
            if rn_try < rn or rn_try <= newton_tol:
                x, theta, p_cur, r, rn = x_try, theta_try, p_try, r_try, rn_try
                break
            scale *= 0.5
        else:
            raise NoConvergence(
                f"line search stalled at residual {rn:.3e} (iteration {it})"
            )
    if rn <= newton_tol:
        return x, theta, float(np.linalg.norm(r[: p.size])), max_iter
    raise NoConvergence(f"residual {rn:.3e} above {newton_tol:.1e} after {max_iter} iterations")


def _make_point(p, x, theta, residual_norm, det, amplitude_ref):
    l2 = float(np.linalg.norm(x))
    amplitude = float(amplitude_ref @ x) if amplitude_ref is not None else l2
    return BranchPoint(
        theta=float(theta),
        X=x.copy(),
        amplitude=amplitude,
        sup_norm=_block_sup_norm(x, p.d),
        l2_norm=l2,
        residual_norm=residual_norm,
        det_sign=det,
        N=p.N,
    )


def newton_correct(
    p,
    guess: np.ndarray,
    constraint: AffineConstraint | None = None,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    amplitude_ref: np.ndarray | None = None,
) -> BranchPoint:
    """Correct a guess to a converged branch point.

    With constraint = None theta is held at p.theta and the square window
    system is solved (banded LU for N >= 128, dense below); otherwise theta
    is freed and the affine constraint closes the augmented system.  The
    recorded det_sign is that of the system actually solved (0 when it is
    numerically singular); amplitude is measured against amplitude_ref, or
    falls back to the l2 norm.
    """
    x, theta, rn, _ = _newton(p, guess, constraint, newton_tol, max_iter)
    p_final = p if theta == p.theta else replace(p, theta=float(theta))
    if constraint is None:
        try:
            if p_final.N >= _BANDED_FROM_N:
                det = banded_jacobian_lu(p_final, x).det_sign()
            else:
                det = det_sign_dense(assemble_jacobian(p_final, x))
        except NumericallySingular:
            det = 0
    else:
        det = _augmented_det_sign(p_final, x, constraint)
    return _make_point(p_final, x, theta, rn, det, amplitude_ref)


def switch_branch(
    system,
    cand: BifurcationCandidate,
    s0: float,
    N: int,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    gap_tol: float = 1e-6,
) -> BranchPoint:
    """First nontrivial point off the trivial branch at a kernel crossing.

    Starts from X = s0 * phi with phi the candidate kernel vector, frees
    theta and imposes <phi, X> = s0, which every point of the trivial
    branch violates.  Any converged point therefore has l2 norm >= s0.
    """
    if not (isinstance(s0, (int, float)) and math.isfinite(s0)) or s0 <= 0:
        raise InvalidConfig(f"s0 must be a positive number, got {s0!r}")
    phi = np.asarray(cand.kernel_vector, dtype=float)
    size = system.d * (2 * N + 1)
    if phi.shape != (size,) or not np.all(np.isfinite(phi)):
        raise DegenerateKernel(
            f"kernel vector of length {phi.shape} unusable for window N={N} (need {size})"
        )
    nrm = np.linalg.norm(phi)
    if abs(nrm - 1.0) > 1e-8:
        raise DegenerateKernel(f"kernel vector norm {nrm:.3e} is not 1")

    p = truncated_problem(system, cand.theta_star, N, gap_tol=gap_tol)
    constraint = AffineConstraint(w_x=phi, w_theta=0.0, offset=float(s0))
    try:
        return newton_correct(
            p, s0 * phi, constraint, newton_tol=newton_tol, amplitude_ref=phi
        )
    except NoConvergence as exc:
        raise NoConvergence(f"{exc}; try a smaller s0") from exc


class _RowState:
    """Boundary-condition rows transported continuously along theta."""

    def __init__(self, system, theta, gap_tol):
        self.left_fn, self.right_fn = complement_families(system, gap_tol)
        self.theta = float(theta)
        self.left = self.left_fn(self.theta)
        self.right = self.right_fn(self.theta)

    def move(self, theta: float):
        self.left = transport_along_path(self.left_fn, self.left, self.theta, theta)
        self.right = transport_along_path(self.right_fn, self.right, self.theta, theta)
        self.theta = float(theta)

    def problem(self, system, theta, N, gap_tol):
        return truncated_problem(
            system, theta, N, gap_tol=gap_tol,
            left_rows=self.left.T, right_rows=self.right.T,
        )


def _initial_tangent(p, x, theta, orient_x):
    """Null tangent of the augmented Jacobian, oriented along orient_x."""
    constraint = AffineConstraint(w_x=orient_x, w_theta=0.0, offset=0.0)
    rhs = np.zeros(p.size + 1)
    rhs[-1] = 1.0
    p_cur = replace(p, theta=float(theta))
    t = _solve_augmented(p_cur, x, constraint, rhs)
    return t / np.linalg.norm(t)


def continue_branch(
    system,
    start: BranchPoint,
    controls: ContinuationControls,
    origin: BifurcationCandidate | None = None,
    amplitude_ref: np.ndarray | None = None,
    initial_tangent: np.ndarray | None = None,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    gap_tol: float = 1e-6,
) -> Branch:
    """Pseudo-arclength continuation from a converged start point.

    Secant predictor (augmented null tangent on the first step), Newton
    corrector with the arclength constraint; the step halves on corrector
    failure down to ds_min and doubles after four easy successes up to
    ds_max.  Accepted points are re-polished whenever the boundary rows are
    transported to the new theta or the window is enlarged, so the recorded
    residual always refers to the stored problem data.  det_sign of the
    augmented Jacobian (constraint row = predictor tangent) is recorded per
    point as a fold/secondary-crossing diagnostic.
    """
    d = system.d
    rows = _RowState(system, start.theta, gap_tol)
    p = rows.problem(system, start.theta, start.N, gap_tol)
    x = np.asarray(start.X, dtype=float).copy()
    rn = float(np.linalg.norm(assemble_residual(p, x)))
    # A converged start may drift by rounding when its boundary rows are
    # re-derived; absorb that, but reject anything genuinely unconverged.
    if rn > 1e3 * newton_tol:
        raise StartInvalid(f"start point residual {rn:.3e} is not converged")
    if rn > newton_tol:
        try:
            x, _, rn, _ = _newton(p, x, None, newton_tol, 5)
        except (NoConvergence, SingularJacobian) as exc:
            raise StartInvalid(f"start point does not satisfy its residual: {exc}") from exc

    if amplitude_ref is None:
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            raise StartInvalid("start point is the trivial solution")
        amplitude_ref = x / nrm
    amplitude_ref = np.asarray(amplitude_ref, dtype=float).copy()

    start_pt = _make_point(p, x, start.theta, rn, start.det_sign, amplitude_ref)
    points = [start_pt]

    if initial_tangent is not None:
        t = np.asarray(initial_tangent, dtype=float).copy()
        t /= np.linalg.norm(t)
    else:
        t = _initial_tangent(p, x, start.theta, amplitude_ref)

    z = np.concatenate([x, [start.theta]])
    ds = controls.ds0
    streak = 0
    stop = None

    while True:
        if points[-1].l2_norm >= controls.amplitude_cap:
            stop = "amplitude_cap"
            break
        if len(points) - 1 >= controls.max_steps:
            stop = "max_steps"
            break

        z_pred = z + ds * t
        constraint = AffineConstraint(
            w_x=t[:-1], w_theta=float(t[-1]), offset=float(t @ z_pred)
        )
        p_step = replace(p, theta=float(z_pred[-1]))
        try:
            x_new, theta_new, _, iters = _newton(
                p_step, z_pred[:-1], constraint, newton_tol, DEFAULT_MAX_ITER
            )
        except (NoConvergence, SingularJacobian, NumericallySingular):
            ds *= 0.5
            streak = 0
            if ds < controls.ds_min:
                stop = "step_failure"
                break
            continue
        if np.linalg.norm(x_new) < controls.min_norm:
            ds *= 0.5
            streak = 0
            if ds < controls.ds_min:
                stop = "step_failure"
                break
            continue

        # Carry the boundary rows to the accepted theta and re-polish there.
        rows.move(theta_new)
        p = rows.problem(system, theta_new, p.N, gap_tol)
        rn = float(np.linalg.norm(assemble_residual(p, x_new)))
        if rn > newton_tol:
            try:
                x_new, _, rn, _ = _newton(p, x_new, None, newton_tol, 5)
            except (NoConvergence, SingularJacobian):
                ds *= 0.5
                streak = 0
                if ds < controls.ds_min:
                    stop = "step_failure"
                    break
                continue

        if tail_mass(x_new, TAIL_FRACTION, d) > controls.tail_tol:
            try:
                n_old = p.N
                p, x_new = adapt_window(p, x_new, controls.tail_tol, controls.n_max)
                log.info("window enlarged from N=%d to N=%d", n_old, p.N)
                x_new, _, rn, _ = _newton(p, x_new, None, newton_tol, DEFAULT_MAX_ITER)
                amplitude_ref = embed_window(amplitude_ref, d, n_old, p.N)
                t = np.concatenate([embed_window(t[:-1], d, n_old, p.N), [t[-1]]])
                z = np.concatenate([embed_window(z[:-1], d, n_old, p.N), [z[-1]]])
            except WindowOverflow:
                stop = "window_overflow"
                break
            except (NoConvergence, SingularJacobian):
                stop = "step_failure"
                break

        det = _augmented_det_sign(
            replace(p, theta=float(theta_new)),
            x_new,
            AffineConstraint(w_x=t[:-1], w_theta=float(t[-1]), offset=0.0),
        )
        points.append(_make_point(p, x_new, theta_new, rn, det, amplitude_ref))

        z_new = np.concatenate([x_new, [theta_new]])
        secant = z_new - z
        z = z_new
        t = secant / np.linalg.norm(secant)

        if iters <= 4:
            streak += 1
            if streak >= 4:
                ds = min(2.0 * ds, controls.ds_max)
                streak = 0
        else:
            streak = 0

    return Branch(points=points, origin=origin, stop_reason=stop)
