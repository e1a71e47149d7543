"""Newton solver for stationary loops, optionally restricted to a
projector-invariant subspace, plus parameter continuation.

Stationarity restricted to an invariant subspace of a symmetry subgroup that
fixes the solution yields genuine solutions of the equations of motion, so
constrained solves assemble the Newton system in the reduced coordinates of
the subspace.  Conservation-law null directions that survive the restriction
are handled with a bordered system rather than a pseudo-inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import symmetry
from .action import (action, gradient_vector, hessian, min_pair_distance)
from .errors import CollisionError, ConvergenceError, ValidationError
from .loops import (DEFAULT_MODES, LoopPath, TangentField, field_from_vector,
                    loop_from_vector, to_vector, trivial_modes, with_period)
from .potentials import Potential

_subspace_cache: dict[tuple, np.ndarray] = {}


def subspace_basis(projector_name, n_modes):
    """Orthonormal basis (columns) of the projector's invariant subspace."""
    key = (projector_name, n_modes)
    cached = _subspace_cache.get(key)
    if cached is None:
        p = symmetry.projector_matrix(projector_name, n_modes)
        eigvals, eigvecs = np.linalg.eigh(p)
        cached = np.ascontiguousarray(eigvecs[:, eigvals > 0.5])
        cached.setflags(write=False)
        _subspace_cache[key] = cached
    return cached


@dataclass(frozen=True)
class SolveConfig:
    max_iterations: int = 50
    gradient_tol: float = 1e-10
    max_step: float = 1.0
    projector: str | None = None
    border_trivial: bool = True
    min_backtrack: float = 1e-4

    def __post_init__(self):
        if self.gradient_tol <= 0 or self.max_step <= 0:
            raise ValidationError("tolerances must be positive")


def apply_parameter(loop, pot, param, value):
    """Loop/potential pair at a new continuation parameter value."""
    if param == "a":
        return loop, pot.with_a(value)
    if param == "T":
        return with_period(loop, float(value)), pot
    raise ValidationError(f"unknown continuation parameter {param!r}")


def parameter_value(loop, pot, param):
    if param == "a":
        return pot.a
    if param == "T":
        return loop.period
    raise ValidationError(f"unknown continuation parameter {param!r}")


def _loop_at(period, n_modes, u, param, value):
    """Loop from vector coordinates, with `T` reinterpreting the period."""
    if param == "T":
        return loop_from_vector(float(value), n_modes, u)
    return loop_from_vector(period, n_modes, u)


def gradient_param_derivative(loop, pot, param, rel_step=1e-6):
    """d(gradient)/d(parameter) at fixed vector coordinates, central FD."""
    u = to_vector(loop)
    xi = parameter_value(loop, pot, param)
    h = rel_step * max(1.0, abs(xi))
    if param == "a":
        gp = gradient_vector(loop, pot.with_a(xi + h))
        gm = gradient_vector(loop, pot.with_a(xi - h))
    else:
        gp = gradient_vector(loop_from_vector(xi + h, loop.n_modes, u), pot)
        gm = gradient_vector(loop_from_vector(xi - h, loop.n_modes, u), pot)
    return (gp - gm) / (2.0 * h)


def _border_rows(loop, q_basis):
    """In-subspace trivial directions at the current iterate, orthonormalized."""
    rows = []
    for f in trivial_modes(loop):
        vec = to_vector(f)
        reduced = vec if q_basis is None else q_basis.T @ vec
        if np.linalg.norm(reduced) >= 0.5:
            rows.append(reduced / np.linalg.norm(reduced))
    if not rows:
        return None
    c = np.array(rows)
    # orthonormalize; drop numerically dependent rows
    q, r = np.linalg.qr(c.T)
    keep = np.abs(np.diag(r)) > 1e-8
    return q[:, keep].T


def _bordered_solve(h_red, g_red, borders):
    dim = h_red.shape[0]
    if borders is None:
        return scipy.linalg.solve(h_red, -g_red, assume_a="sym")
    nb = borders.shape[0]
    kkt = np.zeros((dim + nb, dim + nb))
    kkt[:dim, :dim] = h_red
    kkt[:dim, dim:] = borders.T
    kkt[dim:, :dim] = borders
    rhs = np.concatenate([-g_red, np.zeros(nb)])
    sol = scipy.linalg.solve(kkt, rhs, assume_a="sym")
    return sol[:dim]


def _near_null_report(loop, pot, h_red, q_basis):
    try:
        eigvals, eigvecs = np.linalg.eigh(h_red)
        idx = int(np.argmin(np.abs(eigvals)))
        vec = eigvecs[:, idx] if q_basis is None else q_basis @ eigvecs[:, idx]
        fld = field_from_vector(loop.period, loop.n_modes, vec)
        label = symmetry.classify([fld], loop)
        return f"near-null eigenvalue {eigvals[idx]:.3e} in irrep {label.pattern}"
    except Exception:
        return "near-null Newton matrix"


def solve(initial, pot, cfg=None):
    """Newton iteration to a stationary loop with ||gradient|| <= tolerance.

    With a projector configured the iteration runs in the invariant subspace
    (the seed is projected first) and the result satisfies P q = q.
    """
    cfg = cfg or SolveConfig()
    loop = initial
    q_basis = None
    if cfg.projector is not None:
        q_basis = subspace_basis(cfg.projector, loop.n_modes)
        u = q_basis @ (q_basis.T @ to_vector(loop))
        loop = loop_from_vector(loop.period, loop.n_modes, u)
    for iteration in range(cfg.max_iterations + 1):
        g = gradient_vector(loop, pot)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.gradient_tol:
            return loop
        if iteration == cfg.max_iterations:
            break
        h = hessian(loop, pot).matrix
        if q_basis is None:
            g_red, h_red = g, h
        else:
            g_red = q_basis.T @ g
            h_red = q_basis.T @ (h @ q_basis)
        borders = _border_rows(loop, q_basis) if cfg.border_trivial else None
        try:
            step = _bordered_solve(h_red, g_red, borders)
        except scipy.linalg.LinAlgError:
            raise ConvergenceError(
                "singular Newton matrix: " + _near_null_report(loop, pot, h_red, q_basis),
                residual=gnorm, iterations=iteration)
        if not np.all(np.isfinite(step)):
            raise ConvergenceError(
                "non-finite Newton step: " + _near_null_report(loop, pot, h_red, q_basis),
                residual=gnorm, iterations=iteration)
        size = np.linalg.norm(step)
        if size > cfg.max_step:
            step *= cfg.max_step / size
        full = q_basis @ step if q_basis is not None else step
        u = to_vector(loop)
        alpha, accepted = 1.0, None
        while alpha >= cfg.min_backtrack:
            try:
                trial = loop_from_vector(loop.period, loop.n_modes, u + alpha * full)
                trial_norm = float(np.linalg.norm(gradient_vector(trial, pot)))
            except CollisionError:
                alpha *= 0.5
                continue
            if trial_norm < gnorm or alpha < 2 * cfg.min_backtrack:
                accepted = trial
                break
            alpha *= 0.5
        if accepted is None:
            raise ConvergenceError(
                "line search failed: " + _near_null_report(loop, pot, h_red, q_basis),
                residual=gnorm, iterations=iteration)
        loop = accepted
    raise ConvergenceError(
        f"no convergence after {cfg.max_iterations} iterations "
        f"(||grad|| = {gnorm:.3e})", residual=gnorm, iterations=cfg.max_iterations)


def minimize_action(initial, pot, projector="PD6", gradient_tol=1e-10,
                    max_iterations=1000, distance_floor=0.05):
    """Local action minimization in an invariant subspace, then Newton polish.

    Used to bootstrap solutions reachable as constrained minimizers, e.g. the
    long-period Lennard-Jones figure-eight.
    """
    from scipy.optimize import minimize as scipy_minimize

    q_basis = subspace_basis(projector, initial.n_modes)
    period, n_modes = initial.period, initial.n_modes
    v0 = q_basis.T @ to_vector(initial)

    def objective(v):
        loop = loop_from_vector(period, n_modes, q_basis @ v)
        if min_pair_distance(loop) < distance_floor:
            return 1e12, np.zeros_like(v)
        return action(loop, pot), q_basis.T @ gradient_vector(loop, pot)

    result = scipy_minimize(objective, v0, jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iterations, "ftol": 1e-15,
                                     "gtol": 1e-9})
    polished = loop_from_vector(period, n_modes, q_basis @ result.x)
    return solve(polished, pot,
                 SolveConfig(projector=projector, gradient_tol=gradient_tol))


def seed_figure_eight(n_modes=DEFAULT_MODES, period=1.0, x_amplitude=None,
                      y_amplitude=None):
    """Two-mode lemniscate ansatz with choreographic phase shifts, projected
    onto the fully symmetric subspace.  Default amplitudes suit the
    homogeneous a=1 potential at unit period; pass explicit amplitudes for
    other regimes (they scale roughly like period^(2/(2+a)))."""
    if x_amplitude is None:
        x_amplitude = 0.32 * period ** (2.0 / 3.0)
    if y_amplitude is None:
        y_amplitude = 0.32 * x_amplitude
    nb = 2 * n_modes + 1
    coeffs = np.zeros((3, 2, nb))
    # body k follows body 0 with delay k T / 3
    for k in range(3):
        phase = 2.0 * np.pi * k / 3.0
        coeffs[k, 0, 1] = x_amplitude * np.sin(phase)
        coeffs[k, 0, n_modes + 1] = x_amplitude * np.cos(phase)
        coeffs[k, 1, 2] = y_amplitude * np.sin(2 * phase)
        coeffs[k, 1, n_modes + 2] = y_amplitude * np.cos(2 * phase)
    seed = LoopPath(period, coeffs)
    return symmetry.project(symmetry.projector("PD6"), seed)


# --- continuation -------------------------------------------------------------

@dataclass
class BranchPoint:
    param: float
    loop: LoopPath
    action_value: float
    morse_index: int | None = None
    kappas: dict | None = None       # irrep pattern -> signed near-zero eigenvalue
    neg_counts: dict | None = None   # irrep pattern -> negative-eigenvalue count
    fold_flag: bool = False


@dataclass
class Branch:
    param_name: str
    potential: Potential
    points: list
    projector: str | None = None
    meta: dict = field(default_factory=dict)

    def params(self):
        return np.array([p.param for p in self.points])

    def fold_indices(self):
        return [i for i, p in enumerate(self.points) if p.fold_flag]

    def segments(self):
        """Index ranges with strictly monotone parameter, split at folds."""
        folds = self.fold_indices()
        bounds = [0] + folds + [len(self.points) - 1]
        return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)
                if bounds[i + 1] > bounds[i]]

    def potential_at(self, xi):
        if self.param_name == "a":
            return self.potential.with_a(xi)
        return self.potential

    def nearest_point(self, xi, segment=None):
        pts = self.points if segment is None else self.points[segment[0]:segment[1] + 1]
        return min(pts, key=lambda p: abs(p.param - xi))


@dataclass(frozen=True)
class ContinuationConfig:
    initial_step: float = 1e-2
    min_step: float = 1e-5
    max_step: float = 1e-1
    grow: float = 1.3
    shrink: float = 0.5
    max_points: int = 3000
    corrector_iterations: int = 8
    corrector_tol: float = 1e-10
    solve: SolveConfig = field(default_factory=lambda: SolveConfig(projector="PD6"))
    compute_spectra: bool = True
    threads: int = 1
    watched: tuple = ("I", "II", "III", "IV", "V", "VI")

    def __post_init__(self):
        if self.min_step <= 0 or self.max_step < self.min_step:
            raise ValidationError("step bounds must satisfy 0 < min <= max")


def _corrector(u, xi, tangent, target_u, target_xi, pot0, param, n_modes,
               period, q_basis, cfg):
    """One pseudo-arclength correction: Newton on the extended system."""
    v = q_basis.T @ u
    t_v, t_xi = tangent
    for _ in range(cfg.corrector_iterations):
        loop = _loop_at(period, n_modes, q_basis @ v, param, xi)
        loop, pot = apply_parameter(loop, pot0, param, xi)
        g = gradient_vector(loop, pot)
        g_red = q_basis.T @ g
        arc = t_v @ (v - q_basis.T @ target_u) + t_xi * (xi - target_xi)
        res = np.sqrt(np.linalg.norm(g_red) ** 2 + arc ** 2)
        if res <= cfg.corrector_tol:
            return loop, pot, xi, True
        h_red = q_basis.T @ (hessian(loop, pot).matrix @ q_basis)
        g_xi = q_basis.T @ gradient_param_derivative(loop, pot, param)
        borders = _border_rows(loop, q_basis)
        nb = 0 if borders is None else borders.shape[0]
        dim = h_red.shape[0]
        jac = np.zeros((dim + nb + 1, dim + nb + 1))
        jac[:dim, :dim] = h_red
        jac[:dim, dim + nb] = g_xi
        if nb:
            jac[:dim, dim:dim + nb] = borders.T
            jac[dim:dim + nb, :dim] = borders
        jac[dim + nb, :dim] = t_v
        jac[dim + nb, dim + nb] = t_xi
        rhs = np.zeros(dim + nb + 1)
        rhs[:dim] = -g_red
        rhs[dim + nb] = -arc
        try:
            delta = scipy.linalg.solve(jac, rhs)
        except scipy.linalg.LinAlgError:
            return None, None, xi, False
        if not np.all(np.isfinite(delta)):
            return None, None, xi, False
        v = v + delta[:dim]
        xi = xi + delta[dim + nb]
    return None, None, xi, False


def continue_branch(seed, pot, param_name, param_range, cfg=None):
    """Pseudo-arclength continuation from a converged seed.

    The seed's parameter value must sit at one end of `param_range` (within
    the initial step).  Walks until the parameter leaves the range, the step
    collapses, or the point budget is exhausted; folds are detected as
    parameter reversals and flagged on the extremal point.
    """
    cfg = cfg or ContinuationConfig()
    lo, hi = sorted(param_range)
    xi0 = parameter_value(seed, pot, param_name)
    if not (abs(xi0 - lo) <= 10 * cfg.initial_step or
            abs(xi0 - hi) <= 10 * cfg.initial_step):
        raise ValidationError(
            f"seed parameter {xi0} is not at an end of the range [{lo}, {hi}]")
    direction = 1.0 if abs(xi0 - lo) <= abs(xi0 - hi) else -1.0

    q_basis = subspace_basis(cfg.solve.projector or "PD6", seed.n_modes)
    n_modes, period = seed.n_modes, seed.period
    loop = solve(seed, pot, replace(cfg.solve, projector=cfg.solve.projector or "PD6"))
    loop, pot_cur = apply_parameter(loop, pot, param_name, xi0)

    points = [BranchPoint(xi0, loop, action(loop, pot_cur))]
    dim = q_basis.shape[1]
    tangent = (np.zeros(dim), direction)
    ds = cfg.initial_step
    aborted = None
    while len(points) < cfg.max_points:
        prev = points[-1]
        u_prev = to_vector(prev.loop)
        target_u = u_prev + ds * (q_basis @ tangent[0])
        target_xi = prev.param + ds * tangent[1]
        loop_new, pot_new, xi_new, ok = _corrector(
            u_prev, target_xi, tangent, target_u, target_xi, pot, param_name,
            n_modes, period, q_basis, cfg)
        if ok:
            try:
                ok = min_pair_distance(loop_new) > 10 * 1e-8
            except Exception:
                ok = False
        if not ok:
            ds *= cfg.shrink
            if ds < cfg.min_step:
                aborted = f"step collapsed below {cfg.min_step} at {prev.param}"
                break
            continue
        dv = q_basis.T @ (to_vector(loop_new) - u_prev)
        dxi = xi_new - prev.param
        scale = np.sqrt(np.linalg.norm(dv) ** 2 + dxi ** 2)
        tangent = (dv / scale, dxi / scale)
        points.append(BranchPoint(xi_new, loop_new, action(loop_new, pot_new)))
        if len(points) >= 3:
            d1 = points[-2].param - points[-3].param
            d2 = points[-1].param - points[-2].param
            if d1 * d2 < 0:
                points[-2].fold_flag = True
        if not (lo - 1e-12 <= xi_new <= hi + 1e-12):
            break
        ds = min(ds * cfg.grow, cfg.max_step)
    branch = Branch(param_name, pot, points, projector=cfg.solve.projector,
                    meta={"range": (lo, hi), "aborted": aborted})
    if cfg.compute_spectra:
        _attach_spectra(branch, cfg)
    return branch


def _attach_spectra(branch, cfg):
    from concurrent.futures import ThreadPoolExecutor

    from .spectrum import irrep_kappas, spectrum

    def fill(point):
        spec = spectrum(point.loop, branch.potential_at(point.param))
        point.morse_index = spec.morse_index
        kappas, negs = irrep_kappas(spec, cfg.watched)
        point.kappas = kappas
        point.neg_counts = negs

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(fill, branch.points))
    else:
        for p in branch.points:
            fill(p)


def solve_at_parameter(branch, xi, cfg=None, segment=None):
    """Re-converge the branch solution at an intermediate parameter value."""
    cfg = cfg or SolveConfig(projector=branch.projector or "PD6")
    near = branch.nearest_point(xi, segment=segment)
    loop, pot = apply_parameter(near.loop, branch.potential_at(near.param),
                                branch.param_name, xi)
    return solve(loop, pot, cfg), pot


def merge_branches(down, up):
    """Join two wings walked from a common seed into one ascending branch."""
    if down.param_name != up.param_name:
        raise ValidationError("cannot merge branches over different parameters")
    pts = sorted(down.points + up.points[1:], key=lambda p: p.param)
    return Branch(down.param_name, down.potential, pts, projector=down.projector,
                  meta={"merged": True, **down.meta, **up.meta})
