"""Action functional, gradient, Hessian and higher directional derivatives.

The discrete action is the exact quadratic kinetic term (Parseval) plus a
trapezoid collocation of the potential term.  Every derivative here is the
exact derivative of that discrete functional, so gradient, Hessian and
bracket integrals form a consistent chain; finite differences of `action`
reproduce them to rounding error.

The collocation grid size is the smallest multiple of 12 at or above
4(2N+1).  Divisibility by 12 makes the grid invariant under time shifts by
multiples of T/6 and under time reversal, which in turn makes the discrete
action invariant under the full loop-space symmetry group to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollisionError, ValidationError
from .loops import (basis_weights, displace, field_from_vector, norm,
                    to_vector)
from .potentials import pair_derivatives, pair_value

COLLISION_THRESHOLD = 1e-8

_PAIRS = ((0, 1), (0, 2), (1, 2))

_grid_cache: dict[int, dict] = {}


def collocation_size(n_modes):
    base = 4 * (2 * n_modes + 1)
    return ((base + 11) // 12) * 12


def _grid(n_modes):
    """Cached synthesis matrices for the collocation grid (period-free)."""
    cached = _grid_cache.get(n_modes)
    if cached is not None:
        return cached
    m_pts = collocation_size(n_modes)
    j = np.arange(m_pts)
    ang = np.outer(2.0 * np.pi * j / m_pts, np.arange(1, n_modes + 1))
    phi = np.concatenate(
        [np.ones((m_pts, 1)), np.cos(ang), np.sin(ang)], axis=1)
    cached = {"m": m_pts, "phi": phi, "phi_t": np.ascontiguousarray(phi.T)}
    _grid_cache[n_modes] = cached
    return cached


def collocation_values(loop):
    """Positions at the collocation points, shape (M, 3, 2)."""
    g = _grid(loop.n_modes)
    nb = loop.coeffs.shape[2]
    return (g["phi"] @ loop.coeffs.reshape(6, nb).T).reshape(g["m"], 3, 2)


def _pair_geometry(loop, check=True):
    """Separations d_ij, distances and unit vectors at collocation points."""
    pos = collocation_values(loop)
    d = np.stack([pos[:, i, :] - pos[:, j, :] for i, j in _PAIRS], axis=0)  # (3, M, 2)
    r = np.sqrt(np.sum(d * d, axis=2))  # (3, M)
    if check and r.min() < COLLISION_THRESHOLD:
        p, jt = np.unravel_index(np.argmin(r), r.shape)
        t = jt * loop.period / _grid(loop.n_modes)["m"]
        raise CollisionError(t, _PAIRS[p], r[p, jt])
    return pos, d, r


def min_pair_distance(loop):
    """Smallest pairwise distance over the collocation grid."""
    _, _, r = _pair_geometry(loop, check=False)
    return float(r.min())


def kinetic_energy_term(loop):
    """Exact integral of (1/2) sum_k |dr_k/dt|^2 over one period."""
    n = loop.n_modes
    omega = 2.0 * np.pi / loop.period
    m2 = (np.arange(1, n + 1) * omega) ** 2
    osc = loop.coeffs[:, :, 1:n + 1] ** 2 + loop.coeffs[:, :, n + 1:] ** 2
    return 0.25 * loop.period * float(np.sum(osc * m2))


def potential_term(loop, pot):
    _, _, r = _pair_geometry(loop)
    g = _grid(loop.n_modes)
    return loop.period / g["m"] * float(np.sum(pair_value(pot, r)))


def action(loop, pot):
    """S[q] = integral of kinetic term plus potential term over one period."""
    return kinetic_energy_term(loop) + potential_term(loop, pot)


def _kinetic_diag(period, n_modes):
    """Diagonal of the kinetic Hessian block in vector coordinates."""
    omega = 2.0 * np.pi / period
    m = np.concatenate([[0.0], np.arange(1, n_modes + 1),
                        np.arange(1, n_modes + 1)]) * omega
    return np.tile(m * m, 6)


def _potential_forces(loop, pot):
    """dU/dq at collocation points, shape (M, 3, 2)."""
    pos, d, r = _pair_geometry(loop)
    (u1,) = pair_derivatives(pot, r, 1)
    f = np.zeros_like(pos)
    for p, (i, j) in enumerate(_PAIRS):
        contrib = (u1[p] / r[p])[:, None] * d[p]
        f[:, i, :] += contrib
        f[:, j, :] -= contrib
    return f


def _values_to_vector(loop, values):
    """Adjoint of collocation synthesis: (T/M) Phi^T values, vector coords."""
    g = _grid(loop.n_modes)
    nb = loop.coeffs.shape[2]
    w = np.sqrt(basis_weights(loop.period, loop.n_modes))
    raw = g["phi_t"] @ values.reshape(g["m"], 6)  # (nb, 6)
    return (loop.period / g["m"]) * (raw.T / w).reshape(-1)


def gradient_vector(loop, pot):
    u = to_vector(loop)
    grad = _kinetic_diag(loop.period, loop.n_modes) * u
    if pot is not None:
        grad += _values_to_vector(loop, _potential_forces(loop, pot))
    return grad


def gradient(loop, pot):
    """L2 representer of the first variation; zero exactly at solutions."""
    return field_from_vector(loop.period, loop.n_modes,
                             gradient_vector(loop, pot))


@dataclass(frozen=True)
class HessianMatrix:
    """Dense symmetric second variation in the orthonormalized trig basis.

    Ordering: channels (body0.x, body0.y, .., body2.y), each holding
    [a_0, a_1..a_N, b_1..b_N] scaled so the L2 pairing is the dot product.
    """

    matrix: np.ndarray
    period: float
    n_modes: int

    @property
    def norm(self):
        return float(np.linalg.norm(self.matrix, 2))

    def apply_field(self, field):
        vec = self.matrix @ to_vector(field)
        return field_from_vector(self.period, self.n_modes, vec)


def _pair_hessian_blocks(d, r, u1, u2):
    """2x2 blocks u'' n n^T + (u'/r)(I - n n^T) for every pair and point."""
    n = d / r[:, :, None]
    blocks = np.empty(d.shape[:2] + (2, 2))
    radial = u2 - u1 / r
    blocks[:, :, 0, 0] = radial * n[:, :, 0] ** 2 + u1 / r
    blocks[:, :, 1, 1] = radial * n[:, :, 1] ** 2 + u1 / r
    blocks[:, :, 0, 1] = radial * n[:, :, 0] * n[:, :, 1]
    blocks[:, :, 1, 0] = blocks[:, :, 0, 1]
    return blocks


def hessian(loop, pot):
    """Second variation as a dense matrix; `pot=None` gives the free-particle
    (kinetic-only) operator used as a test hook."""
    nb = loop.coeffs.shape[2]
    dim = 6 * nb
    h = np.zeros((dim, dim))
    idx = np.arange(dim)
    h[idx, idx] = _kinetic_diag(loop.period, loop.n_modes)
    if pot is not None:
        pos, d, r = _pair_geometry(loop)
        u1, u2 = pair_derivatives(pot, r, 2)
        blocks = _pair_hessian_blocks(d, r, u1, u2)
        g = _grid(loop.n_modes)
        m_pts = g["m"]
        w = np.sqrt(basis_weights(loop.period, loop.n_modes))
        phi_u = g["phi"] / w  # (M, nb)
        # channel-pair weights: A = 2*body + coord
        wmat = np.zeros((m_pts, 6, 6))
        for p, (i, j) in enumerate(_PAIRS):
            b = blocks[p]
            wmat[:, 2 * i:2 * i + 2, 2 * i:2 * i + 2] += b
            wmat[:, 2 * j:2 * j + 2, 2 * j:2 * j + 2] += b
            wmat[:, 2 * i:2 * i + 2, 2 * j:2 * j + 2] -= b
            wmat[:, 2 * j:2 * j + 2, 2 * i:2 * i + 2] -= b
        scale = loop.period / m_pts
        for a_ch in range(6):
            for b_ch in range(a_ch, 6):
                col = wmat[:, a_ch, b_ch]
                if not np.any(col):
                    continue
                block = phi_u.T @ (col[:, None] * phi_u) * scale
                h[a_ch * nb:(a_ch + 1) * nb, b_ch * nb:(b_ch + 1) * nb] += block
                if b_ch != a_ch:
                    h[b_ch * nb:(b_ch + 1) * nb, a_ch * nb:(a_ch + 1) * nb] += block.T
    h = 0.5 * (h + h.T)
    return HessianMatrix(h, loop.period, loop.n_modes)


def _field_pair_projections(loop, d, r, fields):
    """Per pair: difference values df = f_i - f_j and radial components."""
    n = d / r[:, :, None]
    diffs, radial = [], []
    for f in fields:
        vals = collocation_values(f)
        df = np.stack([vals[:, i, :] - vals[:, j, :] for i, j in _PAIRS], axis=0)
        diffs.append(df)
        radial.append(np.sum(df * n, axis=2))
    return n, diffs, radial


def _check_fields(loop, fields):
    for f in fields:
        if f.coeffs.shape != loop.coeffs.shape:
            raise ValidationError("field truncation does not match loop")


def _bracket3_terms(r, u1, u2, u3):
    # coefficients of the contracted third radial derivative tensor
    big_a = u3 - 3.0 * u2 / r + 3.0 * u1 / r ** 2
    big_b = u2 / r - u1 / r ** 2
    return big_a, big_b


def _bracket4_terms(r, u1, u2, u3, u4):
    alpha = u4 - 6.0 * u3 / r + 15.0 * u2 / r ** 2 - 15.0 * u1 / r ** 3
    beta = u3 / r - 3.0 * u2 / r ** 2 + 3.0 * u1 / r ** 3
    delta = u2 / r ** 2 - u1 / r ** 3
    return alpha, beta, delta


def bracket(loop, pot, fields):
    """n-th directional derivative <f g .. h> of the potential term, n = len(fields).

    Orders 3 and 4 are exact tensor contractions of the analytic radial
    derivatives.  Orders 5 and 6 are Richardson-extrapolated central
    differences of the order-4 bracket along the trailing field(s).
    """
    n_fields = len(fields)
    if not 3 <= n_fields <= 6:
        raise ValidationError(f"bracket supports 3..6 fields, got {n_fields}")
    _check_fields(loop, fields)
    if n_fields == 3:
        return _bracket3(loop, pot, fields)
    if n_fields == 4:
        return _bracket4(loop, pot, fields)
    if n_fields == 5:
        return _directional_bracket(
            lambda lp: _bracket4(lp, pot, fields[:4]), loop, fields[4])
    inner = fields[:4]

    def b4_shifted(lp):
        return _bracket4(lp, pot, inner)

    def b5_at(lp):
        return _directional_bracket(b4_shifted, lp, fields[4])

    return _directional_bracket(b5_at, loop, fields[5])


def _directional_bracket(func, loop, field, step=1e-3):
    h = step / max(1.0, norm(field))

    def central(hh):
        return (func(displace(loop, field, hh)) -
                func(displace(loop, field, -hh))) / (2.0 * hh)

    return (4.0 * central(0.5 * h) - central(h)) / 3.0


def _bracket3(loop, pot, fields):
    _, d, r = _pair_geometry(loop)
    u1, u2, u3 = pair_derivatives(pot, r, 3)
    big_a, big_b = _bracket3_terms(r, u1, u2, u3)
    _, diffs, rad = _field_pair_projections(loop, d, r, fields)
    pf, pg, ph = rad
    fg = np.sum(diffs[0] * diffs[1], axis=2)
    fh = np.sum(diffs[0] * diffs[2], axis=2)
    gh = np.sum(diffs[1] * diffs[2], axis=2)
    total = big_a * pf * pg * ph + big_b * (fg * ph + fh * pg + gh * pf)
    g = _grid(loop.n_modes)
    return loop.period / g["m"] * float(np.sum(total))


def _bracket4(loop, pot, fields):
    _, d, r = _pair_geometry(loop)
    u1, u2, u3, u4 = pair_derivatives(pot, r, 4)
    alpha, beta, delta = _bracket4_terms(r, u1, u2, u3, u4)
    _, diffs, rad = _field_pair_projections(loop, d, r, fields)
    pf, pg, ph, pl = rad
    dots = {}
    for ia in range(4):
        for ib in range(ia + 1, 4):
            dots[ia, ib] = np.sum(diffs[ia] * diffs[ib], axis=2)
    pair_terms = (dots[0, 1] * ph * pl + dots[0, 2] * pg * pl +
                  dots[0, 3] * pg * ph + dots[1, 2] * pf * pl +
                  dots[1, 3] * pf * ph + dots[2, 3] * pf * pg)
    triple = (dots[0, 1] * dots[2, 3] + dots[0, 2] * dots[1, 3] +
              dots[0, 3] * dots[1, 2])
    total = alpha * pf * pg * ph * pl + beta * pair_terms + delta * triple
    g = _grid(loop.n_modes)
    return loop.period / g["m"] * float(np.sum(total))


def _scatter_pair_values(loop, per_pair):
    """Accumulate per-pair 2-vectors (+ into body i, - into body j)."""
    g = _grid(loop.n_modes)
    out = np.zeros((g["m"], 3, 2))
    for p, (i, j) in enumerate(_PAIRS):
        out[:, i, :] += per_pair[p]
        out[:, j, :] -= per_pair[p]
    return out


def bracket3_representer(loop, pot, f, g_field):
    """Field v with <f g h> = inner_product(v, h) for every h."""
    _check_fields(loop, [f, g_field])
    _, d, r = _pair_geometry(loop)
    u1, u2, u3 = pair_derivatives(pot, r, 3)
    big_a, big_b = _bracket3_terms(r, u1, u2, u3)
    n, diffs, rad = _field_pair_projections(loop, d, r, [f, g_field])
    pf, pg = rad
    fg = np.sum(diffs[0] * diffs[1], axis=2)
    per_pair = ((big_a * pf * pg + big_b * fg)[:, :, None] * n +
                big_b[:, :, None] * (pg[:, :, None] * diffs[0] +
                                     pf[:, :, None] * diffs[1]))
    vec = _values_to_vector(loop, _scatter_pair_values(loop, per_pair))
    return field_from_vector(loop.period, loop.n_modes, vec)


def bracket4_representer(loop, pot, f, g_field, h_field):
    """Field v with <f g h l> = inner_product(v, l) for every l."""
    _check_fields(loop, [f, g_field, h_field])
    _, d, r = _pair_geometry(loop)
    u1, u2, u3, u4 = pair_derivatives(pot, r, 4)
    alpha, beta, delta = _bracket4_terms(r, u1, u2, u3, u4)
    n, diffs, rad = _field_pair_projections(loop, d, r, [f, g_field, h_field])
    pf, pg, ph = rad
    fg = np.sum(diffs[0] * diffs[1], axis=2)
    fh = np.sum(diffs[0] * diffs[2], axis=2)
    gh = np.sum(diffs[1] * diffs[2], axis=2)
    per_pair = (
        (alpha * pf * pg * ph + beta * (fg * ph + fh * pg + gh * pf))[:, :, None] * n
        + beta[:, :, None] * (pg[:, :, None] * ph[:, :, None] * diffs[0] +
                              pf[:, :, None] * ph[:, :, None] * diffs[1] +
                              pf[:, :, None] * pg[:, :, None] * diffs[2])
        + delta[:, :, None] * (fg[:, :, None] * diffs[2] +
                               fh[:, :, None] * diffs[1] +
                               gh[:, :, None] * diffs[0]))
    vec = _values_to_vector(loop, _scatter_pair_values(loop, per_pair))
    return field_from_vector(loop.period, loop.n_modes, vec)


def angular_momentum(loop):
    """c = (1/T) integral of sum_k r_k x dr_k/dt, exactly from coefficients."""
    n = loop.n_modes
    omega = 2.0 * np.pi / loop.period
    m = np.arange(1, n + 1) * omega
    ax = loop.coeffs[:, 0, 1:n + 1]
    bx = loop.coeffs[:, 0, n + 1:]
    ay = loop.coeffs[:, 1, 1:n + 1]
    by = loop.coeffs[:, 1, n + 1:]
    return float(np.sum(m * (ax * by - bx * ay)))
