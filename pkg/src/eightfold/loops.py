"""Loop space: T-periodic planar three-body paths as truncated Fourier series.

Every path stores, per body k in {0,1,2} and coordinate c in {x,y}, the real
coefficients of

    r_{k,c}(t) = a_0 + sum_{m=1..N} a_m cos(2 pi m t / T) + b_m sin(2 pi m t / T)

in a single array of shape (3, 2, 2N+1) laid out as [a_0, a_1..a_N, b_1..b_N].
The L2 pairing over one period is diagonal in this basis (Parseval), so the
module also provides the map to "vector" coordinates in which that pairing is
the plain dot product; all linear algebra elsewhere happens in those
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLoopError, DimensionMismatchError

DEFAULT_MODES = 64

_PAIRS = ((0, 1), (0, 2), (1, 2))


def _freeze(arr):
    arr = np.array(arr, dtype=float, order="C")
    arr.setflags(write=False)
    return arr


def _check_coeffs(coeffs):
    if coeffs.shape[0] != 3 or coeffs.shape[1] != 2 or coeffs.shape[2] % 2 != 1:
        raise DimensionMismatchError(f"coefficient array has shape {coeffs.shape}, "
                                     "expected (3, 2, 2N+1)")


@dataclass(frozen=True, eq=False)
class LoopPath:
    """A T-periodic planar three-body path."""

    period: float
    coeffs: np.ndarray  # (3, 2, 2N+1)

    def __post_init__(self):
        if not self.period > 0:
            raise DimensionMismatchError("period must be positive")
        _check_coeffs(self.coeffs)
        object.__setattr__(self, "coeffs", _freeze(self.coeffs))

    @property
    def n_modes(self):
        return (self.coeffs.shape[2] - 1) // 2

    def positions(self, t):
        return evaluate(self, t)


@dataclass(frozen=True, eq=False)
class TangentField:
    """A variation over one period; same coefficient layout as LoopPath."""

    period: float
    coeffs: np.ndarray

    def __post_init__(self):
        if not self.period > 0:
            raise DimensionMismatchError("period must be positive")
        _check_coeffs(self.coeffs)
        object.__setattr__(self, "coeffs", _freeze(self.coeffs))

    @property
    def n_modes(self):
        return (self.coeffs.shape[2] - 1) // 2

    def values(self, t):
        return evaluate(self, t)

    def __add__(self, other):
        _require_compatible(self, other)
        return TangentField(self.period, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _require_compatible(self, other)
        return TangentField(self.period, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return TangentField(self.period, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return TangentField(self.period, -self.coeffs)


def _require_compatible(f, g):
    if f.coeffs.shape != g.coeffs.shape:
        raise DimensionMismatchError(
            f"truncation mismatch: {f.coeffs.shape} vs {g.coeffs.shape}")
    if abs(f.period - g.period) > 1e-12 * max(f.period, g.period):
        raise DimensionMismatchError(f"period mismatch: {f.period} vs {g.period}")


def zero_loop(period=1.0, n_modes=DEFAULT_MODES):
    return LoopPath(period, np.zeros((3, 2, 2 * n_modes + 1)))


def zero_field(period=1.0, n_modes=DEFAULT_MODES):
    return TangentField(period, np.zeros((3, 2, 2 * n_modes + 1)))


def evaluate(obj, t):
    """Positions (3, 2) at time t, or (nt, 3, 2) for an array of times.

    Fourier synthesis of the stored series; periodic by construction.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    tt = np.atleast_1d(t)
    n = obj.n_modes
    ang = np.outer(2.0 * np.pi * tt / obj.period, np.arange(1, n + 1))
    basis = np.concatenate(
        [np.ones((tt.size, 1)), np.cos(ang), np.sin(ang)], axis=1)  # (nt, 2N+1)
    vals = np.einsum("ti,kci->tkc", basis, obj.coeffs)
    return vals[0] if scalar else vals


def basis_weights(period, n_modes):
    """Diagonal of the L2 Gram matrix in the [a0, a.., b..] layout."""
    w = np.full(2 * n_modes + 1, 0.5 * period)
    w[0] = period
    return w


def to_vector(obj):
    """Coordinates in the orthonormalized trigonometric basis (length 6(2N+1)).

    The L2 inner product of two fields equals the dot product of these vectors.
    """
    w = np.sqrt(basis_weights(obj.period, obj.n_modes))
    return (obj.coeffs * w).reshape(-1).copy()


def loop_from_vector(period, n_modes, vec):
    return LoopPath(period, _coeffs_from_vector(period, n_modes, vec))


def field_from_vector(period, n_modes, vec):
    return TangentField(period, _coeffs_from_vector(period, n_modes, vec))


def _coeffs_from_vector(period, n_modes, vec):
    nb = 2 * n_modes + 1
    vec = np.asarray(vec, dtype=float)
    if vec.size != 6 * nb:
        raise DimensionMismatchError(f"vector length {vec.size}, expected {6 * nb}")
    w = np.sqrt(basis_weights(period, n_modes))
    return vec.reshape(3, 2, nb) / w


def inner_product(f, g):
    """L2 pairing over one period, summed over all six coordinate channels."""
    _require_compatible(f, g)
    w = basis_weights(f.period, f.n_modes)
    return float(np.sum(f.coeffs * g.coeffs * w))


def norm(f):
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def normalized(f):
    n = norm(f)
    if n < 1e-300:
        raise DegenerateLoopError("cannot normalize a zero field")
    return TangentField(f.period, f.coeffs / n)


def time_derivative(obj):
    """Coefficient-wise d/dt: mode m maps (a_m, b_m) -> (m w b_m, -m w a_m)."""
    n = obj.n_modes
    omega = 2.0 * np.pi / obj.period
    m = np.arange(1, n + 1) * omega
    out = np.zeros_like(obj.coeffs)
    out[:, :, 1:n + 1] = obj.coeffs[:, :, n + 1:] * m
    out[:, :, n + 1:] = -obj.coeffs[:, :, 1:n + 1] * m
    return TangentField(obj.period, out)


def displace(loop, field, amount=1.0):
    _require_compatible(loop, field)
    return LoopPath(loop.period, loop.coeffs + float(amount) * field.coeffs)


def difference(loop_a, loop_b):
    _require_compatible(loop_a, loop_b)
    return TangentField(loop_a.period, loop_a.coeffs - loop_b.coeffs)


def trivial_modes(loop):
    """Unit-normalized zero-mode candidates of the Hessian at a solution.

    Returns [x-translation, y-translation, rotation, time-shift].  The first
    two are exact null directions of any pair-potential Hessian; the last two
    become null at stationary points.
    """
    nb = loop.coeffs.shape[2]
    tx = np.zeros((3, 2, nb))
    tx[:, 0, 0] = 1.0
    ty = np.zeros((3, 2, nb))
    ty[:, 1, 0] = 1.0
    rot = np.empty_like(loop.coeffs)
    rot[:, 0, :] = -loop.coeffs[:, 1, :]
    rot[:, 1, :] = loop.coeffs[:, 0, :]
    shift = time_derivative(loop)
    fields = [TangentField(loop.period, tx), TangentField(loop.period, ty),
              TangentField(loop.period, rot), shift]
    out = []
    for f in fields:
        n = norm(f)
        if n < 1e-12:
            raise DegenerateLoopError("degenerate loop: rotation or time-shift "
                                      "mode vanishes")
        out.append(TangentField(loop.period, f.coeffs / n))
    return out


def fit_coefficients(values, period, n_modes):
    """Fourier analysis of samples on an equispaced grid over one period.

    `values` has shape (M, 3, 2) with M >= 2*n_modes + 1; exact for
    trigonometric polynomials of degree <= n_modes.
    """
    m_pts = values.shape[0]
    if m_pts < 2 * n_modes + 1:
        raise DimensionMismatchError("need at least 2N+1 samples")
    j = np.arange(m_pts)
    ang = np.outer(np.arange(1, n_modes + 1), 2.0 * np.pi * j / m_pts)
    coeffs = np.empty((3, 2, 2 * n_modes + 1))
    coeffs[:, :, 0] = values.mean(axis=0)
    coeffs[:, :, 1:n_modes + 1] = np.einsum("mj,jkc->kcm", np.cos(ang), values) * (2.0 / m_pts)
    coeffs[:, :, n_modes + 1:] = np.einsum("mj,jkc->kcm", np.sin(ang), values) * (2.0 / m_pts)
    return coeffs


def resize_modes(obj, n_modes):
    """Pad or truncate the series to a new mode count."""
    n_old = obj.n_modes
    nb = 2 * n_modes + 1
    out = np.zeros((3, 2, nb))
    n_copy = min(n_old, n_modes)
    out[:, :, 0] = obj.coeffs[:, :, 0]
    out[:, :, 1:n_copy + 1] = obj.coeffs[:, :, 1:n_copy + 1]
    out[:, :, n_modes + 1:n_modes + 1 + n_copy] = obj.coeffs[:, :, n_old + 1:n_old + 1 + n_copy]
    cls = LoopPath if isinstance(obj, LoopPath) else TangentField
    return cls(obj.period, out)


def with_period(loop, period):
    """Same coefficients, new period (time reparameterized)."""
    cls = LoopPath if isinstance(loop, LoopPath) else TangentField
    return cls(period, loop.coeffs)


def remove_uniform_mean(loop):
    """Pin the centre of mass: zero the body-averaged m=0 cosine per coordinate."""
    coeffs = loop.coeffs.copy()
    coeffs[:, :, 0] -= coeffs[:, :, 0].mean(axis=0)
    return LoopPath(loop.period, coeffs)


def random_loop(rng, period=1.0, n_modes=8, amplitude=0.1, decay=0.6,
                separation=2.0):
    """Collision-safe random loop: bodies parked on a triangle plus decaying
    random oscillations.  Used by tests and CLI self-checks."""
    nb = 2 * n_modes + 1
    coeffs = np.zeros((3, 2, nb))
    for k in range(3):
        ang = 2.0 * np.pi * k / 3.0
        coeffs[k, 0, 0] = separation * np.cos(ang)
        coeffs[k, 1, 0] = separation * np.sin(ang)
    env = np.exp(-decay * np.arange(1, n_modes + 1))
    noise = rng.standard_normal((3, 2, 2, n_modes))
    coeffs[:, :, 1:n_modes + 1] = amplitude * noise[:, :, 0, :] * env
    coeffs[:, :, n_modes + 1:] = amplitude * noise[:, :, 1, :] * env
    return LoopPath(period, coeffs)


def random_field(rng, period=1.0, n_modes=8, decay=0.4, unit=True):
    nb = 2 * n_modes + 1
    env = np.ones(nb)
    env[1:n_modes + 1] = np.exp(-decay * np.arange(1, n_modes + 1))
    env[n_modes + 1:] = env[1:n_modes + 1]
    f = TangentField(period, rng.standard_normal((3, 2, nb)) * env)
    return normalized(f) if unit else f
