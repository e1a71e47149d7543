"""Pair potentials and their radial derivative stacks.

Both supported interactions have the "opposite of the potential energy" sign
convention, so the Lagrangian is kinetic plus potential term and the equations
of motion read m q'' = dU/dq:

    homogeneous:    u(r) = r^(-a) / a,  a > -2, a != 0
    lennard_jones:  u(r) = r^(-6) - r^(-12)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

HOMOGENEOUS = "homogeneous"
LENNARD_JONES = "lennard_jones"


@dataclass(frozen=True)
class Potential:
    kind: str
    a: float | None = None

    def __post_init__(self):
        if self.kind == HOMOGENEOUS:
            if self.a is None:
                raise ValidationError("homogeneous potential requires exponent a")
            if not self.a > -2.0:
                raise ValidationError(f"homogeneous exponent a={self.a} must satisfy a > -2")
            if self.a == 0.0:
                raise ValidationError("homogeneous exponent must satisfy a != 0 "
                                      "(the 1/a prefactor is singular)")
        elif self.kind == LENNARD_JONES:
            if self.a is not None:
                raise ValidationError("lennard_jones takes no exponent")
        else:
            raise ValidationError(f"unknown potential kind {self.kind!r}")

    def with_a(self, a):
        return Potential(HOMOGENEOUS, float(a))


def homogeneous(a):
    return Potential(HOMOGENEOUS, float(a))


def lennard_jones():
    return Potential(LENNARD_JONES)


def pair_value(pot, r):
    r = np.asarray(r, dtype=float)
    if pot.kind == HOMOGENEOUS:
        return r ** (-pot.a) / pot.a
    return r ** (-6) - r ** (-12)


def pair_derivatives(pot, r, order):
    """Radial derivatives u', u'', ... up to `order` (1..4), vectorized in r."""
    if not 1 <= order <= 4:
        raise ValidationError(f"derivative order {order} outside 1..4")
    r = np.asarray(r, dtype=float)
    if pot.kind == HOMOGENEOUS:
        a = pot.a
        out = [-r ** (-a - 1)]
        fac = 1.0
        for n in range(2, order + 1):
            fac *= a + n - 1
            out.append((-1) ** n * fac * r ** (-a - n))
    else:
        out = [-6 * r ** (-7) + 12 * r ** (-13)]
        if order >= 2:
            out.append(42 * r ** (-8) - 156 * r ** (-14))
        if order >= 3:
            out.append(-336 * r ** (-9) + 2184 * r ** (-15))
        if order >= 4:
            out.append(3024 * r ** (-10) - 32760 * r ** (-16))
    return out[:order]


def pair_first_derivative_da(pot, r):
    """d/da of u'(r); used for parameter derivatives along continuation in a."""
    if pot.kind != HOMOGENEOUS:
        raise ValidationError("exponent derivative only defined for homogeneous")
    r = np.asarray(r, dtype=float)
    return r ** (-pot.a - 1) * np.log(r)
