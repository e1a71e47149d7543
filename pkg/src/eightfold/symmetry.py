"""Loop-space symmetry group of order 12, projectors and irrep classification.

The group is generated by

    B: cycle the bodies, reflect x, shift time by T/6
    S: swap bodies 1 and 2, reverse time, flip overall sign

with B^6 = S^2 = 1 and B S = S B^-1 (dihedral of the regular hexagon).
Every element is stored as a word S^s B^k.  Named aliases: C = B^2
(choreography rotation), M = B^3 (the central element), MS = S B^3.

On Fourier coefficients each element acts by a body permutation, coordinate
sign flips, a per-mode rotation of the (cos, sin) pair, and a sine flip for
time reversal, so all twelve operators are real orthogonal matrices in the
vector basis and are independent of the period.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ClassificationError, DegenerateLoopError, ValidationError
from .loops import LoopPath, TangentField, inner_product, norm, to_vector

_TAU_PERM = (0, 2, 1)


@dataclass(frozen=True)
class GroupElement:
    """Word S^s B^k with s in {0,1} and k in 0..5."""

    s: int
    k: int

    def __post_init__(self):
        object.__setattr__(self, "s", int(self.s) % 2)
        object.__setattr__(self, "k", int(self.k) % 6)

    def __mul__(self, other):
        # (S^s1 B^k1)(S^s2 B^k2) = S^(s1+s2) B^(k1*(-1)^s2 + k2)
        k = (self.k * (-1 if other.s else 1) + other.k) % 6
        return GroupElement(self.s ^ other.s, k)

    def inverse(self):
        if self.s:
            return self  # reflections are involutions
        return GroupElement(0, -self.k)

    @property
    def name(self):
        if self.s == 0:
            return "1" if self.k == 0 else ("B" if self.k == 1 else f"B{self.k}")
        return "S" if self.k == 0 else f"SB{self.k}"


IDENTITY = GroupElement(0, 0)
B = GroupElement(0, 1)
C = GroupElement(0, 2)
M = GroupElement(0, 3)
S = GroupElement(1, 0)
MS = M * S

D6_ELEMENTS = tuple(GroupElement(s, k) for s in (0, 1) for k in range(6))
D2_ELEMENTS = (IDENTITY, M, S, MS)

ELEMENTS_BY_NAME = {g.name: g for g in D6_ELEMENTS}
ELEMENTS_BY_NAME.update({"C": C, "M": M, "MS": MS, "C2": C * C})


def apply(g, obj):
    """Transformed loop or field; same concrete type as the input."""
    n = obj.n_modes
    coeffs = obj.coeffs
    out = np.empty_like(coeffs)
    # body cycle sigma^k then optional tau swap: new_i = old[perm[i]]
    perm = [(i + g.k) % 3 for i in range(3)]
    if g.s:
        perm = [perm[_TAU_PERM[i]] for i in range(3)]
    out[:] = coeffs[perm]
    if g.k % 2 == 1:
        out[:, 0, :] *= -1.0  # x reflection from mu_x^k
    if g.k:
        # time shift by k T/6: rotate each (a_m, b_m) pair
        phases = 2.0 * np.pi * np.arange(1, n + 1) * g.k / 6.0
        cs, sn = np.cos(phases), np.sin(phases)
        a = out[:, :, 1:n + 1].copy()
        b = out[:, :, n + 1:].copy()
        out[:, :, 1:n + 1] = a * cs + b * sn
        out[:, :, n + 1:] = -a * sn + b * cs
    if g.s:
        out[:, :, n + 1:] *= -1.0  # time reversal flips sines
        out *= -1.0                # overall sign of the S generator
    cls = LoopPath if isinstance(obj, LoopPath) else TangentField
    return cls(obj.period, out)


@lru_cache(maxsize=None)
def element_matrix(g, n_modes):
    """Dense orthogonal matrix of g in the vector basis (period-independent)."""
    nb = 2 * n_modes + 1
    dim = 6 * nb
    mat = np.zeros((dim, dim))
    coeffs = np.zeros((3, 2, nb))
    for col in range(dim):
        coeffs.reshape(-1)[col] = 1.0
        transformed = apply(g, TangentField(1.0, coeffs))
        mat[:, col] = transformed.coeffs.reshape(-1)
        coeffs.reshape(-1)[col] = 0.0
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class Projector:
    """Average over the subgroup generated by `generators` (idempotent)."""

    name: str
    generators: tuple

    def subgroup(self):
        elems = {IDENTITY}
        frontier = [IDENTITY]
        while frontier:
            nxt = []
            for e in frontier:
                for g in self.generators:
                    for cand in (e * g, g * e):
                        if cand not in elems:
                            elems.add(cand)
                            nxt.append(cand)
            frontier = nxt
        return tuple(sorted(elems, key=lambda e: (e.s, e.k)))


PROJECTORS = {
    "PC": Projector("PC", (C,)),
    "PM": Projector("PM", (M,)),
    "PS": Projector("PS", (S,)),
    "PMS": Projector("PMS", (MS,)),
    "PC*PM": Projector("PC*PM", (C, M)),
    "PC*PS": Projector("PC*PS", (C, S)),
    "PC*PMS": Projector("PC*PMS", (C, MS)),
    "PM*PS": Projector("PM*PS", (M, S)),
    "PC*PM*PS": Projector("PC*PM*PS", (C, M, S)),
    "PD6": Projector("PD6", (B, S)),
}


def projector(name):
    try:
        return PROJECTORS[name]
    except KeyError:
        raise ValidationError(f"unknown projector {name!r}; expected one of "
                              f"{sorted(PROJECTORS)}") from None


def project(p, obj):
    """Subgroup average; the output is invariant under every subgroup element."""
    elems = p.subgroup()
    acc = np.zeros_like(obj.coeffs)
    for g in elems:
        acc += apply(g, obj).coeffs
    cls = LoopPath if isinstance(obj, LoopPath) else TangentField
    return cls(obj.period, acc / len(elems))


@lru_cache(maxsize=None)
def projector_matrix(name, n_modes):
    p = projector(name)
    elems = p.subgroup()
    mat = sum(element_matrix(g, n_modes) for g in elems) / len(elems)
    mat = 0.5 * (mat + mat.T)
    mat.setflags(write=False)
    return mat


def invariance_residual(g, loop):
    """L2 distance between g.q and q, relative to the loop scale."""
    moved = apply(g, loop)
    diff = TangentField(loop.period, moved.coeffs - loop.coeffs)
    return norm(diff) / max(1.0, norm(TangentField(loop.period, loop.coeffs)))


def detect_symmetry_group(loop, tol=1e-6):
    """Return "D6" or "D2" according to which generators fix the loop."""
    if invariance_residual(B, loop) <= tol and invariance_residual(S, loop) <= tol:
        return "D6"
    if invariance_residual(M, loop) <= tol and invariance_residual(S, loop) <= tol:
        return "D2"
    raise DegenerateLoopError("loop is invariant under neither the full group "
                              "nor the order-4 subgroup")


# --- irreducible representations ---------------------------------------------

@dataclass(frozen=True)
class IrrepLabel:
    group: str        # "D6" or "D2"
    pattern: str      # "I".."VI" or "I'".."IV'"
    pcprime: int | None   # 1 or 0 (None in D2 mode)
    mprime: int       # +1 or -1
    sprime: int       # +1, -1, or 0 meaning "both signs" (d = 2)
    d: int


@dataclass(frozen=True)
class BifurcationPattern:
    irrep: IrrepLabel
    projector_name: str
    residual_group: str
    order: int
    kind: str         # fold / one-side / both-sides / double one-side


_D6_ROWS = (
    ("I", 1, 1, 1, 1, (("PC*PM*PS", "D6"),), 1, "fold"),
    ("II", 1, 1, -1, 1, (("PC*PM", "C6"),), 2, "one-side"),
    ("III", 1, -1, 1, 1, (("PC*PS", "D3"),), 2, "one-side"),
    ("IV", 1, -1, -1, 1, (("PC*PMS", "D3'"),), 2, "one-side"),
    ("V", 0, 1, 0, 2, (("PM*PS", "D2"),), 1, "both-sides"),
    ("VI", 0, -1, 0, 2, (("PS", "D1"), ("PMS", "D1'")), 2, "double one-side"),
)

_D2_ROWS = (
    ("I'", 1, 1, 1, (("PM*PS", "D2"),), 1, "fold"),
    ("II'", 1, -1, 1, (("PM", "C2"),), 2, "one-side"),
    ("III'", -1, 1, 1, (("PS", "D1"),), 2, "one-side"),
    ("IV'", -1, -1, 1, (("PMS", "D1'"),), 2, "one-side"),
)

D6_LABELS = {row[0]: IrrepLabel("D6", row[0], row[1], row[2], row[3], row[4])
             for row in _D6_ROWS}
D2_LABELS = {row[0]: IrrepLabel("D2", row[0], None, row[1], row[2], row[3])
             for row in _D2_ROWS}

def bifurcation_pattern(label):
    """All table rows for a label; one row except for the faithful 2-dim irrep."""
    rows = _D6_ROWS if label.group == "D6" else _D2_ROWS
    for row in rows:
        if row[0] == label.pattern:
            branches = row[-3]
            order, kind = row[-2], row[-1]
            return tuple(
                BifurcationPattern(label, pn, grp, order, kind)
                for pn, grp in branches)
    raise ValidationError(f"unknown irrep pattern {label.pattern!r}")


def pattern_table():
    """JSON-ready mirror of the two irrep tables."""
    def sig(v):
        return "±1" if v == 0 else str(v)

    d6 = [{"pattern": name, "pcprime": str(pc), "mprime": sig(mp),
           "sprime": sig(sp), "d": d,
           "projector": " or ".join(pn for pn, _ in branches),
           "group": " or ".join(grp for _, grp in branches),
           "order": order, "type": kind}
          for name, pc, mp, sp, d, branches, order, kind in _D6_ROWS]
    d2 = [{"pattern": name, "mprime": sig(mp), "sprime": sig(sp), "d": d,
           "projector": branches[0][0], "group": branches[0][1],
           "order": order, "type": kind}
          for name, mp, sp, d, branches, order, kind in _D2_ROWS]
    return {"D6": d6, "D2": d2}


def _restriction(g, basis_vectors, n_modes):
    mat = element_matrix(g, n_modes)
    v = np.column_stack(basis_vectors)
    return v.T @ (mat @ v)


def _scalar_of(restriction, targets, tol, what):
    dim = restriction.shape[0]
    for t in targets:
        if np.max(np.abs(restriction - t * np.eye(dim))) <= tol:
            return t
    raise ClassificationError(
        f"{what} restriction is not a scalar from {targets}",
        signature=restriction.copy())


def classify(fields, q_o, tol=1e-4):
    """Irrep label of an eigenspace spanned by `fields` at the solution q_o.

    For two-dimensional spaces the returned basis information lives in the
    caller (see spectrum.EigenMode); this function only measures the
    signature.  Raises ClassificationError when no table row matches.
    """
    group = detect_symmetry_group(q_o)
    n_modes = fields[0].n_modes
    vecs = [to_vector(f) for f in fields]
    d = len(vecs)
    if group == "D6":
        pc = np.column_stack(vecs).T @ (projector_matrix("PC", n_modes)
                                        @ np.column_stack(vecs))
        pcprime = int(_scalar_of(pc, (1, 0), tol, "PC"))
        mprime = int(_scalar_of(_restriction(M, vecs, n_modes), (1, -1), tol, "M"))
        if d == 1:
            sprime = int(_scalar_of(_restriction(S, vecs, n_modes), (1, -1), tol, "S"))
            for label in D6_LABELS.values():
                if (label.d, label.pcprime, label.mprime, label.sprime) == \
                        (1, pcprime, mprime, sprime):
                    return label
        elif d == 2:
            s_eig = np.linalg.eigvalsh(_restriction(S, vecs, n_modes))
            if np.max(np.abs(np.sort(s_eig) - np.array([-1.0, 1.0]))) > tol:
                raise ClassificationError("2-dim eigenspace has S eigenvalues "
                                          f"{s_eig}, expected -1, +1",
                                          signature=(pcprime, mprime, s_eig))
            for label in D6_LABELS.values():
                if (label.d, label.pcprime, label.mprime) == (2, pcprime, mprime):
                    return label
        raise ClassificationError(
            f"signature (PC'={pcprime}, M'={mprime}, d={d}) matches no row",
            signature=(pcprime, mprime, d))
    # D2 mode: generators M and S only, all irreps one-dimensional
    if d != 1:
        raise ClassificationError(f"D2 eigenspaces are one-dimensional, got d={d}",
                                  signature=d)
    mprime = int(_scalar_of(_restriction(M, vecs, n_modes), (1, -1), tol, "M"))
    sprime = int(_scalar_of(_restriction(S, vecs, n_modes), (1, -1), tol, "S"))
    for label in D2_LABELS.values():
        if (label.mprime, label.sprime) == (mprime, sprime):
            return label
    raise ClassificationError("unreachable D2 signature",
                              signature=(mprime, sprime))


def s_diagonal_basis(fields, tol=1e-4):
    """Rotate a 2-dim eigenspace into (phi_plus, phi_minus) with S phi = +/- phi."""
    n_modes = fields[0].n_modes
    vecs = [to_vector(f) for f in fields]
    s_rest = _restriction(S, vecs, n_modes)
    eigvals, eigvecs = np.linalg.eigh(s_rest)
    if np.max(np.abs(np.sort(eigvals) - np.array([-1.0, 1.0]))) > tol:
        raise ClassificationError(f"S eigenvalues {eigvals} not -1, +1",
                                  signature=eigvals)
    v = np.column_stack(vecs) @ eigvecs
    minus = v[:, 0] / np.linalg.norm(v[:, 0])
    plus = v[:, 1] / np.linalg.norm(v[:, 1])
    period = fields[0].period
    from .loops import field_from_vector
    return (field_from_vector(period, n_modes, plus),
            field_from_vector(period, n_modes, minus))
