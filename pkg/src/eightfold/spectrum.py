"""Classified Hessian spectra, Morse index and bifurcation-event detection.

Eigenvalues of the second variation at a symmetric stationary loop are
grouped into degenerate clusters, the four conservation-law null directions
are split off by overlap with the trivial-mode span, and the remaining
eigenspaces are labeled by irreducible representations.  Crossings of a
labeled eigenvalue through zero along a continuation branch are bracketed by
per-irrep Morse-count changes and refined by bisection plus a secant polish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symmetry
from .action import hessian
from .errors import ClassificationError, ConvergenceError, DegenerateLoopError
from .loops import LoopPath, field_from_vector, to_vector, trivial_modes
from .potentials import Potential
from .solver import Branch, SolveConfig, solve_at_parameter

TRIVIAL_OVERLAP = 0.99
_CLUSTER_GAP = 1e-7


@dataclass(frozen=True)
class EigenMode:
    """One labeled eigenspace: eigenvalue, orthonormal fields, irrep tag."""

    eigenvalue: float
    fields: tuple
    label: symmetry.IrrepLabel | None
    trivial: bool

    @property
    def degeneracy(self):
        return len(self.fields)


@dataclass(frozen=True)
class ClassifiedSpectrum:
    loop: LoopPath
    potential: Potential | None
    modes: tuple
    morse_index: int
    hnorm: float
    group: str

    def nontrivial(self):
        return [m for m in self.modes if not m.trivial]

    def trivial(self):
        return [m for m in self.modes if m.trivial]

    def by_pattern(self, pattern):
        return [m for m in self.nontrivial() if m.label.pattern == pattern]

    def retained(self, exclude=()):
        """(eigenvalues, vector matrix) of all nontrivial modes outside `exclude`."""
        vals, vecs = [], []
        skip = set(id(m) for m in exclude)
        for m in self.nontrivial():
            if id(m) in skip:
                continue
            for f in m.fields:
                vals.append(m.eigenvalue)
                vecs.append(to_vector(f))
        return np.array(vals), (np.column_stack(vecs) if vecs else
                                np.zeros((to_vector(self.loop).size, 0)))


def _clusters(eigvals, scale):
    groups, start = [], 0
    tol = _CLUSTER_GAP * max(scale, 1.0)
    for i in range(1, len(eigvals) + 1):
        if i == len(eigvals) or eigvals[i] - eigvals[i - 1] > tol:
            groups.append((start, i))
            start = i
    return groups


def _split_trivial(vecs, triv_basis):
    """Rotate a degenerate cluster so trivial directions separate cleanly.

    Returns (trivial_columns, other_columns)."""
    overlap = triv_basis.T @ vecs  # (4, d)
    _, svals, vt = np.linalg.svd(overlap)
    rotated = vecs @ vt.T
    svals = np.concatenate([svals, np.zeros(vecs.shape[1] - svals.size)])
    is_trivial = svals >= np.sqrt(TRIVIAL_OVERLAP)
    return rotated[:, is_trivial], rotated[:, ~is_trivial]


def _split_by_operator(vecs, op, targets, tol=1e-4):
    """Partition an eigenspace by the eigenvalues of a restricted operator."""
    rest = vecs.T @ (op @ vecs)
    rest = 0.5 * (rest + rest.T)
    eigvals, eigvecs = np.linalg.eigh(rest)
    pieces = []
    used = np.zeros(len(eigvals), dtype=bool)
    for t in targets:
        sel = np.abs(eigvals - t) <= tol
        used |= sel
        if np.any(sel):
            pieces.append((t, vecs @ eigvecs[:, sel]))
    if not np.all(used):
        raise ClassificationError(
            f"restricted operator eigenvalues {eigvals} not within {tol} of "
            f"{targets}", signature=eigvals)
    return pieces


def _pair_two_dim(block, mprime, n_modes, tol=1e-4):
    """Decompose an isotypic block of a 2-dim irrep into (phi+, phi-) pairs.

    For each S-even unit vector, the rotation relation of the generator
    fixes its S-odd partner: B phi+ = cos(a) phi+ +/- sin(a) phi- with
    a = 2 pi/3 (M' = +1) or pi/3 (M' = -1), so phi- is recovered by
    projecting B phi+ off phi+.  Works for any multiplicity.
    """
    s_mat = symmetry.element_matrix(symmetry.S, n_modes)
    pieces = dict((t, b) for t, b in _split_by_operator(block, s_mat, (1.0, -1.0)))
    plus = pieces.get(1.0)
    minus = pieces.get(-1.0)
    if plus is None or minus is None or plus.shape[1] != minus.shape[1]:
        raise ClassificationError(
            "two-dimensional irrep block has unbalanced S parities",
            signature=(None if plus is None else plus.shape,
                       None if minus is None else minus.shape))
    cos_a = -0.5 if mprime == 1 else 0.5
    sin_a = np.sqrt(3.0) / 2.0
    b_mat = symmetry.element_matrix(symmetry.B, n_modes)
    pairs = []
    for p in plus.T:
        q = (b_mat @ p - cos_a * p) / sin_a
        if abs(np.linalg.norm(q) - 1.0) > tol:
            raise ClassificationError(
                "generator rotation relation violated on eigenspace",
                signature=np.linalg.norm(q))
        pairs.append(np.column_stack([p, q / np.linalg.norm(q)]))
    return pairs


def _classify_cluster(vecs, q_o, n_modes, group):
    """Split a (possibly accidentally degenerate) cluster into labeled pieces."""
    out = []
    if group == "D6":
        pc = symmetry.projector_matrix("PC", n_modes)
        m_mat = symmetry.element_matrix(symmetry.M, n_modes)
        s_mat = symmetry.element_matrix(symmetry.S, n_modes)
        for pcp, block_c in _split_by_operator(vecs, pc, (1.0, 0.0)):
            for mp, block_m in _split_by_operator(block_c, m_mat, (1.0, -1.0)):
                if pcp == 1.0:
                    # one-dimensional representations; split by S parity
                    for sp, block_s in _split_by_operator(block_m, s_mat, (1.0, -1.0)):
                        for col in block_s.T:
                            out.append((col[:, None],
                                        _lookup_d6(1, int(pcp), int(mp), int(sp))))
                else:
                    label = _lookup_d6(2, int(pcp), int(mp), 0)
                    for pair in _pair_two_dim(block_m, int(mp), n_modes):
                        out.append((pair, label))
    else:
        m_mat = symmetry.element_matrix(symmetry.M, n_modes)
        s_mat = symmetry.element_matrix(symmetry.S, n_modes)
        for mp, block_m in _split_by_operator(vecs, m_mat, (1.0, -1.0)):
            for sp, block_s in _split_by_operator(block_m, s_mat, (1.0, -1.0)):
                for col in block_s.T:
                    out.append((col[:, None], _lookup_d2(int(mp), int(sp))))
    return out


def _lookup_d6(d, pcp, mp, sp):
    for label in symmetry.D6_LABELS.values():
        if d == 1 and (label.d, label.pcprime, label.mprime, label.sprime) == \
                (1, pcp, mp, sp):
            return label
        if d == 2 and (label.d, label.pcprime, label.mprime) == (2, pcp, mp):
            return label
    raise ClassificationError(f"no D6 row for (d={d}, PC'={pcp}, M'={mp}, S'={sp})",
                              signature=(d, pcp, mp, sp))


def _lookup_d2(mp, sp):
    for label in symmetry.D2_LABELS.values():
        if (label.mprime, label.sprime) == (mp, sp):
            return label
    raise ClassificationError(f"no D2 row for (M'={mp}, S'={sp})",
                              signature=(mp, sp))


def spectrum(loop, pot, group=None, classify=True):
    """Full symmetric eigendecomposition with trivial filtering and labels.

    With `pot=None` (free-particle hook) or `classify=False` the
    decomposition is returned unlabeled.
    """
    h = hessian(loop, pot)
    eigvals, eigvecs = np.linalg.eigh(h.matrix)
    hnorm = float(np.max(np.abs(eigvals)))
    n_modes, period = loop.n_modes, loop.period
    if pot is None or not classify:
        modes = tuple(
            EigenMode(float(v), (field_from_vector(period, n_modes, eigvecs[:, i]),),
                      None, False)
            for i, v in enumerate(eigvals))
        neg = int(np.sum(eigvals < 0))
        return ClassifiedSpectrum(loop, pot, modes, neg, hnorm, "none")
    if group is None:
        group = symmetry.detect_symmetry_group(loop)
    triv = np.column_stack([to_vector(f) for f in trivial_modes(loop)])
    triv, _ = np.linalg.qr(triv)
    modes = []
    n_trivial = 0
    for lo, hi in _clusters(eigvals, hnorm):
        vecs = eigvecs[:, lo:hi]
        lam = float(np.mean(eigvals[lo:hi]))
        t_cols, rest = _split_trivial(vecs, triv)
        for col in t_cols.T:
            rayleigh = float(col @ (h.matrix @ col))
            modes.append(EigenMode(
                rayleigh, (field_from_vector(period, n_modes, col),), None, True))
            n_trivial += 1
        if rest.shape[1] == 0:
            continue
        for block, label in _classify_cluster(rest, loop, n_modes, group):
            fields = tuple(field_from_vector(period, n_modes, c) for c in block.T)
            modes.append(EigenMode(lam, fields, label, False))
    if n_trivial != 4:
        raise DegenerateLoopError(
            f"found {n_trivial} trivial near-zero modes, expected 4 "
            f"(gradient not converged, or overlap threshold too strict)")
    modes.sort(key=lambda m: m.eigenvalue)
    morse = sum(m.degeneracy for m in modes if not m.trivial and m.eigenvalue < 0)
    return ClassifiedSpectrum(loop, pot, tuple(modes), morse, hnorm, group)


def morse_index(spec):
    """Number of negative nontrivial eigenvalues, multiplicity counted."""
    return spec.morse_index


def irrep_kappas(spec, watched=("I", "II", "III", "IV", "V", "VI")):
    """Per irrep: the signed eigenvalue nearest zero and the negative count."""
    kappas, negs = {}, {}
    for pat in watched:
        modes = spec.by_pattern(pat)
        if not modes:
            continue
        nearest = min(modes, key=lambda m: abs(m.eigenvalue))
        kappas[pat] = nearest.eigenvalue
        negs[pat] = sum(m.degeneracy for m in modes if m.eigenvalue < 0)
    return kappas, negs


@dataclass(frozen=True)
class BifurcationEvent:
    param_name: str
    xi0: float
    label: symmetry.IrrepLabel
    patterns: tuple            # BifurcationPattern rows (two for the faithful irrep)
    kappa_slope: float | None  # d(kappa)/d(xi); None at folds
    kappa: float               # residual eigenvalue after refinement
    loop: LoopPath             # the original solution at xi0
    fields: tuple              # crossing eigenfields; (phi_plus, phi_minus) if d=2
    bracket: tuple
    fold: bool = False
    fold_quadratic: float | None = None  # a2 in xi - xi0 = a2 kappa^2 at folds

    @property
    def d(self):
        return self.label.d


def _kappa_of(spec, pattern):
    modes = spec.by_pattern(pattern)
    if not modes:
        return None
    return min(modes, key=lambda m: abs(m.eigenvalue)).eigenvalue


def _event_fields(spec, pattern):
    # d=2 modes already carry the S-diagonal pair (phi_plus, phi_minus)
    mode = min(spec.by_pattern(pattern), key=lambda m: abs(m.eigenvalue))
    return tuple(mode.fields)


def detect_crossings(branch, kappa_tol=None, solve_cfg=None, max_bisections=60):
    """Locate and classify zero crossings of labeled eigenvalues along a branch.

    Per watched irrep, a change of the negative-eigenvalue count between
    consecutive branch points brackets a crossing; the bracket is bisected and
    polished by a secant iteration until |kappa| <= kappa_tol.  Count changes
    across a detected fold become fold events at the extremal parameter.
    Events are returned sorted by parameter value.
    """
    pts = branch.points
    if any(p.neg_counts is None for p in pts):
        raise ConvergenceError("branch carries no eigenvalue tracking")
    solve_cfg = solve_cfg or SolveConfig(projector=branch.projector or "PD6")
    events = []
    watched = sorted({pat for p in pts for pat in (p.neg_counts or {})})
    fold_set = set(branch.fold_indices())
    for pat in watched:
        for i in range(len(pts) - 1):
            c0 = pts[i].neg_counts.get(pat)
            c1 = pts[i + 1].neg_counts.get(pat)
            if c0 is None or c1 is None or c0 == c1:
                continue
            if i in fold_set or (i + 1) in fold_set:
                # the crossing coincides with the parameter reversal
                fold_idx = i if i in fold_set else i + 1
                events.append(_fold_event(branch, fold_idx, pat))
                continue
            events.append(_bisect_event(branch, i, pat, kappa_tol, solve_cfg,
                                        max_bisections))
    events.sort(key=lambda e: e.xi0)
    return events


def _fold_event(branch, idx, pattern):
    pts = branch.points
    lo = max(0, idx - 3)
    hi = min(len(pts), idx + 4)
    xi = np.array([p.param for p in pts[lo:hi]])
    ka = np.array([p.kappas.get(pattern, np.nan) for p in pts[lo:hi]])
    good = np.isfinite(ka)
    # fold relation: xi = xi0 + a2 * kappa^2
    coeffs = np.polyfit(ka[good] ** 2, xi[good], 1)
    xi0 = float(coeffs[1])
    a2 = float(coeffs[0])
    point = pts[idx]
    pot = branch.potential_at(point.param)
    spec = spectrum(point.loop, pot)
    label = symmetry.D6_LABELS[pattern] if spec.group == "D6" else \
        symmetry.D2_LABELS[pattern]
    fields = _event_fields(spec, pattern)
    return BifurcationEvent(branch.param_name, xi0, label,
                            symmetry.bifurcation_pattern(label), None,
                            _kappa_of(spec, pattern), point.loop, fields,
                            (pts[max(0, idx - 1)].param, pts[min(len(pts) - 1, idx + 1)].param),
                            fold=True, fold_quadratic=a2)


def _bisect_event(branch, i, pattern, kappa_tol, solve_cfg, max_bisections):
    pts = branch.points
    xi_lo, xi_hi = pts[i].param, pts[i + 1].param
    k_lo, k_hi = pts[i].kappas[pattern], pts[i + 1].kappas[pattern]
    segment = None
    for seg in branch.segments():
        if seg[0] <= i and i + 1 <= seg[1]:
            segment = seg
            break

    def kappa_at(xi):
        loop, pot = solve_at_parameter(branch, xi, solve_cfg, segment=segment)
        spec = spectrum(loop, pot)
        return _kappa_of(spec, pattern), loop, pot, spec

    if kappa_tol is None:
        kappa_tol = 1e-9 * _hnorm_estimate(branch, i)
    # bisection to a sign-definite tight bracket
    lo, hi, klo, khi = xi_lo, xi_hi, k_lo, k_hi
    best = None
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        kmid, loop, pot, spec = kappa_at(mid)
        best = (mid, kmid, loop, pot, spec)
        if abs(kmid) <= kappa_tol:
            break
        if np.sign(kmid) == np.sign(klo):
            lo, klo = mid, kmid
        else:
            hi, khi = mid, kmid
        if hi - lo < 1e-13 * max(1.0, abs(hi)):
            break
    # secant polish on the smooth eigenvalue
    xi_a, k_a = lo, klo
    xi_b, k_b = hi, khi
    for _ in range(8):
        if abs(best[1]) <= max(kappa_tol * 1e-3, 1e-12):
            break
        denom = k_b - k_a
        if denom == 0:
            break
        xi_new = xi_b - k_b * (xi_b - xi_a) / denom
        if not min(lo, hi) <= xi_new <= max(lo, hi):
            xi_new = 0.5 * (xi_a + xi_b)
        k_new, loop, pot, spec = kappa_at(xi_new)
        best = (xi_new, k_new, loop, pot, spec)
        xi_a, k_a, xi_b, k_b = xi_b, k_b, xi_new, k_new
    xi0, kappa, loop, pot, spec = best
    slope = (k_hi - k_lo) / (xi_hi - xi_lo)
    label = symmetry.D6_LABELS[pattern] if spec.group == "D6" else \
        symmetry.D2_LABELS[pattern]
    fields = _event_fields(spec, pattern)
    return BifurcationEvent(branch.param_name, float(xi0), label,
                            symmetry.bifurcation_pattern(label), float(slope),
                            float(kappa), loop, fields, (xi_lo, xi_hi))


def _hnorm_estimate(branch, i):
    loop = branch.points[i].loop
    omega = 2.0 * np.pi / loop.period
    return (loop.n_modes * omega) ** 2
