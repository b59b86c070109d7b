"""Coefficient thresholding with a scale/position neighbourhood."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, StructuralError, ValidationError
from .mra import (IndexSet, Kind, Orientation, WAVELET_ORIENTATIONS, WaveletIndex, _FACTORS)


@dataclass(frozen=True)
class AdaptivityPolicy:
    epsilon_tol: float = 1e-3
    radius: int = 1
    include_parents: bool = True
    include_children: bool = True
    max_level: int = None
    stride: int = 1

    def __post_init__(self):
        if not self.epsilon_tol > 0:
            raise ValidationError("epsilon_tol must be > 0")
        if self.radius < 0:
            raise ValidationError("radius must be >= 0")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")


class ActiveSet:
    """Subset of a full index set, ordered like the full set.

    ``ordinals`` are positions in ``full``; ``iset`` is the restricted
    :class:`IndexSet` the assembler works on.
    """

    def __init__(self, full: IndexSet, ordinals, snapshot_id=0):
        ords = np.unique(np.asarray(sorted(ordinals), dtype=np.int64))
        if ords.size and (ords[0] < 0 or ords[-1] >= len(full)):
            raise StructuralError("active ordinal outside the full index set")
        safety = full.scaling_ordinals
        ords = np.union1d(ords, safety)
        self.full = full
        self.ordinals = ords
        self.ordinals.setflags(write=False)
        self.snapshot_id = snapshot_id
        self.iset = full.subset(ords)

    def __len__(self):
        return len(self.iset)

    def __iter__(self):
        return iter(self.iset)

    def __contains__(self, idx):
        return idx in self.iset

    def __eq__(self, other):
        return isinstance(other, ActiveSet) and self.full is other.full \
            and np.array_equal(self.ordinals, other.ordinals)

    def __hash__(self):
        return hash(self.ordinals.tobytes())

    @property
    def indices(self):
        return self.iset.indices

    def to_rows(self, step):
        """Rows ``step,ordinal,level,kind,orientation,kx,ky``; ordinal is the full-set position."""
        return [[step, int(o), i.level, Kind(i.kind).name.lower(),
                 Orientation(i.orientation).name.lower(), i.kx, i.ky]
                for o, i in zip(self.ordinals, self.iset.indices)]


ACTIVE_SET_HEADER = ["step", "ordinal", "level", "kind", "orientation", "kx", "ky"]


def active_sets_csv(snapshots):
    """CSV text for ``[(step, ActiveSet), ...]``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ACTIVE_SET_HEADER)
    for step, act in snapshots:
        w.writerows(act.to_rows(step))
    return buf.getvalue()


def _as_iset(s):
    return s.iset if isinstance(s, ActiveSet) else s


def mark_essential(coeffs, active, policy: AdaptivityPolicy):
    """Ordinals (within ``active``) with ``|u| >= eps`` plus every level-0 scaling ordinal."""
    iset = _as_iset(active)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(iset),):
        raise DimensionError(f"expected {len(iset)} coefficients, got {coeffs.shape}")
    big = np.flatnonzero(np.abs(coeffs) >= policy.epsilon_tol)
    return frozenset(int(i) for i in np.union1d(big, iset.scaling_ordinals))


def _orientations_at(level):
    return ((Orientation.NONE,) if level == 0 else ()) + WAVELET_ORIENTATIONS


def _krange(family, kind, level, a, b):
    """Translations of a level-``level`` factor whose support meets (a, b) with positive length."""
    s = 2.0 ** -level
    off = family.scaling_offset if kind == 0 else 0
    w = family.scaling_width if kind == 0 else family.wavelet_width
    lo = math.floor(a / s + off - w) + 1
    hi = math.ceil(b / s + off) - 1
    return range(lo, hi + 1)


def overlapping(full: IndexSet, level, box):
    """Indices of ``full`` at ``level`` whose supports overlap ``box`` with positive area."""
    ax, bx, ay, by = box
    out = []
    for o in _orientations_at(level):
        fx, fy = _FACTORS[o]
        kind = Kind.SCALING if o == Orientation.NONE else Kind.WAVELET
        for kx in _krange(full.family, fx, level, ax, bx):
            for ky in _krange(full.family, fy, level, ay, by):
                lam = WaveletIndex(level, kind, o, kx, ky)
                if lam in full:
                    out.append(lam)
    return out


def _box(full, lam):
    (fx, j, kx), (fy, _, ky) = lam.factors()
    ax, bx = full.family.factor_support(fx, j, kx)
    ay, by = full.family.factor_support(fy, j, ky)
    return max(ax, 0.0), min(bx, 1.0), max(ay, 0.0), min(by, 1.0)


def neighbours(lam: WaveletIndex, full: IndexSet, policy: AdaptivityPolicy):
    """Position stencil, parents and children of one index (not including ``lam``)."""
    lam = WaveletIndex(*lam)
    j = lam.level
    J = policy.max_level if policy.max_level is not None else full.J
    r = policy.radius
    out = []
    for o in _orientations_at(j):
        kind = Kind.SCALING if o == Orientation.NONE else Kind.WAVELET
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                cand = WaveletIndex(j, kind, o, lam.kx + dx, lam.ky + dy)
                if cand in full:
                    out.append(cand)
    if lam.kind == Kind.SCALING:
        return out
    box = _box(full, lam)
    if policy.include_parents and j >= 1:
        out += overlapping(full, j - 1, box)
    if policy.include_children and j + 1 < J:
        out += overlapping(full, j + 1, box)
    return out


def expand_neighborhood(essential, full: IndexSet, policy: AdaptivityPolicy, snapshot_id=0):
    """Active set = essential indices, their neighbourhoods and the level-0 safety net.

    ``essential`` holds ordinals of ``full`` or :class:`WaveletIndex` values.
    """
    ords = set()
    for e in essential:
        if isinstance(e, (int, np.integer)):
            if not 0 <= e < len(full):
                raise StructuralError(f"essential ordinal {e} outside the full set")
            lam = full[int(e)]
            ords.add(int(e))
        else:
            lam = WaveletIndex(*e)
            if lam not in full:
                raise StructuralError(f"essential index {lam} not in the full set")
            ords.add(full.position(lam))
        for nb in neighbours(lam, full, policy):
            ords.add(full.position(nb))
    return ActiveSet(full, ords, snapshot_id)


def transfer_coefficients(old: ActiveSet, coeffs, new: ActiveSet):
    """Copy retained coefficients, zero-fill new ones, drop the rest."""
    if old.full is not new.full and old.full != new.full:
        raise StructuralError("active sets derive from different full index sets")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(old),):
        raise DimensionError(f"expected {len(old)} coefficients, got {coeffs.shape}")
    out = np.zeros(len(new))
    common, io_, in_ = np.intersect1d(old.ordinals, new.ordinals, assume_unique=True,
                                      return_indices=True)
    out[in_] = coeffs[io_]
    return out


def initial_active_set(coeffs_full, full: IndexSet, policy: AdaptivityPolicy, snapshot_id=0):
    """Threshold the projection of the initial condition and expand."""
    ess = mark_essential(coeffs_full, full, policy)
    return expand_neighborhood(ess, full, policy, snapshot_id)


def adapt(active: ActiveSet, coeffs, policy: AdaptivityPolicy, snapshot_id=0):
    """One adaptation step: mark on ``active``, expand in the full set, transfer."""
    ess = mark_essential(coeffs, active, policy)
    new = expand_neighborhood([int(active.ordinals[i]) for i in sorted(ess)], active.full,
                              policy, snapshot_id)
    return new, transfer_coefficients(active, coeffs, new)
