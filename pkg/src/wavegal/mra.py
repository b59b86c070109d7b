"""Tensor-product multiresolution bases on the unit square.

A 2-D index is either the level-0 scaling function ``phi(x) phi(y)`` or a
wavelet at level ``j`` with one of three orientations::

    HORIZONTAL  psi_j(x) phi_j(y)
    VERTICAL    phi_j(x) psi_j(y)
    DIAGONAL    psi_j(x) psi_j(y)

One-dimensional factors are ``2**(j/2) f(2**j x - k + offset)`` with ``f``
taken from a dyadic table (Haar, Daubechies) or in closed form (hierarchical
hats).  Dirichlet edges are handled by dropping every factor with a nonzero
trace on the edge.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConstructionError, DimensionError, ResourceError, ValidationError

SQRT2 = math.sqrt(2.0)


class Kind(IntEnum):
    SCALING = 0
    WAVELET = 1


class Orientation(IntEnum):
    NONE = 0
    HORIZONTAL = 1
    VERTICAL = 2
    DIAGONAL = 3


WAVELET_ORIENTATIONS = (Orientation.HORIZONTAL, Orientation.VERTICAL, Orientation.DIAGONAL)

# factor kinds along (x, y) for each orientation: 0 = phi, 1 = psi
_FACTORS = {
    Orientation.NONE: (0, 0),
    Orientation.HORIZONTAL: (1, 0),
    Orientation.VERTICAL: (0, 1),
    Orientation.DIAGONAL: (1, 1),
}


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisFamily:
    """Refinement masks plus the conventions needed to place factors on [0, 1].

    ``scaling_width``/``wavelet_width`` are the support lengths of the mother
    functions in table units; ``scaling_offset`` shifts translation ``k`` so
    that hats are indexed by their peak node.
    """

    tag: str
    h: tuple
    g: tuple
    orthogonal: bool
    continuous: bool
    vanishing_moments: int
    scaling_width: int
    wavelet_width: int
    scaling_offset: int = 0

    @property
    def mask_length(self):
        return len(self.h)

    @property
    def support_width(self):
        return self.scaling_width

    @property
    def table_length(self):
        return max(self.scaling_width, self.wavelet_width)

    @property
    def is_hat(self):
        return self.tag == "HierarchicalHat"

    def scaling_range(self, j):
        """Translations of level-``j`` scaling factors meeting (0, 1), inclusive bounds."""
        if self.is_hat:
            return 0, 2 ** j
        return -(self.scaling_width - 1), 2 ** j - 1

    def wavelet_range(self, j):
        # centred window: the restrictions to [0, 1] stay linearly independent
        if self.is_hat:
            return 0, 2 ** j - 1
        c = (self.mask_length - 2) // 2
        return -c, 2 ** j - 1 - c

    def factor_support(self, kind, j, k):
        """Unclipped support ``(a, b)`` of a 1-D factor in x units."""
        off = self.scaling_offset if kind == 0 else 0
        width = self.scaling_width if kind == 0 else self.wavelet_width
        s = 2.0 ** -j
        return (k - off) * s, (k - off + width) * s

    def has_trace(self, kind, j, k, side):
        """True when the factor does not vanish at x = ``side`` (0 or 1)."""
        a, b = self.factor_support(kind, j, k)
        if a < side < b:
            return True
        if not self.continuous:
            # one-sided limits of piecewise-constant factors at a support end
            return (side == 0 and a == 0) or (side == 1 and b == 1)
        return False


def _qmf(h):
    n = len(h)
    return tuple((-1) ** k * h[n - 1 - k] for k in range(n))


_s3 = math.sqrt(3.0)
_D4 = tuple(v / (4 * SQRT2) for v in (1 + _s3, 3 + _s3, 3 - _s3, 1 - _s3))
_s10 = math.sqrt(10.0)
_z = math.sqrt(5 + 2 * _s10)
_D6 = tuple(v / (16 * SQRT2) for v in (
    1 + _s10 + _z, 5 + _s10 + 3 * _z, 10 - 2 * _s10 + 2 * _z,
    10 - 2 * _s10 - 2 * _z, 5 + _s10 - 3 * _z, 1 + _s10 - _z))
_HAAR = (1 / SQRT2, 1 / SQRT2)

HAAR = BasisFamily("Haar", _HAAR, _qmf(_HAAR), True, False, 1, 1, 1)
DAUBECHIES4 = BasisFamily("Daubechies4", _D4, _qmf(_D4), True, True, 2, 3, 3)
DAUBECHIES6 = BasisFamily("Daubechies6", _D6, _qmf(_D6), True, True, 3, 5, 5)
# phi(t) = hat centred at t = 1, psi(t) = phi(2t) = hat on [0, 1]
HIERARCHICAL_HAT = BasisFamily(
    "HierarchicalHat", (0.5 / SQRT2, 1 / SQRT2, 0.5 / SQRT2), (1 / SQRT2,),
    False, True, 0, 2, 1, scaling_offset=1)

FAMILIES = {f.tag: f for f in (HAAR, DAUBECHIES4, DAUBECHIES6, HIERARCHICAL_HAT)}
_ALIASES = {"haar": "Haar", "d4": "Daubechies4", "db2": "Daubechies4", "daubechies4": "Daubechies4",
            "d6": "Daubechies6", "db3": "Daubechies6", "daubechies6": "Daubechies6",
            "hat": "HierarchicalHat", "hierarchicalhat": "HierarchicalHat"}


def get_family(tag) -> BasisFamily:
    if isinstance(tag, BasisFamily):
        return tag
    name = _ALIASES.get(str(tag).lower(), str(tag))
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValidationError(f"unknown basis family {tag!r}") from None


# ---------------------------------------------------------------------------
# dyadic tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DyadicTable:
    """Samples of phi and psi (and their finite-difference slopes) at spacing 2**-q."""

    family: BasisFamily
    q: int
    t: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    dphi: np.ndarray
    dpsi: np.ndarray

    @property
    def spacing(self):
        return 2.0 ** -self.q

    def lookup(self, which, t):
        """Exact table values at dyadic arguments on this table's grid (zero outside)."""
        arr = self.phi if which == 0 else self.psi
        idx = np.rint(np.asarray(t) * 2 ** self.q).astype(np.int64)
        ok = (idx >= 0) & (idx < arr.size)
        out = np.zeros(idx.shape)
        out[ok] = arr[idx[ok]]
        return out


def _integer_values(family):
    h = np.asarray(family.h)
    n = family.scaling_width
    if n == 1:
        # piecewise constant: right-continuous box, the eigenproblem is degenerate
        return np.array([1.0, 0.0])
    A = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for m in range(n + 1):
            k = 2 * i - m
            if 0 <= k < len(h):
                A[i, m] = SQRT2 * h[k]
    w, V = np.linalg.eig(A)
    unit = np.flatnonzero(np.abs(w - 1.0) < 1e-8)
    if unit.size != 1:
        raise ConstructionError(
            f"{family.tag}: refinement matrix has {unit.size} unit eigenvalues")
    v = np.real(V[:, unit[0]])
    if abs(v.sum()) < 1e-14:
        raise ConstructionError(f"{family.tag}: unit eigenvector cannot be normalised")
    return v / v.sum()


def build_dyadic_table(family, q: int = 10) -> DyadicTable:
    """Tabulate phi and psi of ``family`` by the cascade (two-scale) recursion."""
    family = get_family(family)
    if not 4 <= q <= 14:
        raise ValidationError("table depth q must satisfy 4 <= q <= 14")
    n = family.table_length
    m = 2 ** q
    h = np.asarray(family.h)
    phi = np.zeros(n * m + 1)
    ints = _integer_values(family)
    phi[: (family.scaling_width + 1) * m: m] = ints
    for r in range(1, q + 1):
        step = 2 ** (q - r)
        idx = np.arange(step, phi.size, 2 * step)
        acc = np.zeros(idx.size)
        for k, hk in enumerate(h):
            src = 2 * idx - k * m
            ok = (src >= 0) & (src < phi.size)
            acc[ok] += hk * phi[src[ok]]
        phi[idx] = SQRT2 * acc
    psi = np.zeros_like(phi)
    idx = np.arange(phi.size)
    for k, gk in enumerate(family.g):
        src = 2 * idx - k * m
        ok = (src >= 0) & (src < phi.size)
        psi[ok] += SQRT2 * gk * phi[src[ok]]
    t = idx / m
    if family.continuous:
        dphi = np.gradient(phi, 1.0 / m)
        dpsi = np.gradient(psi, 1.0 / m)
    else:
        # piecewise constant: zero slope almost everywhere (not an H1 function)
        dphi = np.zeros_like(phi)
        dpsi = np.zeros_like(psi)
    for a in (t, phi, psi, dphi, dpsi):
        a.setflags(write=False)
    return DyadicTable(family, q, t, phi, psi, dphi, dpsi)


def two_scale_residual(table: DyadicTable) -> float:
    """max |phi(x) - sqrt2 sum_k h_k phi(2x - k)| over table points whose images stay on it."""
    fam = table.family
    m = 2 ** table.q
    i = np.arange(table.phi.size)
    # 2x - k lands on the table grid only for x on the coarser half grid
    i = i[i % 2 == 0]
    rhs = np.zeros(i.size)
    for k, hk in enumerate(fam.h):
        src = (2 * i - k * m)
        ok = (src >= 0) & (src < table.phi.size)
        rhs[ok] += SQRT2 * hk * table.phi[src[ok]]
    return float(np.max(np.abs(table.phi[i] - rhs)))


def partition_of_unity_error(table: DyadicTable) -> float:
    """max |sum_k phi(x + k) - 1| for x in [0, 1) on the table grid."""
    m = 2 ** table.q
    n = table.family.scaling_width
    s = np.zeros(m)
    for k in range(n):
        s += table.phi[k * m: k * m + m]
    return float(np.max(np.abs(s - 1.0)))


# ---------------------------------------------------------------------------
# 1-D factor evaluation
# ---------------------------------------------------------------------------

def _hat_phi(t, deriv):
    if deriv:
        return np.where((t > 0) & (t < 1), 1.0, 0.0) + np.where((t >= 1) & (t < 2), -1.0, 0.0)
    return np.clip(1.0 - np.abs(t - 1.0), 0.0, None)


def _hat_psi(t, deriv):
    if deriv:
        return np.where((t > 0) & (t < 0.5), 2.0, 0.0) + np.where((t >= 0.5) & (t < 1), -2.0, 0.0)
    return np.clip(1.0 - np.abs(2.0 * t - 1.0), 0.0, None)


def eval_factor(table: DyadicTable, kind: int, j: int, k: int, x, deriv: int = 0):
    """Value (``deriv=0``) or slope (``deriv=1``) of a 1-D factor at ``x``."""
    fam = table.family
    off = fam.scaling_offset if kind == 0 else 0
    t = 2.0 ** j * np.asarray(x, dtype=float) - k + off
    scale = 2.0 ** (j / 2) * (2.0 ** j if deriv else 1.0)
    if fam.is_hat:
        f = _hat_phi(t, deriv) if kind == 0 else _hat_psi(t, deriv)
        return scale * f
    if deriv:
        arr = table.dphi if kind == 0 else table.dpsi
    else:
        arr = table.phi if kind == 0 else table.psi
    if not fam.continuous:
        # right-continuous step lookup; interpolation would smear the jumps
        idx = np.floor(t * 2 ** table.q).astype(np.int64)
        ok = (idx >= 0) & (idx < arr.size)
        return scale * np.where(ok, arr[np.clip(idx, 0, arr.size - 1)], 0.0)
    return scale * np.interp(t, table.t, arr, left=0.0, right=0.0)


# ---------------------------------------------------------------------------
# indices and index sets
# ---------------------------------------------------------------------------

class WaveletIndex(NamedTuple):
    level: int
    kind: Kind
    orientation: Orientation
    kx: int
    ky: int

    def sort_key(self):
        return (self.level, int(self.orientation), self.kx, self.ky)

    def factors(self):
        """``((kind_x, j, kx), (kind_y, j, ky))`` for the two 1-D factors."""
        fx, fy = _FACTORS[Orientation(self.orientation)]
        return (fx, self.level, self.kx), (fy, self.level, self.ky)


def scaling_index(kx, ky):
    return WaveletIndex(0, Kind.SCALING, Orientation.NONE, kx, ky)


def wavelet_index(level, orientation, kx, ky):
    return WaveletIndex(level, Kind.WAVELET, Orientation(orientation), kx, ky)


def axis_translations(family, kind, j, dirichlet_sides=()):
    """Admissible translations of a 1-D factor after Dirichlet restriction."""
    lo, hi = family.scaling_range(j) if kind == 0 else family.wavelet_range(j)
    ks = [k for k in range(lo, hi + 1)
          if not any(family.has_trace(kind, j, k, side) for side in dirichlet_sides)]
    return ks


def _axis_sides(dirichlet_edges):
    d = frozenset(dirichlet_edges)
    xs = tuple(s for s, e in ((0, "left"), (1, "right")) if e in d)
    ys = tuple(s for s, e in ((0, "bottom"), (1, "top")) if e in d)
    return xs, ys


class IndexSet:
    """Ordered, duplicate-free collection of wavelet indices with a position map.

    Ordering is level-major, then orientation (scaling first), then ``kx``,
    then ``ky``.
    """

    def __init__(self, indices: Sequence[WaveletIndex], family, J, dirichlet_edges=frozenset()):
        idx = sorted((WaveletIndex(*i) for i in indices), key=WaveletIndex.sort_key)
        for a, b in zip(idx, idx[1:]):
            if a == b:
                raise ValidationError(f"duplicate index {a}")
        self.indices = tuple(idx)
        self.family = get_family(family)
        self.J = int(J)
        self.dirichlet_edges = frozenset(dirichlet_edges)
        self._pos = {i: n for n, i in enumerate(self.indices)}
        arr = np.array([tuple(i) for i in self.indices], dtype=np.int64).reshape(-1, 5)
        self.level = arr[:, 0]
        self.kind = arr[:, 1]
        self.orientation = arr[:, 2]
        self.kx = arr[:, 3]
        self.ky = arr[:, 4]
        for a in (self.level, self.kind, self.orientation, self.kx, self.ky):
            a.setflags(write=False)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, n):
        return self.indices[n]

    def __contains__(self, idx):
        return tuple(idx) in self._pos

    def __eq__(self, other):
        return isinstance(other, IndexSet) and self.indices == other.indices \
            and self.family == other.family and self.J == other.J \
            and self.dirichlet_edges == other.dirichlet_edges

    def __hash__(self):
        return hash((self.indices, self.family.tag, self.J))

    def position(self, idx):
        return self._pos[tuple(idx)]

    def get(self, idx, default=None):
        return self._pos.get(idx, default)

    @property
    def scaling_ordinals(self):
        return np.flatnonzero(self.kind == Kind.SCALING)

    def subset(self, ordinals):
        return IndexSet([self.indices[i] for i in ordinals], self.family, self.J,
                        self.dirichlet_edges)

    def support_boxes(self):
        """``(n, 4)`` array of clipped supports ``[ax, bx, ay, by]``."""
        out = np.empty((len(self), 4))
        for n, lam in enumerate(self.indices):
            (fx, j, kx), (fy, _, ky) = lam.factors()
            ax, bx = self.family.factor_support(fx, j, kx)
            ay, by = self.family.factor_support(fy, j, ky)
            out[n] = (max(ax, 0.0), min(bx, 1.0), max(ay, 0.0), min(by, 1.0))
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ordinal", "level", "kind", "orientation", "kx", "ky"])
        for n, i in enumerate(self.indices):
            w.writerow([n, i.level, Kind(i.kind).name.lower(),
                        Orientation(i.orientation).name.lower(), i.kx, i.ky])
        return buf.getvalue()


def single_scale_dimension(family, J, dirichlet_edges=frozenset()):
    """Dimension of the level-``J`` single-scale tensor space."""
    family = get_family(family)
    xs, ys = _axis_sides(dirichlet_edges)
    return len(axis_translations(family, 0, J, xs)) * len(axis_translations(family, 0, J, ys))


def full_index_set(J: int, family, dirichlet_edges=frozenset(), max_cardinality=4_000_000):
    """Level-0 scaling indices plus all wavelets of levels ``0 .. J-1``.

    Raises
    ------
    ResourceError
        If the cardinality exceeds ``max_cardinality``.
    """
    family = get_family(family)
    if J < 1:
        raise ValidationError("J must be >= 1")
    xs, ys = _axis_sides(dirichlet_edges)
    blocks = [(0, Orientation.NONE)] + [(j, o) for j in range(J) for o in WAVELET_ORIENTATIONS]
    plan = []
    total = 0
    for j, o in blocks:
        fx, fy = _FACTORS[o]
        tx = axis_translations(family, fx, j, xs)
        ty = axis_translations(family, fy, j, ys)
        plan.append((j, o, tx, ty))
        total += len(tx) * len(ty)
    if total > max_cardinality:
        raise ResourceError(f"full index set has {total} indices (budget {max_cardinality})",
                            cardinality=total)
    out = []
    for j, o, tx, ty in plan:
        kind = Kind.SCALING if o == Orientation.NONE else Kind.WAVELET
        out.extend(WaveletIndex(j, kind, o, kx, ky) for kx in tx for ky in ty)
    return IndexSet(out, family, J, dirichlet_edges)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_basis_function(lam: WaveletIndex, table: DyadicTable, point, deriv=(0, 0)):
    """Value of one tensor-product basis function (or a partial derivative) at points."""
    lam = WaveletIndex(*lam)
    (fx, j, kx), (fy, _, ky) = lam.factors()
    x = np.asarray(point[0], dtype=float)
    y = np.asarray(point[1], dtype=float)
    v = eval_factor(table, fx, j, kx, x, deriv[0]) * eval_factor(table, fy, j, ky, y, deriv[1])
    return v if v.ndim else float(v)


def _scan(iset, table, x, y, derivs):
    """Yield ``(ordinal, point_ids, [values per deriv])`` for every basis function."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    boxes = _raw_boxes(iset)
    for n, lam in enumerate(iset.indices):
        ax, bx, ay, by = boxes[n]
        lo = np.searchsorted(xs, ax, side="left")
        hi = np.searchsorted(xs, bx, side="right")
        if hi <= lo:
            continue
        cand = order[lo:hi]
        yc = y[cand]
        cand = cand[(yc >= ay) & (yc <= by)]
        if cand.size == 0:
            continue
        (fx, j, kx), (fy, _, ky) = lam.factors()
        xv, yv = x[cand], y[cand]
        fxs = {d: eval_factor(table, fx, j, kx, xv, d) for d in {d[0] for d in derivs}}
        fys = {d: eval_factor(table, fy, j, ky, yv, d) for d in {d[1] for d in derivs}}
        yield n, cand, [fxs[dx] * fys[dy] for dx, dy in derivs]


def evaluation_matrices(iset: IndexSet, table: DyadicTable, x, y, derivs=((0, 0),)):
    """Sparse ``(npts, len(iset))`` matrices of basis values, one per derivative pair."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    parts = [([], [], []) for _ in derivs]
    for n, cand, vals in _scan(iset, table, x, y, derivs):
        for (rows, cols, vv), v in zip(parts, vals):
            nz = v != 0.0
            rows.append(cand[nz])
            cols.append(np.full(int(nz.sum()), n))
            vv.append(v[nz])
    out = []
    for rows, cols, vv in parts:
        if rows:
            r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vv)
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        out.append(sp.csc_matrix((v, (r, c)), shape=(x.size, len(iset))))
    return out


def evaluation_matrix(iset: IndexSet, table: DyadicTable, x, y, deriv=(0, 0)):
    """Sparse ``(npts, len(iset))`` matrix of basis values at scattered points."""
    return evaluation_matrices(iset, table, x, y, (tuple(deriv),))[0]


def weighted_sums(iset: IndexSet, table: DyadicTable, x, y, weights):
    """``b_n = sum_d sum_p D^d psi_n(p) weights[d][p]`` without storing the evaluation matrix."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    derivs = tuple(weights)
    w = [np.asarray(weights[d], dtype=float).ravel() for d in derivs]
    b = np.zeros(len(iset))
    for n, cand, vals in _scan(iset, table, x, y, derivs):
        b[n] = sum(float(np.dot(v, wd[cand])) for v, wd in zip(vals, w))
    return b


def _raw_boxes(iset):
    out = np.empty((len(iset), 4))
    fam = iset.family
    for n, lam in enumerate(iset.indices):
        (fx, j, kx), (fy, _, ky) = lam.factors()
        out[n, :2] = fam.factor_support(fx, j, kx)
        out[n, 2:] = fam.factor_support(fy, j, ky)
    return out


def evaluate_expansion(coeffs, iset: IndexSet, table: DyadicTable, point):
    """``sum_lambda u_lambda psi_lambda`` at one point or an array of points."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(iset),):
        raise DimensionError(f"expected {len(iset)} coefficients, got {coeffs.shape}")
    x = np.asarray(point[0], dtype=float)
    y = np.asarray(point[1], dtype=float)
    shape = np.broadcast(x, y).shape
    x, y = np.broadcast_arrays(x, y)
    B = evaluation_matrix(iset, table, x, y)
    v = B @ coeffs
    return float(v[0]) if shape == () else v.reshape(shape)


# ---------------------------------------------------------------------------
# hierarchical hats: nodal transforms
# ---------------------------------------------------------------------------

def _factor_nodal(kind, j, k, J):
    """Nodal values of a hat factor on the level-``J`` grid (normalised)."""
    n = 2 ** J + 1
    x = np.arange(n) / 2 ** J
    t = 2.0 ** j * x - k + (1 if kind == 0 else 0)
    f = _hat_phi(t, 0) if kind == 0 else _hat_psi(t, 0)
    return 2.0 ** (j / 2) * f


def hat_transform_matrix(iset: IndexSet):
    """Sparse ``((2^J+1)^2, n)`` matrix of nodal values; node ``(ix, iy)`` -> ``iy*(2^J+1)+ix``."""
    if not iset.family.is_hat:
        raise ValidationError("nodal transform is defined for hierarchical hats only")
    J = iset.J
    n1 = 2 ** J + 1
    cache = {}

    def nodal(kind, j, k):
        key = (kind, j, k)
        if key not in cache:
            f = _factor_nodal(kind, j, k, J)
            nz = np.flatnonzero(f)
            cache[key] = (nz, f[nz])
        return cache[key]

    rows, cols, vals = [], [], []
    for c, lam in enumerate(iset.indices):
        (fx, j, kx), (fy, _, ky) = lam.factors()
        ix, vx = nodal(fx, j, kx)
        iy, vy = nodal(fy, j, ky)
        rows.append((iy[:, None] * n1 + ix[None, :]).ravel())
        vals.append((vy[:, None] * vx[None, :]).ravel())
        cols.append(np.full(ix.size * iy.size, c))
    r = np.concatenate(rows)
    v = np.concatenate(vals)
    c = np.concatenate(cols)
    return sp.csc_matrix((v, (r, c)), shape=(n1 * n1, len(iset)))


def hierarchize(nodal, J):
    """Forward hat transform of ``(2^J+1, 2^J+1)`` nodal values indexed ``[iy, ix]``.

    Returns a dict ``WaveletIndex -> coefficient`` for every index of the
    unrestricted full set.
    """
    v = np.array(nodal, dtype=float)
    n1 = 2 ** J + 1
    if v.shape != (n1, n1):
        raise DimensionError(f"expected nodal array of shape {(n1, n1)}")
    out = {}
    for j in range(J - 1, -1, -1):
        # split x: even columns coarse, odd columns surplus
        dx = v[:, 1::2] - 0.5 * (v[:, 0:-1:2] + v[:, 2::2])
        cx = v[:, 0::2]
        # split y of both halves
        cc = cx[0::2, :]
        cd = cx[1::2, :] - 0.5 * (cx[0:-1:2, :] + cx[2::2, :])
        dc = dx[0::2, :]
        dd = dx[1::2, :] - 0.5 * (dx[0:-1:2, :] + dx[2::2, :])
        norm = 2.0 ** -j
        for o, blk in ((Orientation.HORIZONTAL, dc), (Orientation.VERTICAL, cd),
                       (Orientation.DIAGONAL, dd)):
            iy, ix = np.indices(blk.shape)
            for a, b, val in zip(ix.ravel(), iy.ravel(), blk.ravel()):
                out[WaveletIndex(j, Kind.WAVELET, o, int(a), int(b))] = val * norm
        v = cc
    for b in range(2):
        for a in range(2):
            out[scaling_index(a, b)] = v[b, a]
    return out


def dehierarchize(coeffs, iset: IndexSet):
    """Nodal values ``[iy, ix]`` on the level-``J`` grid of a hat expansion."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(iset),):
        raise DimensionError(f"expected {len(iset)} coefficients, got {coeffs.shape}")
    J = iset.J
    v = np.zeros((2, 2))
    blocks = {}
    for c, lam in zip(coeffs, iset.indices):
        if lam.kind == Kind.SCALING:
            v[lam.ky, lam.kx] += c
        else:
            j = lam.level
            key = (j, lam.orientation)
            if key not in blocks:
                nx = 2 ** j if lam.orientation in (Orientation.HORIZONTAL, Orientation.DIAGONAL) \
                    else 2 ** j + 1
                ny = 2 ** j if lam.orientation in (Orientation.VERTICAL, Orientation.DIAGONAL) \
                    else 2 ** j + 1
                blocks[key] = np.zeros((ny, nx))
            blocks[key][lam.ky, lam.kx] += c * 2.0 ** j
    for j in range(J):
        n_c = 2 ** j + 1
        z = lambda ny, nx: np.zeros((ny, nx))  # noqa: E731
        dc = blocks.get((j, Orientation.HORIZONTAL), z(n_c, n_c - 1))
        cd = blocks.get((j, Orientation.VERTICAL), z(n_c - 1, n_c))
        dd = blocks.get((j, Orientation.DIAGONAL), z(n_c - 1, n_c - 1))
        cc = v
        # undo y split
        cx = np.empty((2 * n_c - 1, n_c))
        cx[0::2] = cc
        cx[1::2] = cd + 0.5 * (cc[:-1] + cc[1:])
        dx = np.empty((2 * n_c - 1, n_c - 1))
        dx[0::2] = dc
        dx[1::2] = dd + 0.5 * (dc[:-1] + dc[1:])
        # undo x split
        v = np.empty((2 * n_c - 1, 2 * n_c - 1))
        v[:, 0::2] = cx
        v[:, 1::2] = dx + 0.5 * (cx[:, :-1] + cx[:, 1:])
    return v


def bilinear_sample(nodal, x, y):
    """Bilinear interpolation of ``[iy, ix]`` nodal values on a uniform grid of [0,1]^2."""
    nodal = np.asarray(nodal)
    n = nodal.shape[0] - 1
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fx = np.clip(x * n, 0, n)
    fy = np.clip(y * n, 0, n)
    ix = np.minimum(fx.astype(np.int64), n - 1)
    iy = np.minimum(fy.astype(np.int64), n - 1)
    tx = fx - ix
    ty = fy - iy
    return ((1 - tx) * (1 - ty) * nodal[iy, ix] + tx * (1 - ty) * nodal[iy, ix + 1]
            + (1 - tx) * ty * nodal[iy + 1, ix] + tx * ty * nodal[iy + 1, ix + 1])


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def project_function(f, iset: IndexSet, table: DyadicTable, quad_depth=2):
    """Coefficients of ``f(x, y)`` in the basis ``iset``.

    Hats: nodal interpolation (zero on Dirichlet edges) followed by the
    hierarchical transform.  Other families: discrete L2 projection with
    midpoint quadrature on the ``2**-(J + quad_depth)`` grid, which reduces to
    inner products where the restricted basis is orthonormal.
    """
    fam = iset.family
    J = iset.J
    if fam.is_hat:
        n1 = 2 ** J + 1
        s = np.arange(n1) / 2 ** J
        X, Y = np.meshgrid(s, s, indexing="xy")
        vals = np.array(np.broadcast_to(f(X, Y), X.shape), dtype=float)
        d = iset.dirichlet_edges
        if "left" in d:
            vals[:, 0] = 0.0
        if "right" in d:
            vals[:, -1] = 0.0
        if "bottom" in d:
            vals[0, :] = 0.0
        if "top" in d:
            vals[-1, :] = 0.0
        coef = hierarchize(vals, J)
        return np.array([coef.get(lam, 0.0) for lam in iset.indices])
    m = 2 ** (J + quad_depth)
    s = (np.arange(m) + 0.5) / m
    X, Y = np.meshgrid(s, s, indexing="xy")
    B = evaluation_matrix(iset, table, X.ravel(), Y.ravel())
    w = 1.0 / m ** 2
    fv = np.broadcast_to(f(X, Y), X.shape).ravel()
    G = (B.T @ B).toarray() * w
    rhs = B.T @ fv * w
    if np.allclose(G, np.eye(len(iset)), atol=1e-12):
        return rhs
    try:
        return sla.cho_solve(sla.cho_factor(G), rhs)
    except np.linalg.LinAlgError:
        pass
    # restricted Daubechies boundary translates are nearly dependent; use the
    # minimum-norm solution, which leaves the projected function unchanged
    lam, V = np.linalg.eigh(G)
    keep = lam > 1e-13 * lam[-1]
    return V[:, keep] @ ((V[:, keep].T @ rhs) / lam[keep])


def sample_expansion(coeffs, iset: IndexSet, table: DyadicTable, x, y):
    """Expansion values at many points; hats go through the nodal transform."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if iset.family.is_hat:
        return bilinear_sample(dehierarchize(coeffs, iset), x, y)
    out = np.empty(x.size)
    xf, yf = x.ravel(), y.ravel()
    chunk = 1 << 16
    for a in range(0, xf.size, chunk):
        out[a:a + chunk] = evaluation_matrix(iset, table, xf[a:a + chunk], yf[a:a + chunk]) \
            @ np.asarray(coeffs, dtype=float)
    return out.reshape(x.shape)
