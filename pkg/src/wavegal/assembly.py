"""Mass, stiffness and load over an arbitrary index set.

Three integration paths, chosen by basis family and material geometry:

* hierarchical hats: bilinear nodal matrices on the level-J grid, mapped to
  the hierarchical basis by the nodal transform ``T``: ``M = T' M_nodal T``;
* Daubechies/Haar with y-only coefficients (homogeneous, slab, graded):
  products of 1-D integrals evaluated on a deep 1-D grid;
* anything else: 2-D composite quadrature with sparse evaluation matrices.

Cells cut by the slab or graded interface are split in two; cells cut by a
circular inclusion get a moment-fitted correction rule (exact for bilinear
products), so the hat path integrates all shipped material maps exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ValidationError
from .mra import (DyadicTable, IndexSet, build_dyadic_table, eval_factor, evaluation_matrices,
                  full_index_set, get_family, hat_transform_matrix, weighted_sums)
from .problem import (BoundarySpec, CircularInclusion, GradedLayer, Homogeneous, LayeredSlab,
                      ProblemDefinition, corner_values, edge_points, ellipticity_bounds)

RULES = ("Midpoint", "TwoPointGauss")


@dataclass(frozen=True)
class QuadratureRule:
    """Composite rule on cells of width ``2**-(J + s)``.

    ``line_depth`` is the absolute 1-D depth used when the coefficients
    depend on y only and the 2-D integrals factor.
    """

    s: int = 2
    rule: str = "TwoPointGauss"
    line_depth: int = 13

    def __post_init__(self):
        if self.s < 1:
            raise ValidationError("quadrature depth s must be >= 1")
        if self.rule not in RULES:
            raise ValidationError(f"unknown quadrature rule {self.rule!r}")
        if not 4 <= self.line_depth <= 18:
            raise ValidationError("line_depth must lie in [4, 18]")


@dataclass(frozen=True)
class Discretization:
    family: str = "HierarchicalHat"
    J: int = 5
    q: int = 10
    quad: QuadratureRule = field(default_factory=QuadratureRule)
    drop_tol: float = 0.0

    def __post_init__(self):
        get_family(self.family)
        if self.J < 1:
            raise ValidationError("J must be >= 1")
        if self.drop_tol < 0:
            raise ValidationError("drop_tol must be >= 0")


# ---------------------------------------------------------------------------
# quadrature points
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadPoints:
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    kxx: np.ndarray
    kxy: np.ndarray
    kyy: np.ndarray
    cap: np.ndarray

    def __len__(self):
        return self.x.size


def _rule_1d(rule):
    if rule == "Midpoint":
        return np.array([0.5]), np.array([1.0])
    g = 0.5 / math.sqrt(3.0)
    return np.array([0.5 - g, 0.5 + g]), np.array([0.5, 0.5])


def _rect_points(rects, rule):
    g, gw = _rule_1d(rule)
    x0, x1, y0, y1 = (rects[:, i:i + 1] for i in range(4))
    px = (x0 + (x1 - x0) * g[None, :])[:, :, None]
    py = (y0 + (y1 - y0) * g[None, :])[:, None, :]
    w = ((x1 - x0) * (y1 - y0))[:, :, None] * (gw[:, None] * gw[None, :])[None]
    shape = (rects.shape[0], g.size, g.size)
    return (np.broadcast_to(px, shape).ravel(), np.broadcast_to(py, shape).ravel(),
            np.broadcast_to(w, shape).ravel())


_GL = np.polynomial.legendre.leggauss(24)
_G3 = np.polynomial.legendre.leggauss(3)[0]
_V3 = np.vander(_G3, 3, increasing=True)


def disc_cell_moments(cx, cy, r, order=2):
    """``m[a, b] = integral of X^a Y^b`` over ``[-1,1]^2`` intersected with a disc.

    Green's theorem on the two boundary pieces of the intersection: the square's
    edges inside the disc and the circle's arcs inside the square, both
    traversed counter-clockwise.
    """
    mom = np.zeros((order + 1, order + 1))
    a = np.arange(order + 1)[:, None]
    b = np.arange(order + 1)[None, :]
    t, tw = _GL

    def add(X, Y, dY, w):
        X = np.broadcast_to(X, Y.shape)
        mom[:] += np.sum((w * dY)[None, None, :] * X[None, None, :] ** (a[..., None] + 1)
                         / (a[..., None] + 1) * Y[None, None, :] ** b[..., None], axis=-1)

    # vertical edges only; dY = 0 on horizontal ones
    for xe, up in ((1.0, True), (-1.0, False)):
        d2 = r * r - (xe - cx) ** 2
        if d2 <= 0:
            continue
        lo = max(-1.0, cy - math.sqrt(d2))
        hi = min(1.0, cy + math.sqrt(d2))
        if hi <= lo:
            continue
        ys, ye = (lo, hi) if up else (hi, lo)
        half = 0.5 * (ye - ys)
        add(np.array(xe), 0.5 * (ys + ye) + half * t, np.full(t.size, half), tw)

    angles = []
    for L in (-1.0, 1.0):
        c = (L - cx) / r
        if abs(c) < 1:
            th = math.acos(c)
            angles += [th, -th]
        s = (L - cy) / r
        if abs(s) < 1:
            th = math.asin(s)
            angles += [th, math.pi - th]
    angles = sorted({v % (2 * math.pi) for v in angles})
    if not angles:
        arcs = [(0.0, 2 * math.pi)] if abs(cx + r) <= 1 and abs(cx - r) <= 1 \
            and abs(cy + r) <= 1 and abs(cy - r) <= 1 else []
    else:
        arcs = [(angles[i], angles[i + 1] if i + 1 < len(angles) else angles[0] + 2 * math.pi)
                for i in range(len(angles))]
    for ta, tb in arcs:
        tm = 0.5 * (ta + tb)
        if abs(cx + r * math.cos(tm)) > 1 or abs(cy + r * math.sin(tm)) > 1:
            continue
        half = 0.5 * (tb - ta)
        th = tm + half * t
        add(cx + r * np.cos(th), cy + r * np.sin(th), r * np.cos(th) * half, tw)
    return mom


def moment_fitted_weights(mom):
    """Weights ``W[ix, iy]`` on the 3x3 Gauss nodes reproducing ``mom`` for X^a Y^b, a, b <= 2."""
    inv = np.linalg.inv(_V3)
    return inv.T @ mom @ inv


def quadrature_points(material, depth, rule="TwoPointGauss") -> QuadPoints:
    """Composite quadrature on the ``2**-depth`` grid with per-point coefficient values."""
    m = 2 ** depth
    e = np.arange(m + 1) / m
    ix, iy = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    ix, iy = ix.ravel(), iy.ravel()
    rects = np.column_stack([e[ix], e[ix + 1], e[iy], e[iy + 1]])
    g = material.geometry
    extra = []
    if isinstance(g, (LayeredSlab, GradedLayer)):
        yi = g.interface_y if isinstance(g, LayeredSlab) else g.y0
        row = int(math.floor(yi * m))
        if yi * m != row:
            cut = iy == row
            lower = rects[cut].copy()
            upper = rects[cut].copy()
            lower[:, 3] = yi
            upper[:, 2] = yi
            rects = np.vstack([rects[~cut], lower, upper])
    elif isinstance(g, CircularInclusion):
        xc = 0.5 * (rects[:, 0] + rects[:, 1])
        yc = 0.5 * (rects[:, 2] + rects[:, 3])
        hh = 0.5 / m
        dx = np.maximum(np.abs(xc - g.cx) - hh, 0.0)
        dy = np.maximum(np.abs(yc - g.cy) - hh, 0.0)
        dmin = np.hypot(dx, dy)
        dmax = np.hypot(np.abs(xc - g.cx) + hh, np.abs(yc - g.cy) + hh)
        cut = (dmin < g.r) & (dmax > g.r)
        for k in np.flatnonzero(cut):
            mom = disc_cell_moments((g.cx - xc[k]) / hh, (g.cy - yc[k]) / hh, g.r / hh)
            W = moment_fitted_weights(mom) * hh * hh
            px = xc[k] + hh * _G3
            py = yc[k] + hh * _G3
            X, Y = np.meshgrid(px, py, indexing="ij")
            extra.append((X.ravel(), Y.ravel(), W.ravel()))
        cut_rects = rects[cut]
        rects = rects[~cut]
    x, y, w = _rect_points(rects, rule)
    kxx, kxy, kyy, cap = material.fields(x, y)
    parts = [(x, y, w, kxx, kxy, kyy, cap)]
    if extra:
        # cut cells: matrix phase over the whole cell plus (secondary - matrix) on the disc part
        mp, spz = material.matrix_phase, material.secondary_phase
        cx_, cy_, cw = _rect_points(cut_rects, rule)
        ones = np.ones(cx_.size)
        parts.append((cx_, cy_, cw, mp.conductivity.kxx * ones, mp.conductivity.kxy * ones,
                      mp.conductivity.kyy * ones, mp.heat_capacity * ones))
        ex = np.concatenate([p[0] for p in extra])
        ey = np.concatenate([p[1] for p in extra])
        ew = np.concatenate([p[2] for p in extra])
        o = np.ones(ex.size)
        parts.append((ex, ey, ew,
                      (spz.conductivity.kxx - mp.conductivity.kxx) * o,
                      (spz.conductivity.kxy - mp.conductivity.kxy) * o,
                      (spz.conductivity.kyy - mp.conductivity.kyy) * o,
                      (spz.heat_capacity - mp.heat_capacity) * o))
    cols = [np.concatenate([p[i] for p in parts]) for i in range(7)]
    return QuadPoints(*cols)


def edge_quadrature(name, depth, rule="TwoPointGauss"):
    """Points ``(x, y)`` and weights along one edge of the unit square."""
    m = 2 ** depth
    g, gw = _rule_1d(rule)
    s = ((np.arange(m)[:, None] + g[None, :]) / m).ravel()
    w = np.tile(gw / m, m)
    x, y = edge_points(name, s)
    # one ulp inside: step functions are right-continuous, traces at 1 are left limits
    x = np.minimum(x, np.nextafter(1.0, 0.0))
    y = np.minimum(y, np.nextafter(1.0, 0.0))
    return x, y, w


def _line_points(depth, rule, breaks=()):
    m = 2 ** depth
    e = np.unique(np.concatenate([np.arange(m + 1) / m, np.asarray(breaks, dtype=float)]))
    g, gw = _rule_1d(rule)
    h = np.diff(e)
    s = (e[:-1, None] + h[:, None] * g[None, :]).ravel()
    w = (h[:, None] * gw[None, :]).ravel()
    return s, w


# ---------------------------------------------------------------------------
# lifting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LiftingField:
    """Bilinear interpolant of the Dirichlet corner data (zero when no edge is Dirichlet)."""

    boundary: BoundarySpec

    def corners(self, t=0.0, derivative=False):
        if not self.boundary.dirichlet_edges:
            return {(0, 0): 0.0, (1, 0): 0.0, (0, 1): 0.0, (1, 1): 0.0}
        return corner_values(self.boundary, t, derivative)

    @property
    def is_zero(self):
        return all(c.value.is_zero for n, c in self.boundary.items() if c.kind == "dirichlet")

    @property
    def time_independent(self):
        return all(c.value.time_independent for n, c in self.boundary.items()
                   if c.kind == "dirichlet")

    def coefficients(self, t=0.0):
        """Level-0 hat coefficients ``{(kx, ky): value}``; they equal the corner values."""
        return dict(self.corners(t))

    @staticmethod
    def _bilinear(c, x, y):
        return (c[(0, 0)] * (1 - x) * (1 - y) + c[(1, 0)] * x * (1 - y)
                + c[(0, 1)] * (1 - x) * y + c[(1, 1)] * x * y)

    def value(self, x, y, t=0.0):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return self._bilinear(self.corners(t), x, y)

    def time_derivative(self, x, y, t=0.0):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return self._bilinear(self.corners(t, derivative=True), x, y)

    def gradient(self, x, y, t=0.0):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        c = self.corners(t)
        gx = (c[(1, 0)] - c[(0, 0)]) * (1 - y) + (c[(1, 1)] - c[(0, 1)]) * y
        gy = (c[(0, 1)] - c[(0, 0)]) * (1 - x) + (c[(1, 1)] - c[(1, 0)]) * x
        return gx, gy

    def trace_error(self, t=0.0, samples=257):
        s = np.linspace(0.0, 1.0, samples)
        err = 0.0
        for name, c in self.boundary.items():
            if c.kind == "dirichlet":
                x, y = edge_points(name, s)
                err = max(err, float(np.max(np.abs(c.value(x, y, t) - self.value(x, y, t)))))
        return err


def build_lifting(problem: ProblemDefinition, table: DyadicTable = None) -> LiftingField:
    return LiftingField(problem.boundary)


# ---------------------------------------------------------------------------
# bilinear nodal machinery (hat path)
# ---------------------------------------------------------------------------

def q1_matrix(J, x, y, deriv=(0, 0)):
    """Sparse values of the bilinear nodal basis on the level-``J`` grid at points."""
    n = 2 ** J
    n1 = n + 1
    x = np.asarray(x, float).ravel()
    y = np.asarray(y, float).ravel()
    fx, fy = x * n, y * n
    ix = np.clip(np.floor(fx).astype(np.int64), 0, n - 1)
    iy = np.clip(np.floor(fy).astype(np.int64), 0, n - 1)
    tx, ty = fx - ix, fy - iy

    def shape(t, d):
        if d:
            return np.full(t.shape, -float(n)), np.full(t.shape, float(n))
        return 1.0 - t, t

    x0, x1 = shape(tx, deriv[0])
    y0, y1 = shape(ty, deriv[1])
    base = iy * n1 + ix
    cols = np.concatenate([base, base + 1, base + n1, base + n1 + 1])
    vals = np.concatenate([x0 * y0, x1 * y0, x0 * y1, x1 * y1])
    rows = np.tile(np.arange(x.size), 4)
    return sp.csr_matrix((vals, (rows, cols)), shape=(x.size, n1 * n1))


def _weighted_gram(A, w, B=None):
    B = A if B is None else B
    return (A.T @ sp.diags(w) @ B).tocsr()


def _finish(A, drop_tol=0.0):
    A = sp.csr_matrix(0.5 * (A + A.T))
    if drop_tol > 0:
        A.data[np.abs(A.data) <= drop_tol] = 0.0
    A.eliminate_zeros()
    A.sort_indices()
    return A


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def _y_only(material):
    return isinstance(material.geometry, (Homogeneous, LayeredSlab, GradedLayer))


def _robin_edges(problem):
    out = []
    for name, c in problem.boundary.items():
        if c.kind == "robin":
            if not c.h >= 0:
                raise ValidationError(f"Robin coefficient h must be >= 0 on edge {name}")
            if c.h > 0:
                out.append((name, c))
    return out


class _Operators:
    """Integration machinery bound to one problem, family and rule."""

    def __init__(self, problem: ProblemDefinition, family, J, quad: QuadratureRule, table=None,
                 q=10):
        self.problem = problem
        self.family = get_family(family)
        self.J = J
        self.quad = quad
        self.table = table if table is not None else build_dyadic_table(self.family, q)
        self.lifting = build_lifting(problem)
        self._pts = None
        self._nodal = None
        self._static_load = {}

    @property
    def points(self) -> QuadPoints:
        if self._pts is None:
            self._pts = quadrature_points(self.problem.material, self.J + self.quad.s,
                                          self.quad.rule)
        return self._pts

    def edge_depth(self):
        return self.J + self.quad.s if self.family.is_hat else \
            max(self.J + self.quad.s, self.quad.line_depth)

    # -- hats ------------------------------------------------------------------
    def nodal(self):
        if self._nodal is None:
            P = self.points
            J = self.J
            B0 = q1_matrix(J, P.x, P.y)
            Bx = q1_matrix(J, P.x, P.y, (1, 0))
            By = q1_matrix(J, P.x, P.y, (0, 1))
            M = _weighted_gram(B0, P.w * P.cap)
            K = _weighted_gram(Bx, P.w * P.kxx) + _weighted_gram(By, P.w * P.kyy) \
                + _weighted_gram(Bx, P.w * P.kxy, By) + _weighted_gram(By, P.w * P.kxy, Bx)
            for name, c in _robin_edges(self.problem):
                ex, ey, ew = edge_quadrature(name, self.edge_depth(), self.quad.rule)
                K = K + _weighted_gram(q1_matrix(J, ex, ey), ew * c.h)
            self._nodal = (M.tocsr(), K.tocsr(), (B0, Bx, By))
        return self._nodal

    # -- matrices ----------------------------------------------------------------
    def matrices(self, iset: IndexSet):
        if self.family.is_hat:
            Mn, Kn, _ = self.nodal()
            T = hat_transform_matrix(iset)
            return T.T @ Mn @ T, T.T @ Kn @ T
        if _y_only(self.problem.material):
            M, K = self._separable(iset)
        else:
            M, K = self._generic(iset)
        for name, c in _robin_edges(self.problem):
            ex, ey, ew = edge_quadrature(name, self.edge_depth(), self.quad.rule)
            (E,) = evaluation_matrices(iset, self.table, ex, ey)
            K = K + _weighted_gram(E, ew * c.h)
        return M, K

    def _generic(self, iset, chunk=1 << 15):
        P = self.points
        n = len(iset)
        M = sp.csr_matrix((n, n))
        K = sp.csr_matrix((n, n))
        for a in range(0, len(P), chunk):
            sl = slice(a, a + chunk)
            x, y, w = P.x[sl], P.y[sl], P.w[sl]
            B0, Bx, By = evaluation_matrices(iset, self.table, x, y, ((0, 0), (1, 0), (0, 1)))
            M = M + _weighted_gram(B0, w * P.cap[sl])
            K = K + _weighted_gram(Bx, w * P.kxx[sl]) + _weighted_gram(By, w * P.kyy[sl]) \
                + _weighted_gram(Bx, w * P.kxy[sl], By) + _weighted_gram(By, w * P.kxy[sl], Bx)
        return M, K

    def _separable(self, iset):
        mat = self.problem.material
        g = mat.geometry
        depth = max(self.J + self.quad.s, self.quad.line_depth)
        brk = [g.interface_y] if isinstance(g, LayeredSlab) else \
            [g.y0] if isinstance(g, GradedLayer) else []
        s, w = _line_points(depth, self.quad.rule, brk)
        kxx, kxy, kyy, cap = mat.fields(np.full(s.shape, 0.5), s)
        fx, ax = _factor_ids(iset, axis=0)
        fy, by = _factor_ids(iset, axis=1)
        E0x, E1x = _factor_values(self.table, fx, s)
        E0y, E1y = _factor_values(self.table, fy, s)
        Mx = (E0x * w) @ E0x.T
        Sx = (E1x * w) @ E1x.T
        Cx = (E1x * w) @ E0x.T
        My = (E0y * (w * cap)) @ E0y.T
        Ky = (E0y * (w * kxx)) @ E0y.T
        Sy = (E1y * (w * kyy)) @ E1y.T
        Dy = (E0y * (w * kxy)) @ E1y.T
        r, c = _overlap_pattern(iset)
        axr, axc, byr, byc = ax[r], ax[c], by[r], by[c]
        mv = Mx[axr, axc] * My[byr, byc]
        kv = Sx[axr, axc] * Ky[byr, byc] + Mx[axr, axc] * Sy[byr, byc] \
            + Cx[axr, axc] * Dy[byr, byc] + Cx[axc, axr] * Dy[byc, byr]
        n = len(iset)
        return (sp.csr_matrix((mv, (r, c)), shape=(n, n)),
                sp.csr_matrix((kv, (r, c)), shape=(n, n)))

    # -- load --------------------------------------------------------------------
    def _load_static(self):
        return self.problem.source.time_independent and self.lifting.time_independent and all(
            c.value.time_independent for _, c in self.problem.boundary.items()
            if c.kind != "dirichlet")

    def load_parts(self, t):
        """Integrand samples ``(x, y, {deriv: weights})`` for the volume and each flux edge."""
        P = self.points
        L = self.lifting
        f = self.problem.source(P.x, P.y, t)
        r0 = P.w * (f - P.cap * L.time_derivative(P.x, P.y, t))
        gx, gy = L.gradient(P.x, P.y, t)
        parts = [(P.x, P.y, {(0, 0): r0,
                             (1, 0): -P.w * (P.kxx * gx + P.kxy * gy),
                             (0, 1): -P.w * (P.kxy * gx + P.kyy * gy)})]
        for name, c in self.problem.boundary.items():
            if c.kind == "dirichlet":
                continue
            if c.kind == "neumann" and c.value.is_zero:
                continue
            if c.kind == "robin" and c.h == 0:
                continue
            ex, ey, ew = edge_quadrature(name, self.edge_depth(), self.quad.rule)
            if c.kind == "neumann":
                vals = ew * c.value(ex, ey, t)
            else:
                vals = ew * c.h * (c.value(ex, ey, t) - L.value(ex, ey, t))
            parts.append((ex, ey, {(0, 0): vals}))
        return parts

    def load(self, iset: IndexSet, t):
        key = None
        if self._load_static():
            key = (iset.indices[0] if len(iset) else None, len(iset), hash(iset))
            if key in self._static_load:
                return self._static_load[key].copy()
        if self.family.is_hat:
            bn = self.nodal_load(t)
            b = hat_transform_matrix(iset).T @ bn
        else:
            b = np.zeros(len(iset))
            for x, y, wts in self.load_parts(t):
                b += weighted_sums(iset, self.table, x, y, wts)
        if key is not None:
            self._static_load[key] = b.copy()
        return b

    def nodal_load(self, t):
        if self._load_static() and "nodal" in self._static_load:
            return self._static_load["nodal"]
        J = self.J
        bn = np.zeros((2 ** J + 1) ** 2)
        for x, y, wts in self.load_parts(t):
            for d, v in wts.items():
                bn += q1_matrix(J, x, y, d).T @ v
        if self._load_static():
            self._static_load["nodal"] = bn
        return bn


def _factor_ids(iset, axis):
    keys = {}
    ids = np.empty(len(iset), dtype=np.int64)
    for n, lam in enumerate(iset.indices):
        f = lam.factors()[axis]
        ids[n] = keys.setdefault(f, len(keys))
    return list(keys), ids


def _factor_values(table, factors, s):
    E0 = np.empty((len(factors), s.size))
    E1 = np.empty((len(factors), s.size))
    for i, (kind, j, k) in enumerate(factors):
        E0[i] = eval_factor(table, kind, j, k, s, 0)
        E1[i] = eval_factor(table, kind, j, k, s, 1)
    return E0, E1


def _overlap_pattern(iset):
    """Row/column ordinals of index pairs whose supports overlap with positive area."""
    J = iset.J
    m = 2 ** J
    boxes = iset.support_boxes()
    rows, cols = [], []
    for n, (ax, bx, ay, by) in enumerate(boxes):
        i0, i1 = int(round(ax * m)), int(round(bx * m))
        j0, j1 = int(round(ay * m)), int(round(by * m))
        ci = (np.arange(j0, j1)[:, None] * m + np.arange(i0, i1)[None, :]).ravel()
        rows.append(np.full(ci.size, n))
        cols.append(ci)
    C = sp.csr_matrix((np.ones(sum(r.size for r in rows)),
                       (np.concatenate(rows), np.concatenate(cols))), shape=(len(iset), m * m))
    P = (C @ C.T).tocoo()
    return P.row, P.col


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _ops(iset, problem, quad, table):
    quad = quad or QuadratureRule()
    return _Operators(problem, iset.family, iset.J, quad, table)


def assemble_mass(iset: IndexSet, problem: ProblemDefinition, quad: QuadratureRule = None,
                  table: DyadicTable = None, drop_tol=0.0):
    """``M[l, m] = integral of rho c_p psi_m psi_l`` (CSR, symmetric)."""
    if len(iset) == 0:
        raise ValidationError("index set is empty")
    M, _ = _ops(iset, problem, quad, table).matrices(iset)
    return _finish(M, drop_tol)


def assemble_stiffness(iset: IndexSet, problem: ProblemDefinition, quad: QuadratureRule = None,
                       table: DyadicTable = None, drop_tol=0.0):
    """``K[l, m] = integral of grad psi_l . K grad psi_m`` plus Robin edge terms."""
    if len(iset) == 0:
        raise ValidationError("index set is empty")
    _robin_edges(problem)
    ellipticity_bounds(problem.material, 33)
    _, K = _ops(iset, problem, quad, table).matrices(iset)
    return _finish(K, drop_tol)


def assemble_load(iset: IndexSet, problem: ProblemDefinition, quad: QuadratureRule = None,
                  t=0.0, lifting: LiftingField = None, table: DyadicTable = None):
    """Load vector at time ``t`` with the lifting correction applied."""
    if len(iset) == 0:
        raise ValidationError("index set is empty")
    ops = _ops(iset, problem, quad, table)
    if lifting is not None:
        ops.lifting = lifting
    return ops.load(iset, t)


class Assembler:
    """Caches everything that does not depend on the active set.

    Hats keep the nodal matrices; other families assemble the full index set
    once and restrict.  Restriction gives the same entries as assembling the
    subset directly because Galerkin entries depend only on the two indices.
    """

    def __init__(self, problem: ProblemDefinition, disc: Discretization, table=None):
        self.problem = problem
        self.disc = disc
        self.family = get_family(disc.family)
        self.ops = _Operators(problem, self.family, disc.J, disc.quad, table, disc.q)
        self.table = self.ops.table
        self.full = full_index_set(disc.J, self.family, problem.boundary.dirichlet_edges)
        self.lifting = self.ops.lifting
        _robin_edges(problem)
        ellipticity_bounds(problem.material, 33)
        self._full_mk = None
        self._T_full = None
        self._full_load = {}

    def _cols(self, iset):
        return np.array([self.full.position(i) for i in iset.indices], dtype=np.int64)

    def matrices(self, iset: IndexSet):
        cols = self._cols(iset)
        if self.family.is_hat:
            if self._T_full is None:
                self._T_full = hat_transform_matrix(self.full)
            Mn, Kn, _ = self.ops.nodal()
            T = self._T_full[:, cols]
            M, K = T.T @ Mn @ T, T.T @ Kn @ T
        else:
            if self._full_mk is None:
                self._full_mk = tuple(_finish(A) for A in self.ops.matrices(self.full))
            M = self._full_mk[0][cols][:, cols]
            K = self._full_mk[1][cols][:, cols]
        return _finish(M, self.disc.drop_tol), _finish(K, self.disc.drop_tol)

    def load(self, iset: IndexSet, t):
        cols = self._cols(iset)
        if self.family.is_hat:
            if self._T_full is None:
                self._T_full = hat_transform_matrix(self.full)
            return self._T_full[:, cols].T @ self.ops.nodal_load(t)
        static = self.ops._load_static()
        if static and "full" in self._full_load:
            return self._full_load["full"][cols]
        b = np.zeros(len(self.full))
        for x, y, wts in self.ops.load_parts(t):
            b += weighted_sums(self.full, self.table, x, y, wts)
        if static:
            self._full_load["full"] = b
        return b[cols]


def write_matrix_market(path, A, comment=""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, symmetry="symmetric")
