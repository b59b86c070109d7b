"""Independent oracles: finite-volume/difference reference solver, 1-D steady profiles, error norms."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import OracleError, ResolutionError, ValidationError
from .problem import ProblemDefinition, edge_points


@dataclass(frozen=True, eq=False)
class UniformGridField:
    """Nodal values ``values[iy, ix]`` on the uniform ``n x n`` grid of [0, 1]^2."""

    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 3:
            raise ValidationError("grid field must be n x n with n >= 3")
        if not np.all(np.isfinite(v)):
            raise ValidationError("grid field contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def spacing(self):
        return 1.0 / (self.n - 1)

    @property
    def nodes(self):
        return np.linspace(0.0, 1.0, self.n)

    def sample(self, x, y):
        from .mra import bilinear_sample
        return bilinear_sample(self.values, x, y)

    def to_csv(self):
        return field_csv(self.nodes, self.values)


def field_csv(s, values):
    """``x,y,T`` rows, row-major with x fastest."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "T"])
    for iy, yv in enumerate(s):
        for ix, xv in enumerate(s):
            w.writerow([repr(float(xv)), repr(float(yv)), repr(float(values[iy, ix]))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# finite-volume reference
# ---------------------------------------------------------------------------

def _face_conductance(material, comp, xa, ya, dx, dy, h):
    """Conductance per unit face length between nodes ``a`` and ``a + (dx, dy)``.

    Harmonic mean along the segment (quarter points), arithmetic mean across
    the face over the centres of its halves that lie inside the domain.
    """
    acc = np.zeros(xa.shape)
    cnt = np.zeros(xa.shape)
    for off in (-h / 4, h / 4):
        ox, oy = (0.0, off) if comp == "kxx" else (off, 0.0)
        valid = (xa + ox >= 0) & (xa + ox <= 1) & (ya + oy >= 0) & (ya + oy <= 1)
        ks = []
        for frac in (0.25, 0.75):
            px = np.clip(xa + frac * dx + ox, 0.0, 1.0)
            py = np.clip(ya + frac * dy + oy, 0.0, 1.0)
            kxx, _, kyy, _ = material.fields(px, py)
            ks.append(kxx if comp == "kxx" else kyy)
        harm = 2.0 / (1.0 / ks[0] + 1.0 / ks[1])
        acc += np.where(valid, harm, 0.0)
        cnt += valid
    return acc / cnt


def _operator(problem: ProblemDefinition, n):
    """Node grid, control volumes, capacities and the conductance (graph Laplacian) matrix."""
    mat = problem.material
    h = 1.0 / (n - 1)
    s = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(s, s, indexing="xy")
    # control-volume widths: h inside, h/2 on the boundary
    wv = np.full(n, h)
    wv[0] = wv[-1] = h / 2
    Wx, Wy = np.meshgrid(wv, wv, indexing="xy")
    vol = Wx * Wy
    # heat capacity averaged over the quarter cells of the control volume
    cap = np.zeros((n, n))
    cnt = np.zeros((n, n))
    for ox in (-0.25, 0.25):
        for oy in (-0.25, 0.25):
            px, py = X + ox * h, Y + oy * h
            ok = (px >= 0) & (px <= 1) & (py >= 0) & (py <= 1)
            _, _, _, c = mat.fields(np.clip(px, 0, 1), np.clip(py, 0, 1))
            cap += np.where(ok, c, 0.0)
            cnt += ok
    cap = cap / cnt * vol
    idx = np.arange(n * n).reshape(n, n)
    gx = _face_conductance(mat, "kxx", X[:, :-1], Y[:, :-1], h, 0.0, h) * Wy[:, :-1] / h
    gy = _face_conductance(mat, "kyy", X[:-1, :], Y[:-1, :], 0.0, h, h) * Wx[:-1, :] / h
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    g = np.concatenate([gx.ravel(), gy.ravel()])
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([g, g, -g, -g])
    L = sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))
    return X, Y, vol, cap.ravel(), L, wv


def _edge_nodes(name, n):
    idx = np.arange(n * n).reshape(n, n)
    return {"bottom": idx[0, :], "top": idx[-1, :], "left": idx[:, 0], "right": idx[:, -1]}[name]


def _boundary_terms(problem, n, wv, t):
    """Flux load (Neumann + Robin ambient) and Robin diagonal at time ``t``."""
    load = np.zeros(n * n)
    rdiag = np.zeros(n * n)
    s = np.linspace(0.0, 1.0, n)
    for name, c in problem.boundary.items():
        if c.kind == "dirichlet":
            continue
        nodes = _edge_nodes(name, n)
        x, y = edge_points(name, s)
        if c.kind == "neumann":
            np.add.at(load, nodes, c.value(x, y, t) * wv)
        else:
            np.add.at(load, nodes, c.h * c.value(x, y, t) * wv)
            np.add.at(rdiag, nodes, c.h * wv)
    return load, rdiag


def _dirichlet(problem, n, t):
    s = np.linspace(0.0, 1.0, n)
    fixed = {}
    for name, c in problem.boundary.items():
        if c.kind == "dirichlet":
            nodes = _edge_nodes(name, n)
            x, y = edge_points(name, s)
            v = c.value(x, y, t)
            for nd, vv in zip(nodes, v):
                fixed.setdefault(int(nd), []).append(float(vv))
    keys = np.array(sorted(fixed), dtype=np.int64)
    vals = np.array([sum(fixed[k]) / len(fixed[k]) for k in keys])
    return keys, vals


def fd_solve_transient(problem: ProblemDefinition, n, dt, t_final, snapshot_times=()):
    """Backward Euler on the node-centred 5-point scheme.

    Returns the field at ``t_final``, or ``(field, {t: field})`` when
    ``snapshot_times`` is given.  Interface faces use harmonic-mean
    conductivities; Neumann/Robin edges enter through half control volumes
    (equivalent to mirror ghost nodes); Dirichlet rows are eliminated.
    """
    if n < 17:
        raise ValidationError("reference grid needs n >= 17")
    if not dt > 0:
        raise ValidationError("dt must be positive")
    steps = int(round(t_final / dt))
    if steps < 1 or abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValidationError("t_final must be a positive integer multiple of dt")
    X, Y, vol, cap, L, wv = _operator(problem, n)
    _, rdiag = _boundary_terms(problem, n, wv, 0.0)
    A_full = (sp.diags(cap / dt) + L + sp.diags(rdiag)).tocsr()
    fixed, _ = _dirichlet(problem, n, 0.0)
    free = np.setdiff1d(np.arange(n * n), fixed)
    A_ff = A_full[free][:, free].tocsc()
    A_fd = A_full[free][:, fixed]
    try:
        lu = spla.splu(A_ff)
    except RuntimeError as exc:
        raise OracleError(f"reference factorisation failed: {exc}") from exc
    T = problem.initial(X, Y, 0.0).ravel().astype(float)
    _, gd = _dirichlet(problem, n, 0.0)
    T[fixed] = gd
    want = {round(float(ts) / dt): float(ts) for ts in snapshot_times}
    snaps = {}
    for k in range(1, steps + 1):
        t = k * dt
        src = problem.source(X, Y, t).ravel() * vol.ravel()
        load, _ = _boundary_terms(problem, n, wv, t)
        _, gd = _dirichlet(problem, n, t)
        rhs = cap / dt * T + src + load
        rhs_f = rhs[free] - A_fd @ gd
        Tf = lu.solve(rhs_f)
        if not np.all(np.isfinite(Tf)):
            raise OracleError(f"reference solve produced non-finite values at step {k}")
        T = np.empty(n * n)
        T[free] = Tf
        T[fixed] = gd
        if k in want:
            snaps[want[k]] = UniformGridField(T.reshape(n, n).copy(), t)
    out = UniformGridField(T.reshape(n, n), steps * dt)
    return (out, snaps) if snapshot_times else out


def fd_solve_steady(problem: ProblemDefinition, n, t=0.0):
    """Steady state of the same scheme (data frozen at time ``t``)."""
    if n < 17:
        raise ValidationError("reference grid needs n >= 17")
    X, Y, vol, cap, L, wv = _operator(problem, n)
    load, rdiag = _boundary_terms(problem, n, wv, t)
    A = (L + sp.diags(rdiag)).tocsr()
    fixed, gd = _dirichlet(problem, n, t)
    if fixed.size == 0 and not np.any(rdiag):
        raise OracleError("steady problem without Dirichlet or Robin data is singular")
    free = np.setdiff1d(np.arange(n * n), fixed)
    rhs = problem.source(X, Y, t).ravel() * vol.ravel() + load
    T = np.empty(n * n)
    T[fixed] = gd
    T[free] = spla.spsolve(A[free][:, free].tocsc(), rhs[free] - A[free][:, fixed] @ gd)
    return UniformGridField(T.reshape(n, n), t)


# ---------------------------------------------------------------------------
# 1-D steady profiles
# ---------------------------------------------------------------------------

class Profile1D:
    """Steady 1-D profile ``T(y)`` with T(0)=1, T(1)=0 for a y-dependent conductivity."""

    def __init__(self, conductivity, resistance):
        self.conductivity = conductivity
        self._R = resistance
        self.total_resistance = resistance(1.0)
        self.flux = 1.0 / self.total_resistance

    def __call__(self, y):
        return 1.0 - self.flux * self._R(np.asarray(y, dtype=float))

    def derivative(self, y):
        return -self.flux / self.conductivity(np.asarray(y, dtype=float))

    def field(self, x, y):
        return self(np.asarray(y, dtype=float) + 0.0 * np.asarray(x, dtype=float))


def analytic_slab_steady(k1, k2, interface_y=0.5) -> Profile1D:
    if not (k1 > 0 and k2 > 0):
        raise ValidationError("conductivities must be positive")
    yi = interface_y

    def k(y):
        return np.where(y < yi, k1, k2)

    def R(y):
        return np.where(y < yi, y / k1, yi / k1 + (y - yi) / k2)

    return Profile1D(k, R)


def analytic_fgm_steady(k_m, alpha, y0=0.5) -> Profile1D:
    if not k_m > 0:
        raise ValidationError("k_m must be positive")
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    if not 0 < y0 < 1:
        raise ValidationError("y0 must lie in (0, 1)")

    def k(y):
        return np.where(y < y0, k_m, k_m * (1 + alpha * (2 * y - 1)))

    def upper(y):
        if abs(alpha) < 1e-12:
            return (y - y0) / k_m
        return (np.log1p(alpha * (2 * y - 1)) - math.log1p(alpha * (2 * y0 - 1))) / (2 * alpha * k_m)

    def R(y):
        y = np.asarray(y, dtype=float)
        return np.where(y < y0, y / k_m, y0 / k_m + upper(np.maximum(y, y0)))

    return Profile1D(k, R)


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    l2_error: float
    h1_semi_error: float
    reference: str = ""
    resolution: int = 0

    def __post_init__(self):
        if self.l2_error < 0 or self.h1_semi_error < 0:
            raise ValidationError("error norms must be non-negative")

    def to_text(self):
        return (f"l2_error={self.l2_error!r}\nh1_semi_error={self.h1_semi_error!r}\n"
                f"reference={self.reference}\nresolution={self.resolution}\n"
                "normalization=raw\n")


def _sampler(solution):
    """``(f(x, y), finest_level)`` for the accepted solution representations."""
    from .mra import sample_expansion
    from .timestepper import TransientSolution
    if isinstance(solution, TransientSolution):
        act = solution.final_set
        a = solution.assembler
        u, t = solution.final_coeffs, solution.final_time

        def f(x, y):
            return sample_expansion(u, act.iset, a.table, x, y) + a.lifting.value(x, y, t)
        lev = int(act.iset.level.max()) if len(act) else 0
        return f, lev
    if callable(solution):
        return solution, getattr(solution, "finest_level", 0)
    iset, coeffs, table = solution[:3]
    iset = getattr(iset, "iset", iset)
    lifting = solution[3] if len(solution) > 3 else None
    t = solution[4] if len(solution) > 4 else 0.0

    def f(x, y):
        v = sample_expansion(coeffs, iset, table, x, y)
        return v + (lifting.value(x, y, t) if lifting is not None else 0.0)
    return f, int(iset.level.max()) if len(iset) else 0


def error_norms(solution, reference, n=None) -> ErrorReport:
    """L2 and H1-seminorm of (solution - reference) on a uniform grid.

    ``solution``: TransientSolution, ``(set, coeffs, table[, lifting, t])`` or
    a callable ``f(x, y)``.  ``reference``: UniformGridField, Profile1D, or a
    callable.  L2 uses the composite midpoint rule; the gradient uses centred
    differences at cell centres.
    """
    f, finest = _sampler(solution)
    if isinstance(reference, UniformGridField):
        n = reference.n
        tag = f"fd_n{n}"
        ref_nodes = reference.values
    else:
        n = n or max(129, 4 * 2 ** (finest + 1) + 1)
        tag = "analytic"
        s = np.linspace(0.0, 1.0, n)
        X, Y = np.meshgrid(s, s, indexing="xy")
        rf = reference.field if isinstance(reference, Profile1D) else reference
        ref_nodes = np.asarray(rf(X, Y), dtype=float)
    if n - 1 < 2 * 2 ** (finest + 1):
        raise ResolutionError(
            f"reference grid n={n} too coarse for finest level {finest} "
            f"(need n-1 >= {2 * 2 ** (finest + 1)})")
    h = 1.0 / (n - 1)
    s = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(s, s, indexing="xy")
    D = np.asarray(f(X, Y), dtype=float) - ref_nodes
    mid = (s[:-1] + s[1:]) / 2
    XM, YM = np.meshgrid(mid, mid, indexing="xy")
    if isinstance(reference, UniformGridField):
        ref_mid = 0.25 * (ref_nodes[:-1, :-1] + ref_nodes[1:, :-1] + ref_nodes[:-1, 1:]
                          + ref_nodes[1:, 1:])
    else:
        ref_mid = np.asarray(rf(XM, YM), dtype=float)
    Dm = np.asarray(f(XM, YM), dtype=float) - ref_mid
    l2 = math.sqrt(float(np.sum(Dm ** 2)) * h * h)
    gx = ((D[:-1, 1:] + D[1:, 1:]) - (D[:-1, :-1] + D[1:, :-1])) / (2 * h)
    gy = ((D[1:, :-1] + D[1:, 1:]) - (D[:-1, :-1] + D[:-1, 1:])) / (2 * h)
    h1 = math.sqrt(float(np.sum(gx ** 2 + gy ** 2)) * h * h)
    return ErrorReport(l2, h1, tag, n)
