"""Backward Euler with Jacobi-preconditioned conjugate gradients."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .adaptivity import ActiveSet, AdaptivityPolicy, adapt, initial_active_set
from .assembly import Assembler, Discretization
from .errors import (ConvergenceError, DimensionError, MatrixError, StepError, ValidationError,
                     WavegalError)
from .mra import evaluate_expansion, project_function
from .problem import ProblemDefinition

PRECONDITIONERS = ("Jacobi", "LevelScaled")


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError("dt must be positive")
        if self.n_steps < 1:
            raise ValidationError("n_steps must be >= 1")

    @property
    def t_final(self):
        return self.dt * self.n_steps

    def time(self, n):
        return n * self.dt

    @classmethod
    def from_final(cls, t_final, dt):
        if not dt > 0:
            raise ValidationError("dt must be positive")
        n = int(round(t_final / dt))
        if n < 1 or abs(n * dt - t_final) > 1e-12 * max(1.0, abs(t_final)):
            raise ValidationError(f"t_final={t_final} is not an integer multiple of dt={dt}")
        return cls(dt, n)


@dataclass(frozen=True)
class PcgConfig:
    tol: float = 1e-10
    max_iter: int = None
    preconditioner: str = "Jacobi"

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValidationError("PCG tolerance must lie in (0, 1)")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValidationError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class PcgResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: tuple = ()


def pcg_solve(A, b, cfg: PcgConfig = PcgConfig(), x0=None) -> PcgResult:
    """Solve ``A x = b`` for SPD ``A``; stops on ``||b - A x|| <= tol ||b||``.

    Both named preconditioners are the inverse diagonal of ``A``.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if A.shape != (n, n):
        raise DimensionError(f"matrix shape {A.shape} does not match rhs length {n}")
    if not np.all(np.isfinite(b)):
        raise ValidationError("right-hand side is not finite")
    max_iter = cfg.max_iter if cfg.max_iter is not None else max(10 * n, 1)
    d = A.diagonal() if sp.issparse(A) else np.diag(A).copy()
    if np.any(d <= 0):
        raise MatrixError("matrix has a non-positive diagonal entry")
    dinv = 1.0 / d
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return PcgResult(np.zeros(n), 0, 0.0, (0.0,))
    # iterate on the unit-norm problem; decayed states would otherwise underflow
    b = b / bnorm
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float) / bnorm
    r = b - A @ x
    rel = float(np.linalg.norm(r))
    hist = [rel]
    if rel <= cfg.tol:
        return PcgResult(x * bnorm, 0, rel, tuple(hist))
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not pAp > 0:
            raise MatrixError(f"p'Ap = {pAp:.3e} <= 0 at iteration {it}: matrix not SPD")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = float(np.linalg.norm(r))
        hist.append(rel)
        if rel <= cfg.tol:
            return PcgResult(x * bnorm, it, rel, tuple(hist))
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"PCG did not reach {cfg.tol:g} in {max_iter} iterations "
                           f"(residual {rel:.3e})", residuals=tuple(hist))


def _step(M, K, u_n, f_next, dt, cfg):
    u_n = np.asarray(u_n, dtype=float)
    f_next = np.asarray(f_next, dtype=float)
    if u_n.shape != f_next.shape or M.shape != (u_n.size, u_n.size) or K.shape != M.shape:
        raise DimensionError("backward Euler operands have inconsistent dimensions")
    if not dt > 0:
        raise ValidationError("dt must be positive")
    A = M + dt * K
    rhs = M @ u_n + dt * f_next
    return pcg_solve(A, rhs, cfg, x0=u_n)


def backward_euler_step(M, K, u_n, f_next, dt, cfg: PcgConfig = PcgConfig()):
    """``u`` solving ``(M + dt K) u = M u_n + dt f_next``."""
    return _step(M, K, u_n, f_next, dt, cfg).x


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    active_dofs: int
    pcg_iters: int
    pcg_residual: float
    wall_ms: float


DIAGNOSTICS_HEADER = ["step", "t", "active_dofs", "pcg_iters", "pcg_residual", "wall_ms"]


@dataclass
class TransientSolution:
    """Trajectory ``(t_n, u_n, snapshot id)`` plus the active sets and per-step statistics.

    ``u_n`` is the homogeneous part; the temperature is ``lifting + sum u psi``.
    """

    times: list = field(default_factory=list)
    coeffs: list = field(default_factory=list)
    snapshot_ids: list = field(default_factory=list)
    sets: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    assembler: Assembler = None

    def set_of(self, n) -> ActiveSet:
        return self.sets[self.snapshot_ids[n]]

    @property
    def final_coeffs(self):
        return self.coeffs[-1]

    @property
    def final_set(self) -> ActiveSet:
        return self.set_of(-1)

    @property
    def final_time(self):
        return self.times[-1]

    def temperature(self, x, y, n=-1):
        """Temperature (lifting included) of state ``n`` at points."""
        a = self.assembler
        act = self.set_of(n)
        v = evaluate_expansion(self.coeffs[n], act.iset, a.table, (x, y))
        return v + a.lifting.value(x, y, self.times[n])

    def energy(self, n):
        M, _ = self.assembler.matrices(self.set_of(n).iset)
        u = self.coeffs[n]
        return float(u @ (M @ u))

    def diagnostics_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DIAGNOSTICS_HEADER)
        for d in self.diagnostics:
            w.writerow([d.step, repr(d.t), d.active_dofs, d.pcg_iters, repr(d.pcg_residual),
                        f"{d.wall_ms:.3f}"])
        return buf.getvalue()


def initial_coefficients(problem: ProblemDefinition, assembler: Assembler):
    """Projection of ``T0 - T_g(0)`` onto the full index set."""
    L = assembler.lifting

    def f(x, y):
        return problem.initial(x, y, 0.0) - L.value(x, y, 0.0)

    return project_function(f, assembler.full, assembler.table)


def run_transient(problem: ProblemDefinition, disc: Discretization,
                  policy: AdaptivityPolicy = None, grid: TimeGrid = None,
                  pcg: PcgConfig = PcgConfig(), record_timing=True, assembler=None,
                  keep_history=True) -> TransientSolution:
    """Initialise, then per step: assemble on the active set, solve, adapt.

    ``policy=None`` runs on the full index set (uniform baseline).
    """
    if grid is None:
        grid = TimeGrid.from_final(problem.t_final, problem.t_final / 100)
    a = assembler if assembler is not None else Assembler(problem, disc)
    full = a.full
    u_full = initial_coefficients(problem, a)
    if policy is None:
        act = ActiveSet(full, range(len(full)), 0)
        u = u_full
    else:
        act = initial_active_set(u_full, full, policy, 0)
        u = u_full[act.ordinals]
    sol = TransientSolution(assembler=a)
    sol.sets[act.snapshot_id] = act
    sol.times.append(0.0)
    sol.coeffs.append(u.copy())
    sol.snapshot_ids.append(act.snapshot_id)
    next_id = 1
    cache_key, M, K = None, None, None
    for n in range(1, grid.n_steps + 1):
        t = grid.time(n)
        t0 = time.perf_counter()
        try:
            if cache_key != act.snapshot_id:
                M, K = a.matrices(act.iset)
                cache_key = act.snapshot_id
            f = a.load(act.iset, t)
            res = _step(M, K, u, f, grid.dt, pcg)
        except WavegalError as exc:
            raise StepError(str(exc), step=n) from exc
        u = res.x
        wall = (time.perf_counter() - t0) * 1e3 if record_timing else 0.0
        sol.diagnostics.append(StepRecord(n, t, len(act), res.iterations, res.residual, wall))
        if not keep_history and len(sol.times) > 1:
            sol.times.pop(0)
            sol.coeffs.pop(0)
            sol.snapshot_ids.pop(0)
        sol.times.append(t)
        sol.coeffs.append(u.copy())
        sol.snapshot_ids.append(act.snapshot_id)
        if policy is not None and n < grid.n_steps and n % policy.stride == 0:
            new, u_new = adapt(act, u, policy, next_id)
            if new != act:
                act = new
                sol.sets[act.snapshot_id] = act
                next_id += 1
            u = u_new
    if not keep_history:
        live = set(sol.snapshot_ids)
        sol.sets = {k: v for k, v in sol.sets.items() if k in live}
    return sol
