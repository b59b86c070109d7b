"""Spatial and temporal convergence tables.

Spatial: uniform hats at J = 3..6 against the analytic steady slab and FGM
profiles. Temporal: backward Euler on a decaying sine mode, halving dt.
"""
import math

import numpy as np

from wavegal.assembly import Discretization
from wavegal.problem import (BoundarySpec, ConductivityTensor, EdgeCondition, Expr, Homogeneous,
                             MaterialMap, MaterialPhase, ProblemDefinition, fgm_problem,
                             slab_problem)
from wavegal.reference import analytic_fgm_steady, analytic_slab_steady, error_norms
from wavegal.timestepper import TimeGrid, run_transient


def spatial():
    print("case,J,dofs,l2_error,h1_semi_error")
    cases = [("slab", slab_problem(1.0, 10.0), analytic_slab_steady(1.0, 10.0)),
             ("fgm", fgm_problem(1.0, 1.0), analytic_fgm_steady(1.0, 1.0))]
    for name, pr, exact in cases:
        for J in range(3, 7):
            sol = run_transient(pr, Discretization("hat", J), None, TimeGrid(100.0, 2))
            rep = error_norms(sol, exact)
            print(f"{name},{J},{len(sol.final_set)},{rep.l2_error:.4e},{rep.h1_semi_error:.4e}")


def temporal(t_final=0.1, J=6):
    mat = MaterialMap(Homogeneous(), MaterialPhase(0, ConductivityTensor.isotropic(1.0)))
    bc = BoundarySpec(bottom=EdgeCondition.dirichlet(0.0), top=EdgeCondition.dirichlet(0.0))
    pr = ProblemDefinition(mat, bc, initial=Expr.sinxy(0, 1), t_final=t_final)
    s = (np.arange(64) + 0.5) / 64
    X, Y = np.meshgrid(s, s)
    exact = math.exp(-math.pi ** 2 * t_final) * np.sin(math.pi * Y)
    print("dt,rms_error,observed_order")
    prev = None
    for dt in (2e-2, 1e-2, 5e-3, 2.5e-3, 1.25e-3):
        sol = run_transient(pr, Discretization("hat", J), None, TimeGrid.from_final(t_final, dt))
        e = math.sqrt(np.mean((sol.temperature(X, Y) - exact) ** 2))
        order = "" if prev is None else f"{math.log2(prev / e):.3f}"
        print(f"{dt},{e:.4e},{order}")
        prev = e


if __name__ == "__main__":
    spatial()
    temporal()
