"""Adaptive vs uniform DOF counts at matched accuracy.

For each scenario, sweep the threshold and report the largest one whose L2
error stays within twice the uniform-J error, with its active DOF count.
"""
import argparse

from wavegal.adaptivity import AdaptivityPolicy
from wavegal.assembly import Discretization
from wavegal.problem import inclusion_problem, slab_problem
from wavegal.reference import error_norms, fd_solve_transient
from wavegal.timestepper import TimeGrid, run_transient

CASES = {
    "slab": (lambda: slab_problem(1.0, 10.0, t_final=0.1), 5, 0.01, 0.1),
    "inclusion": (lambda: inclusion_problem(t_final=2.0), 6, 0.05, 2.0),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--eps", default="1e-2,3e-3,1e-3,3e-4,1e-4")
    ap.add_argument("--ref-n", type=int, default=513)
    args = ap.parse_args()
    sweep = [float(e) for e in args.eps.split(",")]
    print("case,param,final_dofs,peak_dofs,full_dofs,l2_error")
    for name, (make, J, dt, tf) in CASES.items():
        pr = make()
        ref = fd_solve_transient(pr, args.ref_n, dt, tf)
        grid = TimeGrid.from_final(tf, dt)
        uni = run_transient(pr, Discretization("hat", J), None, grid)
        full = len(uni.assembler.full)
        e_uni = error_norms(uni, ref).l2_error
        print(f"{name},uniform,{full},{full},{full},{e_uni:.4e}")
        for eps in sweep:
            sol = run_transient(pr, Discretization("hat", J), AdaptivityPolicy(eps), grid)
            e = error_norms(sol, ref).l2_error
            peak = max(r.active_dofs for r in sol.diagnostics)
            mark = "  <- within 2x" if e <= 2 * e_uni else ""
            print(f"{name},{eps},{len(sol.final_set)},{peak},{full},{e:.4e}{mark}")


if __name__ == "__main__":
    main()
