from functools import lru_cache

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from wavegal.assembly import (Assembler, Discretization, QuadratureRule, _Operators,
                              assemble_load, assemble_mass, assemble_stiffness, build_lifting,
                              disc_cell_moments, quadrature_points, write_matrix_market)
from wavegal.errors import ValidationError
from wavegal.mra import (HAAR, Orientation, build_dyadic_table, eval_factor,
                         evaluate_basis_function, full_index_set, get_family, wavelet_index)
from wavegal.problem import (BoundarySpec, ConductivityTensor, EdgeCondition, Expr, Homogeneous,
                             MaterialMap, MaterialPhase, ProblemDefinition, fgm_problem,
                             inclusion_problem, slab_problem)


@lru_cache(maxsize=None)
def table(tag, q=10):
    return build_dyadic_table(get_family(tag), q)


def free_problem(k=1.0, **edges):
    mat = MaterialMap(Homogeneous(), MaterialPhase(0, ConductivityTensor.isotropic(k)))
    return ProblemDefinition(mat, BoundarySpec(**edges), t_final=1.0)


SCENARIOS = {"slab": slab_problem(), "inclusion": inclusion_problem(), "fgm": fgm_problem()}


# -- mass ----------------------------------------------------------------------------

def test_haar_single_scaling_mass():
    iset = full_index_set(1, HAAR).subset([0])
    assert assemble_mass(iset, free_problem()).toarray().ravel() == pytest.approx([1.0])


def test_haar_level_one_mass_is_identity():
    M = assemble_mass(full_index_set(1, HAAR), free_problem()).toarray()
    assert np.abs(M - np.eye(4)).max() <= 1e-10


def test_haar_stiffness_vanishes():
    K = assemble_stiffness(full_index_set(2, HAAR), free_problem())
    assert K.nnz == 0


def _fubini_mass_1d(tab, f1, f2, depth=15):
    h = 2.0 ** -depth
    x = np.arange(0, 1, h) + h / 2
    return float(np.dot(eval_factor(tab, *f1, x), eval_factor(tab, *f2, x)) * h)


def test_d4_mass_against_deep_product_quadrature():
    iset = full_index_set(3, "d4")
    M = assemble_mass(iset, free_problem(), table=table("d4")).toarray()
    rng = np.random.default_rng(0)
    for a, b in rng.integers(0, len(iset), size=(60, 2)):
        fa, fb = iset[a].factors(), iset[b].factors()
        ref = _fubini_mass_1d(table("d4"), fa[0], fb[0]) * _fubini_mass_1d(table("d4"), fa[1], fb[1])
        assert abs(M[a, b] - ref) <= 1e-6


# -- stiffness closed forms ----------------------------------------------------------

def test_hat_one_dimensional_section_is_tridiagonal():
    tab = table("hat")
    h = 2.0 ** -14
    x = np.arange(0, 1, h) + h / 2
    d = [eval_factor(tab, 0, 2, k, x, 1) / 2.0 for k in (1, 2, 3)]  # undo 2**(j/2)
    S = np.array([[np.dot(a, b) * h for b in d] for a in d])
    assert S == pytest.approx(np.array([[8, -4, 0], [-4, 8, -4], [0, -4, 8]]), abs=1e-9)


@pytest.mark.parametrize("J", [3, 4, 5])
def test_hat_stiffness_closed_forms(J):
    iset = full_index_set(J, "hat")
    K = assemble_stiffness(iset, free_problem())
    for j in range(J):
        k = 2 ** j // 2
        dd = iset.position(wavelet_index(j, Orientation.DIAGONAL, k, k))
        assert K[dd, dd] == pytest.approx(8 * 4 ** j / 3, rel=1e-12)
        if j >= 1:
            hh = iset.position(wavelet_index(j, Orientation.HORIZONTAL, k, k))
            assert K[hh, hh] == pytest.approx(10 * 4 ** j / 3, rel=1e-12)


@pytest.mark.parametrize("c", [0.5, 3.0, 40.0])
def test_stiffness_scales_with_conductivity(c):
    iset = full_index_set(3, "hat", {"bottom", "top"})
    K1 = assemble_stiffness(iset, slab_problem(1.0, 10.0)).toarray()
    Kc = assemble_stiffness(iset, slab_problem(c, 10.0 * c)).toarray()
    assert np.abs(Kc - c * K1).max() <= 1e-12 * c * np.abs(K1).max()


# -- brute-force oracle --------------------------------------------------------------

def brute_force(iset, problem, depth, tab):
    """Dense pairwise quadrature with independent per-function evaluation."""
    P = quadrature_points(problem.material, depth, "TwoPointGauss")
    V = np.array([evaluate_basis_function(l, tab, (P.x, P.y)) for l in iset])
    Dx = np.array([evaluate_basis_function(l, tab, (P.x, P.y), (1, 0)) for l in iset])
    Dy = np.array([evaluate_basis_function(l, tab, (P.x, P.y), (0, 1)) for l in iset])
    M = (V * (P.w * P.cap)) @ V.T
    K = (Dx * (P.w * P.kxx)) @ Dx.T + (Dy * (P.w * P.kyy)) @ Dy.T \
        + (Dx * (P.w * P.kxy)) @ Dy.T + (Dy * (P.w * P.kxy)) @ Dx.T
    return M, K


@pytest.mark.parametrize("name", list(SCENARIOS))
def test_hat_assembly_matches_brute_force(name):
    pr = SCENARIOS[name]
    J, s = 3, 2
    iset = full_index_set(J, "hat", pr.boundary.dirichlet_edges)
    quad = QuadratureRule(s)
    M = assemble_mass(iset, pr, quad).toarray()
    K = assemble_stiffness(iset, pr, quad).toarray()
    Mo, Ko = brute_force(iset, pr, J + s + 2, table("hat"))
    assert np.abs(M - Mo).max() <= 1e-5 * np.abs(Mo).max()
    assert np.abs(K - Ko).max() <= 1e-5 * np.abs(Ko).max()


def test_disc_moments_against_sampling():
    cx, cy, r = 0.3, -0.5, 1.1
    n = 2000
    s = (np.arange(n) + 0.5) / n * 2 - 1
    X, Y = np.meshgrid(s, s, indexing="ij")
    inside = (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
    mom = disc_cell_moments(cx, cy, r)
    for a in range(3):
        for b in range(3):
            ref = np.sum(X ** a * Y ** b * inside) * (2.0 / n) ** 2
            assert mom[a, b] == pytest.approx(ref, abs=2e-3)


def test_cut_cell_rule_recovers_disc_area():
    pr = inclusion_problem(k_m=1.0, k_inc=2.0)
    P = quadrature_points(pr.material, 5)
    # integral of k over the square is 1 + inclusion area
    assert np.sum(P.w * P.kxx) == pytest.approx(1.0 + np.pi * 0.04, rel=1e-6)


# -- structure -----------------------------------------------------------------------

@pytest.mark.parametrize("name", list(SCENARIOS))
@pytest.mark.parametrize("fam,J", [("hat", 4), ("d4", 3)])
def test_symmetry_and_spd_chain(name, fam, J):
    pr = SCENARIOS[name]
    iset = full_index_set(J, fam, pr.boundary.dirichlet_edges)
    assert len(iset) <= 300
    M = assemble_mass(iset, pr, table=table(fam))
    K = assemble_stiffness(iset, pr, table=table(fam))
    for A in (M, K):
        assert abs(A - A.T).max() <= 1e-10
    for dt in (1e-3, 1.0, 1e3):
        np.linalg.cholesky((M + dt * K).toarray())


@pytest.mark.parametrize("fam,which", [("Haar", "M"), ("d4", "K"), ("hat", "K")])
def test_sparsity_fraction_drops_with_level(fam, which):
    fracs = []
    for J in (4, 5):
        iset = full_index_set(J, fam)
        A = (assemble_mass if which == "M" else assemble_stiffness)(iset, free_problem(),
                                                                   table=table(fam))
        fracs.append(A.nnz / len(iset) ** 2)
    assert fracs[1] <= 0.2 and fracs[1] < fracs[0]


def test_drop_tolerance_removes_small_entries():
    iset = full_index_set(3, "d4")
    K = assemble_stiffness(iset, free_problem(), table=table("d4"))
    Kd = assemble_stiffness(iset, free_problem(), table=table("d4"), drop_tol=1e-3)
    assert Kd.nnz < K.nnz
    assert np.abs(Kd.data).min() > 1e-3


@pytest.mark.parametrize("fam,J", [("d4", 3), ("d6", 4)])
def test_mass_quadrature_converges(fam, J):
    pr = fgm_problem()
    iset = full_index_set(J, fam, pr.boundary.dirichlet_edges)
    Ms = [_Operators(pr, fam, J, QuadratureRule(s), table(fam))._generic(iset)[0].toarray()
          for s in (1, 2, 3)]
    d1, d2 = np.abs(Ms[1] - Ms[0]).max(), np.abs(Ms[2] - Ms[1]).max()
    assert d1 >= 2 * d2


def test_d6_stiffness_quadrature_converges():
    pr = fgm_problem()
    iset = full_index_set(4, "d6", pr.boundary.dirichlet_edges)
    Ks = [_Operators(pr, "d6", 4, QuadratureRule(s), table("d6"))._generic(iset)[1].toarray()
          for s in (1, 2, 3)]
    assert np.abs(Ks[1] - Ks[0]).max() >= 2 * np.abs(Ks[2] - Ks[1]).max()


def test_generic_mass_approaches_separable_path():
    pr = slab_problem()
    iset = full_index_set(3, "d4", pr.boundary.dirichlet_edges | {"left"})
    gaps = []
    for depth in (4, 5):
        ops = _Operators(pr, "d4", 3, QuadratureRule(depth, line_depth=13), table("d4"))
        gaps.append(abs(ops._separable(iset)[0] - ops._generic(iset)[0]).max())
    assert gaps[1] <= 0.5 * gaps[0] and gaps[1] < 1e-3


# -- Robin, load, lifting ------------------------------------------------------------

def test_robin_edge_term():
    pr = free_problem(bottom=EdgeCondition.robin(2.0, 3.0))
    iset = full_index_set(1, HAAR).subset([0])
    assert assemble_stiffness(iset, pr).toarray().ravel() == pytest.approx([2.0])
    assert assemble_load(iset, pr, t=0.0) == pytest.approx([6.0])


def test_negative_robin_coefficient_rejected():
    with pytest.raises(ValidationError):
        free_problem(top=EdgeCondition.robin(-1.0))


def test_zero_data_gives_zero_load():
    iset = full_index_set(2, HAAR)
    assert np.all(assemble_load(iset, free_problem(), t=0.3) == 0)


def test_unit_source_on_haar_scaling():
    pr = ProblemDefinition(free_problem().material, BoundarySpec(), Expr.const(1.0), t_final=1.0)
    iset = full_index_set(1, HAAR).subset([0])
    assert assemble_load(iset, pr) == pytest.approx([1.0])


@pytest.mark.parametrize("edge", ["left", "right", "bottom", "top"])
def test_unit_flux_on_haar_scaling(edge):
    pr = free_problem(**{edge: EdgeCondition.neumann(1.0)})
    iset = full_index_set(1, HAAR).subset([0])
    assert assemble_load(iset, pr) == pytest.approx([1.0])


def test_hat_load_is_minus_lifting_energy():
    pr = slab_problem()
    iset = full_index_set(3, "hat", pr.boundary.dirichlet_edges)
    b = assemble_load(iset, pr)
    P = quadrature_points(pr.material, 7)
    dy = np.array([evaluate_basis_function(l, table("hat"), (P.x, P.y), (0, 1)) for l in iset])
    # grad T_g = (0, -1)
    assert np.allclose(b, dy @ (P.w * P.kyy), atol=1e-12)


def test_lifting_examples():
    assert build_lifting(free_problem()).is_zero
    s = np.linspace(0, 1, 11)
    X, Y = np.meshgrid(s, s)
    Ls = build_lifting(slab_problem())
    Li = build_lifting(inclusion_problem())
    assert np.allclose(Ls.value(X, Y), 1 - Y)
    assert np.allclose(Li.value(X, Y), 1 - X)
    assert Ls.trace_error() == 0.0 and Li.trace_error() == 0.0


def test_lifting_reproduces_linear_dirichlet_data():
    pr = free_problem(bottom=EdgeCondition.dirichlet(Expr.poly([2.0, -1.0], [1.0])),
                      top=EdgeCondition.dirichlet(Expr.poly([5.0, -1.0], [1.0])))
    L = build_lifting(pr)
    assert L.trace_error() < 1e-14
    assert float(L.value(0.5, 0.25)) == pytest.approx(1.5 + 0.75)


def test_assembler_restriction_matches_direct_assembly():
    pr = inclusion_problem()
    a = Assembler(pr, Discretization("hat", 3))
    rng = np.random.default_rng(2)
    ords = np.sort(rng.choice(len(a.full), 30, replace=False))
    sub = a.full.subset(ords)
    M, K = a.matrices(sub)
    assert np.allclose(M.toarray(), assemble_mass(sub, pr).toarray(), atol=1e-14)
    assert np.allclose(K.toarray(), assemble_stiffness(sub, pr).toarray(), atol=1e-12)
    assert np.allclose(a.load(sub, 0.0), assemble_load(sub, pr), atol=1e-14)


def test_matrix_market_round_trip(tmp_path):
    K = assemble_stiffness(full_index_set(3, "hat", {"bottom"}), slab_problem())
    write_matrix_market(tmp_path / "K.mtx", K, comment="test")
    text = (tmp_path / "K.mtx").read_text()
    assert text.startswith("%%MatrixMarket matrix coordinate real symmetric")
    back = sp.csr_matrix(scipy.io.mmread(str(tmp_path / "K.mtx")))
    assert np.allclose(back.toarray(), K.toarray(), rtol=1e-14, atol=0)
