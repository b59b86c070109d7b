import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavegal.errors import ConstructionError, DimensionError, ResourceError, ValidationError
from wavegal.mra import (DAUBECHIES4, DAUBECHIES6, HAAR, HIERARCHICAL_HAT, BasisFamily, Kind,
                         Orientation, build_dyadic_table, eval_factor, evaluate_basis_function,
                         evaluate_expansion, full_index_set, get_family, partition_of_unity_error,
                         project_function, sample_expansion, scaling_index,
                         single_scale_dimension, two_scale_residual, wavelet_index)

SQRT2 = math.sqrt(2.0)
ORTHO = [HAAR, DAUBECHIES4, DAUBECHIES6]
ALL = ORTHO + [HIERARCHICAL_HAT]


@lru_cache(maxsize=None)
def table(tag, q=10):
    return build_dyadic_table(get_family(tag), q)


# -- masks and tables -------------------------------------------------------------

@pytest.mark.parametrize("fam,length", [(HAAR, 2), (DAUBECHIES4, 4), (DAUBECHIES6, 6)])
def test_mask_invariants(fam, length):
    h, g = np.array(fam.h), np.array(fam.g)
    assert len(h) == length
    assert h.sum() == pytest.approx(SQRT2, abs=1e-14)
    L = len(h)
    assert np.allclose(g, [(-1) ** k * h[L - 1 - k] for k in range(L)])
    # orthonormal shifts of the mask
    for s in range(1, L // 2):
        assert abs(np.dot(h[2 * s:], h[:L - 2 * s])) < 1e-14
    assert np.dot(h, h) == pytest.approx(1.0)


def test_haar_table_shape():
    t = table("Haar", 4)
    x = np.array([0.0, 0.2, 0.49, 0.5, 0.9])
    assert np.all(eval_factor(t, 0, 0, 0, x) == 1.0)
    assert list(eval_factor(t, 1, 0, 0, x)) == [1.0, 1.0, 1.0, -1.0, -1.0]
    assert eval_factor(t, 0, 0, 0, 1.0) == 0.0


def test_d4_integer_values_from_independent_eigensolve():
    h = np.array(DAUBECHIES4.h)
    # phi(1), phi(2) from phi(n) = sqrt2 sum_k h_k phi(2n - k)
    A = SQRT2 * np.array([[h[1], h[0]], [h[3], h[2]]])
    _, _, vt = np.linalg.svd(A - np.eye(2))
    v = vt[-1] / vt[-1].sum()
    t = table("d4")
    got = t.lookup(0, np.array([1.0, 2.0]))
    assert got == pytest.approx(v, abs=1e-12)
    assert got == pytest.approx([(1 + math.sqrt(3)) / 2, (1 - math.sqrt(3)) / 2], abs=1e-12)


def _moment(tab, m, depth):
    w = tab.family.wavelet_width
    hq = 2.0 ** -depth
    x = np.arange(0, w, hq) + hq / 2
    return float(np.sum(x ** m * eval_factor(tab, 1, 0, 0, x)) * hq)


@pytest.mark.parametrize("tag,p", [("d4", 2), ("d6", 3)])
def test_vanishing_moments(tag, p):
    tab = table(tag)
    for m in range(p):
        assert abs(_moment(tab, m, 12)) < 1e-8


def test_d6_first_nonvanishing_moment():
    assert abs(_moment(table("d6"), 3, 12)) > 1e-3


@pytest.mark.parametrize("fam", ALL)
def test_two_scale_and_partition_of_unity(fam):
    t = table(fam.tag)
    assert two_scale_residual(t) <= 1e-8
    if not fam.is_hat:
        assert partition_of_unity_error(t) <= 1e-8


@pytest.mark.parametrize("q", [3, 15])
def test_table_depth_bounds(q):
    with pytest.raises(ValidationError):
        build_dyadic_table(DAUBECHIES4, q)


def test_degenerate_mask_is_a_construction_error():
    bad = BasisFamily("Bad", (0.5, 0.5, 0.5, 0.5), (0.5, -0.5, 0.5, -0.5), True, True, 0, 3, 3)
    with pytest.raises(ConstructionError):
        build_dyadic_table(bad, 6)


def test_d4_level_one_against_refined_table():
    coarse, fine = table("d4", 10), table("d4", 11)
    x = np.arange(0, 2 ** 10 + 1) / 2 ** 10
    for k in (-1, 0, 1):
        direct = SQRT2 * fine.lookup(0, 2 * x - k)
        assert np.allclose(eval_factor(coarse, 0, 1, k, x), direct, atol=1e-12)
        # wavelet through the high-pass mask on the finer table
        psi = sum(SQRT2 * g * fine.lookup(0, 4 * x - 2 * k - m) for m, g in enumerate(DAUBECHIES4.g))
        assert np.allclose(eval_factor(coarse, 1, 1, k, x), SQRT2 * psi, atol=1e-12)


# -- index sets ---------------------------------------------------------------------

def test_haar_small_cardinalities():
    assert len(full_index_set(1, HAAR)) == 4
    assert len(full_index_set(2, HAAR)) == 16


def _brute_dim(fam, J):
    """Count level-J single-scale translations whose support meets (0, 1)."""
    n = 0
    for k in range(-20, 2 ** J + 20):
        a, b = fam.factor_support(0, J, k)
        if min(b, 1.0) - max(a, 0.0) > 0:
            n += 1
    return n * n


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.tag)
@pytest.mark.parametrize("J", range(1, 7))
def test_cardinality_matches_single_scale_dimension(fam, J):
    assert len(full_index_set(J, fam)) == _brute_dim(fam, J) == single_scale_dimension(fam, J)


def test_scaling_only_at_level_zero_and_ordering():
    iset = full_index_set(4, DAUBECHIES4)
    keys = [i.sort_key() for i in iset]
    assert keys == sorted(keys)
    for i in iset:
        assert (i.kind == Kind.SCALING) == (i.orientation == Orientation.NONE)
        if i.kind == Kind.SCALING:
            assert i.level == 0


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.tag)
def test_index_set_is_deterministic(fam):
    a = full_index_set(4, fam, {"bottom", "top"})
    b = full_index_set(4, fam, {"top", "bottom"})
    assert a == b and a.to_csv() == b.to_csv()


def test_resource_error_reports_cardinality():
    with pytest.raises(ResourceError) as exc:
        full_index_set(6, HAAR, max_cardinality=100)
    assert exc.value.cardinality == 4096


def test_invalid_level():
    with pytest.raises(ValidationError):
        full_index_set(0, HAAR)


@pytest.mark.parametrize("fam", [DAUBECHIES4, DAUBECHIES6, HIERARCHICAL_HAT], ids=lambda f: f.tag)
def test_dirichlet_restriction_vanishes_on_edges(fam):
    iset = full_index_set(3, fam, {"bottom", "left"})
    tab = table(fam.tag)
    s = np.linspace(0, 1, 257)
    for lam in iset:
        assert np.all(np.abs(evaluate_basis_function(lam, tab, (s, 0 * s))) < 1e-12)
        assert np.all(np.abs(evaluate_basis_function(lam, tab, (0 * s, s))) < 1e-12)


def test_haar_dirichlet_drops_edge_touching_factors():
    iset = full_index_set(2, HAAR, {"bottom"})
    for lam in iset:
        (_, j, _), (fy, _, ky) = lam.factors()
        assert HAAR.factor_support(fy, j, ky)[0] > 0


def test_index_csv_header_and_rows():
    text = full_index_set(1, HAAR).to_csv().splitlines()
    assert text[0] == "ordinal,level,kind,orientation,kx,ky"
    assert text[1] == "0,0,scaling,none,0,0"
    assert len(text) == 5


# -- evaluation ----------------------------------------------------------------------

def test_haar_point_values():
    t = table("Haar")
    assert evaluate_basis_function(scaling_index(0, 0), t, (0.37, 0.81)) == 1.0
    h = wavelet_index(0, Orientation.HORIZONTAL, 0, 0)
    assert evaluate_basis_function(h, t, (0.25, 0.25)) == 1.0
    assert evaluate_basis_function(h, t, (0.75, 0.25)) == -1.0


def test_level_normalization():
    t = table("Haar")
    lam = wavelet_index(2, Orientation.DIAGONAL, 1, 2)
    # psi(4x - 1) psi(4y - 2) times 2**2
    assert evaluate_basis_function(lam, t, (0.26, 0.51)) == 4.0
    assert evaluate_basis_function(lam, t, (0.9, 0.51)) == 0.0


def test_zero_and_constant_expansions():
    t = table("Haar")
    iset = full_index_set(3, HAAR)
    x = np.random.default_rng(0).random(20)
    assert np.all(evaluate_expansion(np.zeros(len(iset)), iset, t, (x, x)) == 0)
    c = np.zeros(len(iset))
    c[0] = 1.0
    assert np.all(evaluate_expansion(c, iset, t, (x, x[::-1])) == 1.0)


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.tag)
def test_expansion_matches_brute_force_sum(fam):
    rng = np.random.default_rng(1)
    iset = full_index_set(3, fam)
    t = table(fam.tag)
    c = rng.normal(size=len(iset))
    x, y = rng.random(100), rng.random(100)
    brute = sum(ci * evaluate_basis_function(lam, t, (x, y)) for ci, lam in zip(c, iset))
    assert np.allclose(evaluate_expansion(c, iset, t, (x, y)), brute, atol=1e-12)
    assert np.allclose(sample_expansion(c, iset, t, x, y), brute, atol=1e-12)


def test_expansion_length_mismatch():
    iset = full_index_set(2, HAAR)
    with pytest.raises(DimensionError):
        evaluate_expansion(np.zeros(3), iset, table("Haar"), (0.5, 0.5))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2 ** 16))
def test_expansion_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    iset = full_index_set(2, DAUBECHIES4)
    t = table("d4")
    u, v = rng.normal(size=(2, len(iset)))
    p = (rng.random(10), rng.random(10))
    lhs = evaluate_expansion(a * u + b * v, iset, t, p)
    rhs = a * evaluate_expansion(u, iset, t, p) + b * evaluate_expansion(v, iset, t, p)
    assert np.allclose(lhs, rhs, atol=1e-9)


# -- orthonormality ---------------------------------------------------------------

def _inner_1d(tab, f1, f2, depth):
    """Midpoint rule over the overlap of two unclipped 1-D factors."""
    fam = tab.family
    a1, b1 = fam.factor_support(f1[0], f1[1], f1[2])
    a2, b2 = fam.factor_support(f2[0], f2[1], f2[2])
    a, b = max(a1, a2), min(b1, b2)
    if b <= a:
        return 0.0
    h = 2.0 ** -depth
    x = np.arange(a, b, h) + h / 2
    return float(np.dot(eval_factor(tab, *f1, x), eval_factor(tab, *f2, x)) * h)


@pytest.mark.parametrize("tag", ["Haar", "d4", "d6"])
def test_gram_of_random_indices_is_identity(tag):
    J, q = 4, 14
    tab = table(tag, q)
    iset = full_index_set(J, tag)
    pool = [lam for lam in iset if lam.level <= 3]
    rng = np.random.default_rng(7)
    pick = [pool[i] for i in rng.choice(len(pool), 20, replace=False)]
    G = np.empty((20, 20))
    for a, la in enumerate(pick):
        fa = la.factors()
        for b, lb in enumerate(pick):
            fb = lb.factors()
            G[a, b] = _inner_1d(tab, fa[0], fb[0], J + q) * _inner_1d(tab, fa[1], fb[1], J + q)
    assert np.abs(G - np.eye(20)).max() <= 1e-6


# -- nestedness and projection -----------------------------------------------------

def _to_single_scale(fam, coeffs_1d, J_from, J_to):
    """Push 1-D coefficients {(kind, j, k): c} down to level ``J_to`` scaling coefficients."""
    out = {}
    work = dict(coeffs_1d)
    while work:
        (kind, j, k), c = work.popitem()
        if kind == 0 and j == J_to:
            out[k] = out.get(k, 0.0) + c
            continue
        mask = fam.h if kind == 0 else fam.g
        for m, hm in enumerate(mask):
            key = (0, j + 1, 2 * k + m)
            work[key] = work.get(key, 0.0) + c * hm
    return out


@pytest.mark.parametrize("fam", ORTHO, ids=lambda f: f.tag)
def test_level_two_functions_are_nested_in_level_three(fam):
    rng = np.random.default_rng(3)
    tab = table(fam.tag)
    iset = full_index_set(2, fam)
    c = rng.normal(size=len(iset))
    x = np.arange(0, 2 ** 7) / 2 ** 7
    X, Y = np.meshgrid(x, x)
    direct = evaluate_expansion(c, iset, tab, (X, Y))
    fine = np.zeros_like(X)
    for ci, lam in zip(c, iset):
        (fx, j, kx), (fy, _, ky) = lam.factors()
        cx = _to_single_scale(fam, {(fx, j, kx): 1.0}, j, 3)
        cy = _to_single_scale(fam, {(fy, j, ky): 1.0}, j, 3)
        vx = sum(v * eval_factor(tab, 0, 3, k, X) for k, v in cx.items())
        vy = sum(v * eval_factor(tab, 0, 3, k, Y) for k, v in cy.items())
        fine += ci * vx * vy
    assert np.abs(fine - direct).max() <= 1e-10


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.tag)
def test_projection_of_zero(fam):
    iset = full_index_set(3, fam)
    u = project_function(lambda x, y: 0 * x, iset, table(fam.tag))
    assert np.all(u == 0)


def test_haar_projection_of_constant():
    iset = full_index_set(3, HAAR)
    u = project_function(lambda x, y: 2.5 + 0 * x, iset, table("Haar"))
    assert u[0] == pytest.approx(2.5)
    assert np.abs(u[1:]).max() < 1e-12


def test_d4_reproduces_linear_function():
    iset = full_index_set(4, DAUBECHIES4)
    tab = table("d4")
    u = project_function(lambda x, y: x + 0 * y, iset, tab)
    s = (np.arange(256) + 0.5) / 256
    X, Y = np.meshgrid(s, s)
    err = sample_expansion(u, iset, tab, X.ravel(), Y.ravel()) - X.ravel()
    assert math.sqrt(np.mean(err ** 2)) <= 1e-6


def test_hat_projection_interpolates_bilinear_field():
    iset = full_index_set(3, HIERARCHICAL_HAT)
    tab = table("hat")
    f = lambda x, y: 1 + 2 * x - y + 3 * x * y  # noqa: E731
    u = project_function(f, iset, tab)
    rng = np.random.default_rng(5)
    x, y = rng.random(50), rng.random(50)
    assert np.allclose(evaluate_expansion(u, iset, tab, (x, y)), f(x, y), atol=1e-12)
