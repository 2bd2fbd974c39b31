"""Quadrature grid, harmonic transform, graph type, normalization."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmclab.errors import CapacityError, EmbeddingError
from cmclab.sphere import (QuadratureGrid, SphereGraph, analyze, c1_seminorms,
                           corpus_graph, degree_of_index, index_lm, lm_index,
                           moment_normalize, n_coeffs, synthesize)

FOUR_PI = 4.0 * math.pi


def test_weights_sum_to_sphere_area(small_grid):
    assert np.sum(small_grid.weights) == pytest.approx(FOUR_PI, abs=1e-13)


def test_capacity_formula():
    g = QuadratureGrid(8, 16)
    assert g.capacity == min(8 - 1, (16 - 1) // 2)
    g.require_capacity(7)
    with pytest.raises(CapacityError):
        g.require_capacity(8)


def test_index_maps_are_inverse():
    for l in range(7):
        for m in range(-l, l + 1):
            assert index_lm(lm_index(l, m)) == (l, m)
    degs = degree_of_index(6)
    assert degs[0] == 0 and degs[3] == 1 and degs[4] == 2
    assert len(degs) == n_coeffs(6)


def test_known_harmonic_point_values(small_grid):
    # orthonormal real convention: Y_00 = 1/sqrt(4pi), Y_10 = sqrt(3/4pi) cos(theta)
    c = np.zeros(n_coeffs(2))
    c[lm_index(0, 0)] = 1.0
    f = synthesize(c, small_grid, 2).f
    assert f == pytest.approx(np.full_like(f, 1.0 / math.sqrt(FOUR_PI)), abs=1e-14)

    c = np.zeros(n_coeffs(2))
    c[lm_index(1, 0)] = 1.0
    f = synthesize(c, small_grid, 2).f
    ct = np.repeat(small_grid.cos_theta, small_grid.n_phi)
    assert f == pytest.approx(math.sqrt(3.0 / FOUR_PI) * ct, abs=1e-14)

    # m = 1 carries the Condon-Shortley phase: the basis function is -x
    c = np.zeros(n_coeffs(2))
    c[lm_index(1, 1)] = 1.0
    f = synthesize(c, small_grid, 2).f
    x = small_grid.nodes[:, 0]
    assert f == pytest.approx(-math.sqrt(3.0 / FOUR_PI) * x, abs=1e-14)


def test_orthonormal_gram(small_grid):
    B = small_grid.basis_matrices(8)["val"]
    gram = B.T @ (B * small_grid.weights[:, None])
    assert gram == pytest.approx(np.eye(n_coeffs(8)), abs=1e-12)


def test_transform_roundtrip_and_parseval(small_grid, rng):
    L = 9
    coeffs = rng.standard_normal(n_coeffs(L))
    jets = synthesize(coeffs, small_grid, L)
    back = analyze(jets.f, small_grid, L)
    assert back == pytest.approx(coeffs, abs=1e-12)
    assert np.sum(small_grid.weights * jets.f**2) == pytest.approx(
        np.sum(coeffs**2), abs=1e-10)


def test_derivatives_match_refined_differences(small_grid):
    # spectral dth against a one-mode closed form
    L = 4
    c = np.zeros(n_coeffs(L))
    c[lm_index(2, 0)] = 1.0
    jets = synthesize(c, small_grid, L)
    ct = np.repeat(small_grid.cos_theta, small_grid.n_phi)
    st = np.repeat(small_grid.sin_theta, small_grid.n_phi)
    # Y_20 = sqrt(5/4pi) (3cos^2 - 1)/2, d/dtheta = -3 sqrt(5/4pi) cos sin
    a = math.sqrt(5.0 / FOUR_PI)
    assert jets.f == pytest.approx(a * (3 * ct**2 - 1) / 2, abs=1e-13)
    assert jets.dth == pytest.approx(-3 * a * ct * st, abs=1e-13)
    assert jets.dthth == pytest.approx(-3 * a * (ct**2 - st**2), abs=1e-12)
    assert not jets.dph.any()


@given(st.integers(0, 10_000), st.integers(2, 6))
def test_roundtrip_property(seed, L):
    rng = np.random.default_rng(seed)
    grid = QuadratureGrid(2 * (L + 1), 2 * (2 * L + 1))
    coeffs = rng.standard_normal(n_coeffs(L))
    assert analyze(synthesize(coeffs, grid, L).f, grid, L) == pytest.approx(
        coeffs, abs=1e-11)


def test_embedding_guard():
    c = np.zeros(n_coeffs(4))
    c[lm_index(2, 0)] = 1.0          # C1 norm far above 0.5
    with pytest.raises(EmbeddingError) as exc:
        SphereGraph(np.zeros(3), 1.0, 4, c)
    assert exc.value.c1_norm > 0.5


def test_c1_seminorms_scale_linearly():
    c = np.zeros(n_coeffs(3))
    c[lm_index(2, 1)] = 0.01
    f1, g1 = c1_seminorms(c, 3)
    f2, g2 = c1_seminorms(2.0 * c, 3)
    assert f2 == pytest.approx(2.0 * f1, rel=1e-12)
    assert g2 == pytest.approx(2.0 * g1, rel=1e-12)


def test_round_sphere_and_r0():
    g = SphereGraph.round_sphere(3.0, center=(10.0, 0.0, 0.0), L=6)
    assert g.r0() == pytest.approx(7.0, abs=1e-10)
    assert not g.encloses_origin()
    centered = SphereGraph.round_sphere(3.0, L=6)
    assert centered.r0() == pytest.approx(3.0, abs=1e-12)
    assert centered.encloses_origin()


def test_graph_serialization_roundtrip(rng):
    c = np.zeros(n_coeffs(5))
    c[4:] = 0.003 * rng.standard_normal(n_coeffs(5) - 4)
    g = SphereGraph(np.array([1.0, -2.0, 0.5]), 2.5, 5, c)
    h = SphereGraph.from_json_dict(g.to_json_dict())
    assert np.array_equal(g.coeffs, h.coeffs)
    assert np.array_equal(g.center, h.center)
    assert g.scale == h.scale and g.L == h.L


def test_moment_normalize_posts(grid):
    rng = np.random.default_rng(77)
    c = np.zeros(n_coeffs(6))
    c[4:] = 0.002 * rng.standard_normal(n_coeffs(6) - 4)
    g = SphereGraph(np.array([0.03, -0.02, 0.01]), 1.0, 6, c)
    normed, shift, factor = moment_normalize(g)
    f = synthesize(normed.coeffs, grid, normed.L).f
    for i in range(3):
        assert np.sum(grid.weights * f * grid.nodes[:, i]) == pytest.approx(
            0.0, abs=1e-10)
    assert normed.coeffs[0] == pytest.approx(0.0, abs=1e-12)
    assert factor > 0.0

    again, shift2, factor2 = moment_normalize(normed)
    assert again.coeffs == pytest.approx(normed.coeffs, abs=1e-11)
    assert np.linalg.norm(shift2) < 1e-11
    assert factor2 == pytest.approx(1.0, abs=1e-11)


def test_moment_normalize_preserves_surface(grid):
    # same point set, new parametrization: compare flat areas
    from cmclab.geometry import build_geometry
    from cmclab import metrics as mt

    rng = np.random.default_rng(3)
    c = np.zeros(n_coeffs(5))
    c[4:] = 0.002 * rng.standard_normal(n_coeffs(5) - 4)
    g = SphereGraph(np.array([0.01, 0.02, -0.015]), 1.0, 5, c)
    normed, _, factor = moment_normalize(g)
    a0 = build_geometry(g, mt.euclidean_model(), grid).area_bar()
    a1 = build_geometry(normed, mt.euclidean_model(), grid).area_bar()
    assert a1 == pytest.approx(a0 / factor**2, rel=1e-9)


def test_moment_normalize_rejects_large_graphs():
    from cmclab.errors import PreconditionError

    # inside the embedding bound but beyond the contraction regime
    c = np.zeros(n_coeffs(4))
    c[lm_index(2, 0)] = 0.2
    g = SphereGraph(np.zeros(3), 1.0, 4, c)
    with pytest.raises(PreconditionError):
        moment_normalize(g)


def test_corpus_graph_deterministic_and_bounded():
    a = corpus_graph(11)
    b = corpus_graph(11)
    assert np.array_equal(a.coeffs, b.coeffs)
    fmax, gmax = c1_seminorms(a.coeffs, a.L)
    assert fmax + gmax <= 0.1 + 1e-12
    assert not np.array_equal(a.coeffs, corpus_graph(12).coeffs)
