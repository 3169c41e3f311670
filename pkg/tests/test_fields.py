import numpy as np
import pytest

from balflow.experiments import perturbed_metric
from balflow.fields import (
    CurvatureError,
    EndoField,
    MetricField,
    PositivityError,
    a1_endomorphism,
    a1_reduced,
    adjoint_defect,
    endo_sup_norm,
    identity_field,
    lambda_curvature,
    metric_exp,
    metric_sup_distance,
    trace_average,
)
from balflow.manifold import build_grid
from balflow.spectral import interpolate


@pytest.fixture(scope="module")
def grid():
    return build_grid(32, 64)


@pytest.mark.parametrize("d,k", [(0, 0), (3, 2), (-2, 5)])
def test_line_bundle_curvature(grid, d, k):
    h = MetricField.reference((d,), grid)
    assert np.abs(lambda_curvature(h, twist=k).values - (d + k)).max() < 1e-6
    assert np.abs(a1_endomorphism(h).values - (d + 1)).max() < 1e-6


def test_split_curvature_and_a1(grid):
    h = MetricField.reference((1, -1), grid)
    assert np.abs(lambda_curvature(h, twist=4).values - np.diag([5.0, 3.0])).max() < 1e-6
    assert np.abs(lambda_curvature(h).values - np.diag([1.0, -1.0])).max() < 1e-6
    assert np.abs(a1_endomorphism(h).values - np.diag([2.0, 0.0])).max() < 1e-6
    assert np.abs(a1_reduced(h).values - np.diag([1.0, -1.0])).max() < 1e-6
    assert abs(trace_average(a1_endomorphism(h), grid, 2) - 1.0) < 1e-10


def test_polystable_a1_vanishes(grid):
    h = MetricField.reference((2, 2), grid)
    assert np.abs(a1_reduced(h).values).max() < 1e-8


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("degrees", [(1, -1), (2, 0, -1), (1, 1)])
def test_degree_invariant_and_self_adjointness(grid, degrees, seed):
    h = perturbed_metric(degrees, grid, seed, 0.3)
    lam = lambda_curvature(h)
    assert abs(grid.integrate(lam.trace()).real - sum(degrees)) < 1e-6
    assert adjoint_defect(lam, h) < 1e-8
    a1r = a1_reduced(h)
    assert abs(grid.integrate(a1r.trace())) < 1e-8


def test_scale_invariance(grid):
    h = perturbed_metric((1, -1), grid, 4, 0.3)
    assert np.abs(a1_reduced(h * 3.7).values - a1_reduced(h).values).max() < 1e-10


def test_grid_refinement():
    results = []
    for n in (64, 128):
        g = build_grid(n, n)
        results.append((g, lambda_curvature(perturbed_metric((1, -1), g, 5, 0.3)).values))
    (g1, l1), (g2, l2) = results
    a = (1, -1)
    diff = max(
        np.abs(interpolate(g1, l1[..., i, j], a[i] - a[j], g2) - l2[..., i, j]).max()
        for i in range(2) for j in range(2)
    )
    assert diff < 1e-6


def test_positivity_and_nonfinite_rejected(grid):
    h = MetricField.reference((0, 0), grid)
    bad = h.values.copy()
    bad[3, 3] = np.diag([1.0, -1.0])
    with pytest.raises(PositivityError):
        lambda_curvature(h.like(bad))
    bad = h.values.copy()
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(PositivityError):
        h.like(bad).check()
    bad = h.values.copy()
    bad[..., 0, 0] = 1e13
    with pytest.raises(PositivityError):
        h.like(bad).check()
    assert issubclass(CurvatureError, ArithmeticError)


def test_sup_norms(grid):
    h = MetricField.reference((1, -1), grid)
    assert endo_sup_norm(EndoField(np.zeros_like(h.values)), h) == 0
    assert abs(metric_sup_distance(h * np.e, h) - (np.e - 1)) < 1e-12
    h1 = h.like(np.broadcast_to(np.diag([2.0, 1 / 3]), h.values.shape).astype(complex))
    assert abs(metric_sup_distance(h1, h) - 2.0) < 1e-12
    assert abs(endo_sup_norm(identity_field(grid, 2, -3.0), h) - 3.0) < 1e-14


def test_metric_exp_matches_matrix_exponential(grid):
    from scipy.linalg import expm

    h = perturbed_metric((1, -1), grid, 8, 0.4)
    phi = a1_reduced(h).values * 0.1
    out = metric_exp(h, phi).values
    p = (5, 7)
    assert np.allclose(out[p], h.values[p] @ expm(phi[p]), atol=1e-12)
