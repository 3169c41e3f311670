"""Acceptance criteria; each test prints one PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (lines are printed with capture
disabled) or ``python3 tests/test_acceptance.py``.
"""
import sys

import numpy as np
import pytest

from balflow import experiments as ex
from balflow.bergman import bergman_density, hilb, moment_bar_zero, phi_map, q_apply
from balflow.fields import MetricField, identity_field, lambda_curvature, metric_sup_distance, relative_eigenvalues
from balflow.flows import FlowConfig, conformal_theta, heat_flow, omega_prime_weights, parabolic_dt, run_flow
from balflow.manifold import ModelConfig, build_grid
from balflow.spectral import solve_poisson

from conftest import make_model

SWEEP = (8, 16, 32, 64)
SEED, AMP = 3, 0.3


@pytest.fixture
def report(request):
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print("\n" + line)
        else:
            print(line)
        assert ok, line

    return emit


def test_c01_balanced_fixed_point(report):
    worst_mu, worst_phi = 0.0, 0.0
    models = [(a,) for a in range(5)] + [(a, a) for a in (-1, 0, 1, 2)]
    for degrees in models:
        for k in range(2, 17):
            grid, basis = make_model(degrees, k)
            h = MetricField.reference(degrees, grid)
            worst_mu = max(worst_mu, moment_bar_zero(hilb(h, basis), basis).hs_norm())
            worst_phi = max(worst_phi, float(np.abs(phi_map(h, basis).values - h.values).max()))
    report(1, worst_mu <= 1e-10 and worst_phi <= 1e-10,
           f"max ||mu0||_HS = {worst_mu:.2e}, max ||Phi(h) - h|| = {worst_phi:.2e} (tol 1e-10)")


def test_c02_bergman_density_constants(report):
    grid, basis = make_model((1, -1), 4)
    B = bergman_density(MetricField.reference((1, -1), grid), basis).values
    err = float(np.abs(B - np.diag([6.0, 4.0])).max())
    counts_ok = all(
        ModelConfig(d, k).n_sections == make_model(d, k)[1].n_sections == sum(a + k + 1 for a in d)
        for d in [(0,), (1, -1), (2, 0, -1), (3, 3)] for k in (1, 4, 7)
    )
    report(2, err <= 1e-8 and counts_ok, f"|B_4 - diag(6,4)| = {err:.2e} (tol 1e-8), section counts exact: {counts_ok}")


def test_c03_ctyz_rate(report):
    res = ex.sweep("ctyz", ex.ctyz_error, SWEEP, -1.8, degrees=(0,), seed=SEED, amplitude=AMP)
    res2 = ex.sweep("ctyz", ex.ctyz_error, SWEEP, -1.8, degrees=(1, -1), seed=SEED, amplitude=AMP)
    report(3, res.passed and res2.passed,
           f"slope line bundle {res.slope:.3f}, rank 2 {res2.slope:.3f} (need <= -1.8); errors {np.round(res.errors, 6)}")


def test_c04_qk_rate(report):
    res = ex.sweep("qk", ex.qk_error, SWEEP, -0.9, degrees=(1, -1), seed=SEED, amplitude=AMP)
    grid, basis = make_model((0,), 8)
    q = q_apply(identity_field(grid, 1), MetricField.reference((0,), grid), basis).values
    spot = float(np.abs(q - 8 / 9).max())
    report(4, res.passed and spot <= 1e-10,
           f"slope {res.slope:.3f} (need <= -0.9), |Q_8(Id) - 8/9| = {spot:.2e} (tol 1e-10)")


def test_c05_tangent_gap(report):
    res = ex.sweep("gap", ex.tangent_gap_value, SWEEP, -1.8, degrees=(1, -1), seed=SEED, amplitude=AMP)
    report(5, res.passed, f"slope {res.slope:.3f} (need <= -1.8); gaps {np.round(res.errors, 6)}")


def test_c06_balancing_flow_convergence(report):
    ks = (8, 16, 32)
    res = ex.sweep("bflow", ex.flow_error, ks, -0.8)
    ratios = np.array(res.errors[:-1]) / np.array(res.errors[1:])
    halving = bool(np.all(np.abs(ratios - 2) <= 0.5))
    deriv = [ex.flow_derivative_error(k) for k in ks]
    c1 = bool(np.all(np.diff(deriv) < 0))
    report(6, res.passed and halving and c1,
           f"slope {res.slope:.3f} (need <= -0.8), error ratios {np.round(ratios, 3)}, "
           f"C1 proxy {np.round(deriv, 4)} decreasing: {c1}")


def test_c07_iteration_convergence(report):
    res = ex.sweep("iterate", ex.iterate_error, SWEEP, -0.8)
    report(7, res.passed, f"slope {res.slope:.3f} (need <= -0.8); errors {np.round(res.errors, 5)}")


def test_c08_phi_structure(report):
    grid, basis = make_model((1, -1), 4)
    rng = np.random.default_rng(2024)
    order_viol = dist_viol = 0
    n = 100
    for _ in range(n):
        h0, h1 = ex.random_ordered_pair((1, -1), grid, rng)
        if relative_eigenvalues(phi_map(h0, basis), phi_map(h1, basis)).max() > 1 + 1e-10:
            order_viol += 1
        a, b = ex.random_pair((1, -1), grid, rng)
        if metric_sup_distance(phi_map(a, basis), phi_map(b, basis)) > metric_sup_distance(a, b) + 1e-10:
            dist_viol += 1
    report(8, order_viol == 0 and dist_viol == 0,
           f"{n} ordered pairs: {order_viol} monotonicity violations; {n} pairs: {dist_viol} expansion violations")


def test_c09_gradient_monotonicity(report):
    runs = []
    for k, dt in ((4, 0.05), (8, 0.02)):
        grid, basis = make_model((1, 1), k)
        h0 = ex.perturbed_metric((1, 1), grid, 7, 0.2)
        runs.append(run_flow(h0, basis, FlowConfig(dt=dt, t_max=60, sample_dt=dt), curvature=False))
    grid, basis = make_model((2, 0, 2), 3)
    runs.append(run_flow(ex.perturbed_metric((2, 0, 2), grid, 5, 0.3), basis, FlowConfig(dt=0.05, t_max=3),
                         curvature=False))
    for k in (8, 16):
        runs.append(ex.flow_run(k)[0])
    violations = sum(tr.monotonicity_violations for tr in runs)
    reached = [float(tr.column("mu0_norm")[-1]) for tr in runs[:2]]
    report(9, violations == 0 and all(r <= 1e-8 for r in reached),
           f"{len(runs)} trajectories, {violations} increases beyond 1e-10; polystable final ||mu0|| {', '.join(f'{r:.2e}' for r in reached)}")


def test_c10_corollaries(report):
    grid = build_grid(32, 64)
    theta = float(np.abs(conformal_theta(grid)).max())
    w_err = 0.0
    for k in (1, 4, 8, 16):
        g, _ = make_model((0,), k)
        w_err = max(w_err, float(np.abs(omega_prime_weights(g, k).weights - g.weights).max()))
    x = grid.unit_vectors
    y = x[..., 0] * x[..., 1]  # degree-two harmonic, eigenvalue 6
    p_err = float(np.abs(solve_poisson(grid, y) - y / 6).max())
    report(10, theta <= 1e-10 and w_err <= 1e-12 and p_err <= 1e-6,
           f"|theta| = {theta:.1e}, |w' - w| = {w_err:.1e}, Poisson error {p_err:.1e}")


def test_c11_hn_bracketing(report):
    grid = build_grid(24, 32)
    h0 = ex.perturbed_metric((1, -1), grid, 11, 0.5)
    h = heat_flow(h0, 5.0, parabolic_dt(grid), mode="donaldson")
    lam = np.linalg.eigvals(lambda_curvature(h).values).real
    lo, hi = float(lam.min()), float(lam.max())
    report(11, abs(lo + 1) <= 0.05 and abs(hi - 1) <= 0.05,
           f"extreme eigenvalues at t=5: {lo:.6f}, {hi:.6f} (target -1, 1 within 0.05)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
