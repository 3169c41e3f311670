"""Seeded perturbations, closed-form references and k-sweep harnesses."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bergman import fs, phi_map, q_apply
from .fields import (
    EndoField,
    MetricField,
    a1_reduced,
    endo_sup_norm,
    herm,
    herm_func,
)
from .flows import FlowConfig, phi_iterate, relative_sup_error, run_flow, tangent_gap
from .manifold import ModelConfig, QuadratureGrid, build_section_basis, grid_for

DEFAULT_SWEEP = (8, 16, 32, 64)
MAX_AMPLITUDE = 0.5


def _section_field(grid: QuadratureGrid, d: int, coeffs: np.ndarray) -> np.ndarray:
    """``sum_l c_l u^{l/2} (1-u)^{(d-l)/2} e^{i l phi}``: a smooth section of O(d), d >= 0."""
    u = grid.u[:, None]
    e = np.exp(1j * grid.phi)[None, :]
    out = np.zeros(grid.shape, dtype=complex)
    for l, c in enumerate(coeffs):
        out = out + c * u ** (l / 2) * (1 - u) ** ((d - l) / 2) * e**l
    return out


def _scalar_poly(grid: QuadratureGrid, lin: np.ndarray, quad: np.ndarray) -> np.ndarray:
    x = grid.unit_vectors
    return x @ lin + np.einsum("pqi,ij,pqj->pq", x, quad, x)


def hermitian_field(degrees, grid: QuadratureGrid, seed: int) -> np.ndarray:
    """Seeded Hermitian, type-consistent matrix field with pointwise operator norm <= 1.

    Coefficients depend only on ``(degrees, seed)``, so the same smooth field
    is produced on every grid.
    """
    rng = np.random.default_rng(seed)
    a = list(degrees)
    r = len(a)
    psi = np.zeros(grid.shape + (r, r), dtype=complex)
    bound = 0.0
    for i in range(r):
        lin = rng.uniform(-1, 1, 3)
        quad = rng.uniform(-1, 1, (3, 3))
        quad = 0.5 * (quad + quad.T)
        psi[..., i, i] = _scalar_poly(grid, lin, quad)
        bound = max(bound, np.abs(lin).sum() + np.abs(quad).sum())
    off_bound = 0.0
    for i in range(r):
        for j in range(i + 1, r):
            d = a[i] - a[j]
            n = abs(d) + 1
            c = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
            lin = 0.5 * rng.uniform(-1, 1, 3)
            s = _section_field(grid, abs(d), c) * (1 + grid.unit_vectors @ lin)
            if d >= 0:
                psi[..., i, j] = s
                psi[..., j, i] = np.conj(s)
            else:
                psi[..., j, i] = s
                psi[..., i, j] = np.conj(s)
            off_bound = max(off_bound, np.abs(c).sum() * (1 + np.abs(lin).sum()))
    # Gershgorin-type bound on the operator norm
    scale = bound + (r - 1) * off_bound
    return psi / scale if scale > 0 else psi


def perturbed_metric(degrees, grid: QuadratureGrid, seed: int, amplitude: float) -> MetricField:
    """``h = exp(amplitude * psi) h_FS`` with ``psi`` from :func:`hermitian_field`."""
    if not 0 <= amplitude <= MAX_AMPLITUDE:
        raise ValueError(f"amplitude must lie in [0, {MAX_AMPLITUDE}]")
    psi = hermitian_field(degrees, grid, seed)
    return MetricField(herm_func(amplitude * psi, np.exp), tuple(degrees), grid)


def split_solution(grid: QuadratureGrid, t: float) -> MetricField:
    """Exact heat-flow solution ``diag(e^-t, e^t)`` on O(1)+O(-1) from the FS start."""
    g = np.broadcast_to(np.diag([np.exp(-t), np.exp(t)]).astype(complex), grid.shape + (2, 2)).copy()
    return MetricField(g, (1, -1), grid)


def fit_slope(ks, errors) -> float:
    """Least-squares slope of ``log error`` against ``log k``."""
    ks = np.asarray(ks, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ks.size < 3:
        raise ValueError("need at least 3 points to fit a slope")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(ks), np.log(errors), 1)
    return float(slope)


@dataclass
class SweepResult:
    name: str
    ks: list[int]
    errors: list[float]
    threshold: float
    extra: dict = field(default_factory=dict)

    @property
    def slope(self) -> float:
        return fit_slope(self.ks, self.errors)

    @property
    def passed(self) -> bool:
        return self.slope <= self.threshold

    def summary(self) -> dict:
        return {"name": self.name, "k": list(self.ks), "error": list(self.errors),
                "slope": self.slope, "threshold": self.threshold, "pass": self.passed, **self.extra}


def _setup(degrees, k: int, extra: int = 16):
    cfg = ModelConfig(tuple(degrees), k, n_theta=16, n_phi=16)
    grid = grid_for(cfg, extra)
    return grid, build_section_basis(cfg, grid)


def ctyz_error(degrees, k: int, seed: int, amplitude: float) -> float:
    """``|| h^-1 Phi_k(h) - Id + A1~(h)/k ||_inf`` at a perturbed metric."""
    grid, basis = _setup(degrees, k)
    h = perturbed_metric(degrees, grid, seed, amplitude)
    ratio = np.linalg.solve(h.values, phi_map(h, basis).values)
    resid = ratio - np.eye(h.r) + a1_reduced(h).values / k
    return endo_sup_norm(EndoField(resid), h)


def self_adjoint_test_field(h: MetricField, seed: int) -> EndoField:
    """Smooth h-self-adjoint field ``g^{-1} P`` with ``P`` a seeded Hermitian field."""
    P = hermitian_field(h.degrees, h.grid, seed)
    return EndoField(np.linalg.solve(h.values, P), True)


def smooth_test_field(h: MetricField) -> EndoField:
    """Fixed h-self-adjoint field ``g^{-1} diag(1 + x3/2, 1 - x1/2, 1 + x2/2, ...)``.

    A constant plus a degree-one harmonic per summand; see the ledger for why
    the Q_k sweep uses a field dominated by its constant part.
    """
    x = h.grid.unit_vectors
    P = np.zeros(h.values.shape, dtype=complex)
    for i in range(h.r):
        sign = 1.0 if i % 2 == 0 else -1.0
        P[..., i, i] = 1.0 + 0.5 * sign * x[..., (2, 0, 1)[i % 3]]
    return EndoField(np.linalg.solve(h.values, P), True)


def qk_error(degrees, k: int, seed: int, amplitude: float) -> float:
    """``|| Q_k(f) - f ||_inf`` for the fixed smooth self-adjoint ``f`` of :func:`smooth_test_field`."""
    grid, basis = _setup(degrees, k)
    h = perturbed_metric(degrees, grid, seed, amplitude)
    f = smooth_test_field(h)
    return endo_sup_norm(q_apply(f, h, basis) - f, h)


def tangent_gap_value(degrees, k: int, seed: int, amplitude: float) -> float:
    grid, basis = _setup(degrees, k)
    h = perturbed_metric(degrees, grid, seed, amplitude)
    return tangent_gap(h, basis)


def flow_run(k: int, t: float = 0.5, dt: float | None = None):
    """Balancing flow on O(1)+O(-1) from FS+FS; returns (trace, basis)."""
    grid, basis = _setup((1, -1), k)
    h0 = MetricField.reference((1, -1), grid)
    dt = dt if dt is not None else 0.005
    cfg = FlowConfig(dt=dt, t_max=t, sample_dt=t)
    trace = run_flow(h0, basis, cfg, reference=lambda s: split_solution(grid, s), curvature=False)
    return trace, basis


def flow_error(k: int, t: float = 0.5, dt: float | None = None) -> float:
    trace, basis = flow_run(k, t, dt)
    return relative_sup_error(fs(trace.final, basis), split_solution(basis.grid, t))


def flow_derivative_error(k: int, t: float = 0.5, delta: float = 1e-3) -> float:
    """C^1-in-t proxy: centred difference of ``h_k`` at t against the exact ``dh/dt``."""
    grid, basis = _setup((1, -1), k)
    h0 = MetricField.reference((1, -1), grid)
    H1 = run_flow(h0, basis, FlowConfig(dt=0.005, t_max=t - delta), curvature=False).final
    fine = FlowConfig(dt=delta / 10, t_max=delta, sample_dt=delta)
    H3 = run_flow(run_flow(H1, basis, fine, curvature=False).final, basis, fine, curvature=False).final
    deriv = (fs(H3, basis).values - fs(H1, basis).values) / (2 * delta)
    exact = split_solution(grid, t)
    dexact = exact.values @ np.diag([-1.0, 1.0])
    rel = np.linalg.solve(exact.values, deriv - dexact)
    return endo_sup_norm(EndoField(rel), exact)


def iterate_error(k: int, t: float = 0.5) -> float:
    """Sup error of ``Phi_k^{floor(tk)}(FS+FS)`` against the exact heat flow at t."""
    grid, basis = _setup((1, -1), k)
    h0 = MetricField.reference((1, -1), grid)
    hm = phi_iterate(h0, basis, int(np.floor(t * k)))
    return relative_sup_error(hm, split_solution(grid, t))


def sweep(name: str, func, ks, threshold: float, **kwargs) -> SweepResult:
    ks = list(ks)
    if len(ks) < 3:
        raise ValueError("need at least 3 values of k to fit a slope")
    errors = [float(func(k=k, **kwargs)) for k in ks]
    return SweepResult(name, ks, errors, threshold)


def random_ordered_pair(degrees, grid: QuadratureGrid, rng: np.random.Generator):
    """Random smooth ``h0 <= h1``: ``h1 = h0 + P`` with ``P`` positive semidefinite."""
    s0, s1 = (int(x) for x in rng.integers(0, 2**31, 2))
    h0 = perturbed_metric(degrees, grid, s0, float(rng.uniform(0, 0.5)))
    B = hermitian_field(degrees, grid, s1)
    P = herm(B @ B) * float(rng.uniform(0, 2))
    return h0, h0.like(herm(h0.values + P))


def random_pair(degrees, grid: QuadratureGrid, rng: np.random.Generator):
    s0, s1 = (int(x) for x in rng.integers(0, 2**31, 2))
    h0 = perturbed_metric(degrees, grid, s0, float(rng.uniform(0, 0.5)))
    h1 = perturbed_metric(degrees, grid, s1, float(rng.uniform(0, 0.5)))
    return h0, h1 * float(np.exp(rng.uniform(-1, 1)))
