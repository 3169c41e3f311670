"""Balancing flow on the Bergman space, Donaldson heat flow, Phi_k iteration.

The normalized balancing flow ``dH/dt = -k^{n+1} mu0(H)`` is integrated in
the moving orthonormal frame: with ``Hu = C^* C`` and ``A = k^{n+1} mu0``
(frame ``C``), one exponential Euler step is ``Hu <- C^* exp(dt A) C`` on the
Gram matrix (the tangent convention flips the sign, see ``bergman``).  This
keeps the inner product positive for any step size.

The heat flows ``h^{-1} dh/dt = -v(h)`` use a method-of-lines RK4 whose
stages are multiplicative updates ``h exp(-c dt v)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import spectral
from .bergman import (
    HermitianInner,
    N_DIM,
    bergman_distance,
    cholesky,
    fs_unit,
    from_unit,
    hilb,
    hilb_tangent,
    hilb_unit,
    moment_bar_unit,
    phi_map,
    rho_line,
    to_unit,
    trace_free,
)
from .fields import (
    COND_LIMIT,
    EndoField,
    MetricField,
    PositivityError,
    a1_reduced,
    herm,
    herm_func,
    identity_field,
    lambda_curvature,
    metric_exp,
    relative_eigenvalues,
    symmetrize,
)
from .manifold import (
    ModelConfig,
    QuadratureGrid,
    SectionBasis,
    build_section_basis,
    scalar_curvature_constant,
)

log = logging.getLogger(__name__)

INTEGRATORS = ("euler", "exp-euler", "rk4")


class StepRejected(PositivityError):
    """A plain Euler step left the positive cone."""


class CFLViolation(ArithmeticError):
    """Heat-flow step diverged; the step size exceeds the parabolic bound."""


@dataclass
class FlowConfig:
    dt: float
    t_max: float
    integrator: str = "exp-euler"
    volume_mode: str = "standard"
    normalization: int = N_DIM + 1
    sample_dt: float | None = None
    tol: float = 1e-10
    step_guard: float = 0.5

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if self.volume_mode not in ("standard", "omega_prime"):
            raise ValueError("volume_mode must be 'standard' or 'omega_prime'")


def default_balancing_dt(k: int, normalization: int = N_DIM + 1) -> float:
    return 0.1 / k**normalization if k > 0 else 0.1


# ---------------------------------------------------------------- balancing


def _velocity(Hu: np.ndarray, basis: SectionBasis, cfg: FlowConfig, weights, check: bool = False):
    """``(k^{n+1} mu0, mu0)``; with ``check`` the FS metric is tested for degeneration."""
    if check:
        g, _, _ = fs_unit(Hu, basis)
        MetricField(g, basis.cfg.degrees, basis.grid).check()
    mu0 = trace_free(moment_bar_unit(Hu, basis, weights), basis)
    k = basis.cfg.k
    return k**cfg.normalization * mu0.matrix, mu0


def balancing_step_unit(Hu: np.ndarray, basis: SectionBasis, cfg: FlowConfig, dt: float | None = None,
                        weights=None, velocity: np.ndarray | None = None) -> np.ndarray:
    """Step on the normalized Gram matrix; ``velocity`` reuses a computed ``k^{n+1} mu0``."""
    dt = cfg.dt if dt is None else dt
    A = _velocity(Hu, basis, cfg, weights)[0] if velocity is None else velocity
    C = cholesky(Hu)
    if cfg.integrator == "exp-euler":
        E = herm_func(A, lambda w: np.exp(dt * w))
        return herm(C.conj().T @ E @ C)
    if cfg.integrator == "euler":
        step = np.eye(A.shape[0]) + dt * A
        if np.linalg.eigvalsh(herm(step)).min() <= 0:
            raise StepRejected(f"Euler step dt={dt} loses positivity")
        return herm(C.conj().T @ step @ C)
    # rk4 on the Gram matrix in the fixed monomial frame
    def rhs(X):
        Ax, _ = _velocity(X, basis, cfg, weights)
        Cx = cholesky(X)
        return herm(Cx.conj().T @ Ax @ Cx)

    k1 = rhs(Hu)
    k2 = rhs(Hu + 0.5 * dt * k1)
    k3 = rhs(Hu + 0.5 * dt * k2)
    k4 = rhs(Hu + dt * k3)
    out = herm(Hu + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6)
    cholesky(out)
    return out


def balancing_step(H: HermitianInner, basis: SectionBasis, cfg: FlowConfig, dt: float | None = None,
                   weights=None) -> HermitianInner:
    """One step of the normalized balancing flow."""
    return from_unit(balancing_step_unit(to_unit(H, basis), basis, cfg, dt, weights), basis)


# ---------------------------------------------------------------- heat flows


def heat_velocity(h: MetricField, mode: str) -> EndoField:
    """``h^{-1} dh/dt = -velocity`` for the modified or classical Donaldson flow."""
    if mode == "modified":
        return a1_reduced(h)
    if mode == "donaldson":
        r = h.r
        slope = sum(h.degrees) / (r * h.grid.volume)
        return lambda_curvature(h) - identity_field(h.grid, r, slope)
    raise ValueError(f"unknown heat-flow mode {mode!r}")


def parabolic_dt(grid: QuadratureGrid, safety: float = 2.0) -> float:
    """Stable explicit step for the heat flows on ``grid``.

    RK4 is stable on the negative axis up to about 2.78; the largest
    representable harmonic degree sets the stiffest Laplacian eigenvalue.
    """
    lmax = max(grid.n_theta, spectral.mode_limit(grid)) + 2
    return safety / (lmax * (lmax + 1))


def heat_flow_step(h: MetricField, dt: float, mode: str = "modified") -> MetricField:
    """RK4 step with multiplicative stages and h-self-adjoint symmetrization."""
    g0 = h.values

    def stage(phi):
        return metric_exp(h, -symmetrize(phi, g0))

    k1 = heat_velocity(h, mode).values
    k2 = heat_velocity(stage(0.5 * dt * k1), mode).values
    k3 = heat_velocity(stage(0.5 * dt * k2), mode).values
    k4 = heat_velocity(stage(dt * k3), mode).values
    v = (k1 + 2 * k2 + 2 * k3 + k4) / 6
    if not np.all(np.isfinite(v)) or dt * np.abs(v).max() > 50:
        raise CFLViolation(f"heat-flow step diverged (dt={dt})")
    out = stage(dt * v)
    out.check()
    return out


def heat_flow(h0: MetricField, t: float, dt: float, mode: str = "modified",
              callback: Callable[[float, MetricField], None] | None = None) -> MetricField:
    """Integrate a heat flow to time ``t`` (last step shortened to land on ``t``)."""
    n = max(1, int(np.ceil(t / dt - 1e-12)))
    step = t / n
    h = h0
    for i in range(n):
        h = heat_flow_step(h, step, mode)
        if callback is not None:
            callback((i + 1) * step, h)
    return h


# ---------------------------------------------------------------- corollaries


def conformal_theta(grid: QuadratureGrid, scalar_curvature: np.ndarray | None = None) -> np.ndarray:
    """Mean-zero ``theta`` with ``L theta = -(S - mean S)/2``, ``L = -Laplacian``.

    ``L`` is the operator with ``(i/2pi) Lambda F_{h e^theta} = (i/2pi) Lambda F_h + L theta``.
    For the FS form ``S`` is constant and ``theta`` vanishes.
    """
    if scalar_curvature is None:
        scalar_curvature = np.full(grid.shape, scalar_curvature_constant())
    S = np.asarray(scalar_curvature, dtype=float)
    mean = float(grid.integrate(S)) / grid.volume
    theta = spectral.solve_poisson(grid, -0.5 * (S - mean))
    return np.real(theta)


def omega_prime_factor(grid: QuadratureGrid, k: int, potential: np.ndarray | None = None) -> np.ndarray:
    """Pointwise ratio ``Omega' / omega_sigma`` of the corrected volume form.

    ``potential`` f replaces ``sigma`` by ``sigma e^{-f}``, whose curvature form
    is ``(1 + Laplacian f) omega``; that form is then the base volume.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    vol = None
    if potential is not None:
        vol = 1.0 + np.real(spectral.laplacian(grid, potential))
        if vol.min() <= 0:
            raise ValueError("potential does not define a Kahler form")
    basis = build_section_basis(ModelConfig((0,), k), grid)
    rho = rho_line(basis, potential, vol)
    factor = 1.0 + (rho - (k + 1)) / (grid.volume * k**N_DIM)
    if vol is not None:
        factor = factor * vol
    if factor.min() <= 0:
        raise ValueError("Omega' correction produced a non-positive weight")
    return factor


def omega_prime_weights(grid: QuadratureGrid, k: int, potential: np.ndarray | None = None) -> QuadratureGrid:
    """Grid whose weights integrate against ``Omega'`` instead of ``omega``."""
    return grid.with_weights(omega_prime_factor(grid, k, potential))


# ---------------------------------------------------------------- Phi_k iteration and diagnostics


def phi_iterate(h0: MetricField, basis: SectionBasis, m: int) -> MetricField:
    """``Phi_k`` applied ``m`` times; ``m = 0`` returns ``h0``."""
    if m < 0:
        raise ValueError("m must be >= 0")
    h = h0
    for _ in range(m):
        h = phi_map(h, basis)
    return h


def tangent_gap(h: MetricField, basis: SectionBasis) -> float:
    """``k^-n tr (U - V)^2`` between the Hilb_k image of the heat flow and the balancing flow."""
    k = basis.cfg.k
    v_heat = a1_reduced(h) * -1.0
    U = hilb_tangent(h, v_heat, basis)
    Hu = hilb_unit(h, basis)
    mu0 = trace_free(moment_bar_unit(Hu, basis), basis)
    V = -(k ** (N_DIM + 1)) * mu0.matrix
    D = U.matrix - V
    return float(np.real(np.trace(D @ D))) / k**N_DIM


def relative_sup_error(h: MetricField, ref: MetricField) -> float:
    """``max_p || g_ref^{-1/2} g g_ref^{-1/2} - Id ||_2``."""
    lam = relative_eigenvalues(h, ref)
    return float(np.abs(lam - 1.0).max())


# ---------------------------------------------------------------- trajectories


TRACE_COLUMNS = ("t", "mu0_norm", "dk_ref", "sup_err", "lam_min", "lam_max", "cond_max")


@dataclass
class FlowTrace:
    rows: list[dict] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    converged: bool = False
    aborted: bool = False
    steps: int = 0
    monotonicity_violations: int = 0
    final: HermitianInner | MetricField | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)


def _diagnostics(t, Hu, basis, mu0, reference, curvature=True) -> dict:
    g, _, _ = fs_unit(Hu, basis)
    hk = MetricField(g, basis.cfg.degrees, basis.grid)
    row = {"t": t, "mu0_norm": float(np.linalg.norm(mu0.matrix)), "dk_ref": np.nan, "sup_err": np.nan,
           "lam_min": np.nan, "lam_max": np.nan, "cond_max": hk.condition()}
    row["mu0_trace"] = float(abs(np.trace(mu0.matrix)))
    if reference is not None:
        ref = reference(t)
        row["sup_err"] = relative_sup_error(hk, ref)
        Href = hilb(ref, basis)
        row["dk_ref"] = bergman_distance(from_unit(Hu, basis), Href, basis.cfg.k)
    if curvature and hk.condition() < COND_LIMIT:
        lam = np.linalg.eigvals(lambda_curvature(hk).values).real
        row["lam_min"], row["lam_max"] = float(lam.min()), float(lam.max())
    return row


def run_flow(initial: HermitianInner | MetricField, basis: SectionBasis, cfg: FlowConfig,
             reference: Callable[[float], MetricField] | None = None,
             curvature: bool = True, monotone_tol: float = 1e-10) -> FlowTrace:
    """Integrate the normalized balancing flow to ``t_max`` recording diagnostics.

    Stops early when ``||mu0||_HS <= cfg.tol`` (converged) or when the FS
    metric degenerates past the condition limit (aborted, partial trace kept).
    """
    trace = FlowTrace()
    if isinstance(initial, MetricField):
        Hu = hilb_unit(initial, basis)
    else:
        Hu = to_unit(initial, basis)
    weights = None
    if cfg.volume_mode == "omega_prime":
        weights = omega_prime_weights(basis.grid, basis.cfg.k).weights
    sample_dt = cfg.sample_dt or cfg.dt
    t = 0.0
    next_sample = 0.0
    prev_norm = np.inf
    while True:
        try:
            A, mu0 = _velocity(Hu, basis, cfg, weights, check=True)
        except PositivityError as exc:
            trace.aborted = True
            trace.events.append(f"stopped at t={t:.6g}: {exc}")
            log.warning("balancing flow stopped: %s", exc)
            break
        norm = float(np.linalg.norm(mu0.matrix))
        if norm > prev_norm + monotone_tol:
            trace.monotonicity_violations += 1
        prev_norm = norm
        done = norm <= cfg.tol or t >= cfg.t_max - 1e-12
        if t >= next_sample - 1e-12 or done:
            try:
                trace.rows.append(_diagnostics(t, Hu, basis, mu0, reference, curvature))
            except PositivityError as exc:
                trace.events.append(f"t={t:.6g}: {exc}")
            next_sample += sample_dt
        if norm <= cfg.tol:
            trace.converged = True
            trace.events.append(f"converged at t={t:.6g} after {trace.steps} steps")
            break
        if t >= cfg.t_max - 1e-12:
            break
        # spectral-norm guard keeps each exponential step moderate
        dt = min(cfg.dt, cfg.t_max - t, cfg.step_guard / max(np.linalg.norm(A, 2), 1e-300))
        try:
            Hu = balancing_step_unit(Hu, basis, cfg, dt, weights, A if cfg.integrator != "rk4" else None)
        except PositivityError as exc:
            trace.aborted = True
            trace.events.append(f"stopped at t={t:.6g}: {exc}")
            log.warning("balancing flow stopped: %s", exc)
            break
        t += dt
        trace.steps += 1
    trace.final = from_unit(Hu, basis)
    return trace


def run_heat_flow(h0: MetricField, t_max: float, dt: float | None = None, mode: str = "modified",
                  sample_dt: float | None = None,
                  reference: Callable[[float], MetricField] | None = None) -> FlowTrace:
    """Heat-flow trajectory with the balancing-flow trace layout (``mu0_norm`` and ``dk_ref`` unused)."""
    trace = FlowTrace()
    dt = parabolic_dt(h0.grid) if dt is None else dt
    n = max(1, int(np.ceil(t_max / dt - 1e-12)))
    step = t_max / n
    every = max(1, int(round((sample_dt or step) / step)))

    def record(t, h):
        lam = np.linalg.eigvals(lambda_curvature(h).values).real
        row = {"t": t, "mu0_norm": np.nan, "dk_ref": np.nan, "sup_err": np.nan,
               "lam_min": float(lam.min()), "lam_max": float(lam.max()), "cond_max": h.condition()}
        if reference is not None:
            row["sup_err"] = relative_sup_error(h, reference(t))
        trace.rows.append(row)

    h = h0
    record(0.0, h)
    for i in range(n):
        try:
            h = heat_flow_step(h, step, mode)
        except (PositivityError, CFLViolation) as exc:
            trace.aborted = True
            trace.events.append(f"stopped at t={i * step:.6g}: {exc}")
            break
        trace.steps += 1
        if (i + 1) % every == 0 or i + 1 == n:
            record((i + 1) * step, h)
    trace.final = h
    return trace
