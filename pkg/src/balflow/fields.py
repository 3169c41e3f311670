"""Metric and endomorphism fields on the grid, Chern curvature and A_1.

Every field is written in the unitary frame of the reference split metric
``h_ref = FS^{a_1} + ... + FS^{a_r}`` (times ``sigma^k`` when twisted, which
changes nothing in that frame).  A metric is stored as the Hermitian matrix
``g = h_ref^{-1} h``; the FS direct sum is ``g = Id`` at every point.  Entry
``(i, j)`` of any endomorphism field is a section of ``O(a_i - a_j)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .manifold import QuadratureGrid, scalar_curvature_constant

COND_LIMIT = 1e12


class PositivityError(ValueError):
    """A metric field lost (numerical) positive definiteness."""


class CurvatureError(ArithmeticError):
    """Non-finite values appeared in a curvature evaluation."""


def herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def herm_func(a: np.ndarray, func) -> np.ndarray:
    """Apply a scalar function to a stack of Hermitian matrices."""
    w, v = np.linalg.eigh(herm(a))
    return (v * func(w)[..., None, :]) @ dagger(v)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Hermitian metric on E relative to the reference split FS metric."""

    values: np.ndarray
    degrees: tuple[int, ...]
    grid: QuadratureGrid

    @property
    def r(self) -> int:
        return len(self.degrees)

    @classmethod
    def reference(cls, degrees, grid: QuadratureGrid, scale: float = 1.0) -> "MetricField":
        r = len(degrees)
        vals = np.broadcast_to(scale * np.eye(r, dtype=complex), grid.shape + (r, r)).copy()
        return cls(vals, tuple(degrees), grid)

    def like(self, values: np.ndarray) -> "MetricField":
        return MetricField(values, self.degrees, self.grid)

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.values)

    def check(self, cond_limit: float = COND_LIMIT) -> None:
        g = self.values
        if not np.all(np.isfinite(g)):
            raise PositivityError("metric has non-finite entries")
        skew = np.abs(g - dagger(g)).max()
        if skew > 1e-10 * max(1.0, np.abs(g).max()):
            raise PositivityError(f"metric not Hermitian (skew {skew:.3e})")
        w = np.linalg.eigvalsh(herm(g))
        if w.min() <= 0:
            raise PositivityError(f"metric not positive (min eigenvalue {w.min():.3e})")
        cond = (w[..., -1] / w[..., 0]).max()
        if cond > cond_limit:
            raise PositivityError(f"metric condition number {cond:.3e} exceeds {cond_limit:.0e}")

    def condition(self) -> float:
        w = np.linalg.eigvalsh(herm(self.values))
        return float((w[..., -1] / w[..., 0]).max())

    def __mul__(self, c: float) -> "MetricField":
        return self.like(self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class EndoField:
    """Endomorphism-valued field; ``hermitian`` means self-adjoint for the paired metric."""

    values: np.ndarray
    hermitian: bool = False

    def trace(self) -> np.ndarray:
        return np.trace(self.values, axis1=-2, axis2=-1)

    def __add__(self, other: "EndoField") -> "EndoField":
        return EndoField(self.values + other.values, self.hermitian and other.hermitian)

    def __sub__(self, other: "EndoField") -> "EndoField":
        return EndoField(self.values - other.values, self.hermitian and other.hermitian)

    def __mul__(self, c: float) -> "EndoField":
        return EndoField(self.values * c, self.hermitian)

    __rmul__ = __mul__


def identity_field(grid: QuadratureGrid, r: int, c: float = 1.0) -> EndoField:
    vals = np.broadcast_to(c * np.eye(r, dtype=complex), grid.shape + (r, r)).copy()
    return EndoField(vals, True)


def symmetrize(phi: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Self-adjoint part of ``phi`` with respect to the metric ``g``."""
    adj = np.linalg.solve(g, dagger(phi) @ g)
    return 0.5 * (phi + adj)


def adjoint_defect(phi: EndoField, h: MetricField) -> float:
    """``max |g phi - (g phi)^*|``; zero iff ``phi`` is h-self-adjoint."""
    gp = h.values @ phi.values
    return float(np.abs(gp - dagger(gp)).max())


def _spin_types(degrees) -> np.ndarray:
    a = np.asarray(degrees)
    return a[:, None] - a[None, :]


def _entrywise(grid: QuadratureGrid, field: np.ndarray, types: np.ndarray, op) -> np.ndarray:
    out = np.empty(field.shape, dtype=complex)
    for d in np.unique(types):
        ii, jj = np.nonzero(types == d)
        out[..., ii, jj] = op(grid, field[..., ii, jj], int(d))
    return out


def lambda_curvature(h: MetricField, twist: int = 0) -> EndoField:
    """``(i/2pi) Lambda F_h`` as an h-self-adjoint endomorphism field.

    Untwisted by default; ``twist=k`` returns the field for ``E(k)``, which
    differs by ``k Id``.  Uses the reference-metric identity
    ``F_h = F_ref + dbar(g^{-1} D g)`` with spectral covariant derivatives.
    """
    h.check()
    grid, g = h.grid, h.values
    types = _spin_types(h.degrees)
    dg = _entrywise(grid, g, types, spectral.eth)
    alpha = np.linalg.solve(g, dg)
    dbar_alpha = _entrywise(grid, alpha, types - 2, spectral.ethbar)
    base = np.diag(np.asarray(h.degrees, dtype=float) + twist)
    lam = base - dbar_alpha
    if not np.all(np.isfinite(lam)):
        raise CurvatureError("non-finite curvature values")
    return EndoField(symmetrize(lam, g), True)


def a1_endomorphism(h: MetricField) -> EndoField:
    """``A_1(h) = (i/2pi) Lambda F_(E,h) + S(omega)/2 Id``."""
    lam = lambda_curvature(h)
    return lam + identity_field(h.grid, h.r, 0.5 * scalar_curvature_constant())


def trace_average(phi: EndoField, grid: QuadratureGrid, r: int) -> float:
    """``(1/rV) int tr(phi) omega``."""
    return float(np.real(grid.integrate(phi.trace())) / (r * grid.volume))


def a1_reduced(h: MetricField) -> EndoField:
    """``A_1 - mean(A_1) Id``; the modified heat-flow velocity."""
    a1 = a1_endomorphism(h)
    mean = trace_average(a1, h.grid, h.r)
    return a1 - identity_field(h.grid, h.r, mean)


def endo_sup_norm(phi: EndoField, h: MetricField | None = None) -> float:
    """Sup over the grid of the operator norm of ``phi`` (w.r.t. ``h`` if given)."""
    a = phi.values
    if h is not None:
        s = herm_func(h.values, np.sqrt)
        si = herm_func(h.values, lambda w: 1.0 / np.sqrt(w))
        a = s @ a @ si
    if a.shape[-1] == 1:
        return float(np.abs(a).max())
    return float(np.linalg.norm(a, ord=2, axis=(-2, -1)).max())


def relative_eigenvalues(h0: MetricField, h1: MetricField) -> np.ndarray:
    """Eigenvalues of ``g1^{-1} g0`` at each point, ascending."""
    if h0.values.shape != h1.values.shape:
        raise ValueError(f"shape mismatch {h0.values.shape} vs {h1.values.shape}")
    si = herm_func(h1.values, lambda w: 1.0 / np.sqrt(w))
    return np.linalg.eigvalsh(herm(si @ h0.values @ si))


def metric_sup_distance(h0: MetricField, h1: MetricField) -> float:
    """``c - 1`` for the least ``c >= 1`` with ``h0 <= c h1`` and ``h1 <= c h0``."""
    lam = relative_eigenvalues(h0, h1)
    c = max(float(lam.max()), float(1.0 / lam.min()), 1.0)
    return c - 1.0


def metric_exp(h: MetricField, phi: np.ndarray) -> MetricField:
    """``h exp(phi)`` for an h-self-adjoint ``phi``, computed as a congruence."""
    s = herm_func(h.values, np.sqrt)
    si = herm_func(h.values, lambda w: 1.0 / np.sqrt(w))
    inner = herm(s @ phi @ si)
    return h.like(herm(s @ herm_func(inner, np.exp) @ s))
