"""Riemann sphere model: Fubini-Study quadrature and monomial section bases.

The base is P^1 in the affine chart ``z`` with Kahler form
``omega = (i/2pi) ddbar log(1 + |z|^2)``, normalized to unit volume.  With
the compactified radial variable ``u = |z|^2 / (1 + |z|^2)`` the volume form is
exactly ``du dphi / 2pi`` on ``[0, 1] x [0, 2pi)``, so Gauss-Legendre in ``u``
and the trapezoid rule in ``phi`` integrate FS-weighted monomials exactly.

Fields on the grid are arrays of shape ``(n_theta, n_phi, ...)``; the flat
point index is ``p = i_u * n_phi + i_phi`` (radial index outer, angle inner).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb, factorial

import numpy as np

VOLUME = 1.0


class GridResolutionError(ValueError):
    """Quadrature grid is too coarse for the requested polynomial degree."""


@dataclass(frozen=True)
class ModelConfig:
    """Split bundle ``E = O(a_1) + ... + O(a_r)`` twisted by ``L^k``."""

    degrees: tuple[int, ...]
    k: int
    n_theta: int = 64
    n_phi: int = 64

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(a) for a in self.degrees))
        object.__setattr__(self, "k", int(self.k))
        if len(self.degrees) < 1:
            raise ValueError("need at least one summand")
        if self.k < 0:
            raise ValueError("twist k must be non-negative")
        if any(a + self.k < 0 for a in self.degrees):
            raise ValueError(f"a_i + k must be >= 0 for all i (degrees={self.degrees}, k={self.k})")

    @property
    def r(self) -> int:
        return len(self.degrees)

    @property
    def twisted_degrees(self) -> tuple[int, ...]:
        return tuple(a + self.k for a in self.degrees)

    @property
    def n_sections(self) -> int:
        return sum(m + 1 for m in self.twisted_degrees)

    @property
    def degree(self) -> int:
        return sum(self.degrees)

    @property
    def slope(self) -> float:
        return self.degree / (self.r * VOLUME)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor grid ``u_i x phi_l`` with weights for the normalized FS form."""

    u: np.ndarray
    phi: np.ndarray
    u_weights: np.ndarray
    phi_offset: float
    volume: float = VOLUME
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        w = np.outer(self.u_weights, np.full(self.n_phi, 1.0 / self.n_phi)) * self.volume
        object.__setattr__(self, "weights", w)

    @property
    def n_theta(self) -> int:
        return self.u.size

    @property
    def n_phi(self) -> int:
        return self.phi.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @cached_property
    def radius(self) -> np.ndarray:
        """|z| on the grid, shape ``(n_theta, n_phi)``."""
        r = np.sqrt(self.u / (1.0 - self.u))
        return np.broadcast_to(r[:, None], self.shape)

    @cached_property
    def points(self) -> np.ndarray:
        """Complex chart coordinates, flattened in point order."""
        return (self.radius * np.exp(1j * self.phi)[None, :]).ravel()

    @cached_property
    def unit_vectors(self) -> np.ndarray:
        """Points of the unit sphere in R^3; z = 0 is the pole x3 = +1."""
        cos_t = 1.0 - 2.0 * self.u
        sin_t = 2.0 * np.sqrt(self.u * (1.0 - self.u))
        x1 = np.outer(sin_t, np.cos(self.phi))
        x2 = np.outer(sin_t, np.sin(self.phi))
        x3 = np.broadcast_to(cos_t[:, None], self.shape)
        return np.stack([x1, x2, x3], axis=-1)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate a field (leading axes = grid) against the volume form."""
        return np.tensordot(self.weights, values, axes=([0, 1], [0, 1]))

    def with_weights(self, factor: np.ndarray) -> "QuadratureGrid":
        """Same nodes, weights multiplied pointwise by ``factor``."""
        g = QuadratureGrid(self.u, self.phi, self.u_weights, self.phi_offset, self.volume)
        object.__setattr__(g, "weights", self.weights * factor)
        return g

    def exact_degree(self) -> int:
        """Largest m such that every ``u^j (1-u)^(m-j)`` integrand is exact."""
        return min(2 * self.n_theta - 1, self.n_phi - 1)


def beta_moment(j: int, m: int) -> float:
    """Closed form of the integral of ``|z|^2j / (1+|z|^2)^m`` against omega."""
    return factorial(j) * factorial(m - j) / factorial(m + 1)


def build_grid(n_theta: int, n_phi: int, max_degree: int | None = None) -> QuadratureGrid:
    """Gauss-Legendre in ``u`` times a half-step offset uniform grid in ``phi``.

    If ``max_degree`` is given the grid is self-tested on every FS monomial
    ``u^j (1-u)^(m-j)``, ``0 <= j <= m <= max_degree`` and on the angular modes
    up to ``max_degree``; :class:`GridResolutionError` is raised on failure.
    """
    if n_theta < 8 or n_phi < 8:
        raise GridResolutionError(f"grid {n_theta}x{n_phi} below the 8x8 minimum")
    x, w = np.polynomial.legendre.leggauss(n_theta)
    # x = 1 - 2u keeps u increasing with the node index reversed
    u = (1.0 - x[::-1]) / 2.0
    uw = w[::-1] / 2.0
    offset = np.pi / n_phi
    phi = offset + 2.0 * np.pi * np.arange(n_phi) / n_phi
    grid = QuadratureGrid(u=u, phi=phi, u_weights=uw, phi_offset=offset)
    if max_degree is not None:
        _self_test(grid, max_degree)
    return grid


def _self_test(grid: QuadratureGrid, max_degree: int) -> None:
    for m in range(max_degree + 1):
        for j in range(m + 1):
            q = np.sum(grid.u_weights * grid.u**j * (1.0 - grid.u) ** (m - j))
            exact = beta_moment(j, m)
            if abs(q - exact) > 1e-10 * exact:
                raise GridResolutionError(
                    f"radial quadrature fails on j={j}, m={m}: need n_theta >= {(max_degree + 2) // 2}"
                )
    for n in range(1, max_degree + 1):
        q = np.mean(np.exp(1j * n * grid.phi))
        if abs(q) > 1e-10:
            raise GridResolutionError(f"angular quadrature fails on mode {n}: need n_phi > {max_degree}")


def grid_for(cfg: ModelConfig, extra: int = 16) -> QuadratureGrid:
    """Grid resolving every section pairing of ``cfg`` plus ``extra`` smooth modes."""
    m = max(cfg.twisted_degrees)
    n_theta = max(cfg.n_theta, m + extra // 2 + 1)
    n_phi = max(cfg.n_phi, 2 * m + extra)
    n_phi += n_phi % 2
    return build_grid(n_theta, n_phi, max_degree=2 * m if m else None)


@dataclass(frozen=True, eq=False)
class SectionBasis:
    """Monomial basis ``z^j`` of each summand ``O(a_i + k)`` evaluated on a grid.

    ``values[iu, iphi, i, alpha]`` holds the FS-normalized section
    ``sqrt((m+1) C(m,j)) z^j`` written in the unitary frame of the reference
    metric ``sigma^k x (FS on each summand)``; ``norms[alpha]`` is the FS norm of
    the raw monomial, so raw monomial = ``norms * normalized``.
    """

    cfg: ModelConfig
    grid: QuadratureGrid
    values: np.ndarray
    block_index: np.ndarray
    powers: np.ndarray
    norms: np.ndarray

    @property
    def n_sections(self) -> int:
        return self.values.shape[-1]

    @property
    def r(self) -> int:
        return self.cfg.r

    @cached_property
    def fiber_weight(self) -> np.ndarray:
        """``(1+|z|^2)^-(a_i+k)`` per summand, shape ``(n_theta, n_phi, r)``."""
        one_minus_u = (1.0 - self.grid.u)[:, None, None]
        m = np.array(self.cfg.twisted_degrees, dtype=float)[None, None, :]
        return np.broadcast_to(one_minus_u**m, self.grid.shape + (self.r,))

    @cached_property
    def monomials(self) -> np.ndarray:
        """Raw trivialization values: ``z^j`` in row ``block_index``."""
        z = self.grid.points.reshape(self.grid.shape)
        out = np.zeros(self.grid.shape + (self.r, self.n_sections), dtype=complex)
        for alpha, (i, j) in enumerate(zip(self.block_index, self.powers)):
            out[..., i, alpha] = z**j
        return out

    def flat(self) -> np.ndarray:
        """``values`` reshaped to ``(P, r, N)``."""
        return self.values.reshape(-1, self.r, self.n_sections)


def build_section_basis(cfg: ModelConfig, grid: QuadratureGrid) -> SectionBasis:
    m_max = max(cfg.twisted_degrees)
    if 2 * m_max > grid.exact_degree():
        raise GridResolutionError(
            f"grid {grid.n_theta}x{grid.n_phi} is not exact for degree {2 * m_max}"
        )
    u = grid.u[:, None]
    e = np.exp(1j * grid.phi)[None, :]
    blocks, powers, norms, cols = [], [], [], []
    for i, m in enumerate(cfg.twisted_degrees):
        for j in range(m + 1):
            c = float((m + 1) * comb(m, j))
            col = np.sqrt(c) * u ** (j / 2) * (1.0 - u) ** ((m - j) / 2) * e**j
            blocks.append(i)
            powers.append(j)
            norms.append(1.0 / np.sqrt(c))
            cols.append((i, col))
    values = np.zeros(grid.shape + (cfg.r, len(cols)), dtype=complex)
    for alpha, (i, col) in enumerate(cols):
        values[..., i, alpha] = col
    return SectionBasis(
        cfg=cfg,
        grid=grid,
        values=values,
        block_index=np.array(blocks),
        powers=np.array(powers),
        norms=np.array(norms),
    )


def scalar_curvature_constant() -> float:
    """S(omega) of the unit-volume FS form, fixed by the Bergman coefficient.

    For O(k) with the FS metric the Bergman density is the constant
    ``h0(L^k)/V = k + 1 = k + S/2``, so ``S = 2 (h0(L^k)/V - k)``.
    """
    k = 1
    return 2.0 * ((k + 1) / VOLUME - k)
