"""Spin-weighted spectral calculus on the FS quadrature grid.

A section of ``O(d)`` written in the unitary frame of the FS metric has
Fourier modes ``f_n(u) e^{i n phi}`` with ``f_n = u^{|n|/2} (1-u)^{|n-d|/2} p(u)``
for a smooth ``p``.  Each mode is expanded in the orthonormal basis

    b_j(u) = u^{a/2} (1-u)^{b/2} P_j^{(a,b)}(1 - 2u) / norm_j,   a=|n|, b=|n-d|,

which is the spin-weighted spherical harmonic basis in disguise.  The
covariant derivatives

    eth_d f    = (1+|z|^2) D_z f     (a section of O(d-2))
    ethbar_d f = (1+|z|^2) D_zbar f  (a section of O(d+2))

act on each mode by closed-form formulas, so derivatives are spectrally
accurate up to both poles and never divide by zero on the Gauss nodes.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .manifold import QuadratureGrid


def jacobi_table(jmax: int, a: float, b: float, x: np.ndarray) -> np.ndarray:
    """Rows ``P_j^{(a,b)}(x)`` for ``j = 0..jmax`` by the three-term recurrence."""
    out = np.zeros((jmax + 1, x.size))
    if jmax < 0:
        return out[:0]
    out[0] = 1.0
    if jmax >= 1:
        out[1] = 0.5 * (2 * (a + 1) + (a + b + 2) * (x - 1))
    for j in range(2, jmax + 1):
        s = 2 * j + a + b
        c1 = 2 * j * (j + a + b) * (s - 2)
        c2 = (s - 1) * (s * (s - 2) * x + a * a - b * b)
        c3 = 2 * (j + a - 1) * (j + b - 1) * s
        out[j] = (c2 * out[j - 1] - c3 * out[j - 2]) / c1
    return out


def _log_norm(j: np.ndarray, a: float, b: float) -> np.ndarray:
    # integral over [0,1] of u^a (1-u)^b P_j(1-2u)^2 du
    return (
        gammaln(j + a + 1)
        + gammaln(j + b + 1)
        - np.log(2 * j + a + b + 1)
        - gammaln(j + a + b + 1)
        - gammaln(j + 1)
    )


def mode_limit(grid: QuadratureGrid) -> int:
    """Largest |n| kept; output modes n +- 1 must stay below Nyquist."""
    return grid.n_phi // 2 - 2


def mode_basis(grid: QuadratureGrid, n: int, d: int):
    """Orthonormal radial basis for mode ``n`` of spin type ``d``.

    Returns ``(B, dB, l)`` where ``B[i, j] = b_j(u_i)``, ``dB[i, j]`` is
    ``u(1-u) b_j'(u_i)`` and ``l[j]`` the harmonic degree of ``b_j``.
    """
    return _mode_basis(grid.n_theta, n, d)


@lru_cache(maxsize=None)
def _nodes(n_theta: int):
    x, w = np.polynomial.legendre.leggauss(n_theta)
    return (1.0 - x[::-1]) / 2.0, w[::-1] / 2.0


@lru_cache(maxsize=None)
def _mode_basis(n_theta: int, n: int, d: int):
    u, _ = _nodes(n_theta)
    a, b = abs(n), abs(n - d)
    jcount = (2 * n_theta - 1 - a - b) // 2 + 1
    return _basis_at(u, n, d, jcount)


def _basis_at(u: np.ndarray, n: int, d: int, jcount: int):
    a, b = abs(n), abs(n - d)
    if jcount <= 0:
        z = np.zeros((u.size, 0))
        return z, z, np.zeros(0)
    jmax = jcount - 1
    x = 1.0 - 2.0 * u
    js = np.arange(jcount)
    lognorm = _log_norm(js, a, b)
    logpref = 0.5 * a * np.log(u) + 0.5 * b * np.log1p(-u)
    scale = np.exp(logpref[:, None] - 0.5 * lognorm[None, :])
    P = jacobi_table(jmax, a, b, x).T
    B = scale * P
    # d/du P_j^{(a,b)}(1-2u) = -(j+a+b+1) P_{j-1}^{(a+1,b+1)}(1-2u)
    dP = np.zeros_like(P)
    if jmax >= 1:
        Q = jacobi_table(jmax - 1, a + 1, b + 1, x).T
        dP[:, 1:] = -(js[1:] + a + b + 1) * Q
    uu = u[:, None]
    dB = B * (0.5 * a * (1 - uu) - 0.5 * b * uu) + scale * uu * (1 - uu) * dP
    ell = js + 0.5 * (a + b)
    return B, dB, ell


@lru_cache(maxsize=None)
def _operator(n_theta: int, n: int, d: int, kind: str) -> np.ndarray:
    """Matrix taking radial samples of mode n to samples of the derivative."""
    u, w = _nodes(n_theta)
    B, dB, ell = _mode_basis(n_theta, n, d)
    proj = B.T * w[None, :]
    uu = u[:, None]
    s = np.sqrt(uu * (1 - uu))
    if kind == "eth":
        vals = (dB + B * (0.5 * n - 0.5 * d * uu)) / s
    elif kind == "ethbar":
        vals = (dB + B * (-0.5 * n + 0.5 * d * uu)) / s
    elif kind == "project":
        vals = B
    elif kind == "inv_lap":
        # spin-0 only: the positive Laplacian is l(l+1) on b_j
        lam = ell * (ell + 1)
        inv = np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)
        vals = B * inv[None, :]
    else:
        raise ValueError(kind)
    return vals @ proj


def _modes(grid: QuadratureGrid) -> np.ndarray:
    lim = mode_limit(grid)
    return np.arange(-lim, lim + 1)


def to_modes(grid: QuadratureGrid, f: np.ndarray) -> np.ndarray:
    """Fourier coefficients ``f_n(u_i)`` for ``n`` in ``_modes``; axis 1 is phi."""
    M = grid.n_phi
    F = np.fft.fft(f, axis=1) / M
    ns = _modes(grid)
    shift = np.exp(-1j * ns * grid.phi_offset)
    shape = [1] * F.ndim
    shape[1] = ns.size
    return F[:, ns % M] * shift.reshape(shape)


def from_modes(grid: QuadratureGrid, C: np.ndarray, ns: np.ndarray) -> np.ndarray:
    M = grid.n_phi
    shift = np.exp(1j * ns * grid.phi_offset)
    shape = [1] * C.ndim
    shape[1] = ns.size
    F = np.zeros((C.shape[0], M) + C.shape[2:], dtype=complex)
    F[:, ns % M] = C * shift.reshape(shape) * M
    return np.fft.ifft(F, axis=1)


def _apply(grid: QuadratureGrid, f: np.ndarray, d: int, kind: str, shift: int) -> np.ndarray:
    ns = _modes(grid)
    C = to_modes(grid, np.asarray(f, dtype=complex))
    out = np.empty_like(C)
    for idx, n in enumerate(ns):
        op = _operator(grid.n_theta, int(n), int(d), kind)
        out[:, idx] = np.tensordot(op, C[:, idx], axes=(1, 0))
    return from_modes(grid, out, ns + shift)


def eth(grid: QuadratureGrid, f: np.ndarray, d: int) -> np.ndarray:
    """``(1+|z|^2) D_z f`` for ``f`` a unitary-frame component of O(d)."""
    return _apply(grid, f, d, "eth", -1)


def ethbar(grid: QuadratureGrid, f: np.ndarray, d: int) -> np.ndarray:
    """``(1+|z|^2) D_zbar f`` for ``f`` a unitary-frame component of O(d)."""
    return _apply(grid, f, d, "ethbar", +1)


def project(grid: QuadratureGrid, f: np.ndarray, d: int = 0) -> np.ndarray:
    """Band-limit ``f`` to the representable spin-``d`` harmonics."""
    return _apply(grid, f, d, "project", 0)


def laplacian(grid: QuadratureGrid, f: np.ndarray) -> np.ndarray:
    """Round unit-sphere Laplacian (non-positive) of a scalar field."""
    return ethbar(grid, eth(grid, f, 0), -2)


def interpolate(source: QuadratureGrid, f: np.ndarray, d: int, target: QuadratureGrid) -> np.ndarray:
    """Evaluate the spectral expansion of a spin-``d`` field on another grid."""
    ns = _modes(source)
    if target.n_phi // 2 <= ns.max():
        raise ValueError("target grid cannot represent the source modes")
    u, w = _nodes(source.n_theta)
    C = to_modes(source, np.asarray(f, dtype=complex))
    out = np.empty((target.n_theta,) + C.shape[1:], dtype=complex)
    for idx, n in enumerate(ns):
        B, _, _ = _mode_basis(source.n_theta, int(n), int(d))
        coef = np.tensordot(B.T * w[None, :], C[:, idx], axes=(1, 0))
        Bt, _, _ = _basis_at(target.u, int(n), int(d), B.shape[1])
        out[:, idx] = np.tensordot(Bt, coef, axes=(1, 0))
    return from_modes(target, out, ns)


def solve_poisson(grid: QuadratureGrid, rhs: np.ndarray) -> np.ndarray:
    """Mean-zero ``theta`` with ``-Laplacian(theta) = rhs - mean(rhs)``."""
    out = _apply(grid, rhs, 0, "inv_lap", 0)
    return out
