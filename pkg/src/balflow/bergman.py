"""Bergman space of H^0(E(k)): Hilb_k, FS_k, Phi_k, moment map, Q_k, d_k.

Inner products are Gram matrices on coefficient vectors: a section
``s = sum_alpha c_alpha z^{j_alpha} e_{i_alpha}`` has squared norm ``c^* H c``.
Public matrices use the raw monomial basis; computations run in the
FS-normalized basis (``SectionBasis.values``) where ``Hilb_k(FS)`` is close to
the identity, and convert at the boundary.

N x N quantities tied to an inner product (moment values, tangent vectors)
are returned in the orthonormal frame ``s_hat = s C^{-1}`` where ``H = C^* C``
is the Cholesky factorization of the normalized Gram matrix; that factor is
carried along as ``frame``.  Entry ``[a, b]`` of such a matrix is
``<s_b, s_a>``-type data, i.e. the transpose of the usual ``<s_i, s_j>`` layout;
traces and spectra are unaffected.

Tangent vectors follow the convention where the tangent of a family of inner
products is minus the log-derivative of the Gram matrix in the orthonormal
frame; with it the normalized balancing flow reads ``dH/dt = -k^2 mu0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .fields import EndoField, MetricField, dagger, herm
from .manifold import SectionBasis

N_DIM = 1  # complex dimension of the base


class RankDeficiencyError(np.linalg.LinAlgError):
    """Gram matrix is not positive definite (quadrature under-resolved)."""


class BasePointError(np.linalg.LinAlgError):
    """Sections fail to generate a fibre at some grid point."""


@dataclass(frozen=True, eq=False)
class HermitianInner:
    """Hermitian inner product on H^0(E(k)) in the raw monomial basis."""

    matrix: np.ndarray
    degrees: tuple[int, ...]
    k: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __mul__(self, c: float) -> "HermitianInner":
        return HermitianInner(self.matrix * c, self.degrees, self.k)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class MomentValue:
    matrix: np.ndarray
    frame: np.ndarray

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


def to_unit(H: HermitianInner, basis: SectionBasis) -> np.ndarray:
    d = basis.norms
    return H.matrix / np.outer(d, d)


def from_unit(Hu: np.ndarray, basis: SectionBasis) -> HermitianInner:
    d = basis.norms
    return HermitianInner(herm(Hu * np.outer(d, d)), basis.cfg.degrees, basis.cfg.k)


def cholesky(Hu: np.ndarray) -> np.ndarray:
    """Upper factor ``C`` with ``Hu = C^* C``."""
    try:
        return sla.cholesky(herm(Hu), lower=False)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(f"inner product not positive definite: {exc}") from None


def orthonormal_sections(basis: SectionBasis, C: np.ndarray) -> np.ndarray:
    """Values of ``s_hat = s C^{-1}``, shape ``(n_theta, n_phi, r, N)``."""
    Cinv = sla.solve_triangular(C, np.eye(C.shape[0]), lower=False)
    n = C.shape[0]
    return (basis.values.reshape(-1, n) @ Cinv).reshape(basis.values.shape)


def _normalization(basis: SectionBasis) -> float:
    return basis.n_sections / (basis.r * basis.grid.volume)


def _gram(basis: SectionBasis, g: np.ndarray, S: np.ndarray, weights=None) -> np.ndarray:
    w = basis.grid.weights if weights is None else weights
    n = S.shape[-1]
    gS = np.einsum("pqij,pqjb->pqib", g, S) * w[..., None, None]
    return np.conj(S).reshape(-1, n).T @ gS.reshape(-1, n)


def hilb_unit(h: MetricField, basis: SectionBasis) -> np.ndarray:
    return herm(_normalization(basis) * _gram(basis, h.values, basis.values))


def hilb(h: MetricField, basis: SectionBasis) -> HermitianInner:
    """``Hilb_k(h)``: (N/rV) times the L^2 pairing of sections in ``h x sigma^k``."""
    Hu = hilb_unit(h, basis)
    if np.linalg.eigvalsh(Hu).min() <= 0:
        raise RankDeficiencyError("Hilb_k(h) is not positive definite")
    return from_unit(Hu, basis)


def _fs_from_sections(S_hat: np.ndarray) -> np.ndarray:
    P = herm(np.einsum("pqia,pqja->pqij", S_hat, np.conj(S_hat)))
    w = np.linalg.eigvalsh(P)
    if w[..., 0].min() <= 0 or not np.all(np.isfinite(w)):
        raise BasePointError("sections do not generate the fibre at some point")
    return herm(np.linalg.inv(P))


def fs_unit(Hu: np.ndarray, basis: SectionBasis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(g, S_hat, C)`` for a normalized Gram matrix."""
    C = cholesky(Hu)
    S_hat = orthonormal_sections(basis, C)
    return _fs_from_sections(S_hat), S_hat, C


def fs(H: HermitianInner, basis: SectionBasis) -> MetricField:
    """``FS_k(H)``: the metric with ``sum_i s_i s_i^* = Id`` for H-orthonormal ``s_i``."""
    g, _, _ = fs_unit(to_unit(H, basis), basis)
    return MetricField(g, basis.cfg.degrees, basis.grid)


def phi_map(h: MetricField, basis: SectionBasis) -> MetricField:
    """``Phi_k = FS_k o Hilb_k``."""
    g, _, _ = fs_unit(hilb_unit(h, basis), basis)
    return h.like(g)


def bergman_density(h: MetricField, basis: SectionBasis) -> EndoField:
    """``B_k(h) = (N/rV) sum_i s_i s_i^{*h}`` for ``Hilb_k(h)``-orthonormal ``s_i``."""
    C = cholesky(hilb_unit(h, basis))
    S_hat = orthonormal_sections(basis, C)
    B = _normalization(basis) * (S_hat @ dagger(S_hat)) @ h.values
    return EndoField(B, True)


def rho_line(basis: SectionBasis, potential: np.ndarray | None = None,
             volume_factor: np.ndarray | None = None) -> np.ndarray:
    """Bergman function ``sum |s_i|^2`` of ``(L^k, sigma^k)``, no N/rV factor.

    ``basis`` must be a line-bundle basis (``degrees == (0,)``).  With a
    ``potential`` f the fibre metric is ``sigma^k e^{-k f}``; ``volume_factor``
    multiplies the volume form used for the L^2 product.
    """
    if basis.cfg.degrees != (0,):
        raise ValueError("rho_line needs the line-bundle basis degrees=(0,)")
    grid = basis.grid
    g = np.ones(grid.shape + (1, 1))
    if potential is not None:
        g = g * np.exp(-basis.cfg.k * potential)[..., None, None]
    w = grid.weights if volume_factor is None else grid.weights * volume_factor
    G = herm(_gram(basis, g, basis.values, w))
    C = cholesky(G)
    S_hat = orthonormal_sections(basis, C)
    return np.real((S_hat @ dagger(S_hat)) @ g)[..., 0, 0]


def moment_bar_unit(Hu: np.ndarray, basis: SectionBasis, weights=None) -> MomentValue:
    g, S_hat, C = fs_unit(Hu, basis)
    M = herm(_gram(basis, g, S_hat, weights))
    return MomentValue(M, C)


def moment_bar(H: HermitianInner, basis: SectionBasis, weights=None) -> MomentValue:
    """Integrated moment map in the H-orthonormal frame; ``tr = rV``."""
    return moment_bar_unit(to_unit(H, basis), basis, weights)


def trace_free(mu: MomentValue, basis: SectionBasis) -> MomentValue:
    n = mu.matrix.shape[0]
    shift = basis.r * basis.grid.volume / n
    return MomentValue(mu.matrix - shift * np.eye(n), mu.frame)


def moment_bar_zero(H: HermitianInner, basis: SectionBasis, weights=None) -> MomentValue:
    """``mu0 = mu - (rV/N) Id``; vanishes exactly at balanced inner products."""
    return trace_free(moment_bar(H, basis, weights), basis)


def _kernel_matrix(phi: EndoField, h: MetricField, basis: SectionBasis, S_hat: np.ndarray) -> np.ndarray:
    # M[a, b] = int <s_b, phi s_a>_h
    return _gram(basis, h.values @ phi.values, S_hat)


def q_apply(phi: EndoField, h: MetricField, basis: SectionBasis) -> EndoField:
    """Donaldson's ``Q_k`` operator built from the Bergman kernel of ``Hilb_k(h)``."""
    C = cholesky(hilb_unit(h, basis))
    S_hat = orthonormal_sections(basis, C)
    M = _kernel_matrix(phi, h, basis, S_hat)
    k_n = basis.cfg.k ** N_DIM
    out = k_n * (S_hat @ M @ dagger(S_hat)) @ h.values
    return EndoField(out, phi.hermitian)


def bergman_distance(H0: HermitianInner, H1: HermitianInner, k: int, n_dim: int = N_DIM) -> float:
    """Normalized Killing-form distance ``sqrt(k^-n sum log^2 lambda_i)``."""
    if H0.matrix.shape != H1.matrix.shape:
        raise ValueError("inner products live on different spaces")
    # rescale both by the same diagonal to keep the pencil well conditioned
    d = np.sqrt(np.abs(np.diag(H0.matrix)))
    A = H0.matrix / np.outer(d, d)
    B = H1.matrix / np.outer(d, d)
    try:
        lam = sla.eigh(herm(B), herm(A), eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigenvalue failure: {exc}") from None
    if lam.min() <= 0:
        raise np.linalg.LinAlgError("inner products must be positive definite")
    return float(np.sqrt(np.sum(np.log(lam) ** 2) / k**n_dim))


def hilb_tangent(h: MetricField, phi_dot: EndoField, basis: SectionBasis) -> MomentValue:
    """Tangent ``delta H = -(N/rV) int <s_i, phi_dot s_j>`` of ``t -> Hilb_k(h_t)``."""
    C = cholesky(hilb_unit(h, basis))
    S_hat = orthonormal_sections(basis, C)
    M = _kernel_matrix(phi_dot, h, basis, S_hat)
    return MomentValue(herm(-_normalization(basis) * M), C)
