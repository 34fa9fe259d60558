"""Linear algebra in the weighted space l^2_m.

Every operator here is self-adjoint with respect to ``(f, g)_m``; with
``M = diag(m)`` the matrix ``M^{1/2} A M^{-1/2}`` is symmetric, so all
spectral work goes through :func:`numpy.linalg.eigh` on that matrix and is
mapped back to vertex coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_core import OperatorModel

__all__ = [
    "DEFAULT_TOL",
    "Spectrum",
    "Projector",
    "eigendecompose",
    "evolve",
    "kernel_projector",
    "intersection_projector",
    "weighted_operator_norm",
    "spectral_gap",
    "projector_product_contraction",
    "monotonicity_check",
    "MonotonicityReport",
]

DEFAULT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues in descending order and m-orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mass: np.ndarray

    @property
    def scale(self) -> float:
        lo = self.eigenvalues[-1] if self.eigenvalues.size else 0.0
        return max(1.0, abs(float(lo)))

    def kernel_mask(self, tol: float = DEFAULT_TOL) -> np.ndarray:
        return np.abs(self.eigenvalues) <= tol * self.scale

    def function(self, values) -> np.ndarray:
        """Matrix of ``g(A)`` given ``values = g(eigenvalues)``."""
        v = self.eigenvectors
        # V^{-1} = V^T M because the columns are m-orthonormal
        return (v * values) @ (v.T * self.mass)


@dataclass(frozen=True, eq=False)
class Projector:
    matrix: np.ndarray
    mass: np.ndarray
    rank: int

    @property
    def complement(self) -> np.ndarray:
        return np.eye(self.matrix.shape[0]) - self.matrix


def _sym(op: OperatorModel, tol: float = 1e-10) -> np.ndarray:
    s = op.symmetrized()
    scale = max(np.abs(s).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(s - s.T).max(initial=0.0) > tol * scale:
        raise ValueError("symmetrized operator is not symmetric; the mass/matrix pair is not self-adjoint")
    return 0.5 * (s + s.T)


def eigendecompose(op: OperatorModel) -> Spectrum:
    sym = _sym(op)
    w, u = np.linalg.eigh(sym)
    order = np.argsort(w, kind="stable")[::-1]
    w, u = w[order], u[:, order]
    vecs = u / np.sqrt(op.mass)[:, None]
    return Spectrum(w, vecs, op.mass)


def evolve(
    op: OperatorModel, t: float, spectrum: Spectrum | None = None, tol: float = DEFAULT_TOL
) -> np.ndarray:
    """``exp(t A)`` through the spectral decomposition; exact identity at ``t = 0``.

    Eigenvalues inside the kernel band are treated as exactly zero, so kernel
    directions are preserved for all ``t`` instead of drifting like
    ``exp(t * roundoff)``.
    """
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    if t == 0:
        return np.eye(op.dim)
    spec = spectrum if spectrum is not None else eigendecompose(op)
    lam = np.where(spec.kernel_mask(tol), 0.0, spec.eigenvalues)
    return spec.function(np.exp(t * lam))


def _projector_from(spec: Spectrum, mask: np.ndarray) -> Projector:
    v = spec.eigenvectors[:, mask]
    mat = v @ (v.T * spec.mass)
    return Projector(mat, spec.mass, int(mask.sum()))


def kernel_projector(op: OperatorModel, tol: float = DEFAULT_TOL) -> Projector:
    """m-orthogonal projector onto ``ker A`` (eigenvalues within ``tol * max(1, |lambda_min|)``)."""
    spec = eigendecompose(op)
    return _projector_from(spec, spec.kernel_mask(tol))


def _check_compatible(ops) -> np.ndarray:
    ops = list(ops)
    if not ops:
        raise ValueError("need at least one operator")
    mass = ops[0].mass
    for op in ops[1:]:
        if op.dim != ops[0].dim:
            raise ValueError("operators have different dimensions")
        if not np.allclose(op.mass, mass, rtol=1e-12, atol=0.0):
            raise ValueError("operators use different mass vectors")
    return mass


def intersection_projector(ops, tol: float = DEFAULT_TOL) -> Projector:
    """Projector onto ``K = intersection of ker A_j``.

    Uses ``B = sum_j A_j``: each ``-A_j`` is positive semi-definite in the
    m-inner product, so ``ker B`` is exactly the common kernel.  Each summand
    is normalised by its own spectral scale so a stiff operator does not
    swamp the kernel threshold of a soft one.
    """
    ops = list(ops)
    mass = _check_compatible(ops)
    total = np.zeros_like(ops[0].matrix)
    for op in ops:
        sym = _sym(op)
        scale = max(np.abs(sym).max(initial=0.0), 0.0)
        if scale > 0:
            total += op.matrix / scale
    return kernel_projector(OperatorModel(total, mass), tol)


def weighted_operator_norm(matrix, mass) -> float:
    """Operator norm of ``matrix`` on l^2_m: largest singular value of ``M^{1/2} B M^{-1/2}``."""
    b = np.asarray(matrix, dtype=float)
    s = np.sqrt(np.asarray(mass, dtype=float))
    if b.shape != (s.size, s.size):
        raise ValueError("matrix and mass dimensions disagree")
    if s.size == 0:
        return 0.0
    return float(np.linalg.norm((s[:, None] * b) / s[None, :], 2))


def spectral_gap(op: OperatorModel, tol: float = DEFAULT_TOL) -> float:
    """Largest eigenvalue outside the kernel band (negative)."""
    spec = eigendecompose(op)
    off = spec.eigenvalues[~spec.kernel_mask(tol)]
    if off.size == 0:
        raise ValueError("every eigenvalue lies in the kernel band; the gap is undefined")
    return float(off[0])


def projector_product_contraction(projectors, p_k: Projector) -> float:
    """``|| P_last ... P_first (I - P_K) ||_m``."""
    projectors = list(projectors)
    mass = p_k.mass
    n = p_k.matrix.shape[0]
    prod = p_k.complement
    for p in projectors:
        if p.matrix.shape != (n, n) or not np.allclose(p.mass, mass, rtol=1e-12, atol=0.0):
            raise ValueError("projector dimensions or masses are incompatible")
        prod = p.matrix @ prod
    return weighted_operator_norm(prod, mass)


@dataclass
class MonotonicityReport:
    times: np.ndarray
    norms: np.ndarray
    fixed: bool
    strictly_decreasing: bool
    constant: bool
    margin: float

    @property
    def ok(self) -> bool:
        return self.constant if self.fixed else self.strictly_decreasing


def monotonicity_check(op: OperatorModel, x, grid, tol: float = DEFAULT_TOL) -> MonotonicityReport:
    """Trace ``t -> ||exp(tA) x||_m`` along ``grid``.

    For a vector outside the kernel the sequence must be strictly decreasing;
    for a kernel vector it must be constant.  ``margin`` is the smallest
    consecutive drop (negative if the sequence ever rises).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and non-negative")
    x = np.asarray(x, dtype=float)
    spec = eigendecompose(op)
    mass = op.mass
    # coefficients in the m-orthonormal eigenbasis: c = V^T M x
    coef = spec.eigenvectors.T @ (mass * x)
    norms = np.sqrt(np.array([np.sum((np.exp(t * spec.eigenvalues) * coef) ** 2) for t in grid]))
    p = _projector_from(spec, spec.kernel_mask(tol)).matrix
    xnorm = np.sqrt(np.sum(mass * x * x))
    resid = p @ x - x
    fixed = bool(np.sqrt(np.sum(mass * resid * resid)) <= tol * max(1.0, xnorm))
    drops = -np.diff(norms)
    margin = float(drops.min()) if drops.size else 0.0
    constant = bool(np.all(np.abs(norms - norms[0]) <= 1e-12 * max(1.0, norms[0])))
    return MonotonicityReport(
        times=grid,
        norms=norms,
        fixed=fixed,
        strictly_decreasing=bool(drops.size == 0 or margin > 0),
        constant=constant,
        margin=margin,
    )
