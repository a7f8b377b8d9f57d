"""Discretized linearizations of the RG map at a fixed point and their spectra.

The linearized kernel at a fixed point p* acts on even functions h by

    (L h)(s) = 2 e^{s^2/2^(2-a)} / Z* * integral e^{-t^2} p*(u - t) h(u + t) dt,

u = s / 2^((2-a)/2), with Z* the normalizer of the nonlinear map at p*.  The
matrix is assembled on the s >= 0 half grid with exactly the same trapezoid
quadrature and cubic interpolation as the nonlinear step, then diagonalized
densely.  Eigenvalues come out as 2^(1-(2-a)j) at the Gaussian fixed point
with eigenfunctions G_{2j} * p*, which the test suite verifies.

Dense LAPACK work is wrapped in a single-thread threadpool limit when
threadpoolctl is available so spectra are byte-identical across BLAS
thread counts.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig

from .density import GridDensity, ModelParams
from .errors import EigenSolveError, NotAFixedPoint
from .rgflow import KERNEL_CUT, rg_step

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

__all__ = [
    "LinearizedOperator",
    "Spectrum",
    "build_linearization",
    "eigen_spectrum",
    "exponents_from_spectrum",
]

FIXED_POINT_RESIDUAL = 1e-6


def _single_thread():
    if threadpool_limits is None:  # pragma: no cover
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


@dataclass(frozen=True)
class LinearizedOperator:
    """Dense matrix of the linearized kernel on the s >= 0 half grid.

    The matrix is restricted to the first n_core half-grid nodes, where the
    base density is above ~1e-40 of its peak: outside that region the rows
    carry e^{u^2}-amplified noise and no spectral content (eigenfunctions
    decay with the base).  `apply` embeds and pads accordingly.
    """

    matrix: np.ndarray
    base_point: GridDensity
    params: ModelParams
    normalizer: float
    n_core: int

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def half_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.base_point.L, self.base_point.N // 2 + 1)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Action on an even grid function given by its full-grid samples."""
        half = np.asarray(values)[self.base_point.N // 2:]
        out_half = np.zeros(self.base_point.N // 2 + 1)
        out_half[:self.n_core] = self.matrix @ half[:self.n_core]
        return np.concatenate([out_half[:0:-1], out_half])


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray   # (k, N+1) full-grid samples, unit L2 norm
    residuals: np.ndarray

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.eigenfunctions.setflags(write=False)
        self.residuals.setflags(write=False)


def kernel_matrix(base: GridDensity, params: ModelParams):
    """Half-grid matrix of h -> integral e^{-t^2} base(u - t) h(u + t) dt.

    Acts on even grid functions via their s >= 0 samples; assembled with the
    same trapezoid quadrature and cubic interpolation as the nonlinear step.
    Returns (matrix, u) with u the scaled output nodes s/2^((2-a)/2).
    """
    N, L, h = base.N, base.L, base.h
    c = params.block_scale
    u = np.linspace(0.0, L, N // 2 + 1) / c
    nrow = len(u)

    t_cut = math.sqrt(-math.log(KERNEL_CUT))
    k0 = max(0, N // 2 - int(math.ceil(t_cut / h)))
    k1 = N - k0
    t = np.linspace(-L + k0 * h, -L + k1 * h, k1 - k0 + 1)
    ker = np.exp(-t * t) * h
    ker[0] *= 0.5
    ker[-1] *= 0.5

    # prefactor rows: kernel weight times the frozen leg
    pref = ker[None, :] * base.evaluate(u[:, None] - t[None, :])

    # cubic scatter of the moving leg h(u + t) onto grid nodes
    x = u[:, None] + t[None, :]
    inside = np.abs(x) <= L
    xi = (x + L) / h
    ileft = np.clip(np.floor(xi).astype(np.int64) - 1, 0, N - 3)
    th = xi - (ileft + 1)
    t0, t1, tm, tmm = th + 1.0, th, th - 1.0, th - 2.0
    wst = np.stack(
        [-t1 * tm * tmm / 6.0, t0 * tm * tmm / 2.0,
         -t0 * t1 * tmm / 2.0, t0 * t1 * tm / 6.0],
        axis=-1,
    )
    contrib = pref[..., None] * wst
    contrib[~inside] = 0.0

    rows = np.repeat(np.arange(nrow), contrib.shape[1] * 4)
    cols = (ileft[..., None] + np.arange(4)).ravel()
    full = np.bincount(
        rows * (N + 1) + cols, weights=contrib.ravel(), minlength=nrow * (N + 1)
    ).reshape(nrow, N + 1)

    # fold columns onto the half grid (even functions)
    half = np.empty((nrow, nrow))
    half[:, 0] = full[:, N // 2]
    half[:, 1:] = full[:, N // 2 + 1:] + full[:, N // 2 - 1::-1]
    return half, u


def even_weights(grid) -> np.ndarray:
    """Quadrature weights turning s >= 0 samples of an even function into
    its full-line trapezoid integral."""
    w = np.full(grid.N // 2 + 1, 2.0 * grid.h)
    w[0] = grid.h
    w[-1] = grid.h
    return w


CORE_CUT = 1e-40


def build_linearization(base: GridDensity, params: ModelParams) -> LinearizedOperator:
    """Assemble the dense half-grid matrix of the linearization at `base`.

    `base` must actually be a fixed point: its one-step L1 residual is
    checked against 1e-6 first.
    """
    resid = rg_step(base, params).l1_distance(base)
    if resid > FIXED_POINT_RESIDUAL:
        raise NotAFixedPoint(
            f"base density has RG residual {resid:.3e} > {FIXED_POINT_RESIDUAL}"
        )
    kmat, u = kernel_matrix(base, params)
    w_even = even_weights(base.grid)
    half_vals = base.values[base.N // 2:]
    above = np.nonzero(half_vals > CORE_CUT * half_vals.max())[0]
    n_core = int(above[-1]) + 1
    # normalizer of the nonlinear map at the fixed point (same quadrature)
    unnorm = np.exp(u[:n_core] ** 2) * (kmat[:n_core] @ half_vals)
    z_star = float(w_even[:n_core] @ unnorm)
    core = (2.0 * np.exp(u[:n_core] ** 2) / z_star)[:, None] * kmat[:n_core, :n_core]
    return LinearizedOperator(core, base, params, z_star, n_core)


def eigen_spectrum(op: LinearizedOperator, k: int) -> Spectrum:
    """Top-k eigenpairs of the dense operator matrix, by |eigenvalue|."""
    if not 1 <= k <= 10:
        raise ValueError("k must lie in 1..10")
    with _single_thread():
        lam, vec = eig(op.matrix)
    order = np.argsort(-np.abs(lam))[:k]
    lam = lam[order]
    vec = vec[:, order]
    if np.max(np.abs(lam.imag)) > 1e-8 * max(np.max(np.abs(lam.real)), 1.0):
        raise EigenSolveError(f"complex leading eigenvalues: {lam}")
    lam = lam.real
    vec = vec.real

    base = op.base_point
    N, h = base.N, base.h
    w_full = base.grid.trapezoid_weights()
    funcs = np.empty((k, N + 1))
    residuals = np.empty(k)
    for j in range(k):
        v = vec[:, j]
        residuals[j] = float(
            np.linalg.norm(op.matrix @ v - lam[j] * v) / np.linalg.norm(v)
        )
        e = np.concatenate([v[:0:-1], v])
        e = e / math.sqrt(float(np.sum(w_full * e * e)))
        anchor = e[N // 2] if abs(e[N // 2]) > 1e-8 * np.max(np.abs(e)) else e[np.argmax(np.abs(e))]
        if anchor < 0:
            e = -e
        funcs[j] = e
    bad = residuals > FIXED_POINT_RESIDUAL
    if np.any(bad):
        raise EigenSolveError(
            f"eigenpair residuals too large: {residuals[bad]}"
        )
    return Spectrum(lam, funcs, residuals)


def exponents_from_spectrum(lambda1: float, params: ModelParams):
    """Critical exponents (gamma, beta) from the unstable eigenvalue.

    gamma = (a-1)/log2(lambda1), beta = (2-a)/(2 log2(lambda1)); base-2 logs
    are forced by consistency with the classical values (gamma = 1 when
    lambda1 = 2^(a-1), and gamma = 1, beta = 1/2 at a = 3/2, lambda1 = sqrt 2).
    """
    if lambda1 <= 1.0:
        raise ValueError(f"need an unstable eigenvalue lambda1 > 1, got {lambda1}")
    log_l = math.log2(lambda1)
    gamma = (params.a - 1.0) / log_l
    beta = (2.0 - params.a) / (2.0 * log_l)
    return gamma, beta
