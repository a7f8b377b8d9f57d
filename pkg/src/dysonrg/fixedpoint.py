"""Fixed points of the RG map: the Gaussian one exactly, the non-Gaussian
one near a = 3/2 by damped Newton.

The non-Gaussian fixed point is hyperbolic (two unstable directions at the
Gaussian point for a > 3/2), so direct iteration diverges; Newton converts
it into an attracting root.  The solve runs in two stages:

1. damped Newton on the coefficients of the density in the even-Hermite
   basis {G_{2j} p0}, seeded by the quartic-tilt ansatz; this contracts fast
   but bottoms out at the truncation floor of the M-dimensional span
   (measured ~1e-5 at eps = 0.05 with M = 12);
2. a Newton-Kantorovich polish on grid values using the assembled kernel
   matrix, restricted to the nodes where the density is above ~1e-28 -- the
   far tail must stay on the smooth coefficient solution, because the map
   amplifies tail perturbations by e^{u^2} and solver noise there would
   destroy the residual.

The seed constant c multiplies the quartic tilt e^{-c*eps*G4}; it is located
by scanning the G4-component of the one-step residual for its first sign
change away from the trivial Gaussian root and bisecting inside it.  For
larger eps the one-parameter ansatz family misses the fixed point and no
sign change exists; that is reported, and callers fall back to continuation
from smaller eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import (
    GridDensity,
    GridSpec,
    HermiteBasis,
    ModelParams,
    gaussian_density,
    hermite_G,
)
from .errors import SeedBracketError
from .rgflow import rg_step
from .spectral import even_weights, kernel_matrix

__all__ = [
    "FixedPointResult",
    "gaussian_fixed_point",
    "epsilon_seed",
    "solve_fixed_point",
    "find_non_gaussian_fixed_point",
]

RESIDUAL_TARGET = 1e-8
SEED_RESIDUAL_LIMIT = 0.1


@dataclass(frozen=True)
class FixedPointResult:
    density: GridDensity
    residual_l1: float
    newton_trace: list          # (stage, step, residual, damping)
    seed_constant: float
    converged: bool
    diagnostics: list


def gaussian_fixed_point(params: ModelParams, grid: GridSpec | None = None) -> GridDensity:
    """The exact Gaussian fixed point: variance sigma = 1 - 2^(1-a)."""
    return gaussian_density(params.sigma, grid or GridSpec())


def _quartic_tilt(params: ModelParams, grid: GridSpec, c: float) -> GridDensity:
    p0 = gaussian_fixed_point(params, grid)
    s = grid.nodes()
    expo = -c * params.epsilon * hermite_G(2, s, params)
    vals = p0.values * np.exp(np.maximum(expo - expo.max(), -745.0))
    return GridDensity.from_values(grid, vals)


def epsilon_seed(params: ModelParams, grid: GridSpec | None = None,
                 c_max: float = 10.0, scan_points: int = 120):
    """Quartic-tilt ansatz seed p0 * e^{-c eps G4} with c found numerically.

    c is the root of the G4-component of the one-step residual R(p_c) - p_c.
    The component vanishes trivially at c = 0 (the Gaussian fixed point), so
    the scan looks for the first sign change on a log grid over (0, c_max]
    and bisects inside it.  No sign change is an error, not a guess.
    """
    grid = grid or GridSpec()
    eps = params.epsilon
    if eps == 0.0:
        return gaussian_fixed_point(params, grid), 0.0
    if not 0.0 < eps <= 0.1:
        raise ValueError(f"seed ansatz is built for 0 < eps <= 0.1, got {eps}")
    basis = HermiteBasis(params, grid, 8)

    def g4_component(c: float) -> float:
        p = _quartic_tilt(params, grid, c)
        r = rg_step(p, params).values - p.values
        return float(basis.project(r)[2])

    cs = np.geomspace(1e-3, c_max, scan_points)
    prev_c, prev_v = cs[0], g4_component(cs[0])
    bracket = None
    for c in cs[1:]:
        v = g4_component(c)
        if prev_v * v < 0:
            bracket = (prev_c, c, prev_v)
            break
        prev_c, prev_v = c, v
    if bracket is None:
        raise SeedBracketError(
            f"G4 residual component has no sign change on (0, {c_max}] at eps={eps}"
        )
    lo, hi, flo = bracket
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = g4_component(mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    c_star = 0.5 * (lo + hi)
    seed = _quartic_tilt(params, grid, c_star)
    res = rg_step(seed, params).l1_distance(seed)
    if res > SEED_RESIDUAL_LIMIT:
        # a crossing exists only at ansatz-invalid amplitude (the tilt is an
        # O(1) distortion there, not a perturbation of the Gaussian point)
        raise SeedBracketError(
            f"only sign change on (0, {c_max}] sits at c={c_star:.3f} with "
            f"one-step residual {res:.2e}; no perturbative root at eps={eps}"
        )
    return seed, c_star


# ---------------------------------------------------------------------------
# Newton solver
# ---------------------------------------------------------------------------

def _coefficient_newton(seed: GridDensity, params: ModelParams, M: int,
                        trace: list, diagnostics: list,
                        max_iter: int = 30):
    """Stage 1: damped Newton on normalized even-Hermite coefficients."""
    grid = seed.grid
    basis = HermiteBasis(params, grid, M)
    scales = basis.scales

    def density_of(c_norm: np.ndarray) -> GridDensity:
        vals = basis.reconstruct(c_norm / scales)
        return GridDensity.from_values(grid, vals)

    def F(c_norm: np.ndarray):
        p = density_of(c_norm)
        image = rg_step(p, params)
        return basis.project(image.values) * scales - c_norm, p, image

    c = basis.project(seed.values) * scales
    fc, p, image = F(c)
    best_p, best_res = p, image.l1_distance(p)
    recent = [best_res]
    for it in range(1, max_iter + 1):
        jac = np.empty((M, M))
        for j in range(M):
            e = np.zeros(M)
            e[j] = 1e-6
            jac[:, j] = (F(c + e)[0] - fc) / 1e-6
        try:
            step = np.linalg.solve(jac, -fc)
        except np.linalg.LinAlgError:
            diagnostics.append("singular coefficient Jacobian")
            break
        norm0 = np.linalg.norm(fc)
        damping = 1.0
        accepted = None
        for _ in range(20):
            cand = c + damping * step
            f_cand, p_cand, image_cand = F(cand)
            if np.linalg.norm(f_cand) < norm0:
                accepted = (cand, f_cand, p_cand, image_cand)
                break
            damping *= 0.5
        if accepted is None:
            diagnostics.append(f"coefficient Newton line search failed at step {it}")
            break
        c, fc, p, image = accepted
        res = image.l1_distance(p)
        trace.append(("coefficient", it, res, damping))
        if res < best_res:
            best_p, best_res = p, res
        recent.append(res)
        if res < RESIDUAL_TARGET:
            break
        if len(recent) > 5 and recent[-1] > 0.99 * recent[-6]:
            diagnostics.append(
                f"coefficient Newton stalled at residual {res:.3e} "
                "(span truncation floor)"
            )
            break
    return best_p, best_res


TAIL_CUT = 1e-28


def _grid_polish(p: GridDensity, params: ModelParams, trace: list,
                 diagnostics: list, max_iter: int = 6):
    """Stage 2: Newton-Kantorovich on grid values, core nodes only."""
    grid = p.grid
    w_even = even_weights(grid)
    res_prev = None
    for it in range(1, max_iter + 1):
        kmat, u = kernel_matrix(p, params)
        ph = p.values[grid.N // 2:]
        unnorm = np.exp(u * u) * (kmat @ ph)
        z = float(w_even @ unnorm)
        image = unnorm / z
        r = image - ph
        res0 = float(w_even @ np.abs(r))
        core = ph > TAIL_CUT * ph.max()
        b2 = (2.0 * np.exp(u * u) / z)[:, None] * kmat
        dr = b2 - np.outer(image, w_even @ b2)
        system = (np.eye(len(ph)) - dr)[np.ix_(core, core)]
        delta = np.zeros_like(ph)
        try:
            delta[core] = np.linalg.solve(system, r[core])
        except np.linalg.LinAlgError:
            diagnostics.append("singular polish system")
            break
        damping = 1.0
        accepted = None
        for _ in range(20):
            cand = GridDensity.from_values(grid, _mirror(ph + damping * delta, grid.N))
            res_new = rg_step(cand, params).l1_distance(cand)
            if res_new < res0:
                accepted = (cand, res_new)
                break
            damping *= 0.5
        if accepted is None:
            break
        p, res = accepted
        trace.append(("polish", it, res, damping))
        if res < 1e-12 or (res_prev is not None and res > 0.5 * res_prev):
            break
        res_prev = res
    return p, rg_step(p, params).l1_distance(p)


def _mirror(half: np.ndarray, N: int) -> np.ndarray:
    half = np.maximum(half, 0.0)
    return np.concatenate([half[:0:-1], half])


TAIL_TRIM = 1e-60


def _trim_tail(p: GridDensity, params: ModelParams) -> GridDensity:
    """Keep only the connected support component around the origin.

    The polynomial-times-Gaussian coefficient basis leaves detached positive
    lobes far out in the tail (outermost wiggles of the Hermite polynomial,
    observed at the 1e-18 level), separated from the core by a band of
    zeros.  They contribute nothing to the L1 residual but the linearized
    kernel multiplies rows by e^{u^2}, which would blow such a lobe up into
    spurious matrix weight, so everything beyond the first outward drop
    below 1e-60 of the peak is zeroed.
    """
    half = p.values[p.N // 2:].copy()
    below = np.nonzero(half < TAIL_TRIM * half.max())[0]
    if below.size:
        half[below[0]:] = 0.0
    return GridDensity.from_values(p.grid, np.concatenate([half[:0:-1], half]))


def solve_fixed_point(seed: GridDensity, params: ModelParams, M: int = 12) -> FixedPointResult:
    """Solve R(p) = p by coefficient-space Newton plus a grid polish.

    The seed must be within one-step L1 residual 0.1 of a fixed point and
    M must lie in [8, 16].  On success the returned density has residual
    below 1e-8; otherwise `converged` is False and `diagnostics` explain.
    """
    if not 8 <= M <= 16:
        raise ValueError("basis size M must lie in [8, 16]")
    seed_res = rg_step(seed, params).l1_distance(seed)
    if seed_res > SEED_RESIDUAL_LIMIT:
        raise ValueError(
            f"seed residual {seed_res:.3e} exceeds {SEED_RESIDUAL_LIMIT}; "
            "refine the seed first"
        )
    trace: list = [("seed", 0, seed_res, 1.0)]
    diagnostics: list = []
    p, res = _coefficient_newton(seed, params, M, trace, diagnostics)
    if res > 1e-12:
        p, res = _grid_polish(p, params, trace, diagnostics)
    p = _trim_tail(p, params)
    res = rg_step(p, params).l1_distance(p)
    converged = res < RESIDUAL_TARGET
    if not converged:
        diagnostics.append(f"final residual {res:.3e} above target {RESIDUAL_TARGET}")
    return FixedPointResult(
        density=p,
        residual_l1=res,
        newton_trace=trace,
        seed_constant=math.nan,
        converged=converged,
        diagnostics=diagnostics,
    )


def find_non_gaussian_fixed_point(params: ModelParams, grid: GridSpec | None = None,
                                  M: int = 12) -> FixedPointResult:
    """Seed-and-solve with continuation fallback.

    Tries the ansatz seed at the requested eps; if its G4-residual scan has
    no sign change (typical beyond eps ~ 0.03), solves at eps/2 first and
    seeds from that solution, recursing as needed.
    """
    grid = grid or GridSpec()
    if not 0.0 < params.epsilon <= 0.1:
        raise ValueError("non-Gaussian fixed point is solved for 0 < eps <= 0.1")
    try:
        seed, c_star = epsilon_seed(params, grid)
        result = solve_fixed_point(seed, params, M)
        return FixedPointResult(
            density=result.density,
            residual_l1=result.residual_l1,
            newton_trace=result.newton_trace,
            seed_constant=c_star,
            converged=result.converged,
            diagnostics=result.diagnostics,
        )
    except SeedBracketError:
        if params.epsilon < 0.005:
            raise
        inner = find_non_gaussian_fixed_point(
            ModelParams(1.5 + params.epsilon / 2.0), grid, M
        )
        result = solve_fixed_point(inner.density, params, M)
        return FixedPointResult(
            density=result.density,
            residual_l1=result.residual_l1,
            newton_trace=inner.newton_trace + result.newton_trace,
            seed_constant=inner.seed_constant,
            converged=result.converged,
            diagnostics=inner.diagnostics + result.diagnostics,
        )
