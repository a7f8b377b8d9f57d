"""The nonlinear RG map on grid densities, flow iteration and classification.

One step sends p to the normalized density

    R(p)(s) = e^{beta s^2 / 2^(2-a)} / Z *
              integral e^{-beta t^2} p(s/2^((2-a)/2) - t) p(s/2^((2-a)/2) + t) dt

computed by trapezoid quadrature in t over the grid with cubic interpolation
of p at off-node points.  The unnormalized output is assembled in log space
(u^2 + log of the t-integral), so the e^{u^2} prefactor can never overflow;
a tail monitor raises NormalizerDivergence when the outer integrand fails to
decay toward the grid boundary, which is the grid analogue of variance >= 1
in the Gaussian family.

The t-integral per output node is independent of the others and the kernel
is assembled with plain vectorized reductions in a fixed order, so results
are bit-reproducible regardless of BLAS threading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .density import GridDensity, GridSpec, ModelParams, gaussian_density
from .errors import NormalizerDivergence, ResolutionLoss

__all__ = [
    "Classification",
    "FlowStep",
    "FlowTrace",
    "rg_step",
    "rg_step_general_beta",
    "gaussian_variance_map",
    "flow",
    "rescale_to_clt",
    "scale_density",
]

# relative height of the unnormalized map at the grid boundary above which
# the normalizer is declared divergent
TAIL_MONITOR_REL = 1e-10
# kernel weights below this relative size carry no double-precision
# information and are dropped from the t-window
KERNEL_CUT = 1e-22


def _raw_step_log(values: np.ndarray, grid: GridSpec, a: float, beta: float):
    """Log of the unnormalized RG image on the s >= 0 half grid."""
    N, L, h = grid.N, grid.L, grid.h
    c = 2.0 ** ((2.0 - a) / 2.0)
    u = np.linspace(0.0, L, N // 2 + 1) / c

    # symmetric t-window: outside it the Gaussian kernel is below the
    # double-precision floor relative to its peak (beta=0 keeps everything)
    if beta > 0:
        t_cut = math.sqrt(-math.log(KERNEL_CUT) / beta)
        k0 = max(0, N // 2 - int(math.ceil(t_cut / h)))
    else:
        k0 = 0
    k1 = N - k0
    t = np.linspace(-L + k0 * h, -L + k1 * h, k1 - k0 + 1)
    ker = np.exp(-beta * t * t) * h
    ker[0] *= 0.5
    ker[-1] *= 0.5

    # all evaluation points u_i + t_k share the fractional offset of u_i, so
    # each row is a 4-tap filter over a contiguous slice of the padded values
    g = np.floor(u / h).astype(np.int64)
    th = u / h - g
    pad = np.zeros(2 * N + 4)
    pad[1:N + 2] = values
    W = k1 - k0 + 1
    V = sliding_window_view(pad, W + 3)[g + k0]
    t0, t1, tm, tmm = th + 1.0, th, th - 1.0, th - 2.0
    w0 = (-t1 * tm * tmm / 6.0)[:, None]
    w1 = (t0 * tm * tmm / 2.0)[:, None]
    w2 = (-t0 * t1 * tmm / 2.0)[:, None]
    w3 = (t0 * t1 * tm / 6.0)[:, None]
    E = w0 * V[:, 0:W] + w1 * V[:, 1:W + 1] + w2 * V[:, 2:W + 2] + w3 * V[:, 3:W + 3]

    # E[i, ::-1] is p evaluated at u_i - t_k (the t-window is symmetric)
    integral = np.einsum("ik,ik->i", E * ker[None, :], E[:, ::-1])
    log_out = np.full(u.shape, -np.inf)
    pos = integral > 0
    log_out[pos] = beta * u[pos] ** 2 + np.log(integral[pos])
    return log_out


def _finalize_step(log_half: np.ndarray, grid: GridSpec) -> GridDensity:
    top = log_half.max()
    if not np.isfinite(top):
        raise NormalizerDivergence("RG image vanished on the whole grid")
    edge = log_half[-1]
    if edge > top + math.log(TAIL_MONITOR_REL):
        raise NormalizerDivergence(
            "unnormalized RG integrand does not decay at the grid boundary "
            f"(relative edge height {math.exp(edge - top):.2e})"
        )
    half = np.exp(log_half - top)
    full = np.concatenate([half[:0:-1], half])
    return GridDensity.from_values(grid, full)


def rg_step(p: GridDensity, params: ModelParams) -> GridDensity:
    """One RG step at beta = 1 (the scaled map)."""
    return rg_step_general_beta(p, 1.0, params)


def rg_step_general_beta(p: GridDensity, beta: float, params: ModelParams) -> GridDensity:
    """One RG step with explicit kernel inverse temperature beta >= 0."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    log_half = _raw_step_log(p.values, p.grid, params.a, beta)
    return _finalize_step(log_half, p.grid)


def gaussian_variance_map(v: float, params: ModelParams) -> float:
    """Closed-form image of the variance under the map on the Gaussian line.

    Substituting a centered Gaussian of variance v into the map gives a
    Gaussian of variance 2^(1-a) v / (1 - v); the map leaves sigma fixed.
    """
    if not 0.0 < v < 1.0:
        raise ValueError(f"Gaussian variance must lie in (0, 1), got {v}")
    return 2.0 ** (1.0 - params.a) * v / (1.0 - v)


# ---------------------------------------------------------------------------
# flow iteration and classification
# ---------------------------------------------------------------------------

class Classification(Enum):
    CONVERGED_TO_FIXED_POINT = "ConvergedToFixedPoint"
    COLLAPSED_HIGH_T = "CollapsedHighT"
    ESCAPED_LOW_T = "EscapedLowT"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class FlowStep:
    m: int
    variance: float
    kurtosis: float
    l1_to_fp: float
    peak_location: float


@dataclass(frozen=True)
class FlowTrace:
    params: ModelParams
    iterates: list
    final_density: GridDensity
    classification: Classification

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("m,variance,kurtosis,l1_to_fp,classification\n")
            label = self.classification.value
            for st in self.iterates:
                f.write(f"{st.m},{st.variance!r},{st.kurtosis!r},{st.l1_to_fp!r},{label}\n")


CONVERGENCE_L1 = 1e-6
COLLAPSE_STREAK = 3
EDGE_MASS_LIMIT = 0.02


def _edge_mass(p: GridDensity) -> float:
    w = p.grid.trapezoid_weights()
    lo = float(np.sum(w[:3] * p.values[:3]))
    hi = float(np.sum(w[-3:] * p.values[-3:]))
    return lo + hi


def _peak_location(p: GridDensity) -> float:
    half = p.values[p.N // 2:]
    i = int(np.argmax(half))
    if 0 < i < len(half) - 1:
        y0, y1, y2 = half[i - 1], half[i], half[i + 1]
        den = y0 - 2.0 * y1 + y2
        if den != 0:
            return (i + 0.5 * (y0 - y2) / den) * p.h
    return i * p.h


def _summarize(m: int, p: GridDensity, target: GridDensity) -> FlowStep:
    return FlowStep(
        m=m,
        variance=p.variance(),
        kurtosis=p.fourth_cumulant(),
        l1_to_fp=p.l1_distance(target),
        peak_location=_peak_location(p),
    )


def flow(p0: GridDensity, params: ModelParams, m_max: int,
         target: GridDensity | None = None,
         stop_on_convergence: bool = True) -> FlowTrace:
    """Iterate the RG map from p0 until a phase is identified or m_max hits.

    Classification thresholds: collapse when the variance stays below
    sigma/4 for three consecutive steps (the high-temperature contraction),
    escape when the variance exceeds 4*sigma, the normalizer diverges, or
    more than 2% of the mass sits within two grid cells of the boundary;
    convergence when the L1 distance to the target fixed point drops below
    1e-6.  Anything else at m_max is reported Undecided rather than forced.

    Critical-search probes pass stop_on_convergence=False: a trajectory
    started close to the separatrix dips arbitrarily near the fixed point
    before the unstable mode carries it away, so the dip must not terminate
    the flow; convergence is then judged at m_max.
    """
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    if target is None:
        target = gaussian_density(params.sigma, p0.grid)
    sigma = params.sigma

    p = p0
    steps = [_summarize(0, p, target)]
    if stop_on_convergence and steps[0].l1_to_fp < CONVERGENCE_L1:
        return FlowTrace(params, steps, p, Classification.CONVERGED_TO_FIXED_POINT)

    below = 0
    label = Classification.UNDECIDED
    for m in range(1, m_max + 1):
        try:
            p = rg_step(p, params)
        except NormalizerDivergence:
            label = Classification.ESCAPED_LOW_T
            break
        st = _summarize(m, p, target)
        steps.append(st)
        if st.l1_to_fp < CONVERGENCE_L1 and stop_on_convergence:
            label = Classification.CONVERGED_TO_FIXED_POINT
            break
        below = below + 1 if st.variance < sigma / 4.0 else 0
        if below >= COLLAPSE_STREAK:
            label = Classification.COLLAPSED_HIGH_T
            break
        if st.variance > 4.0 * sigma or _edge_mass(p) > EDGE_MASS_LIMIT:
            label = Classification.ESCAPED_LOW_T
            break
    else:
        if steps[-1].l1_to_fp < CONVERGENCE_L1:
            label = Classification.CONVERGED_TO_FIXED_POINT
    return FlowTrace(params, steps, p, label)


# ---------------------------------------------------------------------------
# rescaling
# ---------------------------------------------------------------------------

def scale_density(p: GridDensity, factor: float,
                  mass_tol: float = 1e-6) -> GridDensity:
    """Pushforward of p under s -> factor * s, regridded on the same grid."""
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    s = p.nodes()
    vals = p.evaluate(s / factor) / factor
    mass = np.trapezoid(np.maximum(vals, 0.0), dx=p.h)
    if mass < 1.0 - mass_tol:
        raise ResolutionLoss(
            f"pushforward by factor {factor} keeps only {mass:.6f} of the mass on the grid"
        )
    return GridDensity.from_values(p.grid, vals)


def rescale_to_clt(p: GridDensity, n: int, params: ModelParams) -> GridDensity:
    """Convert the n-th RG iterate (block normalization 2^(n a/2)) to the
    density of the CLT-normalized sum (normalization 2^(n/2))."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return p
    factor = 2.0 ** (n * (params.a - 1.0) / 2.0)
    return scale_density(p, factor)
