"""One-parameter families, nested-bracket critical search, and observables.

A family p_t = C * base * exp(b2(t) G_2 + b4 G_4) crosses the stable manifold
of its base fixed point at some t_c; bisection on the flow classification
produces nested brackets around it.  On the disordered side the variance of
the CLT-rescaled iterates stabilizes to the susceptibility tau(t); on the
ordered side the iterates split into two symmetric blobs racing outward at
the exact per-step factor 2^((2-a)/2), so the mean-spin peak M_n = peak *
2^(-n(2-a)/2) forms a geometric sequence whose limit is the spontaneous
magnetization -- the curve accelerates it with Aitken extrapolation and
cross-checks against the second-moment estimator.

The ordered-side split first appears at a distance that grows like
|b4|^(-1/2)/(t - t_c), so magnetization sweeps want a wide grid (the step
cost is independent of the half-width L because the kernel window is fixed)
and a family with a stronger quartic tilt than the search default; points
whose split does not fit on the grid are flagged and dropped from fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import GridDensity, GridSpec, ModelParams, gaussian_density, hermite_G
from .errors import (
    NonNormalizableFamily,
    NormalizerDivergence,
    SameClassificationAtEndpoints,
    UndecidedProbe,
)
from .rgflow import Classification, flow, rg_step

__all__ = [
    "DensityFamily",
    "CriticalSearchResult",
    "default_gaussian_family",
    "ordered_probe_family",
    "non_gaussian_family",
    "family_density",
    "critical_search",
    "susceptibility_curve",
    "magnetization_curve",
    "drift_onset",
    "fit_exponent",
]

REL_WIDTH_FLOOR = 1e-13


@dataclass(frozen=True)
class DensityFamily:
    """Exponential family through a fixed-point density.

    b2(t) = b2_slope * t + b2_offset must be increasing and change sign on
    t_range; b4 <= 0 is constant.
    """

    params: ModelParams
    base: GridDensity
    t_range: tuple
    b2_slope: float = 1.0
    b2_offset: float = 0.0
    b4: float = -0.01

    def __post_init__(self):
        t1, t2 = self.t_range
        if not t1 < t2:
            raise ValueError("t_range must be an increasing pair")
        if self.b2_slope <= 0:
            raise ValueError("b2 must be strictly increasing in t")
        if self.b4 > 0:
            raise ValueError("b4 must be nonpositive")
        if not self.b2(t1) < 0.0 < self.b2(t2):
            raise ValueError("b2 must change sign across t_range")

    def b2(self, t: float) -> float:
        return self.b2_slope * t + self.b2_offset

    @property
    def grid(self) -> GridSpec:
        return self.base.grid


def default_gaussian_family(params: ModelParams,
                            grid: GridSpec | None = None) -> DensityFamily:
    """Search family through the Gaussian fixed point (b2 = t, b4 = -0.01)."""
    grid = grid or GridSpec()
    return DensityFamily(params, gaussian_density(params.sigma, grid),
                         t_range=(-0.05, 0.05), b4=-0.01)


def ordered_probe_family(params: ModelParams,
                         grid: GridSpec | None = None) -> DensityFamily:
    """Family tuned for ordered-side sweeps: the stronger quartic pulls the
    two-blob split inward so more of it fits on the grid.  G_4 carries a
    negative s^2 part, so the sign change of b2 sits at a shifted t-window."""
    grid = grid or GridSpec()
    return DensityFamily(params, gaussian_density(params.sigma, grid),
                         t_range=(-0.13, 0.01), b4=-0.03)


def non_gaussian_family(params: ModelParams, base: GridDensity,
                        width_scale: float = 1.0) -> DensityFamily:
    """Family through the non-Gaussian fixed point: b4 = -eps^2 and the
    t-window has width eps^(3/2)."""
    eps = params.epsilon
    if eps <= 0:
        raise ValueError("non-Gaussian family requires a > 3/2")
    half = 0.5 * width_scale * eps**1.5
    return DensityFamily(params, base, t_range=(-half, half), b4=-eps * eps)


def family_density(fam: DensityFamily, t: float) -> GridDensity:
    t1, t2 = fam.t_range
    if not t1 <= t <= t2:
        raise ValueError(f"t={t} outside family range [{t1}, {t2}]")
    s = fam.grid.nodes()
    expo = (fam.b2(t) * hermite_G(1, s, fam.params)
            + fam.b4 * hermite_G(2, s, fam.params))
    with np.errstate(divide="ignore"):
        logp = np.where(fam.base.values > 0.0, np.log(fam.base.values), -np.inf) + expo
    top = logp.max()
    if not np.isfinite(top):
        raise NonNormalizableFamily(f"family member at t={t} has no mass on the grid")
    vals = np.exp(np.maximum(logp - top, -745.0))
    p = GridDensity.from_values(fam.grid, vals)
    if fam.b4 == 0.0 and max(p.values[0], p.values[-1]) > 1e-8:
        raise NonNormalizableFamily(
            f"family member at t={t} is not contained on the grid (b4 = 0)"
        )
    return p


# ---------------------------------------------------------------------------
# critical search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalSearchResult:
    brackets: list
    t_c: float
    fixed_point_used: GridDensity
    m_used: int
    terminal_l1: float
    collapsed_side: str    # 'low' if t < t_c collapses, else 'high'

    def disordered_t(self, offset: float) -> float:
        """Parameter at distance offset > 0 from t_c on the disordered side."""
        return self.t_c - offset if self.collapsed_side == "low" else self.t_c + offset

    def ordered_t(self, offset: float) -> float:
        return self.t_c + offset if self.collapsed_side == "low" else self.t_c - offset


def _classify(fam: DensityFamily, t: float, m_max: int) -> Classification:
    tr = flow(family_density(fam, t), fam.params, m_max, target=fam.base,
              stop_on_convergence=False)
    return tr.classification


def critical_search(fam: DensityFamily, m_max: int, tol_t: float) -> CriticalSearchResult:
    """Nested bisection on the flow classification.

    Brackets halve until their width drops below tol_t (never below the
    double-precision floor of 1e-13 relative to the range); the midpoint of
    the final bracket is reported as t_c together with the closest L1
    approach of the flow at t_c to the base fixed point.
    """
    t1, t2 = fam.t_range
    if tol_t < REL_WIDTH_FLOOR * (t2 - t1):
        tol_t = REL_WIDTH_FLOOR * (t2 - t1)
    c1 = _classify(fam, t1, m_max)
    c2 = _classify(fam, t2, m_max)
    valid = {Classification.COLLAPSED_HIGH_T, Classification.ESCAPED_LOW_T}
    if c1 not in valid:
        raise UndecidedProbe(t1, m_max)
    if c2 not in valid:
        raise UndecidedProbe(t2, m_max)
    if c1 == c2:
        raise SameClassificationAtEndpoints(
            f"both endpoints classify as {c1.value}; no separatrix in range"
        )
    lo, hi = t1, t2
    brackets = [(lo, hi)]
    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        c = _classify(fam, mid, m_max)
        if c not in valid:
            raise UndecidedProbe(mid, m_max)
        if c == c1:
            lo = mid
        else:
            hi = mid
        brackets.append((lo, hi))
    t_c = 0.5 * (lo + hi)
    trace = flow(family_density(fam, t_c), fam.params, m_max, target=fam.base,
                 stop_on_convergence=False)
    terminal = min(st.l1_to_fp for st in trace.iterates)
    side = "low" if c1 == Classification.COLLAPSED_HIGH_T else "high"
    return CriticalSearchResult(
        brackets=brackets,
        t_c=t_c,
        fixed_point_used=fam.base,
        m_used=m_max,
        terminal_l1=terminal,
        collapsed_side=side,
    )


def drift_onset(fam: DensityFamily, t: float, m_max: int,
                band: float = 0.1) -> int | None:
    """Step count at which the flow from p_t, having entered the L1-band
    around the base fixed point, leaves it again (the unstable drift)."""
    trace = flow(family_density(fam, t), fam.params, m_max, target=fam.base,
                 stop_on_convergence=False)
    entered = False
    for st in trace.iterates:
        if not entered and st.l1_to_fp < band:
            entered = True
        elif entered and st.l1_to_fp > band:
            return st.m
    return None


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SusceptibilityPoint:
    t: float
    tau: float
    n_used: int
    stabilized: bool


@dataclass(frozen=True)
class MagnetizationPoint:
    t: float
    M: float            # peak-location estimator, Aitken-extrapolated
    tau: float          # CLT variance around the peak (best effort)
    M_second_moment: float
    n_exit: int
    racing_steps: int
    resolved: bool


def susceptibility_curve(fam: DensityFamily, t_c: float, t_values,
                         n: int, rel_tol: float = 0.01):
    """Variance tau(t) of the CLT-normalized sum on the disordered side.

    Iterates each p_t until tau_n = var_n * 2^(n(a-1)) changes by less than
    rel_tol over two steps (or the density hits the resolution floor); points
    that fail to stabilize, or that escape (wrong side of t_c), are flagged.
    """
    a = fam.params.a
    out = []
    for t in t_values:
        p = family_density(fam, t)
        tau_hist = []
        stabilized = False
        n_used = 0
        for k in range(1, n + 1):
            try:
                p = rg_step(p, fam.params)
            except NormalizerDivergence:
                n_used = k
                break
            v = p.variance()
            tau_hist.append(v * 2.0 ** (k * (a - 1.0)))
            n_used = k
            if k >= 3 and abs(tau_hist[-1] / tau_hist[-3] - 1.0) < rel_tol:
                stabilized = True
                break
            if math.sqrt(v) < 6.0 * p.h:
                break
        tau = tau_hist[-1] if tau_hist else float("nan")
        out.append(SusceptibilityPoint(t, tau, n_used, stabilized))
    return out


def _positive_peak(values: np.ndarray, N: int, h: float):
    half = values[N // 2:]
    i = int(np.argmax(half))
    if 0 < i < len(half) - 1:
        y0, y1, y2 = half[i - 1], half[i], half[i + 1]
        den = y0 - 2.0 * y1 + y2
        if den != 0.0:
            return i, (i + 0.5 * (y0 - y2) / den) * h
    return i, i * h


def _aitken_limit(seq: np.ndarray) -> float:
    """Limit of a near-geometric sequence from its last three terms."""
    if len(seq) < 3:
        return float(seq[-1])
    d = np.diff(seq)
    if d[-2] == 0.0:
        return float(seq[-1])
    rho = d[-1] / d[-2]
    if 0.0 < rho < 0.95:
        return float(seq[-1] + d[-1] * rho / (1.0 - rho))
    return float(seq[-1])


CLEAN_SPLIT_RATIO = 1e4
MIN_RACING_STEPS = 5


def magnetization_curve(fam: DensityFamily, t_c: float, t_values, n: int):
    """Spontaneous magnetization M(t) on the ordered side.

    M is read from the positive-peak location of the mean-spin density
    (parabolic sub-grid refinement) once the two-blob split is clean
    (peak/center density ratio above 1e4); the racing sequence
    M_k = peak_k * 2^(-k(2-a)/2) is Aitken-accelerated to its limit and
    cross-checked against the second-moment estimator sqrt(m2) * 2^(-k(2-a)/2).
    Points whose split never resolves on the grid are flagged unresolved.
    """
    a = fam.params.a
    grid = fam.grid
    sf_step = 2.0 ** (-(2.0 - a) / 2.0)
    out = []
    for t in t_values:
        p = family_density(fam, t)
        sf = 1.0
        peaks, m2s, taus = [], [], []
        n_exit = 0
        for k in range(1, n + 1):
            try:
                p = rg_step(p, fam.params)
            except NormalizerDivergence:
                break
            n_exit = k
            sf *= sf_step
            i, speak = _positive_peak(p.values, grid.N, grid.h)
            half = p.values[grid.N // 2:]
            center = max(half[0], 1e-290)
            clean = (10 <= i < len(half) - 6) and half[i] > CLEAN_SPLIT_RATIO * center
            if clean:
                peaks.append(speak * sf)
                m2s.append(math.sqrt(p.variance()) * sf)
                s_half = np.arange(len(half)) * grid.h
                sel = s_half > 0.5 * speak
                w = half[sel]
                mass = w.sum()
                if mass > 0:
                    mu = float(np.sum(w * s_half[sel]) / mass)
                    vblob = float(np.sum(w * (s_half[sel] - mu) ** 2) / mass)
                    taus.append(vblob * 2.0 ** (k * (a - 1.0)))
            if speak > grid.L - 3.0:
                break
        resolved = len(peaks) >= MIN_RACING_STEPS
        if resolved:
            M = _aitken_limit(np.asarray(peaks))
            M2 = _aitken_limit(np.asarray(m2s))
            tau = taus[-1] if taus else float("nan")
        else:
            M = peaks[-1] if peaks else float("nan")
            M2 = m2s[-1] if m2s else float("nan")
            tau = float("nan")
        out.append(MagnetizationPoint(t, M, tau, M2, n_exit, len(peaks), resolved))
    return out


def fit_exponent(points):
    """OLS slope of log2(y) against log2(x) with its standard error."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 4:
        raise ValueError("need at least 4 points to fit an exponent")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("fit_exponent requires positive x and y")
    x = np.log2([p[0] for p in pts])
    y = np.log2([p[1] for p in pts])
    if np.ptp(x) <= 0:
        raise ValueError("degenerate x-range")
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(pts) - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    return float(coef[1]), stderr
