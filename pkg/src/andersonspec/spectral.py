"""Exponent spectra from angular averages of log-determinants.

The counting function ``G(xi)`` is the trapezoid average over the phase of the
boundary factor.  Away from the exponents the integrand is analytic and
periodic, so the rule converges geometrically; ``G`` is piecewise linear with
slope jumps of ``1/m`` at each positive exponent.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .blockmodel import BlockModel, Ring, ShiftKernel, ring_hermitian_eigenvalues
from .duality import k_ring
from .errors import InvalidModel, NoPlateau, QuadratureStall, RealAxisSingularity, UnresolvedCluster

MAX_ANGLES = 4096
DEFAULT_ANGLES = 64
DEFAULT_TOL = 1e-7
_SINGULAR_NUDGE = 1e-7


def _adaptive_mean(sample, n_angles: int, tol: float, adaptive: bool):
    """Average ``sample(phis)`` on uniform grids, doubling until the half-grid subset agrees.

    Returns ``(mean, n_used, converged, last_difference)``.
    """
    if n_angles < 8:
        raise InvalidModel("need at least 8 angles")
    n = n_angles
    vals = sample(2 * np.pi * np.arange(n) / n)
    while True:
        mean = float(np.sum(vals) / n)
        diff = abs(mean - float(np.sum(vals[::2]) / (n // 2))) if n % 2 == 0 else math.inf
        if not adaptive or diff < tol:
            return mean, n, diff < tol, diff
        if 2 * n > MAX_ANGLES:
            return mean, n, False, diff
        fresh = sample(2 * np.pi * (2 * np.arange(n) + 1) / (2 * n))
        merged = np.empty(2 * n)
        merged[0::2], merged[1::2] = vals, fresh
        vals, n = merged, 2 * n


@dataclass(frozen=True, eq=False)
class JensenProblem:
    """Angular average of ``log|det(eps - R_b(e^{xi + i phi / nb}))| / dim`` minus a fixed offset."""

    ring: Ring
    eps: complex
    offset: float
    basis: str
    m: int
    kernel: ShiftKernel = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kernel", ShiftKernel(self.ring, self.eps))

    @classmethod
    def from_h(cls, model: BlockModel, eps: complex) -> "JensenProblem":
        return cls(model.ring, complex(eps), model.log_abs_det_b / model.dim, "H", model.m)

    @classmethod
    def from_k(cls, model: BlockModel, eps: complex) -> "JensenProblem":
        inner = float(sum(np.linalg.slogdet(b)[1] for b in model.B[:-1]))
        return cls(k_ring(model), complex(eps), inner / model.dim, "K", model.m)

    def samples(self, xi: float, phis: np.ndarray) -> np.ndarray:
        nb = self.ring.n_blocks
        zs = np.exp(xi + 1j * phis / nb)
        vals, bad = self.kernel.log_abs_dets(zs)
        if np.any(bad):
            retry, still = self.kernel.log_abs_dets(zs[bad] * np.exp(1j * _SINGULAR_NUDGE / nb))
            if np.any(still):
                raise QuadratureStall("shift stays singular after nudging the phase", xi, math.nan, phis.size)
            vals[bad] = retry
        return vals / self.ring.dim

    def evaluate(self, xi: float, n_angles: int = DEFAULT_ANGLES, tol: float = DEFAULT_TOL,
                 adaptive: bool = True) -> tuple[float, int, bool]:
        mean, used, ok, _ = _adaptive_mean(lambda p: self.samples(xi, p), n_angles, tol, adaptive)
        return mean - self.offset, used, ok


def jensen_average(model: BlockModel, eps: complex, xi: float, n_angles: int = DEFAULT_ANGLES,
                   tol: float = DEFAULT_TOL, adaptive: bool = True) -> float:
    """``G(xi) = (1/m) sum_a max(xi_a, xi) - xi`` by trapezoid quadrature over the phase."""
    value, used, ok = JensenProblem.from_h(model, eps).evaluate(xi, n_angles, tol, adaptive)
    if not ok and adaptive:
        raise QuadratureStall(f"no convergence with {used} angles at xi = {xi}; an exponent is close",
                              xi, value, used)
    return value


def sum_positive_exponents(model: BlockModel, eps: complex, n_angles: int = DEFAULT_ANGLES,
                           tol: float = DEFAULT_TOL, adaptive: bool = True) -> float:
    """``(1/m) sum_{xi_a > 0} xi_a`` from the real spectra of ``H(e^{i phi})``."""
    eps = complex(eps)
    ring = model.ring
    scale = max(1.0, abs(eps))

    def sample_at(phis):
        out = np.empty(phis.size)
        for i, phi in enumerate(phis):
            lam = ring_hermitian_eigenvalues(ring, np.exp(1j * phi / model.n))
            gap = np.abs(eps - lam)
            if gap.min() < 1e-13 * scale:
                raise RealAxisSingularity(f"eps = {eps} is an eigenvalue at phase {phi:.6g}")
            out[i] = np.sum(np.log(gap)) / model.dim
        return out

    def sample(phis):
        try:
            return sample_at(phis)
        except RealAxisSingularity:
            return sample_at(phis + np.pi / phis.size)

    mean, used, ok, _ = _adaptive_mean(sample, n_angles, tol, adaptive)
    value = mean - model.log_abs_det_b / model.dim
    if not ok and adaptive:
        raise QuadratureStall(f"no convergence with {used} angles at xi = 0", 0.0, value, used)
    return value


@dataclass(frozen=True, eq=False)
class CountingCurve:
    xi_grid: np.ndarray
    g_values: np.ndarray
    n_angles: np.ndarray
    energy: complex
    basis: str
    stalled: np.ndarray
    m: int
    tol: float = DEFAULT_TOL
    problem: JensenProblem | None = field(default=None, repr=False)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.g_values) / np.diff(self.xi_grid)

    def monotonicity_defect(self) -> float:
        """Largest decrease between adjacent samples (zero for a non-decreasing curve)."""
        return float(max(0.0, -np.min(np.diff(self.g_values))))


def default_xi_max(model: BlockModel, eps: complex = 0.0) -> float:
    a = max(np.linalg.norm(x, 2) for x in model.A)
    b = max(np.linalg.norm(x, 2) for x in model.B)
    return 1.0 + math.log(1.0 + abs(eps) + a + 2 * b)


def _point(problem: JensenProblem, xi: float, n_angles: int, tol: float):
    return problem.evaluate(xi, n_angles, tol)


def _sweep(problem: JensenProblem, grid: np.ndarray, n_angles: int, tol: float, workers: int) -> CountingCurve:
    if workers > 1 and grid.size > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point, [problem] * grid.size, grid,
                                    [n_angles] * grid.size, [tol] * grid.size))
    else:
        results = [_point(problem, x, n_angles, tol) for x in grid]
    g = np.array([r[0] for r in results])
    used = np.array([r[1] for r in results])
    ok = np.array([r[2] for r in results])
    return CountingCurve(grid, g, used, problem.eps, problem.basis, ~ok, problem.m, tol, problem)


def _grid(xi_max: float, grid_step: float, xi_min: float = 0.0) -> np.ndarray:
    if not grid_step > 0:
        raise InvalidModel("grid_step must be positive")
    count = int(math.floor((xi_max - xi_min) / grid_step + 1e-9))
    return xi_min + grid_step * np.arange(count + 1)


def counting_curve(model: BlockModel, eps: complex, xi_max: float | None = None, grid_step: float = 0.01,
                   n_angles: int = DEFAULT_ANGLES, tol: float = DEFAULT_TOL, workers: int = 1) -> CountingCurve:
    """``G`` on the grid ``0, grid_step, ..., xi_max``; stalled points keep their best estimate."""
    if xi_max is None:
        xi_max = default_xi_max(model, eps)
    problem = JensenProblem.from_h(model, eps)
    return _sweep(problem, _grid(xi_max, grid_step), n_angles, tol, workers)


def lyapunov_curve(model: BlockModel, eps: complex, xi_grid=None, n_angles: int = DEFAULT_ANGLES,
                   tol: float = DEFAULT_TOL, workers: int = 1, grid_step: float = 0.01) -> CountingCurve:
    """Counting curve of ``T^dagger T`` built on ``K(e^{2n xi + i phi})``; breakpoints are the Lyapunov exponents."""
    problem = JensenProblem.from_k(model, eps)
    if xi_grid is None:
        xi_grid = _grid(default_xi_max(model, eps), grid_step)
    return _sweep(problem, np.asarray(xi_grid, dtype=float), n_angles, tol, workers)


@dataclass(frozen=True, eq=False)
class BreakpointReport:
    breakpoints: list[tuple[float, float]]
    xi_min: float
    mean_positive: float
    diagnostics: dict

    def exponents(self, m: int) -> np.ndarray:
        """Breakpoints repeated by multiplicity ``round(m * jump)``."""
        out = []
        for xi, jump in self.breakpoints:
            out.extend([xi] * max(1, int(round(m * jump))))
        return np.array(out)


def _clusters(d: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Runs of second-difference entries above ``threshold``, widened by one cell each way."""
    hot = np.flatnonzero(np.abs(d) > threshold)
    runs: list[list[int]] = []
    for i in hot:
        if runs and i - runs[-1][1] <= 2:
            runs[-1][1] = i
        else:
            runs.append([i, i])
    return [(max(lo - 1, 0), min(hi + 1, d.size - 1)) for lo, hi in runs]


def _find_kinks(xs: np.ndarray, g: np.ndarray, m: int, tol: float):
    """``(centroid, mass, lo_x, hi_x)`` per cluster of slope change on a uniform grid."""
    step = xs[1] - xs[0]
    s = np.diff(g) / step
    d = np.diff(s)  # d[i] sits at xs[i + 1]
    threshold = max(0.05 / m, 20 * tol / step)
    found = []
    for lo, hi in _clusters(d, threshold):
        mass = float(np.sum(d[lo:hi + 1]))
        pts = xs[lo + 1:hi + 2]
        weights = d[lo:hi + 1]
        centroid = float(np.sum(pts * weights) / mass) if mass != 0 else float(pts.mean())
        found.append((centroid, mass, float(pts[0]), float(pts[-1])))
    return found, s


def _slope_midpoint_bisect(problem: JensenProblem, x0: float, lo: float, hi: float, h: float,
                           target: float, n_angles: int, tol: float, xtol: float) -> float:
    """Bisection for the point where the central slope of half-width ``h`` crosses ``target``."""

    def central(x):
        return (problem.evaluate(x + h, n_angles, tol)[0] - problem.evaluate(x - h, n_angles, tol)[0]) / (2 * h)

    if central(lo) > target or central(hi) < target:
        return x0
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if central(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def extract_breakpoints(curve: CountingCurve, m: int | None = None, refine: str = "all",
                        xtol: float = 1e-7, resample: int = 16) -> BreakpointReport:
    """Locate the slope jumps of a counting curve.

    Each cluster of slope change is placed at the centroid of its second
    differences (exact for a piecewise-linear curve), resampled on a grid
    ``resample`` times finer if it carries more than one unit ``1/m``, and then
    refined by bisection on a central-difference slope.
    """
    m = m or curve.m
    if refine not in ("all", "first", "none"):
        raise ValueError(f"refine must be 'all', 'first' or 'none', got {refine!r}")
    xs, g = curve.xi_grid, curve.g_values
    if xs.size < 4:
        raise InvalidModel("counting curve needs at least four samples")
    step = float(xs[1] - xs[0])
    kinks, slopes = _find_kinks(xs, g, m, curve.tol)
    if m * slopes[0] > 0.5:
        raise NoPlateau(f"slope {slopes[0]:.3g} at xi = {xs[0]:.3g}; smallest exponent is below the grid")
    problem = curve.problem
    n0 = int(np.min(curve.n_angles))
    fine_step = step / resample
    resolved = []
    unresolved = 0
    for i, (centroid, mass, lo, hi) in enumerate(kinks):
        units = m * mass
        wanted = refine == "all" or (refine == "first" and i == 0)
        if round(units) >= 2 and problem is not None and wanted:
            fx = _grid(hi + step, fine_step, lo - step) if lo - step >= 0 else _grid(hi + step, fine_step, lo)
            fg = np.array([problem.evaluate(x, n0, curve.tol)[0] for x in fx])
            sub, _ = _find_kinks(fx, fg, m, curve.tol)
            parts = [(c, ms) for c, ms, *_ in sub]
            total = sum(ms for _, ms in parts)
            if not parts or abs(m * total - round(units)) > 0.2:
                raise UnresolvedCluster(f"cluster near xi = {centroid:.4g} does not resolve on a finer grid")
            resolved.extend(parts)
        else:
            unresolved += int(round(units) >= 2)
            resolved.append((centroid, mass))
    for c, ms in resolved:
        if abs(m * ms - round(m * ms)) > 0.2 or round(m * ms) < 1:
            raise UnresolvedCluster(f"slope jump {ms:.3g} at xi = {c:.4g} is not a multiple of 1/m")
    resolved.sort()
    refined = []
    for i, (c, ms) in enumerate(resolved):
        if problem is not None and (refine == "all" or (refine == "first" and i == 0)):
            gaps = [abs(c - o) for j, (o, _) in enumerate(resolved) if j != i]
            gap = min(gaps) if gaps else math.inf
            h = min(step / 2, 0.45 * gap)
            if c - h - step > 0:
                before = sum(x for _, x in resolved[:i])
                target = before + ms / 2
                c = _slope_midpoint_bisect(problem, c, c - h / 2, c + h / 2, h, target, n0, curve.tol, xtol)
        refined.append((float(c), float(round(m * ms) / m)))
    close = [b for a, b in zip(refined[:-1], refined[1:]) if b[0] - a[0] < 3 * step]
    g0 = float(g[0]) if xs[0] == 0 else math.nan
    diagnostics = {
        "grid_step": step,
        "n_angles_min": n0,
        "n_angles_max": int(np.max(curve.n_angles)),
        "stalled_points": int(np.sum(curve.stalled)),
        "jump_sum": float(sum(j for _, j in refined)),
        "jump_sum_residual": abs(1.0 - float(sum(j for _, j in refined))),
        "final_slope": float(slopes[-1]),
        "complete": bool(abs(slopes[-1] - 1.0) < 0.5 / m),
        "close_pairs": len(close),
        "unresampled_clusters": unresolved,
        "monotonicity_defect": curve.monotonicity_defect(),
    }
    xi_min = refined[0][0] if refined else math.nan
    return BreakpointReport(refined, xi_min, g0, diagnostics)
