"""Anderson model on hypercubic lattices and the 1D Hatano-Nelson toolkit.

The last lattice axis is the chain direction (``n = dims[-1]``); the other
axes form the section of ``m = prod(dims[:-1])`` sites with periodic
boundary conditions.  On-site disorder is drawn from a counter-based
generator: site ``k*m + r`` of section ``k`` always receives the same value for
a given seed, however the lattice is traversed or sliced.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .blockmodel import (
    BlockModel,
    BoundaryFactor,
    DenseSpectrum,
    Ring,
    dense_eigenvalues,
    realize_h_balanced,
    ring_hermitian_eigenvalues,
)
from .errors import (
    ClusterAmbiguous,
    DegenerateXi,
    EmptyHistogram,
    InvalidModel,
    OverflowRisk,
    UnsupportedDimension,
)

_DISTRIBUTIONS = ("uniform", "cauchy")


@dataclass(frozen=True)
class AndersonConfig:
    dims: tuple[int, ...]
    w: float = 0.0
    distribution: str = "uniform"
    delta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not 1 <= len(dims) <= 3:
            raise UnsupportedDimension(f"D = {len(dims)} not in {{1, 2, 3}}")
        if any(d < 1 for d in dims):
            raise InvalidModel(f"lattice lengths must be positive, got {dims}")
        if self.w < 0:
            raise InvalidModel("disorder width must be >= 0")
        if self.distribution not in _DISTRIBUTIONS:
            raise InvalidModel(f"unknown distribution {self.distribution!r}")
        if self.distribution == "cauchy" and not self.delta > 0:
            raise InvalidModel("Cauchy half-width must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidModel("seed must fit in 64 bits")

    @property
    def D(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return self.dims[-1]

    @property
    def m(self) -> int:
        return int(np.prod(self.dims[:-1], dtype=np.int64))

    def with_seed(self, seed: int) -> "AndersonConfig":
        return replace(self, seed=int(seed))


def site_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform ``[0, 1)`` values for sites ``start .. start+count-1`` (Philox, keyed by seed)."""
    bg = np.random.Philox(key=int(seed))
    bg.advance(start // 4)
    skip = start % 4
    raw = bg.random_raw(count + skip)[skip:]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def site_potentials(config: AndersonConfig, start: int, count: int) -> np.ndarray:
    u = site_uniforms(config.seed, start, count)
    if config.distribution == "uniform":
        return config.w * (u - 0.5)
    return config.delta * np.tan(math.pi * (u - 0.5))


def section_potentials(config: AndersonConfig, start: int, count: int) -> np.ndarray:
    """On-site values for sections ``start .. start+count-1``, shape ``(count, m)``."""
    m = config.m
    return site_potentials(config, start * m, count * m).reshape(count, m)


def disorder(config: AndersonConfig) -> np.ndarray:
    return section_potentials(config, 0, config.n)


def _ring_adjacency(length: int) -> np.ndarray:
    shift = np.roll(np.eye(length), 1, axis=1)
    return shift + shift.T


def transverse_hopping(dims: Sequence[int]) -> np.ndarray:
    """Periodic nearest-neighbour adjacency of the section lattice."""
    dims = tuple(int(d) for d in dims)
    m = int(np.prod(dims, dtype=np.int64)) if dims else 1
    hop = np.zeros((m, m))
    for axis, length in enumerate(dims):
        term = np.ones((1, 1))
        for j, d in enumerate(dims):
            term = np.kron(term, _ring_adjacency(d) if j == axis else np.eye(d))
        hop += term
    return hop


def build_anderson(config: AndersonConfig) -> BlockModel:
    if config.n < 3:
        raise InvalidModel(f"chain length n = {config.n} < 3")
    hop = transverse_hopping(config.dims[:-1])
    pots = disorder(config)
    a = hop[None, :, :] + np.einsum("ki,ij->kij", pots, np.eye(config.m))
    b = np.broadcast_to(np.eye(config.m), a.shape)
    return BlockModel(a, b)


def transverse_energies(dims: Sequence[int]) -> np.ndarray:
    """Clean section eigenvalues ``2 sum_i cos(2 pi k_i / n_i)``."""
    dims = tuple(dims)
    if not dims:
        return np.zeros(1)
    grids = [2 * np.cos(2 * np.pi * np.arange(1, d + 1) / d) for d in dims]
    return np.array([sum(c) for c in itertools.product(*grids)])


def zero_disorder_spectrum(config: AndersonConfig, bf: BoundaryFactor) -> np.ndarray:
    """Closed-form eigenvalues of the clean ``H(s)``: ``m`` ellipses of ``n`` points each."""
    if config.w != 0:
        raise InvalidModel("closed form holds only at zero disorder")
    n = config.n
    angle = bf.phi / n + 2 * np.pi * np.arange(1, n + 1) / n
    ring = 2 * np.cosh(bf.xi) * np.cos(angle) + 2j * np.sinh(bf.xi) * np.sin(angle)
    centres = transverse_energies(config.dims[:-1])
    return (centres[:, None] + ring[None, :]).ravel()


def ellipse_bound_check(config: AndersonConfig, bf: BoundaryFactor, spectrum) -> float:
    """Worst-case ellipse form minus one over all eigenvalues; ``<= 0`` means contained."""
    if config.distribution != "uniform":
        raise InvalidModel("containment bound needs bounded (uniform) disorder")
    vals = spectrum.eigenvalues if isinstance(spectrum, DenseSpectrum) else np.asarray(spectrum)
    lo = -2 * config.D + 2 - config.w / 2
    hi = 2 * config.D - 2 + config.w / 2
    x, y = vals.real, vals.imag
    off = x - np.clip(x, lo, hi)
    if bf.xi == 0:
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.max(np.abs(y)) > 1e-9 * scale:
            raise DegenerateXi("complex eigenvalues at xi = 0")
        return float(np.max((off / 2) ** 2) - 1.0)
    form = off**2 / (4 * np.cosh(bf.xi) ** 2) + y**2 / (4 * np.sinh(bf.xi) ** 2)
    return float(np.max(form) - 1.0)


# --------------------------------------------------------------------------
# 1D Hatano-Nelson


def _realization(realization) -> np.ndarray:
    if isinstance(realization, HatanoPolynomial):
        return realization.v
    if isinstance(realization, AndersonConfig):
        if realization.D != 1:
            raise UnsupportedDimension("Hatano-Nelson tools need a 1D chain")
        return disorder(realization)[:, 0]
    return np.asarray(realization, dtype=float).ravel()


def _continuant(eps: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Open-chain ``det(eps - H)`` as ``(mantissa, log-scale)``, rescaled each step."""
    cur = np.ones_like(eps)
    scale = np.zeros(eps.shape)
    if v.size == 0:
        return cur, scale
    prev = cur
    cur = eps - v[0]
    for vj in v[1:]:
        nxt = (eps - vj) * cur - prev
        norm = np.maximum(np.abs(nxt), np.abs(cur))
        norm = np.where(norm > 0, norm, 1.0)
        prev, cur = cur / norm, nxt / norm
        scale = scale + np.log(norm)
    return cur, scale


@dataclass(frozen=True, eq=False)
class HatanoPolynomial:
    """``p_n(eps) = det(eps - H(i))`` of a 1D disorder realization, on demand."""

    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).ravel())

    @property
    def n(self) -> int:
        return self.v.size

    def scaled(self, eps) -> tuple[np.ndarray, np.ndarray]:
        """``p_n`` as ``(mantissa, log-scale)``: ``K(1..n) - K(2..n-1)``."""
        eps = np.asarray(eps, dtype=np.complex128)
        full, s_full = _continuant(eps, self.v)
        inner, s_inner = _continuant(eps, self.v[1:-1])
        top = np.maximum(s_full, s_inner)
        mant = full * np.exp(s_full - top) - inner * np.exp(s_inner - top)
        return mant, top

    def log_abs(self, eps) -> np.ndarray:
        mant, scale = self.scaled(eps)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(mant)) + scale

    def __call__(self, eps):
        mant, scale = self.scaled(eps)
        if np.any(scale > 700):
            raise OverflowRisk("p_n overflows; use log_abs")
        return mant * np.exp(scale)


def hatano_p(eps, realization):
    return HatanoPolynomial(_realization(realization))(eps)


def hatano_exponent(eps, realization):
    """``(1/n) log|p_n(eps)|``, the single exponent of the 1D chain."""
    poly = HatanoPolynomial(_realization(realization))
    if poly.n < 50:
        warnings.warn(f"n = {poly.n} < 50: finite-size corrections are sizeable", stacklevel=2)
    out = poly.log_abs(eps) / poly.n
    return float(out) if np.ndim(out) == 0 else out


def hatano_model(realization) -> BlockModel:
    v = _realization(realization)
    return BlockModel(v[:, None, None], np.ones((v.size, 1, 1)))


@dataclass(frozen=True, eq=False)
class WingsAndLoops:
    xi: float
    wings: np.ndarray
    loop: np.ndarray
    wing_defect: float
    wing_bound_ok: bool
    wings_resolved: int
    loop_level_defect: float
    loop_level_checked: bool
    loop_level_ok: bool
    loop_resolved: int


def _p_over_level(poly: HatanoPolynomial, eps: np.ndarray, log_level: float) -> np.ndarray:
    mant, scale = poly.scaled(eps.astype(np.complex128))
    return mant * np.exp(np.minimum(scale - log_level, 700.0))


def _p_uncertainty(poly: HatanoPolynomial, eps: np.ndarray, delta: np.ndarray, log_level: float) -> np.ndarray:
    """Spread of ``p_n / level`` over the error disc of each eigenvalue, plus rounding in ``p_n``."""
    centre = _p_over_level(poly, eps, log_level)
    _, scale = poly.scaled(eps.astype(np.complex128))
    unc = poly.n * np.finfo(float).eps * np.exp(np.minimum(scale - log_level, 700.0))
    for step in (1, -1, 1j, -1j):
        unc = np.maximum(unc, np.abs(_p_over_level(poly, eps + step * delta, log_level) - centre))
    return unc


def hatano_wings_and_loops(realization, xi: float, phi: float = 0.0) -> WingsAndLoops:
    """Split the spectrum of ``H(exp(n xi + i phi))`` into real wings and the complex loop.

    ``p_n`` is steep and cancels at the eigenvalues, so each identity is checked
    only at eigenvalues whose error disc (rounding times condition number) moves
    ``p_n`` by much less than the level; the ``*_resolved`` fields count them.
    """
    v = _realization(realization)
    n = v.size
    poly = HatanoPolynomial(v)
    hb = realize_h_balanced(hatano_model(v), BoundaryFactor(xi, phi))
    vals, left, right = sla.eig(hb, left=True, right=True)
    overlap = np.abs(np.sum(left.conj() * right, axis=0))
    with np.errstate(divide="ignore"):
        kappa = 1.0 / overlap
    delta = np.finfo(float).eps * np.linalg.norm(hb, 2) * np.minimum(kappa, 1e300)
    radius = float(np.max(np.abs(vals)))
    real_mask = np.abs(vals.imag) < 1e-8 * radius
    order = np.argsort(vals[real_mask].real)
    wings = vals[real_mask].real[order]
    wing_delta = delta[real_mask][order]
    loop, loop_delta = vals[~real_mask], delta[~real_mask]
    nxi = n * xi
    level = math.log(2 * math.cosh(nxi)) if nxi < 700 else nxi + math.log1p(math.exp(-2 * nxi))

    wing_defect, wing_ok, wings_resolved = 0.0, True, 0
    if wings.size:
        w = wings.astype(np.complex128)
        keep = _p_uncertainty(poly, w, wing_delta, level) < 1e-7
        wings_resolved = int(np.sum(keep))
        if wings_resolved:
            ratio = np.abs(_p_over_level(poly, w[keep], level))
            wing_defect = float(np.max(np.abs(ratio - 1.0)))
            wing_ok = bool(np.all(ratio <= 1 + 1e-6))

    loop_defect, loop_resolved = 0.0, 0
    if loop.size:
        # 5e-3 tolerance on (1/n) log|p_n| is a relative band of about exp(5e-3 n) on p_n
        keep = _p_uncertainty(poly, loop, loop_delta, nxi) < 1e-3
        loop_resolved = int(np.sum(keep))
        if loop_resolved:
            loop_defect = float(np.max(np.abs(poly.log_abs(loop[keep]) / n - xi)))
    checked = nxi > 10 and loop_resolved > 0
    return WingsAndLoops(float(xi), wings, loop, wing_defect, wing_ok, wings_resolved, loop_defect, checked,
                         (loop_defect <= 5e-3) if checked else True, loop_resolved)


def first_complex_xi(model: BlockModel, phi: float = 0.0, xi_hi: float = 2.0, n_grid: int = 40,
                     xtol: float = 1e-4, rel_threshold: float = 1e-8) -> float:
    """Smallest ``xi`` at which ``H(exp(n xi + i phi))`` has a non-real eigenvalue.

    Coarse scan on ``(0, xi_hi]`` followed by bisection; ``nan`` if the spectrum
    stays real over the whole scan.
    """

    def has_complex(xi: float) -> bool:
        vals = dense_eigenvalues(realize_h_balanced(model, BoundaryFactor(xi, phi)), "balanced").eigenvalues
        return bool(np.max(np.abs(vals.imag)) > rel_threshold * np.max(np.abs(vals)))

    grid = np.linspace(0.0, xi_hi, n_grid + 1)[1:]
    lo = 0.0
    for xi in grid:
        if has_complex(xi):
            hi = float(xi)
            break
        lo = float(xi)
    else:
        return float("nan")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if has_complex(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# Level density and the Thouless formula


@dataclass(frozen=True, eq=False)
class DOSHistogram:
    edges: np.ndarray
    density: np.ndarray
    realizations: int
    config: AndersonConfig | None = field(default=None, repr=False)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centres(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def integral(self) -> float:
        return float(np.sum(self.density * self.widths))

    @classmethod
    def from_cdf(cls, cdf, edges) -> "DOSHistogram":
        """Histogram of an analytic density given its cumulative distribution."""
        edges = np.asarray(edges, dtype=float)
        mass = np.diff(cdf(edges))
        return cls(edges, mass / (mass.sum() * np.diff(edges)), 0)


def default_dos_range(config: AndersonConfig) -> tuple[float, float]:
    half = 2 * config.D + config.w / 2 + 0.5
    return -half, half


def dos_histogram(config: AndersonConfig, realizations: int, bins: int = 200,
                  energy_range: tuple[float, float] | None = None) -> DOSHistogram:
    """Level density of ``H(1)`` pooled over seeds ``config.seed + r``, ``r < realizations``."""
    if realizations < 1:
        raise EmptyHistogram("need at least one realization")
    lo, hi = energy_range or default_dos_range(config)
    edges = np.linspace(lo, hi, bins + 1)
    counts = np.zeros(bins)
    for r in range(realizations):
        model = build_anderson(config.with_seed(config.seed + r))
        vals = ring_hermitian_eigenvalues(model.ring, 1.0)
        counts += np.histogram(vals, bins=edges)[0]
    total = counts.sum()
    if total == 0:
        raise EmptyHistogram("no eigenvalues fell inside the histogram range")
    return DOSHistogram(edges, counts / (total * np.diff(edges)), realizations, config)


def _log_cell_integral(a: float, b: float) -> float:
    """``int_a^b log|x| dx``."""

    def prim(x):
        return x * math.log(abs(x)) - x if x != 0 else 0.0

    return prim(b) - prim(a)


def thouless_exponent(dos: DOSHistogram, eps: float) -> float:
    """``int rho(e) log|eps - e| de`` by the midpoint rule; the bin holding ``eps`` is integrated exactly."""
    widths = dos.widths
    mass = dos.density * widths
    if mass.size == 0 or not mass.sum() > 0:
        raise EmptyHistogram("histogram carries no mass")
    centres = dos.centres
    with np.errstate(divide="ignore"):
        vals = np.log(np.abs(eps - centres))
    singular = np.abs(eps - centres) < widths / 2
    for i in np.flatnonzero(singular):
        vals[i] = _log_cell_integral(dos.edges[i] - eps, dos.edges[i + 1] - eps) / widths[i]
    return float(np.sum(mass * vals))


# --------------------------------------------------------------------------
# Loop structure of 2D spectra


@dataclass(frozen=True, eq=False)
class PointCloud:
    re: np.ndarray
    im: np.ndarray
    xi: np.ndarray
    phi: np.ndarray
    seed: np.ndarray
    sweep: np.ndarray
    loop_count: int | None = None

    def __len__(self) -> int:
        return self.re.size

    @classmethod
    def concat(cls, parts: Sequence["PointCloud"], loop_count: int | None = None) -> "PointCloud":
        cols = {k: np.concatenate([getattr(p, k) for p in parts]) for k in ("re", "im", "xi", "phi", "seed", "sweep")}
        return cls(**cols, loop_count=loop_count)


def _cloud(vals: np.ndarray, xi: float, phi: float, seed: int, sweep: str) -> PointCloud:
    k = vals.size
    return PointCloud(vals.real.copy(), vals.imag.copy(), np.full(k, xi), np.full(k, phi),
                      np.full(k, seed, dtype=np.int64), np.full(k, sweep, dtype=object))


def count_loops(spectra: Sequence[np.ndarray], link_factor: float = 3.0) -> tuple[int, int]:
    """Number of loops traced by eigenvalues over one full turn of the corner phase.

    ``spectra`` are the eigenvalue sets at consecutive phases, closed by a copy of
    the first.  Eigenvalues are followed from step to step by optimal matching,
    so loops that cross in the plane stay distinct; the loops are the cycles of
    the resulting permutation.  Fixed points (eigenvalues that return to
    themselves, such as real wings) are not loops.  Returns
    ``(loops, suspicious_links)``, the latter counting matched steps longer than
    ``link_factor`` times the median step.
    """
    size = spectra[0].size
    perm = np.arange(size)
    steps = []
    for a, b in zip(spectra[:-1], spectra[1:]):
        cost = np.abs(a[:, None] - b[None, :])
        r, c = linear_sum_assignment(cost)
        steps.append(cost[r, c])
        perm = c[perm]
    lengths = np.concatenate(steps)
    suspicious = int(np.sum(lengths > link_factor * np.median(lengths)))
    graph = coo_matrix((np.ones(size), (np.arange(size), perm)), shape=(size, size))
    _, labels = connected_components(graph, directed=False)
    cycle_sizes = np.bincount(labels)
    return int(np.sum(cycle_sizes > 1)), suspicious


def loop_point_cloud(config: AndersonConfig, bf: BoundaryFactor, phi_steps: int = 0,
                     xi_values: Sequence[float] = (), seeds: Sequence[int] = (),
                     link_factor: float = 3.0) -> PointCloud:
    """Eigenvalue clouds for phase, ``xi`` and disorder sweeps around ``bf``.

    The phase sweep covers the corner phase over one full turn (per-bond phase
    over ``2 pi / n``) and is used to count loops.
    """
    model = build_anderson(config)

    def spectrum(mdl, xi, phi):
        return dense_eigenvalues(realize_h_balanced(mdl, BoundaryFactor(xi, phi)), "balanced").eigenvalues

    parts = [_cloud(spectrum(model, bf.xi, bf.phi), bf.xi, bf.phi, config.seed, "static")]
    loops = None
    if phi_steps > 0:
        phis = bf.phi + 2 * np.pi * np.arange(phi_steps) / phi_steps
        sweep = [spectrum(model, bf.xi, p) for p in phis]
        parts += [_cloud(s, bf.xi, p, config.seed, "phi") for s, p in zip(sweep, phis)]
        loops, suspicious = count_loops(sweep + [sweep[0]], link_factor)
        if loops != config.m or suspicious:
            warnings.warn(f"found {loops} loops for block size m = {config.m} "
                          f"({suspicious} long links)", ClusterAmbiguous, stacklevel=2)
    for xi in xi_values:
        parts.append(_cloud(spectrum(model, xi, bf.phi), xi, bf.phi, config.seed, "xi"))
    for s in seeds:
        other = build_anderson(config.with_seed(s))
        parts.append(_cloud(spectrum(other, bf.xi, bf.phi), bf.xi, bf.phi, s, "seed"))
    return PointCloud.concat(parts, loops)
