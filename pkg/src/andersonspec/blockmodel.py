"""Block tridiagonal operators with corners.

A chain of ``n`` units, each carrying ``m`` internal states, is stored as a
*ring*: diagonal blocks ``D_k`` plus, for every bond ``k -> k+1 (mod n)``, a
forward block ``F_k`` (placed at block ``(k, k+1)``) and a backward block
``G_k`` (placed at block ``(k+1, k)``).  The last bond is the seam; the corner
multiplier ``s`` scales ``F_n`` by ``s`` and ``G_n`` by ``1/s``.

For the Hamiltonian ``F_k = B_k`` and ``G_k = B_k^dagger``, so the seam puts
``s B_n`` in the lower-left corner and ``B_n^dagger / s`` in the upper-right.
The balanced realization spreads the corner factor evenly over the bonds,
``F_k -> z F_k`` and ``G_k -> G_k / z`` with ``z**n == s``; it is similar to
the plain one, so both share the characteristic polynomial while the balanced
entries stay of order ``exp(|xi|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack
from scipy.optimize import linear_sum_assignment

from .errors import InvalidModel, NoConvergence, OverflowRisk, SingularShift

PIVOT_FLOOR = 1e-300
HERMITIAN_RTOL = 1e-12
TWO_PI = 2.0 * math.pi

# Above this many rows the ring is folded into a banded matrix for LU.
_BANDED_MIN_DIM = 64
# Batch size cap for dense batched determinants, in bytes.
_BATCH_BYTES = 1 << 25


def _as_blocks(blocks, name: str) -> np.ndarray:
    arr = np.array([np.atleast_2d(np.asarray(b)) for b in blocks], dtype=np.complex128)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise InvalidModel(f"{name} must be a sequence of square blocks of equal size")
    return arr


@dataclass(frozen=True, eq=False)
class Ring:
    """Periodic chain of blocks: the common shape of ``H``, ``M`` and ``K``."""

    diag: np.ndarray
    fwd: np.ndarray
    bwd: np.ndarray

    @property
    def n_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def m(self) -> int:
        return self.diag.shape[1]

    @property
    def dim(self) -> int:
        return self.n_blocks * self.m

    def _assemble(self, fwd_scale: np.ndarray, bwd_scale: np.ndarray) -> np.ndarray:
        nb, m = self.n_blocks, self.m
        out = np.zeros((nb * m, nb * m), dtype=np.complex128)
        for k in range(nb):
            j = (k + 1) % nb
            sk = slice(k * m, (k + 1) * m)
            sj = slice(j * m, (j + 1) * m)
            out[sk, sk] += self.diag[k]
            out[sk, sj] += fwd_scale[k] * self.fwd[k]
            out[sj, sk] += bwd_scale[k] * self.bwd[k]
        return out

    def dense(self, t: complex = 1.0) -> np.ndarray:
        """Plain realization: corner multiplier ``t`` on the seam bond only."""
        fs = np.ones(self.n_blocks, dtype=np.complex128)
        bs = np.ones(self.n_blocks, dtype=np.complex128)
        fs[-1] = t
        bs[-1] = 1.0 / t
        return self._assemble(fs, bs)

    def balanced(self, z: complex) -> np.ndarray:
        nb = self.n_blocks
        return self._assemble(np.full(nb, z, dtype=np.complex128), np.full(nb, 1.0 / z, dtype=np.complex128))

    def split(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense ``(D, F, G)`` with ``balanced(z) == D + z*F + G/z``."""
        nb = self.n_blocks
        zero, one = np.zeros(nb, dtype=np.complex128), np.ones(nb, dtype=np.complex128)
        d = self._assemble(zero, zero)
        f = self._assemble(one, zero) - d
        g = self._assemble(zero, one) - d
        return d, f, g

    def transfer_factor(self, k: int, eps: complex) -> np.ndarray:
        """Factor propagating ``(u_k, u_{k-1})`` to ``(u_{k+1}, u_k)``."""
        m = self.m
        f_inv = np.linalg.inv(self.fwd[k])
        top_left = f_inv @ (eps * np.eye(m) - self.diag[k])
        top_right = -f_inv @ self.bwd[k - 1]
        return np.block([[top_left, top_right], [np.eye(m), np.zeros((m, m))]])


def fold_permutation(n_blocks: int, m: int) -> np.ndarray:
    """Row order 1, n, 2, n-1, ... which turns a ring into a band of width 3m-1."""
    order = []
    lo, hi = 0, n_blocks - 1
    while lo <= hi:
        order.append(lo)
        if hi != lo:
            order.append(hi)
        lo += 1
        hi -= 1
    return np.concatenate([np.arange(b * m, (b + 1) * m) for b in order])


class ShiftKernel:
    """Batched ``log|det(eps I - R_b(z))|`` for one ring and one energy.

    Uses LU with partial pivoting throughout: LAPACK ``getrf`` on dense batches
    for small rings, ``gbtrf`` on the folded band for large ones (the fold is a
    symmetric permutation, so the determinant magnitude is unchanged).
    """

    def __init__(self, ring: Ring, eps: complex):
        d, f, g = ring.split()
        n = ring.dim
        shifted = eps * np.eye(n, dtype=np.complex128) - d
        self.dim = n
        self.banded = n >= _BANDED_MIN_DIM and ring.n_blocks >= 8
        if not self.banded:
            self._base, self._f, self._g = shifted, f, g
            return
        perm = fold_permutation(ring.n_blocks, ring.m)
        mats = [x[np.ix_(perm, perm)] for x in (shifted, f, g)]
        rows, cols = np.nonzero(np.any(np.stack([np.abs(x) for x in mats]) > 0, axis=0))
        kl = ku = int(np.max(np.abs(rows - cols)))
        self.kl, self.ku = kl, ku
        ii, jj = [], []
        for j in range(n):
            i = np.arange(max(0, j - ku), min(n, j + kl + 1))
            ii.append(i)
            jj.append(np.full(i.size, j))
        ii = np.concatenate(ii)
        jj = np.concatenate(jj)
        packed = []
        for x in mats:
            ab = np.zeros((2 * kl + ku + 1, n), dtype=np.complex128)
            ab[kl + ku + ii - jj, jj] = x[ii, jj]
            packed.append(ab)
        self._base, self._f, self._g = packed

    def log_abs_dets(self, zs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(values, singular)``; singular entries hold ``nan``."""
        zs = np.asarray(zs, dtype=np.complex128).ravel()
        out = np.empty(zs.size)
        singular = np.zeros(zs.size, dtype=bool)
        if self.banded:
            diag_row = self.kl + self.ku
            for i, z in enumerate(zs):
                ab = self._base - z * self._f - self._g / z
                lu, _, info = lapack.zgbtrf(ab, self.kl, self.ku)
                piv = np.abs(lu[diag_row])
                if info != 0 or piv.min() < PIVOT_FLOOR:
                    singular[i] = True
                    out[i] = np.nan
                else:
                    out[i] = np.sum(np.log(piv))
            return out, singular
        chunk = max(1, _BATCH_BYTES // (16 * self.dim * self.dim))
        for start in range(0, zs.size, chunk):
            zc = zs[start:start + chunk, None, None]
            mats = self._base[None] - zc * self._f[None] - self._g[None] / zc
            sign, logabs = np.linalg.slogdet(mats)
            bad = (sign == 0) | ~np.isfinite(logabs)
            out[start:start + chunk] = np.where(bad, np.nan, logabs)
            singular[start:start + chunk] = bad
        return out, singular


@dataclass(frozen=True, eq=False)
class BlockModel:
    """Chain of ``n`` units with Hermitian ``A_k`` and invertible bonds ``B_k``.

    ``B[k]`` couples unit ``k`` to unit ``k+1``; ``B[-1]`` closes the ring.
    """

    A: np.ndarray
    B: np.ndarray
    b_n_unitary: bool = field(init=False)

    def __post_init__(self):
        a = _as_blocks(self.A, "A")
        b = _as_blocks(self.B, "B")
        if a.shape != b.shape:
            raise InvalidModel(f"A blocks {a.shape} and B blocks {b.shape} disagree")
        n, m = a.shape[0], a.shape[1]
        if n < 3:
            raise InvalidModel(f"need n >= 3 units, got {n}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidModel("blocks must be finite")
        for k in range(n):
            scale = max(1.0, float(np.max(np.abs(a[k]))))
            if np.max(np.abs(a[k] - a[k].conj().T)) > HERMITIAN_RTOL * scale:
                raise InvalidModel(f"A[{k}] is not Hermitian")
            _, logdet = np.linalg.slogdet(b[k])
            if not logdet > math.log(PIVOT_FLOOR):
                raise InvalidModel(f"B[{k}] is singular")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        bn = b[-1]
        unitary = bool(np.allclose(bn @ bn.conj().T, np.eye(m), rtol=0.0, atol=1e-12))
        object.__setattr__(self, "b_n_unitary", unitary)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def dim(self) -> int:
        return self.n * self.m

    @cached_property
    def ring(self) -> Ring:
        return Ring(self.A, self.B, np.conj(np.swapaxes(self.B, 1, 2)))

    @cached_property
    def log_abs_det_b(self) -> float:
        """``sum_k log|det B_k|``."""
        return float(sum(np.linalg.slogdet(b)[1] for b in self.B))

    @cached_property
    def det_b_product(self) -> tuple[complex, float]:
        """``det(B_1 ... B_n)`` as ``(phase, log-magnitude)``."""
        phase, logabs = 1.0 + 0j, 0.0
        for b in self.B:
            s, l = np.linalg.slogdet(b)
            phase *= s
            logabs += l
        return phase, logabs


@dataclass(frozen=True)
class BoundaryFactor:
    """Generalized boundary condition ``u_{n+1} = s u_1`` with ``s = exp(n*xi + i*phi)``."""

    xi: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "xi", float(self.xi))
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    def corner(self, n: int) -> complex:
        if n * abs(self.xi) > 700:
            raise OverflowRisk(f"corner multiplier exp({n * self.xi:.1f}) overflows; use the balanced form")
        return complex(np.exp(n * self.xi + 1j * self.phi))

    def bond(self, n: int) -> complex:
        return complex(np.exp(self.xi + 1j * self.phi / n))

    @classmethod
    def from_corner(cls, s: complex, n: int) -> "BoundaryFactor":
        s = complex(s)
        if s == 0:
            raise InvalidModel("corner multiplier must be nonzero")
        return cls(math.log(abs(s)) / n, math.atan2(s.imag, s.real))


@dataclass(frozen=True, eq=False)
class DenseSpectrum:
    eigenvalues: np.ndarray
    source: str = "unknown"

    def __len__(self) -> int:
        return self.eigenvalues.size


def realize_h(model: BlockModel, bf: BoundaryFactor) -> np.ndarray:
    """Dense ``H(s)``: corners ``s B_n`` (lower left) and ``B_n^dagger / s`` (upper right)."""
    return model.ring.dense(bf.corner(model.n))


def realize_h_balanced(model: BlockModel, bf: BoundaryFactor) -> np.ndarray:
    """Dense ``H_b(z)`` with bonds ``z B_k`` and ``B_k^dagger / z``, ``z = exp(xi + i phi/n)``."""
    return model.ring.balanced(bf.bond(model.n))


def lu_log_abs_det(matrix: np.ndarray) -> float:
    """``log|det|`` from LU pivots; raises :class:`SingularShift` below the pivot floor."""
    lu, _ = sla.lu_factor(matrix, check_finite=False)
    piv = np.abs(np.diag(lu))
    if not np.all(np.isfinite(piv)):
        raise SingularShift("non-finite pivot in LU factorization")
    if piv.min() < PIVOT_FLOOR:
        raise SingularShift(f"pivot {piv.min():.3e} below floor; shift is an eigenvalue")
    return float(np.sum(np.log(piv)))


def log_abs_det_shifted(model: BlockModel, bf: BoundaryFactor, eps: complex) -> float:
    """``(1/nm) log|det(eps I - H_b(z))|``, equal to the same quantity for ``H(s)``."""
    hb = realize_h_balanced(model, bf)
    shifted = eps * np.eye(model.dim) - hb
    return lu_log_abs_det(shifted) / model.dim


def _is_hermitian(matrix: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(matrix))))
    return bool(np.max(np.abs(matrix - matrix.conj().T)) <= 1e-14 * scale)


def dense_eigenvalues(matrix: np.ndarray, source: str = "dense") -> DenseSpectrum:
    """All eigenvalues of a dense square matrix (LAPACK balancing + Hessenberg QR)."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix has non-finite entries")
    try:
        if _is_hermitian(matrix):
            vals = sla.eigvalsh(matrix, check_finite=False).astype(np.complex128)
        else:
            vals = sla.eigvals(matrix, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"eigensolver failed on {matrix.shape[0]}x{matrix.shape[1]} matrix: {exc}") from exc
    return DenseSpectrum(np.asarray(vals, dtype=np.complex128), source)


def ring_hermitian_eigenvalues(ring: Ring, z: complex) -> np.ndarray:
    """Sorted real eigenvalues of ``ring.balanced(z)`` for unimodular ``z``.

    Large rings are folded into a band and handed to the banded Hermitian solver.
    """
    mat = ring.balanced(z)
    if ring.dim < _BANDED_MIN_DIM or ring.n_blocks < 8:
        return sla.eigvalsh(mat, check_finite=False)
    perm = fold_permutation(ring.n_blocks, ring.m)
    p = mat[np.ix_(perm, perm)]
    rows, cols = np.nonzero(p)
    kl = int(np.max(rows - cols))
    n = ring.dim
    band = np.zeros((kl + 1, n), dtype=np.complex128)
    for d in range(kl + 1):
        band[d, : n - d] = np.diagonal(p, offset=-d)
    if not np.any(band.imag):
        band = band.real
    return sla.eigvals_banded(band, lower=True, check_finite=False)


def multiset_distance(a, b) -> float:
    """Largest distance between optimally matched elements of two equal-size multisets."""
    a = np.asarray(a, dtype=np.complex128).ravel()
    b = np.asarray(b, dtype=np.complex128).ravel()
    if a.size != b.size:
        raise ValueError("multisets differ in size")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def random_model(rng: np.random.Generator, n: int, m: int, unitary_corner: bool = True,
                 scale: float = 1.0) -> BlockModel:
    """Random Hermitian ``A_k`` and complex ``B_k``; ``B_n`` is made unitary on request."""

    def gauss(*shape):
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)

    x = gauss(n, m, m) * scale
    a = 0.5 * (x + np.conj(np.swapaxes(x, 1, 2)))
    b = gauss(n, m, m) / math.sqrt(2) + np.eye(m)
    if unitary_corner:
        q, r = np.linalg.qr(b[-1])
        b[-1] = q * (np.diag(r) / np.abs(np.diag(r)))
    return BlockModel(a, b)
