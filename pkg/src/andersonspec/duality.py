"""Determinant dualities between ring Hamiltonians and transfer matrices.

All determinants of ring-shaped matrices are taken on the balanced form, which
is similar to the plain one, so corner multipliers as large as ``e^{n xi}``
never appear as explicit entries.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import blockmodel
from .blockmodel import BlockModel, BoundaryFactor, Ring, multiset_distance
from .errors import InvalidModel, NotUnitaryCorner
from .transfer import build_q, build_transfer, ring_transfer

RESIDUAL_FLOOR = 1e-30
_LOG_FLOOR = math.log(RESIDUAL_FLOOR)


def _root(t: complex, k: int) -> complex:
    """Principal ``k``-th root, computed in log form."""
    t = complex(t)
    if t == 0:
        raise InvalidModel("corner parameter must be nonzero")
    return cmath.exp((math.log(abs(t)) + 1j * cmath.phase(t)) / k)


def _slogdet(matrix: np.ndarray) -> tuple[complex, float]:
    sign, logabs = np.linalg.slogdet(matrix)
    return complex(sign), float(logabs)


def relative_gap(left: tuple[complex, float], right: tuple[complex, float]) -> float:
    """``|L - R| / max(|L|, |R|, floor)`` for numbers given as ``(phase, log|.|)``."""
    (pl, ll), (pr, lr) = left, right
    if pl == 0:
        ll = -math.inf
    if pr == 0:
        lr = -math.inf
    top = max(ll, lr)
    if top == -math.inf:
        return 0.0
    diff = abs(pl * math.exp(ll - top) - pr * math.exp(lr - top))
    if top >= _LOG_FLOOR:
        return diff
    return diff * math.exp(top - _LOG_FLOOR)


def _shifted_h(model: BlockModel, eps: complex, s: complex) -> tuple[complex, float]:
    """``det(eps I - H(s))`` in log-polar form, via the balanced realization."""
    bf = BoundaryFactor.from_corner(s, model.n)
    hb = blockmodel.realize_h_balanced(model, bf)
    return _slogdet(eps * np.eye(model.dim) - hb)


def duality_residual(model: BlockModel, eps: complex, s: complex) -> float:
    """Relative gap between ``det(eps - H(s)) / det(B_1...B_n)`` and ``(-1)^m s^-m det(T(eps) - s)``."""
    eps, s = complex(eps), complex(s)
    m = model.m
    ph, lh = _shifted_h(model, eps, s)
    pb, lb = model.det_b_product
    left = (ph / pb, lh - lb)
    T = build_transfer(model, eps).matrix
    pt, lt = _slogdet(T - s * np.eye(2 * m))
    sign = (-1) ** m * cmath.exp(-1j * m * cmath.phase(s))
    right = (pt * sign, lt - m * math.log(abs(s)))
    return relative_gap(left, right)


def eigenvalue_duality_defect(model: BlockModel, s: complex) -> float:
    """``max_i min_a |lambda_a(T(eps_i)) - s| / (1 + |s|)`` over eigenvalues ``eps_i`` of ``H(s)``."""
    bf = BoundaryFactor.from_corner(s, model.n)
    vals = blockmodel.dense_eigenvalues(blockmodel.realize_h_balanced(model, bf)).eigenvalues
    worst = 0.0
    for eps in vals:
        lam = np.linalg.eigvals(build_transfer(model, eps).matrix)
        worst = max(worst, float(np.min(np.abs(lam - s))))
    return worst / (1 + abs(s))


def _require_unitary(model: BlockModel):
    if not model.b_n_unitary:
        raise NotUnitaryCorner("the doubled matrices need B_n unitary")


def _dagger(blocks: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(blocks, 1, 2))


def m_ring(model: BlockModel, eps: complex) -> Ring:
    """Two chains folded into one ring of ``2n`` blocks; the seam bond is ``I``."""
    _require_unitary(model)
    m = model.m
    eye = np.eye(m, dtype=np.complex128)[None]
    a = model.A - complex(eps) * np.eye(m)
    inner = model.B[:-1]
    diag = np.concatenate([a, -a[::-1]])
    fwd = np.concatenate([inner, eye, _dagger(inner)[::-1], eye])
    bwd = np.concatenate([_dagger(inner), eye, inner[::-1], eye])
    return Ring(diag, fwd, bwd)


def k_ring(model: BlockModel) -> Ring:
    """Energy-free doubled ring; fold and seam bonds are ``-I`` forward, ``I`` backward."""
    _require_unitary(model)
    m = model.m
    eye = np.eye(m, dtype=np.complex128)[None]
    inner = model.B[:-1]
    diag = np.concatenate([model.A, model.A[::-1]])
    fwd = np.concatenate([inner, -eye, _dagger(inner)[::-1], -eye])
    bwd = np.concatenate([_dagger(inner), eye, inner[::-1], eye])
    return Ring(diag, fwd, bwd)


def build_m(model: BlockModel, eps: complex, t: complex) -> np.ndarray:
    """Dense ``M(eps, t)``: ``t I`` in the lower-left corner, ``I / t`` upper right."""
    return m_ring(model, eps).dense(complex(t))


def build_k(model: BlockModel, t: complex) -> np.ndarray:
    """Dense ``K(t)``: ``-t I`` in the lower-left corner, ``I / t`` upper right."""
    return k_ring(model).dense(complex(t))


def theta_matrix(model: BlockModel, eps: complex) -> np.ndarray:
    """Ring transfer matrix of ``M(eps)`` at zero energy."""
    return ring_transfer(m_ring(model, eps), 0.0)


def _ring_det(ring: Ring, t: complex, eps: complex | None = None) -> tuple[complex, float]:
    """``det(R(t) - eps)`` (or ``det R(t)``) through the balanced ring with ``z^{2n} = t``."""
    mat = ring.balanced(_root(t, ring.n_blocks))
    if eps is not None:
        mat = mat - complex(eps) * np.eye(ring.dim)
    return _slogdet(mat)


def _inner_log_det_b(model: BlockModel) -> float:
    return float(sum(np.linalg.slogdet(b)[1] for b in model.B[:-1]))


def k_duality_residual(model: BlockModel, eps: complex, t: complex) -> float:
    """Relative gap of ``det(K(t) - eps) / prod|det B_k|^2 = (-1)^m t^-m det(Q(eps) - t)``."""
    eps, t = complex(eps), complex(t)
    m = model.m
    pk, lk = _ring_det(k_ring(model), t, eps)
    left = (pk, lk - 2 * _inner_log_det_b(model))
    Q = build_q(model, eps).matrix
    pq, lq = _slogdet(Q - t * np.eye(2 * m))
    right = (pq * (-1) ** m * cmath.exp(-1j * m * cmath.phase(t)), lq - m * math.log(abs(t)))
    return relative_gap(left, right)


def mk_residual(model: BlockModel, eps: complex, t: complex) -> float:
    """Relative gap of ``det M(eps, t) = (-1)^{nm} det(K((-1)^n t) - eps)``."""
    n, m = model.n, model.m
    pm, lm = _ring_det(m_ring(model, eps), t)
    pk, lk = _ring_det(k_ring(model), (-1) ** n * complex(t), eps)
    return relative_gap((pm, lm), ((-1) ** (n * m) * pk, lk))


def mq_residual(model: BlockModel, eps: complex, t: complex) -> float:
    """Relative gap of ``det M(eps, t) / prod|det B_k|^2 = (-1)^{nm+m} u^-m det(Q - u)``, ``u = (-1)^n t``."""
    eps, t = complex(eps), complex(t)
    n, m = model.n, model.m
    u = (-1) ** n * t
    pm, lm = _ring_det(m_ring(model, eps), t)
    left = (pm, lm - 2 * _inner_log_det_b(model))
    Q = build_q(model, eps).matrix
    pq, lq = _slogdet(Q - u * np.eye(2 * m))
    sign = (-1) ** (n * m + m) * cmath.exp(-1j * m * cmath.phase(u))
    return relative_gap(left, (pq * sign, lq - m * math.log(abs(u))))


def theta_q_residual(model: BlockModel, eps: complex) -> float:
    """``||theta - (-1)^n diag(I, B_n^H) Q diag(I, B_n)|| / ||Q||`` (max-entry norms)."""
    m, n = model.m, model.n
    bn = model.B[-1]
    eye = np.eye(m)
    zero = np.zeros((m, m))
    left = np.block([[eye, zero], [zero, bn.conj().T]])
    right = np.block([[eye, zero], [zero, bn]])
    Q = build_q(model, eps).matrix
    theta = theta_matrix(model, eps)
    return float(np.max(np.abs(theta - (-1) ** n * left @ Q @ right)) / np.max(np.abs(Q)))


@dataclass(frozen=True)
class SymmetryWitness:
    """Block reversal ``J`` and the chain-sign matrix ``S3`` for ``2n`` blocks of size ``m``."""

    n: int
    m: int

    @cached_property
    def J(self) -> np.ndarray:
        return np.kron(np.fliplr(np.eye(2 * self.n)), np.eye(self.m))

    @cached_property
    def S3(self) -> np.ndarray:
        half = self.n * self.m
        return np.diag(np.concatenate([np.ones(half), -np.ones(half)]))


@dataclass(frozen=True, eq=False)
class DoubledModel:
    base: BlockModel

    def __post_init__(self):
        _require_unitary(self.base)

    @property
    def size(self) -> int:
        return 2 * self.base.dim

    @cached_property
    def witness(self) -> SymmetryWitness:
        return SymmetryWitness(self.base.n, self.base.m)

    def m_matrix(self, eps: complex, t: complex) -> np.ndarray:
        return build_m(self.base, eps, t)

    def k_matrix(self, t: complex) -> np.ndarray:
        return build_k(self.base, t)

    def theta(self, eps: complex) -> np.ndarray:
        return theta_matrix(self.base, eps)


def symmetry_residuals(doubled: DoubledModel, t: complex) -> tuple[float, float, float]:
    """Entrywise residuals of ``J K(t) J = K(t*)^H`` and ``S3 K(t) S3 = K(1/t*)^H``, plus the
    multiset distance between the spectra of ``K(t)`` and ``K(1/t)``."""
    t = complex(t)
    w = doubled.witness
    k = doubled.k_matrix(t)
    r_j = np.max(np.abs(w.J @ k @ w.J - doubled.k_matrix(t.conjugate()).conj().T))
    r_s = np.max(np.abs(w.S3 @ k @ w.S3 - doubled.k_matrix(1 / t.conjugate()).conj().T))
    vals = blockmodel.dense_eigenvalues(k).eigenvalues
    vals_inv = blockmodel.dense_eigenvalues(doubled.k_matrix(1 / t)).eigenvalues
    return float(r_j), float(r_s), multiset_distance(vals, vals_inv)
