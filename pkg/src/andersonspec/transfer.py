"""Transfer matrices, their exponents, and the QR Lyapunov oracle.

Exponents are normalized per unit of chain length: the eigenvalues of
``T(eps)`` are ``z_a**n`` and the reported exponents are ``log|z_a|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .blockmodel import PIVOT_FLOOR, BlockModel, Ring, dense_eigenvalues
from .errors import BandEdge, BudgetExceeded, NotUnitaryCorner, OverflowRisk, ZeroEigenvalue

OVERFLOW_LOG_LIMIT = 600.0
ORACLE_BUDGET = 10**9  # section-steps times m**2


@dataclass(frozen=True, eq=False)
class TransferOperator:
    matrix: np.ndarray
    energy: complex
    m: int
    n: int
    kind: str = "T"
    model: BlockModel | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class SymplecticForm:
    matrix: np.ndarray
    inverse: np.ndarray

    @classmethod
    def from_model(cls, model: BlockModel) -> "SymplecticForm":
        bn = model.B[-1]
        m = model.m
        z = np.zeros((m, m), dtype=np.complex128)
        sigma = np.block([[z, -bn.conj().T], [bn, z]])
        bn_inv = np.linalg.inv(bn)
        sigma_inv = np.block([[z, bn_inv], [-bn_inv.conj().T, z]])
        return cls(sigma, sigma_inv)


@dataclass(frozen=True, eq=False)
class ExponentSpectrum:
    values: np.ndarray
    kind: str
    energy: complex
    stderr: np.ndarray | None = None

    def __post_init__(self):
        order = np.argsort(self.values, kind="stable")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float)[order])
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float)[order])

    @property
    def positive(self) -> np.ndarray:
        """Upper half of the sorted spectrum (the ``m`` largest values)."""
        return self.values[self.values.size // 2:]

    def pairing_defect(self) -> float:
        """``max |xi_a + xi_{2m+1-a}|``; zero for a spectrum symmetric under negation."""
        return float(np.max(np.abs(self.values + self.values[::-1])))


def single_factor(a: np.ndarray, b: np.ndarray, b_prev: np.ndarray, eps: complex) -> np.ndarray:
    """One factor ``[[B_k^-1 (eps - A_k), -B_k^-1 B_{k-1}^dagger], [I, 0]]``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    b = np.atleast_2d(np.asarray(b, dtype=np.complex128))
    b_prev = np.atleast_2d(np.asarray(b_prev, dtype=np.complex128))
    m = a.shape[0]
    b_inv = np.linalg.inv(b)
    return np.block([
        [b_inv @ (eps * np.eye(m) - a), -b_inv @ b_prev.conj().T],
        [np.eye(m), np.zeros((m, m))],
    ])


def ring_transfer(ring: Ring, eps: complex) -> np.ndarray:
    """Ordered product of ring factors, unit 1 rightmost, with the overflow guard."""
    factors = [ring.transfer_factor(k, eps) for k in range(ring.n_blocks)]
    worst = max(math.log(max(np.linalg.norm(f, 2), 1e-300)) for f in factors)
    if ring.n_blocks * worst >= OVERFLOW_LOG_LIMIT:
        raise OverflowRisk(
            f"n*max log||t_k|| = {ring.n_blocks * worst:.1f} >= {OVERFLOW_LOG_LIMIT}; "
            "use the spectral (Jensen) route instead"
        )
    out = np.eye(2 * ring.m, dtype=np.complex128)
    for f in factors:
        out = f @ out
    return out


def build_transfer(model: BlockModel, eps: complex) -> TransferOperator:
    eps = complex(eps)
    return TransferOperator(ring_transfer(model.ring, eps), eps, model.m, model.n, "T", model)


def symplectic_residuals(T: TransferOperator, form: SymplecticForm | None = None) -> tuple[float, float]:
    """Max-entry residuals of ``T(eps*)^H S T(eps) = S`` and ``T(eps) S^-1 T(eps*)^H = S^-1``."""
    if T.model is None:
        raise ValueError("transfer operator carries no model; cannot rebuild T(eps*)")
    form = form or SymplecticForm.from_model(T.model)
    t_conj = build_transfer(T.model, np.conj(T.energy)).matrix.conj().T
    r1 = np.max(np.abs(t_conj @ form.matrix @ T.matrix - form.matrix))
    r2 = np.max(np.abs(T.matrix @ form.inverse @ t_conj - form.inverse))
    return float(r1), float(r2)


def exponents_direct(T: TransferOperator) -> ExponentSpectrum:
    lam = dense_eigenvalues(T.matrix, "transfer").eigenvalues
    mags = np.abs(lam)
    if mags.min() < PIVOT_FLOOR:
        raise ZeroEigenvalue("transfer matrix has a zero eigenvalue")
    scale = 2 * T.n if T.kind == "Q" else T.n
    return ExponentSpectrum(np.log(mags) / scale, T.kind, T.energy)


def transfer_factors(model: BlockModel, eps: complex):
    """Pieces ``t_k``, ``u_k`` (k = 1..n) and ``sigma_k`` (k = 1..n-1) of the factored ``T``.

    ``T = diag(B_n^-1, I) t_n sigma_{n-1} ... sigma_1 t_1 diag(I, B_n^dagger)``.
    """
    m = model.m
    eye = np.eye(m, dtype=np.complex128)
    zero = np.zeros((m, m), dtype=np.complex128)
    ts = [np.block([[eps * eye - a, -eye], [eye, zero]]) for a in model.A]
    us = [np.block([[a - eps * eye, -eye], [eye, zero]]) for a in model.A]
    sigmas = [np.block([[np.linalg.inv(b), zero], [zero, b.conj().T]]) for b in model.B[:-1]]
    return ts, sigmas, us


def build_q(model: BlockModel, eps: complex) -> TransferOperator:
    """``Q(eps) = T(eps*)^dagger T(eps)`` assembled from the factored form.

    Needs a unitary corner block, where
    ``Q = (-1)^n diag(I, B_n) u_1 s_1^H ... s_{n-1}^H u_n t_n s_{n-1} ... s_1 t_1 diag(I, B_n^H)``.
    """
    if not model.b_n_unitary:
        raise NotUnitaryCorner("Q(eps) needs B_n unitary")
    eps = complex(eps)
    ring_transfer(model.ring, eps)  # overflow guard only
    m, n = model.m, model.n
    ts, sigmas, us = transfer_factors(model, eps)
    # t_n s_{n-1} ... s_1 t_1
    right = ts[0]
    for k in range(1, n):
        right = ts[k] @ sigmas[k - 1] @ right
    # u_1 s_1^H ... s_{n-1}^H u_n
    left = us[n - 1]
    for k in range(n - 2, -1, -1):
        left = us[k] @ sigmas[k].conj().T @ left
    eye = np.eye(m, dtype=np.complex128)
    zero = np.zeros((m, m), dtype=np.complex128)
    bn = model.B[-1]
    middle = np.block([[np.linalg.inv(bn @ bn.conj().T), zero], [zero, eye]])
    outer_l = np.block([[eye, zero], [zero, bn]])
    outer_r = np.block([[eye, zero], [zero, bn.conj().T]])
    q = (-1) ** n * outer_l @ left @ middle @ right @ outer_r
    return TransferOperator(q, eps, m, n, "Q", model)


def q_exponents(Q: TransferOperator) -> ExponentSpectrum:
    """``(1/2n) log|eigenvalues of Q|``."""
    return exponents_direct(Q)


@dataclass(frozen=True)
class ZeroDisorderClosedForm:
    """Clean chain with a constant transverse block of eigenvalues ``lambdas`` at real energy."""

    lambdas: tuple[float, ...]
    energy: float

    @classmethod
    def from_block(cls, a: np.ndarray, eps: float) -> "ZeroDisorderClosedForm":
        return cls(tuple(float(x) for x in np.linalg.eigvalsh(np.atleast_2d(a))), float(eps))

    @cached_property
    def roots(self) -> np.ndarray:
        """Root of ``z^2 - (eps - lambda) z + 1 = 0`` with ``|z| >= 1``, per channel."""
        out = []
        for lam in self.lambdas:
            c = complex(self.energy - lam)
            disc = np.sqrt(c * c - 4)
            r1, r2 = (c + disc) / 2, (c - disc) / 2
            out.append(r1 if abs(r1) >= abs(r2) else r2)
        return np.array(out, dtype=np.complex128)

    def t_exponents(self) -> ExponentSpectrum:
        xi = np.log(np.abs(self.roots))
        return ExponentSpectrum(np.concatenate([-xi, xi]), "T", complex(self.energy))


def _log_w(z: complex, n: int) -> float:
    z2 = z * z
    if abs(z2 - 1) < 1e-8:
        raise BandEdge(f"z^2 = {z2:.6g} is at the band edge")
    c = ((z2 + 1) / (z2 - 1)) ** 2
    d = 8 * z2 / (z2 - 1) ** 2
    log_growth = 2 * n * math.log(abs(z))
    if log_growth < OVERFLOW_LOG_LIMIT:
        s = (z ** (2 * n) + z ** (-2 * n)) * c - d
        s = float(np.real(s))
        w = (s + math.sqrt(max(s * s - 4.0, 0.0))) / 2
        return math.log(w)
    # w ~ s once z^{2n} dominates; s / z^{2n} is O(1)
    ratio = c * (1 + z ** (-4 * n)) - d * z ** (-2 * n)
    phase = (z / abs(z)) ** (2 * n)
    return log_growth + math.log(abs(float(np.real(ratio * phase))))


def zero_disorder_q_exponents(cf: ZeroDisorderClosedForm, n: int) -> ExponentSpectrum:
    """Exponents ``(1/2n) log w_k`` of ``T^dagger T`` for the clean chain, from the closed form."""
    g = np.array([_log_w(z, n) / (2 * n) for z in cf.roots])
    return ExponentSpectrum(np.concatenate([-g, g]), "Q", complex(cf.energy))


def lyapunov_oracle(
    config,
    eps: float,
    total_length: int,
    reorth_period: int = 8,
    chunk: int = 4096,
    growth_limit: float = 1e12,
) -> ExponentSpectrum:
    """Lyapunov exponents of a long Anderson strip by QR re-orthogonalization.

    The transverse geometry and disorder come from ``config`` (an
    :class:`~andersonspec.anderson.AndersonConfig`); the chain is ``total_length``
    sections long regardless of ``config.dims[-1]``.
    """
    from .anderson import section_potentials, transverse_hopping

    m = config.m
    if total_length < 1 or reorth_period < 1:
        raise ValueError("total_length and reorth_period must be positive")
    if total_length * m * m > ORACLE_BUDGET:
        raise BudgetExceeded(f"{total_length} sections of width {m} exceeds the oracle budget")
    hop = transverse_hopping(config.dims[:-1])
    dtype = np.complex128 if complex(eps).imag != 0 else np.float64
    eps = complex(eps) if dtype is np.complex128 else float(np.real(eps))
    y_top = np.eye(m, 2 * m, dtype=dtype)
    y_bot = np.eye(m, 2 * m, k=m, dtype=dtype)
    logs = np.zeros(2 * m)
    since = 0

    def reorthogonalize(top, bot):
        q, r = np.linalg.qr(np.vstack([top, bot]))
        return q[:m], q[m:], np.log(np.abs(np.diag(r)))

    for start in range(0, total_length, chunk):
        count = min(chunk, total_length - start)
        pots = section_potentials(config, start, count)
        for j in range(count):
            new_top = eps * y_top - hop @ y_top - pots[j][:, None] * y_top - y_bot
            y_bot, y_top = y_top, new_top
            since += 1
            if since >= reorth_period or np.abs(new_top).max() > growth_limit:
                y_top, y_bot, inc = reorthogonalize(y_top, y_bot)
                logs += inc
                since = 0
    if since:
        y_top, y_bot, inc = reorthogonalize(y_top, y_bot)
        logs += inc
    return ExponentSpectrum(logs / total_length, "lyapunov-oracle", complex(eps))
