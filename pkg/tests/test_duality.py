from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from andersonspec import blockmodel, duality
from andersonspec.anderson import AndersonConfig, build_anderson, zero_disorder_spectrum
from andersonspec.blockmodel import BlockModel, BoundaryFactor, random_model
from andersonspec.errors import NotUnitaryCorner
from andersonspec.transfer import build_transfer


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_duality_random(seed):
    r = np.random.default_rng(seed)
    model = random_model(r, int(r.integers(3, 7)), int(r.integers(1, 4)), unitary_corner=False)
    eps = complex(r.normal(), r.normal())
    s = math.exp(r.uniform(-0.7, 6)) * np.exp(1j * r.uniform(0, 2 * math.pi))
    assert duality.duality_residual(model, eps, s) < 1e-8


@pytest.mark.parametrize("n", [3, 4, 6])
def test_both_sides_vanish_on_clean_ellipse(n):
    cfg = AndersonConfig((n,), 0.0)
    model = build_anderson(cfg)
    bf = BoundaryFactor(0.6, 0.9)
    s = bf.corner(n)
    for eps in zero_disorder_spectrum(cfg, bf):
        sign, logabs = duality._shifted_h(model, eps, s)
        assert math.exp(logabs) < 1e-10 * (abs(eps) + 4) ** n
        T = build_transfer(model, eps).matrix
        assert abs(np.linalg.det(T - s * np.eye(2))) < 1e-9 * (np.max(np.abs(T)) + abs(s)) ** 2


def test_m1_reduction(rng):
    n = 5
    v = rng.uniform(-2, 2, n)
    model = BlockModel(v[:, None, None], np.ones((n, 1, 1)))
    for _ in range(10):
        eps = complex(*rng.normal(size=2))
        z = np.exp(rng.uniform(-0.5, 0.5) + 1j * rng.uniform(0, 2 * math.pi))
        h = blockmodel.realize_h(model, BoundaryFactor.from_corner(z**n, n))
        lhs = np.linalg.det(eps * np.eye(n) - h)
        rhs = np.trace(build_transfer(model, eps).matrix) - (z**n + z**-n)
        assert abs(lhs - rhs) < 1e-8 * max(1.0, abs(lhs))


def test_m_matrix_example_m1_n3():
    model = BlockModel(np.zeros((3, 1, 1)), np.ones((3, 1, 1)))
    mat = duality.build_m(model, 0.0, 1.0)
    ring6 = np.roll(np.eye(6), 1, axis=1)
    np.testing.assert_allclose(mat, ring6 + ring6.T)
    vals = np.linalg.eigvalsh(mat)
    np.testing.assert_allclose(np.sort(vals), np.sort(-vals), atol=1e-12)


def test_theta_equals_q(rng):
    for _ in range(5):
        model = random_model(rng, int(rng.integers(3, 6)), int(rng.integers(1, 3)))
        assert duality.theta_q_residual(model, complex(*rng.normal(size=2))) < 1e-7


def test_k_duality_and_m_relation(rng):
    for _ in range(20):
        model = random_model(rng, int(rng.integers(3, 6)), int(rng.integers(1, 3)))
        eps = complex(*rng.normal(size=2))
        t = math.exp(rng.uniform(-2, 2)) * np.exp(1j * rng.uniform(0, 2 * math.pi))
        assert duality.k_duality_residual(model, eps, t) < 1e-8
        assert duality.mk_residual(model, eps, t) < 1e-8
        assert duality.mq_residual(model, eps, t) < 1e-8


def test_k_is_energy_free_and_has_corner_signs(rng):
    model = random_model(rng, 3, 1)
    k = duality.build_k(model, 2.0)
    assert k[-1, 0] == pytest.approx(-2.0)
    assert k[0, -1] == pytest.approx(0.5)


def test_doubled_needs_unitary_corner(rng):
    with pytest.raises(NotUnitaryCorner):
        duality.DoubledModel(random_model(rng, 4, 2, unitary_corner=False))


def test_witness_squares_to_identity():
    w = duality.SymmetryWitness(3, 2)
    np.testing.assert_array_equal(w.J @ w.J, np.eye(12))
    np.testing.assert_array_equal(w.S3 @ w.S3, np.eye(12))


def test_symmetries_on_unit_circle(rng):
    doubled = duality.DoubledModel(random_model(rng, 4, 2))
    r_j, r_s, dist = duality.symmetry_residuals(doubled, np.exp(0.7j))
    assert r_j < 1e-12 and r_s < 1e-12 and dist < 1e-9


def test_symmetries_anderson_example():
    doubled = duality.DoubledModel(build_anderson(AndersonConfig((2, 4), 7.0, seed=1)))
    r_j, r_s, dist = duality.symmetry_residuals(doubled, 1.3 * np.exp(0.4j))
    assert r_j < 1e-12 and r_s < 1e-12 and dist < 1e-7


def test_relative_gap_floor():
    assert duality.relative_gap((1.0, -200.0), (1.0, -200.0)) == 0.0
    assert duality.relative_gap((0.0, 0.0), (0.0, 0.0)) == 0.0
    assert duality.relative_gap((1.0, math.log(2.0)), (-1.0, math.log(2.0))) == pytest.approx(2.0)
