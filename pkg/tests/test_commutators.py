import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amalgam_lab import intrinsic_sq as isq
from amalgam_lab.commutators import (
    CommutatorField,
    centered_symbol,
    commutator_aperture_profile,
    commutator_fields,
    commutator_g,
    commutator_gstar,
    commutator_gstar_bounds,
    commutator_gstar_series,
    commutator_s,
    memory_estimate,
)
from amalgam_lab.grid_core import Grid, GridFunction
from amalgam_lab.intrinsic_sq import ConeQuadrature, build_dictionary
from amalgam_lab.norms import log_abs_field

import oracles
from conftest import bump_values

OPS = [commutator_s, commutator_g, commutator_gstar]


@pytest.fixture(scope="module")
def symbol(grid1):
    return log_abs_field(grid1)


def random_input(grid, seed):
    rng = np.random.default_rng(seed)
    return GridFunction(grid, bump_values(grid, 0.0, 1.2) * rng.normal(size=grid.shape))


@pytest.mark.parametrize("op", OPS)
def test_constant_symbol_vanishes(grid1, bump1, dict1, quad1, op):
    b = GridFunction(grid1, np.full(grid1.shape, 3.0), compact=False)
    assert np.all(op(bump1, b, dict1, quad1).values == 0)


@pytest.mark.parametrize("op", OPS)
def test_homogeneous_in_f(bump1, symbol, dict1, quad1, op):
    base = op(bump1, symbol, dict1, quad1).values
    assert np.array_equal(op(bump1 * 2.0, symbol, dict1, quad1).values, 2 * base)
    assert np.array_equal(op(bump1 * -1.0, symbol, dict1, quad1).values, base)


@pytest.mark.parametrize("op", OPS)
@pytest.mark.parametrize("c", [-2.0, 0.5])
def test_scaling_in_symbol(bump1, symbol, dict1, quad1, op, c):
    base = op(bump1, symbol, dict1, quad1).values
    scaled = op(bump1, symbol * c, dict1, quad1).values
    assert np.allclose(scaled, abs(c) * base, rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("op", OPS)
def test_symbol_shift_invariant(bump1, symbol, dict1, quad1, op):
    base = op(bump1, symbol, dict1, quad1).values
    moved = GridFunction(symbol.grid, symbol.values + 7.25, compact=False)
    shifted = op(bump1, moved, dict1, quad1).values
    assert np.max(np.abs(shifted - base)) <= 1e-10 * np.max(base)


@pytest.fixture(scope="module")
def oracle_case(grid1, symbol):
    f = random_input(grid1, 4)
    D = build_dictionary(1.0, 8, 0).take(3)
    Q = ConeQuadrature(2 * grid1.h, 0.5, 6)
    return f, D, Q, [30, 100, 128, 190]


def test_commutator_s_oracle(oracle_case, symbol):
    f, D, Q, probes = oracle_case
    ref = oracles.commutator_s_oracle(list(f.values), list(symbol.values), [list(m.values) for m in D.members],
                                      isq.REF_NODES[1], f.h, Q.t_min, Q.t_max, Q.n_t, probes)
    out = commutator_s(f, symbol, D, Q).values
    for x, r in zip(probes, ref):
        assert out[x] == pytest.approx(r, rel=1e-9, abs=1e-14)


def test_commutator_g_oracle(oracle_case, symbol):
    f, D, Q, probes = oracle_case
    ref = oracles.commutator_g_oracle(list(f.values), list(symbol.values), [list(m.values) for m in D.members],
                                      isq.REF_NODES[1], f.h, Q.t_min, Q.t_max, Q.n_t, probes)
    out = commutator_g(f, symbol, D, Q).values
    for x, r in zip(probes, ref):
        assert out[x] == pytest.approx(r, rel=1e-9, abs=1e-14)


def test_gstar_dominates_s(bump1, symbol, dict1, quad1):
    gs = commutator_gstar(bump1, symbol, dict1, quad1).values
    s = commutator_s(bump1, symbol, dict1, quad1).values
    assert np.all(gs >= 2.0 ** (-quad1.lam / 2) * s * (1 - 1e-12))


def test_gstar_sandwich(bump1, symbol, dict1, quad1):
    lo, hi = commutator_gstar_bounds(bump1, symbol, dict1, quad1)
    gs = commutator_gstar(bump1, symbol, dict1, quad1).values
    mid = commutator_gstar_series(bump1, symbol, dict1, quad1).values
    tol = 1 + 1e-12
    assert np.all(lo <= gs * tol) and np.all(gs <= hi * tol)
    assert np.all(lo <= mid * tol) and np.all(mid <= hi * tol)


def test_series_j0_is_s(bump1, symbol, dict1, quad1):
    a = commutator_gstar_series(bump1, symbol, dict1, quad1, J=0).values
    assert np.allclose(a, commutator_s(bump1, symbol, dict1, quad1).values, rtol=1e-12, atol=0)


def test_aperture_profile_monotone(bump1, symbol, dict1, quad1):
    prof = commutator_aperture_profile(bump1, symbol, dict1, quad1, 3)
    assert np.all(np.diff(prof, axis=0) >= 0)


@given(s1=st.integers(0, 10_000), s2=st.integers(0, 10_000))
def test_sublinear(grid1, symbol, dict1, quad1, s1, s2):
    f, g = random_input(grid1, s1), random_input(grid1, s2)
    for op in OPS:
        lhs = op(f + g, symbol, dict1, quad1).values
        rhs = op(f, symbol, dict1, quad1).values + op(g, symbol, dict1, quad1).values
        assert np.all(lhs <= rhs * (1 + 1e-9) + 1e-14)


def test_centered_symbol_mean():
    g = Grid.centered(1, 64, 2.0)
    b = centered_symbol(log_abs_field(g))
    assert abs(b.values.mean()) <= 1e-15


def test_fields_layout_and_memory(bump1, symbol, dict1, quad1):
    cf = commutator_fields(bump1, symbol, dict1, quad1)
    assert cf.F.shape == (len(dict1), quad1.n_t) + bump1.grid.shape
    assert memory_estimate(bump1.grid.shape, quad1.n_t, len(dict1)) == cf.F.nbytes + cf.G.nbytes


def test_field_checks():
    with pytest.raises(ValueError, match="shapes differ"):
        CommutatorField(np.zeros((2, 3)), np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(ValueError, match="non-finite"):
        CommutatorField(np.full((2,), math.inf), np.zeros(2), np.zeros(2))


def test_grid_mismatch(bump1, dict1, quad1):
    other = log_abs_field(Grid.centered(1, 128, 2.0))
    with pytest.raises(ValueError, match="different grids"):
        commutator_s(bump1, other, dict1, quad1)


def test_gstar_needs_truncation(bump1, symbol, dict1):
    with pytest.raises(ValueError, match="J >= 1"):
        commutator_gstar(bump1, symbol, dict1, ConeQuadrature(2 * bump1.h, 1.0, 16, J=0))
