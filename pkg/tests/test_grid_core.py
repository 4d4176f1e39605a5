import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amalgam_lab.grid_core import (
    Ball,
    Grid,
    GridFunction,
    ball_sums,
    ball_volume,
    convolve_scaled,
    convolve_scaled_direct,
    dilate,
    integrate,
    load_gridfunction,
    resampled_kernel,
    save_gridfunction,
    translate,
)
from amalgam_lab.intrinsic_sq import build_dictionary

import oracles
from conftest import bump_values


def l2(f):
    return math.sqrt(float(np.sum(f.values**2)) * f.grid.cell_volume)


# ---------------------------------------------------------------- construction


def test_rejects_non_finite():
    g = Grid.centered(1, 16, 1.0)
    vals = np.zeros(16)
    vals[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        GridFunction(g, vals)


def test_compact_margin_enforced():
    g = Grid.centered(1, 16, 1.0)
    with pytest.raises(ValueError, match="margin"):
        GridFunction(g, np.ones(16))
    GridFunction(g, np.ones(16), compact=False)


def test_values_read_only(bump1):
    with pytest.raises(ValueError):
        bump1.values[0] = 1.0


def test_ball_volume():
    assert ball_volume(1.5, 1) == 3.0
    assert ball_volume(2.0, 2) == 4 * math.pi
    with pytest.raises(ValueError):
        Ball((0.0,), 0.0)


# ---------------------------------------------------------------- integrate


def test_integrate_constant_interval():
    g = Grid.centered(1, 400, 2.0)
    f = GridFunction(g, np.ones(400), compact=False)
    assert abs(integrate(f, Ball((0.0,), 1.0)) - 2.0) <= g.h


def test_integrate_zero(grid1):
    f = GridFunction(grid1, np.zeros(grid1.shape))
    assert integrate(f, Ball((0.3,), 0.7)) == 0.0


def test_integrate_disjoint_ball_is_zero(bump1):
    assert integrate(bump1, Ball((50.0,), 1.0)) == 0.0


def test_integrate_square_converges():
    errs = []
    for cells in (120, 240, 480):
        g = Grid.centered(1, cells, 2.0)
        f = GridFunction.from_callable(g, lambda x: x * x, compact=False)
        errs.append(abs(integrate(f, Ball((0.0,), 1.0)) - 2.0 / 3.0))
    assert errs[1] <= 0.55 * errs[0] and errs[2] <= 0.55 * errs[1]


def test_integrate_indicator_rate_2d():
    errs = []
    for cells in (64, 128, 256, 512):
        g = Grid.centered(2, cells, 1.5)
        f = GridFunction(g, np.ones(g.shape), compact=False)
        errs.append(abs(integrate(f, Ball((0.0, 0.0), 1.0)) - math.pi))
    rate = np.polyfit(np.log([3.0 / c for c in (64, 128, 256, 512)]), np.log(errs), 1)[0]
    assert rate >= 0.9


def test_integrate_matches_loop_oracle(bump1):
    for c, r in ((0, 0.5), (100, 0.3), (128, 1.0)):
        center = bump1.grid.axes()[0][c]
        ref = oracles.ball_integral(list(bump1.values), bump1.h, c, r)
        assert integrate(bump1, Ball((center,), r)) == pytest.approx(ref, rel=1e-12, abs=1e-15)


# ---------------------------------------------------------------- translate


def test_translate_zero_is_identity(bump1):
    assert translate(bump1, 0.0) is bump1 or np.array_equal(translate(bump1, 0.0).values, bump1.values)


def test_translate_indicator():
    g = Grid.centered(1, 64, 4.0)
    chi = GridFunction.from_callable(g, lambda x: ((x > 0) & (x < 1)).astype(float))
    moved = translate(chi, 1.0)
    mesh = moved.grid.axes()[0]
    assert np.array_equal(moved.values, ((mesh > 1) & (mesh < 2)).astype(float))
    assert l2(moved) == l2(chi)


def test_translate_random_bump_exact(grid1):
    rng = np.random.default_rng(3)
    vals = bump_values(grid1, 0.0, 0.5) * rng.normal(size=grid1.shape)
    f = GridFunction(grid1, vals)
    moved = translate(f, 16 * grid1.h)
    assert l2(moved) - l2(f) == 0.0


def test_translate_off_lattice(bump1):
    with pytest.raises(ValueError, match="off-lattice translation"):
        translate(bump1, 0.3 * bump1.h)


def test_translate_grows_box(bump1):
    moved = translate(bump1, 3.0)
    assert moved.grid.shape[0] > bump1.grid.shape[0]
    assert np.array_equal(moved.values[moved.values != 0], bump1.values[bump1.values != 0])


# ---------------------------------------------------------------- dilate


def test_dilate_identity(bump1):
    assert np.array_equal(dilate(bump1, 1.0, 2.0).values, bump1.values)


@pytest.mark.parametrize("r", [0.5, 2.0, 4.0])
@pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
def test_dilate_lq_isometry(r, q):
    g = Grid.centered(1, 2048, 2.0)
    f = GridFunction(g, bump_values(g))
    d = dilate(f, r, q)
    norm = lambda u: (np.sum(np.abs(u.values) ** q) * u.h) ** (1 / q)
    assert norm(d) == pytest.approx(norm(f), rel=2e-2)


def test_dilate_indicator_samples():
    g = Grid.centered(1, 64, 2.0)
    chi = GridFunction.from_callable(g, lambda x: ((x > 0) & (x < 1)).astype(float))
    d = dilate(chi, 2.0, 2.0)
    x = d.grid.axes()[0]
    inside = (x > 0.05) & (x < 0.45)
    assert np.allclose(d.values[inside], math.sqrt(2.0), rtol=0, atol=1e-15)
    assert np.all(d.values[(x > 0.55) | (x < -0.05)] == 0)


def test_dilate_under_resolved(bump1):
    with pytest.raises(ValueError, match="under-resolved dilation"):
        dilate(bump1, 64.0, 2.0)


# ---------------------------------------------------------------- convolution


@pytest.fixture(scope="module")
def phi():
    return build_dictionary(1.0, 8, 0).members[0]


def test_convolve_zero(grid1, phi):
    f = GridFunction(grid1, np.zeros(grid1.shape))
    assert np.all(convolve_scaled(f, phi, 0.2).values == 0)


def test_zero_mean_kernel_kills_constants(phi):
    g = Grid.centered(1, 1024, 8.0)
    c = 3.7
    f = GridFunction(g, np.where(np.abs(g.axes()[0]) < 7.0, c, 0.0))
    t = 0.5
    out = convolve_scaled(f, phi, t).values
    interior = np.abs(g.axes()[0]) < 7.0 - t - 2 * g.h
    assert np.max(np.abs(out[interior])) < 1e-6 * abs(c)


def test_delta_reproduces_kernel(grid1, phi):
    vals = np.zeros(grid1.shape)
    x0 = 140
    vals[x0] = 1.0 / grid1.h
    f = GridFunction(grid1, vals)
    t = 0.3
    out = convolve_scaled_direct(f, phi, t).values
    K = (phi.grid.shape[0] - 3) // 2
    kern = oracles.kernel_samples(list(phi.values), K, t, grid1.h)
    for y in range(grid1.shape[0]):
        assert out[y] == pytest.approx(kern.get(y - x0, 0.0), rel=1e-12, abs=1e-12)


def test_scale_below_resolution(bump1, phi):
    with pytest.raises(ValueError, match="scale below resolution"):
        convolve_scaled(bump1, phi, 0.5 * bump1.h)


def test_kernel_support_and_mean(phi):
    k = resampled_kernel(phi, 0.37, 0.01)
    assert k.shape == (2 * 37 + 1,)
    assert abs(k.sum()) < 1e-10 * np.abs(k).sum()


@given(seed=st.integers(0, 2**31 - 1), t=st.floats(0.05, 1.5))
def test_fft_matches_direct(seed, t):
    g = Grid.centered(1, 256, 2.0)
    rng = np.random.default_rng(seed)
    f = GridFunction(g, bump_values(g, 0.0, 1.2) * rng.normal(size=g.shape))
    phi = build_dictionary(0.5, 8, seed % 5).members[seed % 8]
    fast = convolve_scaled(f, phi, t).values
    slow = convolve_scaled_direct(f, phi, t).values
    assert np.max(np.abs(fast - slow)) <= 1e-9 * max(np.max(np.abs(slow)), 1e-300)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_convolution_linear(a, b, seed):
    g = Grid.centered(1, 256, 2.0)
    rng = np.random.default_rng(seed)
    env = bump_values(g, 0.0, 1.5)
    f = GridFunction(g, env * rng.normal(size=g.shape))
    h = GridFunction(g, env * rng.normal(size=g.shape))
    phi = build_dictionary(1.0, 8, 1).members[2]
    t = 0.4
    lhs = convolve_scaled(f * a + h * b, phi, t).values
    rhs = a * convolve_scaled(f, phi, t).values + b * convolve_scaled(h, phi, t).values
    scale = (abs(a) + abs(b)) * max(np.max(np.abs(convolve_scaled(f, phi, t).values)),
                                    np.max(np.abs(convolve_scaled(h, phi, t).values)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(scale, 1e-300)


def test_convolve_2d_fft_direct():
    g = Grid.centered(2, 64, 2.0)
    f = GridFunction(g, bump_values(g))
    phi = build_dictionary(1.0, 8, 0, dim=2).members[0]
    fast = convolve_scaled(f, phi, 0.5).values
    slow = convolve_scaled_direct(f, phi, 0.5).values
    assert np.max(np.abs(fast - slow)) <= 1e-9 * np.max(np.abs(slow))


# ---------------------------------------------------------------- ball sums


def test_ball_sums_translation_exact(grid1):
    rng = np.random.default_rng(0)
    vals = bump_values(grid1, -0.5, 0.4) * rng.normal(size=grid1.shape)
    a = ball_sums(vals, grid1.h, 0.2)
    b = ball_sums(np.roll(vals, 32), grid1.h, 0.2)
    assert np.array_equal(np.roll(a, 32), b)


def test_ball_sums_additive(grid1):
    rng = np.random.default_rng(1)
    vals = rng.random(grid1.shape)
    sums = ball_sums(vals, grid1.h, 0.3)
    c = 77
    mask = Ball((grid1.axes()[0][c],), 0.3).mask(grid1)
    assert sums[c] == pytest.approx(vals[mask].sum(), rel=1e-12)


# ---------------------------------------------------------------- serialization


@pytest.mark.parametrize("dim", [1, 2])
def test_roundtrip_bit_exact(tmp_path, dim):
    g = Grid(dim, 0.1 / 3, (-1.0 / 7,) * dim, (12,) * dim)
    rng = np.random.default_rng(dim)
    vals = np.zeros(g.shape)
    inner = (slice(1, -1),) * dim
    vals[inner] = rng.normal(size=vals[inner].shape) * 1e-3
    f = GridFunction(g, vals, name="probe")
    path = tmp_path / "f.grid"
    save_gridfunction(f, path)
    back = load_gridfunction(path)
    assert back.grid == f.grid
    assert back.values.tobytes() == f.values.tobytes()
    assert back.name == "probe" and back.compact
