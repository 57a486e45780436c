import numpy as np
import pytest

from rbskin.energy import (
    EnergyBatch,
    batch_energy,
    batch_gradient,
    draw_batch,
    energy_and_gradient,
    stochastic_laplacian,
)
from rbskin.field import initial_field
from rbskin.geometry import closest_point, sample_interior, unit_directions


@pytest.fixture(scope="module")
def bar_field(bar_shape, bar_handles, bar_ctx):
    smp = sample_interior(bar_ctx, 512, np.random.default_rng(3))
    fld = initial_field(bar_shape, bar_handles, smp.points)
    fld.set_features(np.random.default_rng(4).standard_normal(fld.features.shape))
    return fld


def test_x_squared_mean_is_two():
    rng = np.random.default_rng(0)
    f = lambda p: p[:, 0] ** 2  # noqa: E731
    for d in (2, 3):
        n = 10 ** 5
        v = unit_directions(n, d, rng)
        y = np.full((n, d), 0.3)
        est = stochastic_laplacian(f, y, v, 0.05)
        se = est.std(ddof=1) / np.sqrt(n)
        assert abs(est.mean() - 2.0) <= 3 * se


def test_radial_quadratic_single_draw_exact():
    rng = np.random.default_rng(1)
    for d in (2, 3):
        f = lambda p: 1.7 * np.sum(p * p, axis=1)  # noqa: E731
        y = rng.random((50, d))
        v = unit_directions(50, d, rng)
        est = stochastic_laplacian(f, y, v, 0.1)
        assert np.abs(est - 3.4 * d).max() <= 1e-9


def test_quadratic_unbiased_for_general_hessian():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((3, 3))
    hess = a + a.T
    f = lambda p: 0.5 * np.einsum("ni,ij,nj->n", p, hess, p)  # noqa: E731
    n = 10 ** 5
    v = unit_directions(n, 3, rng)
    est = stochastic_laplacian(f, np.zeros((n, 3)), v, 0.1)
    se = est.std(ddof=1) / np.sqrt(n)
    assert abs(est.mean() - np.trace(hess)) <= 3 * se


def test_unscaled_estimator_mean_is_trace_over_d():
    rng = np.random.default_rng(5)
    f = lambda p: p[:, 0] ** 2 + p[:, 1] ** 2  # noqa: E731
    n = 20000
    est = stochastic_laplacian(f, np.zeros((n, 2)), unit_directions(n, 2, rng), 0.1, scale=1.0)
    np.testing.assert_allclose(est.mean(), 2.0, atol=1e-9)


def test_batch_validation():
    with pytest.raises(ValueError):
        EnergyBatch(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), 0.1, np.zeros(0), 1.0)
    with pytest.raises(ValueError):
        EnergyBatch(np.zeros((3, 2)), np.ones(3), np.zeros((2, 2)), 0.1, np.ones(3), 1.0)
    with pytest.raises(ValueError):
        EnergyBatch(np.zeros((3, 2)), np.ones(3), np.zeros((3, 2)), 0.0, np.ones(3), 1.0)


def test_constant_field_has_zero_energy(bar_field, bar_ctx):
    fld = bar_field
    b = draw_batch(bar_ctx, 400, 0.5 * fld.sigma, np.random.default_rng(9))
    far = (fld.handles.distances(b.y).min(1) > 2 * fld.handles.eps)
    # keep samples whose probes stay clear of the Neumann shell too
    far &= closest_point(fld.shape, b.y).distance > fld.eps_neumann + 2 * b.h
    sub = EnergyBatch(b.y[far], b.winding[far], b.v[far], b.h, b.alpha[far], b.volume)
    feats = np.tile([0.3, -1.2], (fld.n_sites, 1))
    assert batch_energy(fld, sub, features=feats) <= 1e-8
    assert np.abs(batch_gradient(fld, sub, features=np.zeros_like(feats))).max() <= 1e-8


def test_single_sample_reduction(bar_field):
    fld = bar_field
    y = np.array([[0.5, 0.125]])
    v = np.array([[0.6, 0.8]])
    b = EnergyBatch(y, np.ones(1), v, 0.01, np.ones(1), 0.25)
    lap = stochastic_laplacian(fld, y, v, 0.01)
    np.testing.assert_allclose(batch_energy(fld, b), 0.25 * np.sum(lap ** 2), rtol=1e-12)


def test_gradient_matches_central_differences(bar_field, bar_ctx):
    fld = bar_field
    b = draw_batch(bar_ctx, 256, 0.5 * fld.sigma, np.random.default_rng(11))
    base = fld.features.copy()
    _, grad = energy_and_gradient(fld, b)
    rng = np.random.default_rng(12)
    for _ in range(20):
        i, k = rng.integers(fld.n_sites), rng.integers(fld.n_handles)
        if grad[i, k] == 0:
            continue
        step = 1e-5
        up, dn = base.copy(), base.copy()
        up[i, k] += step
        dn[i, k] -= step
        fd = (batch_energy(fld, b, features=up) - batch_energy(fld, b, features=dn)) / (2 * step)
        assert abs(fd - grad[i, k]) <= 1e-5 * abs(grad[i, k])


def test_directional_derivative(bar_field, bar_ctx):
    fld = bar_field
    b = draw_batch(bar_ctx, 256, 0.5 * fld.sigma, np.random.default_rng(13))
    base = fld.features.copy()
    _, grad = energy_and_gradient(fld, b)
    rng = np.random.default_rng(14)
    for _ in range(5):
        d = rng.standard_normal(base.shape)
        step = 1e-5
        fd = (batch_energy(fld, b, features=base + step * d)
              - batch_energy(fld, b, features=base - step * d)) / (2 * step)
        exact = float(np.sum(grad * d))
        assert abs(fd - exact) <= 1e-5 * abs(exact)


def test_gradient_is_local(bar_field):
    fld = bar_field
    y = np.array([[0.2, 0.125]])
    b = EnergyBatch(y, np.ones(1), np.array([[1.0, 0.0]]), 0.005, np.ones(1), 0.25)
    grad = batch_gradient(fld, b)
    d = np.linalg.norm(fld.sites - y, axis=1)
    assert np.all(grad[d > fld.radius + b.h + fld.eps_neumann] == 0)


def test_permutation_invariance(bar_field, bar_ctx):
    fld = bar_field
    b = draw_batch(bar_ctx, 200, 0.5 * fld.sigma, np.random.default_rng(15))
    p = np.random.default_rng(16).permutation(b.size)
    bp = EnergyBatch(b.y[p], b.winding[p], b.v[p], b.h, b.alpha[p], b.volume)
    np.testing.assert_allclose(batch_energy(fld, b), batch_energy(fld, bp), rtol=1e-12)
    swapped = fld.features[:, ::-1].copy()
    e1 = batch_energy(fld, b)
    fld2 = initial_field(fld.shape, fld.handles.__class__(list(fld.handles)[::-1], eps=fld.handles.eps),
                         fld.sites)
    fld2.set_features(swapped)
    np.testing.assert_allclose(batch_energy(fld2, b), e1, rtol=1e-10)


def test_watertight_interior_alpha_is_one(bar_ctx):
    b = draw_batch(bar_ctx, 500, 0.01, np.random.default_rng(17))
    assert np.all(b.alpha[b.winding >= bar_ctx.w_high] == 1.0)
    assert np.all(b.winding >= bar_ctx.w_low)
