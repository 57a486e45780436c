import numpy as np
import pytest

from rbskin import scenes
from rbskin.config import SolveConfig
from rbskin.field import initial_field, upsample
from rbskin.geometry import BoundaryShape, WindingContext, sample_interior
from rbskin.optim import AdamState, NonFiniteError, adam_step, train
from rbskin.skeleton import Handle, HandleSet

SMALL = dict(steps=40, batch_size=256, n_initial=256, upsamplings=2)


def test_zero_gradient_first_step_is_noop():
    st = AdamState.zeros((3, 2))
    p = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(adam_step(st, np.zeros((3, 2)), p), p)


def test_hand_computed_first_step():
    st = AdamState.zeros((1,), lr=0.2, beta1=0.9, beta2=0.8)
    out = adam_step(st, np.ones(1), np.zeros(1))
    assert out[0] == pytest.approx(-0.2 / (1 + 1e-8), abs=1e-15)


def test_reference_trace_on_quadratic():
    a = np.diag([1.0, 10.0, 0.1])
    target = np.array([1.0, -2.0, 0.5])
    st = AdamState.zeros((3,))
    x = np.zeros(3)
    m = np.zeros(3)
    v = np.zeros(3)
    ref = np.zeros(3)
    for t in range(1, 201):
        g = a @ (x - target)
        x = adam_step(st, g, x)
        gr = a @ (ref - target)
        m = 0.9 * m + (1 - 0.9) * gr
        v = 0.8 * v + (1 - 0.8) * gr * gr
        ref = ref - 0.2 * ((m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.8 ** t)) + 1e-8))
        np.testing.assert_allclose(x, ref, rtol=0, atol=1e-12)


def test_non_finite_gradient_aborts():
    st = AdamState.zeros((2,))
    with pytest.raises(NonFiniteError):
        adam_step(st, np.array([1.0, np.nan]), np.zeros(2))
    with pytest.raises(ValueError):
        adam_step(st, np.zeros(3), np.zeros(2))


def test_upsample_steps_and_learning_rate(bar_shape, bar_handles):
    cfg = SolveConfig(**SMALL)
    assert cfg.upsample_steps == [13, 26]
    assert SolveConfig().upsample_steps == [1500, 3000, 4500]
    r = train(cfg, bar_shape, bar_handles)
    lrs = {rec.n_sites: rec.lr for rec in r.trace}
    assert lrs == {256: 0.2, 512: 0.2 * 0.3, 1024: 0.2 * 0.3 * 0.3}
    assert [rec.step for rec in r.trace] == list(range(40))


def test_descent_on_bar(bar_shape, bar_handles):
    r = train(SolveConfig(steps=60, batch_size=512, n_initial=512, upsamplings=1), bar_shape, bar_handles)
    losses = r.losses
    assert np.all(np.isfinite(losses))
    assert losses[-10:].mean() < losses[0]


def test_bitwise_determinism(bar_shape, bar_handles):
    cfg = SolveConfig(**SMALL)
    a = train(cfg, bar_shape, bar_handles)
    b = train(cfg, bar_shape, bar_handles)
    assert np.array_equal(a.field.features, b.field.features)
    assert np.array_equal(a.losses, b.losses)


def test_single_handle_is_constant_one():
    shape = BoundaryShape.from_arrays(*scenes.polygon(
        [(np.cos(t), np.sin(t)) for t in np.linspace(0, 2 * np.pi, 48, endpoint=False)]))
    hs = HandleSet([Handle.point(shape.normalization.apply([0.1, 0.2]))])
    r = train(SolveConfig(**SMALL), shape, hs)
    x = sample_interior(WindingContext(shape), 500, np.random.default_rng(0)).points
    np.testing.assert_allclose(r.field.evaluate(x), 1.0, atol=1e-12)


def test_moment_interpolation_of_constants(bar_shape, bar_handles, bar_ctx):
    smp = sample_interior(bar_ctx, 256, np.random.default_rng(0))
    fld = initial_field(bar_shape, bar_handles, smp.points)
    m = np.full(fld.features.shape, 0.7)
    v = np.full(fld.features.shape, 2.5)
    new, (m2, v2) = upsample(fld, bar_ctx, np.random.default_rng(1), [m, v])
    assert new.n_sites == 512
    np.testing.assert_allclose(m2, 0.7, atol=1e-14)
    np.testing.assert_allclose(v2, 2.5, atol=1e-14)
    np.testing.assert_array_equal(new.sites[:256], fld.sites)


def test_argmin_invariance_under_scale(bar_shape, bar_handles):
    cfg = SolveConfig(**SMALL, adam_eps=0.0)
    a = train(cfg, bar_shape, bar_handles)
    b = train(cfg.with_updates(dimension_scaling=False), bar_shape, bar_handles)
    wa = a.field.evaluate(a.field.sites)
    wb = b.field.evaluate(b.field.sites)
    assert np.abs(wa - wb).max() <= 1e-10


def test_handle_outside_warns(bar_shape, caplog):
    hs = HandleSet([Handle.point([0.5, 0.125]), Handle.point([0.5, 0.9])])
    with caplog.at_level("WARNING"):
        train(SolveConfig(steps=2, batch_size=64, n_initial=64, upsamplings=0), bar_shape, hs)
    assert "outside" in caplog.text
