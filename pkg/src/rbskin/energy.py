"""Monte Carlo biharmonic energy with a stochastic Laplacian, and its exact gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import KernelField
from .geometry import WindingContext, closest_point, sample_interior, unit_directions


@dataclass
class EnergyBatch:
    """One draw of interior samples and probe directions.

    ``alpha`` is the clipped winding-number ramp; ``volume`` the domain
    measure used to scale the Monte Carlo sum.
    """

    y: np.ndarray
    winding: np.ndarray
    v: np.ndarray
    h: float
    alpha: np.ndarray
    volume: float

    def __post_init__(self):
        if len(self.y) == 0:
            raise ValueError("empty batch")
        if self.v.shape != self.y.shape:
            raise ValueError("need one direction per sample")
        if not self.h > 0:
            raise ValueError("h must be positive")

    @property
    def size(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.y.shape[1]


def draw_batch(ctx: WindingContext, m: int, h: float, rng, volume=None) -> EnergyBatch:
    """Fresh samples by rejection plus uniform directions.

    ``volume`` defaults to this draw's own acceptance-ratio estimate.
    """
    rng = np.random.default_rng(rng)
    smp = sample_interior(ctx, m, rng)
    v = unit_directions(m, ctx.shape.dim, rng)
    vol = smp.volume if volume is None else float(volume)
    return EnergyBatch(smp.points, smp.winding, v, float(h), ctx.ramp(smp.winding), vol)


def stochastic_laplacian(f, y, v, h, scale=None):
    """``scale * (-2 f(y) + f(y + h v) + f(y - h v)) / h^2``, per sample and channel.

    ``f`` is a ``KernelField`` (probes use ``y`` as visibility anchor) or any
    callable mapping ``(n, d)`` points to ``(n,)`` or ``(n, K)`` values.
    ``scale`` defaults to the dimension ``d``, which makes the mean over
    uniform directions equal the Laplacian for quadratics.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    scale = y.shape[1] if scale is None else scale
    q = np.vstack([y, y + h * v, y - h * v])
    if isinstance(f, KernelField):
        vals = f.evaluate(q, np.vstack([y, y, y]))
    else:
        vals = np.asarray(f(q), dtype=float)
    m = len(y)
    return scale * (-2.0 * vals[:m] + vals[m:2 * m] + vals[2 * m:]) / (h * h)


def _probe_plan(fld: KernelField, batch: EnergyBatch):
    y, v, h = batch.y, batch.v, batch.h
    m = batch.size
    q = np.vstack([y, y + h * v, y - h * v])
    anchors = np.vstack([y, y, y])
    groups = np.tile(np.arange(m, dtype=np.int64), 3)
    t = closest_point(fld.shape, y).distance
    return fld.plan(q, anchors, groups, np.tile(t, 3))


def energy_and_gradient(fld: KernelField, batch: EnergyBatch, scale=None, features=None):
    """Batch energy and its exact derivative with respect to every feature.

    The energy is ``V/M * sum_j sum_i (alpha_j * L_ij)^2`` with ``L`` the
    stochastic Laplacian of weight channel ``i`` at sample ``j``.
    """
    features = fld.features if features is None else features
    scale = batch.dim if scale is None else scale
    m, h2 = batch.size, batch.h * batch.h
    plan = _probe_plan(fld, batch)
    w, cache = plan.forward(features)
    lap = scale * (-2.0 * w[:m] + w[m:2 * m] + w[2 * m:]) / h2
    coef = batch.volume / m * batch.alpha ** 2
    energy = float(np.sum(coef[:, None] * lap * lap))
    d_lap = 2.0 * coef[:, None] * lap * (scale / h2)
    grad_w = np.vstack([-2.0 * d_lap, d_lap, d_lap])
    return energy, plan.backward(cache, grad_w)


def batch_energy(fld: KernelField, batch: EnergyBatch, scale=None, features=None) -> float:
    features = fld.features if features is None else features
    scale = batch.dim if scale is None else scale
    m, h2 = batch.size, batch.h * batch.h
    w, _ = _probe_plan(fld, batch).forward(features)
    lap = scale * (-2.0 * w[:m] + w[m:2 * m] + w[2 * m:]) / h2
    coef = batch.volume / m * batch.alpha ** 2
    return float(np.sum(coef[:, None] * lap * lap))


def batch_gradient(fld: KernelField, batch: EnergyBatch, scale=None, features=None):
    return energy_and_gradient(fld, batch, scale, features)[1]
