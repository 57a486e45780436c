"""Adam, the multiscale schedule, and the training loop."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field as dc_field
from typing import Callable, NamedTuple

import numpy as np

from .config import SolveConfig
from .energy import draw_batch, energy_and_gradient
from .field import KernelField, initial_field, upsample
from .geometry import BoundaryShape, WindingContext, sample_interior, winding_number
from .skeleton import HandleSet

logger = logging.getLogger(__name__)


class NonFiniteError(FloatingPointError):
    """A loss or gradient went NaN/inf during training."""


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.8
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def zeros(cls, shape, **kw) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), **kw)


def adam_step(state: AdamState, grad, params):
    """One bias-corrected Adam update; returns new parameters, mutates ``state``.

    With ``eps == 0`` an entry whose moments are both zero gets no update.
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.m.shape or np.shape(params) != grad.shape:
        raise ValueError("shape mismatch between state, gradient and parameters")
    if not np.all(np.isfinite(grad)):
        bad = np.argwhere(~np.isfinite(grad))
        raise NonFiniteError(f"non-finite gradient at {len(bad)} entries, first {bad[0].tolist()}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * grad
    state.v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    denom = np.sqrt(v_hat) + state.eps
    with np.errstate(invalid="ignore", divide="ignore"):
        upd = np.where(denom > 0, m_hat / denom, 0.0)
    return params - state.lr * upd


class LossRecord(NamedTuple):
    step: int
    loss: float
    lr: float
    n_sites: int


@dataclass
class TrainResult:
    field: KernelField
    trace: list
    volume: float
    acceptance_ratio: float
    timings: dict = dc_field(default_factory=dict)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.trace])


def site_rng(seed):
    return np.random.default_rng([seed, 0])


def upsample_rng(seed, k):
    return np.random.default_rng([seed, 1, k])


def batch_rng(seed, step):
    return np.random.default_rng([seed, 2, step])


def train(cfg: SolveConfig, shape: BoundaryShape, handles: HandleSet,
          callback: Callable | None = None, on_batch: Callable | None = None) -> TrainResult:
    """Run the full multiscale schedule from zero features.

    ``callback(event, step, field)`` fires with ``"upsample"`` after each
    level change and ``"done"`` at the end (used for checkpoints).
    ``on_batch(step, batch)`` sees every training batch before it is used.
    """
    cfg = cfg.resolved(shape.dim)
    ctx = WindingContext(shape, cfg.w_low, cfg.w_high)
    timings = {"sampling": 0.0, "optimization": 0.0, "upsampling": 0.0}

    t0 = time.perf_counter()
    smp = sample_interior(ctx, cfg.n_initial, site_rng(cfg.seed))
    fld = initial_field(shape, handles, smp.points, knn=cfg.knn,
                        eps_lagrange=cfg.eps_lagrange or None,
                        eps_neumann=cfg.eps_neumann or None,
                        radius_factor=cfg.radius_factor, visibility=cfg.visibility)
    timings["sampling"] += time.perf_counter() - t0
    for i, h in enumerate(handles):
        if np.min(winding_number(ctx, h.sample(4))) < cfg.w_high:
            logger.warning("handle %d lies outside (or on the edge of) the shape", i)

    state = AdamState.zeros(fld.features.shape, lr=cfg.lr, beta1=cfg.beta1,
                            beta2=cfg.beta2, eps=cfg.adam_eps)
    scale = shape.dim if cfg.dimension_scaling else 1.0
    ups = cfg.upsample_steps
    trace = []
    for step in range(cfg.steps):
        if step in ups:
            t1 = time.perf_counter()
            k = ups.index(step)
            fld, (state.m, state.v) = upsample(fld, ctx, upsample_rng(cfg.seed, k), [state.m, state.v])
            state.lr *= cfg.lr_decay
            timings["upsampling"] += time.perf_counter() - t1
            logger.info("step %d: upsampled to N=%d, sigma=%.4g", step, fld.n_sites, fld.sigma)
            if callback is not None:
                callback("upsample", step, fld)
        t1 = time.perf_counter()
        batch = draw_batch(ctx, cfg.batch_size, cfg.h_factor * fld.sigma,
                           batch_rng(cfg.seed, step), volume=smp.volume)
        if on_batch is not None:
            on_batch(step, batch)
        loss, grad = energy_and_gradient(fld, batch, scale)
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite loss at step {step}")
        trace.append(LossRecord(step, loss, state.lr, fld.n_sites))
        fld.set_features(adam_step(state, grad, fld.features))
        timings["optimization"] += time.perf_counter() - t1
    if callback is not None:
        callback("done", cfg.steps, fld)
    return TrainResult(fld, trace, smp.volume, smp.acceptance_ratio, timings)
