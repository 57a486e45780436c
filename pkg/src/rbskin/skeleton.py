"""Control handles and the mollified handle indicator."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

POINT = "point"
BONE = "bone"


def smoothstep(s):
    """Cubic Hermite ``3s^2 - 2s^3`` with ``s`` clamped to ``[0, 1]``."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


@dataclass(frozen=True)
class Handle:
    kind: str
    points: np.ndarray  # (1, d) for a point, (2, d) for a bone

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if self.kind == POINT and len(pts) != 1:
            raise ValueError("point handle takes exactly one position")
        if self.kind == BONE:
            if len(pts) != 2:
                raise ValueError("bone handle takes exactly two endpoints")
            if np.linalg.norm(pts[1] - pts[0]) <= 1e-9:
                raise ValueError("bone endpoints coincide")
        if self.kind not in (POINT, BONE):
            raise ValueError(f"unknown handle kind {self.kind!r}")

    @classmethod
    def point(cls, p) -> "Handle":
        return cls(POINT, np.asarray(p, dtype=float)[None, :])

    @classmethod
    def bone(cls, a, b) -> "Handle":
        return cls(BONE, np.stack([np.asarray(a, dtype=float), np.asarray(b, dtype=float)]))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def sample(self, n: int) -> np.ndarray:
        """``n`` points on the handle (evenly spaced along a bone's interior)."""
        if self.kind == POINT:
            return np.repeat(self.points, n, axis=0)
        t = (np.arange(n) + 0.5) / n
        a, b = self.points
        return a + t[:, None] * (b - a)

    def transformed(self, fn) -> "Handle":
        return Handle(self.kind, fn(self.points))


def handle_distance(h: Handle, x) -> np.ndarray:
    """Euclidean distance from ``x`` to a point handle or a closed bone segment."""
    x = np.asarray(x, dtype=float)
    if h.kind == POINT:
        return np.linalg.norm(x - h.points[0], axis=-1)
    a, b = h.points
    ab = b - a
    t = np.clip(((x - a) @ ab) / (ab @ ab), 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(x - proj, axis=-1)


class HandleSet:
    """Ordered handles plus the radius of the Lagrange mollifier."""

    def __init__(self, handles: Sequence[Handle], eps: float | None = None):
        self.handles = list(handles)
        if not self.handles:
            raise ValueError("need at least one handle")
        dims = {h.dim for h in self.handles}
        if len(dims) != 1:
            raise ValueError("handles have mixed dimensions")
        if eps is not None and not eps > 0:
            raise ValueError("Lagrange radius must be positive")
        self.eps = eps

    def __len__(self):
        return len(self.handles)

    def __iter__(self):
        return iter(self.handles)

    def __getitem__(self, i):
        return self.handles[i]

    @property
    def dim(self) -> int:
        return self.handles[0].dim

    def with_eps(self, eps: float) -> "HandleSet":
        return HandleSet(self.handles, eps)

    def distances(self, x) -> np.ndarray:
        """``(n, K)`` distances from each point to each handle."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([handle_distance(h, x) for h in self.handles], axis=1)

    def isolated(self, i: int, margin: float | None = None) -> bool:
        """True if no other handle comes within ``margin`` (default ``eps``) of handle ``i``."""
        margin = self.eps if margin is None else margin
        pts = self.handles[i].sample(64)
        if self.handles[i].kind == BONE:
            pts = np.vstack([pts, self.handles[i].points])
        d = self.distances(pts)
        d[:, i] = np.inf
        return bool(d.min() >= margin)

    def transformed(self, fn) -> "HandleSet":
        return HandleSet([h.transformed(fn) for h in self.handles], self.eps)


def lagrange_mollifier(hs: HandleSet, x):
    """Mollified handle indicator and the scalar bump around all handles.

    Returns ``(e, bbar)`` with ``e`` of shape ``(n, K)``; ``e.sum(1) == bbar``
    wherever some handle is within ``eps`` and both vanish elsewhere.
    """
    if hs.eps is None:
        raise ValueError("HandleSet has no Lagrange radius set")
    d = hs.distances(x)
    s = smoothstep(d * d / (hs.eps * hs.eps))
    b = 1.0 - s
    bbar = 1.0 - s.min(axis=1)
    total = b.sum(axis=1)
    e = np.zeros_like(b)
    ok = total > 0
    e[ok] = b[ok] / total[ok, None] * bbar[ok, None]
    bbar = np.where(ok, bbar, 0.0)
    return e, bbar


def load_skeleton(path, normalization=None) -> HandleSet:
    """Read a ``{"handles": [...]}`` JSON skeleton, mapping it into normalized space."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return skeleton_from_dict(doc, normalization)


def skeleton_from_dict(doc, normalization=None) -> HandleSet:
    fn = normalization.apply if normalization is not None else (lambda p: np.asarray(p, dtype=float))
    handles = []
    for i, entry in enumerate(doc["handles"]):
        kind = entry.get("type")
        if kind == POINT:
            handles.append(Handle.point(fn(entry["p"])))
        elif kind == BONE:
            handles.append(Handle.bone(fn(entry["a"]), fn(entry["b"])))
        else:
            raise ValueError(f"handle {i}: unknown type {kind!r}")
    return HandleSet(handles)


def skeleton_to_dict(hs: HandleSet, normalization=None) -> dict:
    fn = normalization.invert if normalization is not None else (lambda p: p)
    out = []
    for h in hs:
        pts = fn(h.points)
        if h.kind == POINT:
            out.append({"type": POINT, "p": pts[0].tolist()})
        else:
            out.append({"type": BONE, "a": pts[0].tolist(), "b": pts[1].tolist()})
    return {"handles": out}
