from __future__ import annotations

import numpy as np

from . import _kernels as K

LEAF_SIZE = 4


class BVH:
    """Axis-aligned bounding-volume hierarchy over the non-collapsed facets.

    Flattened into arrays so the compiled traversals can walk it; node 0 is
    the root. Leaves have ``left == -1`` and own ``order[start:start+count]``.
    """

    def __init__(self, vertices, facets, status):
        self.vertices = vertices
        self.facets = facets
        self.status = status
        d = vertices.shape[1]
        live = np.flatnonzero(status != K.COLLAPSED)
        if len(live) == 0:
            self.empty = True
            live = np.zeros(0, dtype=np.int64)
        else:
            self.empty = False
        tri = vertices[facets[live]] if len(live) else np.zeros((0, d, d))
        fmin = tri.min(axis=1) if len(live) else np.zeros((0, d))
        fmax = tri.max(axis=1) if len(live) else np.zeros((0, d))
        cent = 0.5 * (fmin + fmax)

        lo, hi, left, right, start, count = [], [], [], [], [], []
        order = live.copy()

        def node(a, b):
            i = len(lo)
            lo.append(fmin[a:b].min(axis=0) if b > a else np.zeros(d))
            hi.append(fmax[a:b].max(axis=0) if b > a else np.zeros(d))
            left.append(-1)
            right.append(-1)
            start.append(a)
            count.append(b - a)
            return i

        # iterative median split on the widest centroid axis
        root = node(0, len(order))
        todo = [(root, 0, len(order))]
        while todo:
            i, a, b = todo.pop()
            if b - a <= LEAF_SIZE:
                continue
            c = cent[a:b]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (b - a) // 2
            perm = np.argpartition(c[:, axis], mid, kind="introselect")
            order[a:b] = order[a:b][perm]
            fmin[a:b] = fmin[a:b][perm]
            fmax[a:b] = fmax[a:b][perm]
            cent[a:b] = cent[a:b][perm]
            l = node(a, a + mid)
            r = node(a + mid, b)
            left[i], right[i], count[i] = l, r, 0
            todo.append((l, a, a + mid))
            todo.append((r, a + mid, b))

        self.lo = np.ascontiguousarray(lo, dtype=np.float64).reshape(-1, d)
        self.hi = np.ascontiguousarray(hi, dtype=np.float64).reshape(-1, d)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.start = np.asarray(start, dtype=np.int64)
        self.count = np.asarray(count, dtype=np.int64)
        self.order = np.ascontiguousarray(order, dtype=np.int64)

    @property
    def arrays(self):
        return (self.lo, self.hi, self.left, self.right, self.start, self.count, self.order)

    def closest(self, points):
        points = np.ascontiguousarray(points, dtype=np.float64)
        n, d = points.shape
        out = np.zeros((n, d))
        d2 = np.zeros(n)
        fid = np.zeros(n, dtype=np.int64)
        K.closest_point_bvh(points, self.vertices, self.facets, self.status,
                            *self.arrays, out, d2, fid)
        return out, d2, fid

    def visible(self, p, q, eps):
        p = np.ascontiguousarray(p, dtype=np.float64)
        q = np.ascontiguousarray(q, dtype=np.float64)
        out = np.zeros(len(p), dtype=np.bool_)
        K.visible_pairs_bvh(p, q, self.vertices, self.facets, self.status,
                            *self.arrays, eps, out)
        return out
