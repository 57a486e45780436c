"""Compiled primitives shared by the BVH, winding-number and grid code.

Facet status codes: 0 regular, 1 zero-area triangle that still has an edge of
positive length (closest-point only), 2 collapsed (ignored everywhere).
"""
import math

import numpy as np
from numba import njit

REGULAR = 0
SLIVER = 1
COLLAPSED = 2

_STACK = 128


# -- closest point -----------------------------------------------------------

@njit(cache=True, nogil=True)
def _closest_on_segment(p, a, b, out):
    d = a.shape[0]
    ab2 = 0.0
    t = 0.0
    for k in range(d):
        e = b[k] - a[k]
        ab2 += e * e
        t += (p[k] - a[k]) * e
    if ab2 > 0.0:
        t = t / ab2
    else:
        t = 0.0
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    d2 = 0.0
    for k in range(d):
        out[k] = a[k] + t * (b[k] - a[k])
        diff = p[k] - out[k]
        d2 += diff * diff
    return d2


@njit(cache=True, nogil=True)
def _closest_on_triangle(p, a, b, c, out):
    # Ericson, Real-Time Collision Detection, 5.1.5
    ab0 = b[0] - a[0]; ab1 = b[1] - a[1]; ab2 = b[2] - a[2]
    ac0 = c[0] - a[0]; ac1 = c[1] - a[1]; ac2 = c[2] - a[2]
    ap0 = p[0] - a[0]; ap1 = p[1] - a[1]; ap2 = p[2] - a[2]
    d1 = ab0 * ap0 + ab1 * ap1 + ab2 * ap2
    d2 = ac0 * ap0 + ac1 * ap1 + ac2 * ap2
    u = 0.0
    v = 0.0
    done = False
    if d1 <= 0.0 and d2 <= 0.0:
        done = True
    if not done:
        bp0 = p[0] - b[0]; bp1 = p[1] - b[1]; bp2 = p[2] - b[2]
        d3 = ab0 * bp0 + ab1 * bp1 + ab2 * bp2
        d4 = ac0 * bp0 + ac1 * bp1 + ac2 * bp2
        if d3 >= 0.0 and d4 <= d3:
            u = 1.0
            done = True
        if not done:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                u = d1 / (d1 - d3)
                done = True
        if not done:
            cp0 = p[0] - c[0]; cp1 = p[1] - c[1]; cp2 = p[2] - c[2]
            d5 = ab0 * cp0 + ab1 * cp1 + ab2 * cp2
            d6 = ac0 * cp0 + ac1 * cp1 + ac2 * cp2
            if d6 >= 0.0 and d5 <= d6:
                v = 1.0
                done = True
            if not done:
                vb = d5 * d2 - d1 * d6
                if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                    v = d2 / (d2 - d6)
                    done = True
            if not done:
                va = d3 * d6 - d5 * d4
                if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                    w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                    u = 1.0 - w
                    v = w
                    done = True
            if not done:
                denom = 1.0 / (va + vb + vc)
                u = vb * denom
                v = vc * denom
    dist2 = 0.0
    for k in range(3):
        out[k] = a[k] + u * (b[k] - a[k]) + v * (c[k] - a[k])
        diff = p[k] - out[k]
        dist2 += diff * diff
    return dist2


@njit(cache=True, nogil=True)
def _closest_on_facet(p, verts, facets, status, f, out, tmp):
    d = verts.shape[1]
    if d == 2:
        return _closest_on_segment(p, verts[facets[f, 0]], verts[facets[f, 1]], out)
    a = verts[facets[f, 0]]
    b = verts[facets[f, 1]]
    c = verts[facets[f, 2]]
    if status[f] == REGULAR:
        return _closest_on_triangle(p, a, b, c, out)
    # sliver: nearest over its three edges
    best = _closest_on_segment(p, a, b, out)
    d2 = _closest_on_segment(p, b, c, tmp)
    if d2 < best:
        best = d2
        for k in range(3):
            out[k] = tmp[k]
    d2 = _closest_on_segment(p, c, a, tmp)
    if d2 < best:
        best = d2
        for k in range(3):
            out[k] = tmp[k]
    return best


@njit(cache=True, nogil=True)
def _box_dist2(p, lo, hi):
    s = 0.0
    for k in range(p.shape[0]):
        if p[k] < lo[k]:
            e = lo[k] - p[k]
            s += e * e
        elif p[k] > hi[k]:
            e = p[k] - hi[k]
            s += e * e
    return s


@njit(cache=True, nogil=True)
def closest_point_bvh(points, verts, facets, status, lo, hi, left, right,
                      start, count, order, out_pts, out_d2, out_fid):
    n, d = points.shape
    for i in range(n):
        p = points[i]
        best = np.inf
        best_f = -1
        cand = np.empty(d)
        tmp = np.empty(d)
        stack = np.empty(_STACK, dtype=np.int64)
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _box_dist2(p, lo[node], hi[node]) > best:
                continue
            if left[node] < 0:
                for j in range(start[node], start[node] + count[node]):
                    f = order[j]
                    d2 = _closest_on_facet(p, verts, facets, status, f, cand, tmp)
                    if d2 < best or (d2 == best and f < best_f):
                        best = d2
                        best_f = f
                        for k in range(d):
                            out_pts[i, k] = cand[k]
            else:
                l = left[node]
                r = right[node]
                dl = _box_dist2(p, lo[l], hi[l])
                dr = _box_dist2(p, lo[r], hi[r])
                # nearer child on top of the stack
                if dl <= dr:
                    stack[sp] = r
                    stack[sp + 1] = l
                else:
                    stack[sp] = l
                    stack[sp + 1] = r
                sp += 2
        out_d2[i] = best
        out_fid[i] = best_f


@njit(cache=True, nogil=True)
def closest_point_brute(points, verts, facets, status, out_pts, out_d2, out_fid):
    n, d = points.shape
    for i in range(n):
        p = points[i]
        best = np.inf
        best_f = -1
        cand = np.empty(d)
        tmp = np.empty(d)
        for f in range(facets.shape[0]):
            if status[f] == COLLAPSED:
                continue
            d2 = _closest_on_facet(p, verts, facets, status, f, cand, tmp)
            if d2 < best:
                best = d2
                best_f = f
                for k in range(d):
                    out_pts[i, k] = cand[k]
        out_d2[i] = best
        out_fid[i] = best_f


# -- segment occlusion -------------------------------------------------------

@njit(cache=True, nogil=True)
def _hit_segment2(p, q, a, b, eps):
    rx = q[0] - p[0]; ry = q[1] - p[1]
    ex = b[0] - a[0]; ey = b[1] - a[1]
    denom = rx * ey - ry * ex
    scale = math.sqrt((rx * rx + ry * ry) * (ex * ex + ey * ey))
    if abs(denom) <= 1e-15 * scale:
        return False
    apx = a[0] - p[0]; apy = a[1] - p[1]
    s = (apx * ey - apy * ex) / denom
    u = (apx * ry - apy * rx) / denom
    return 0.0 <= u <= 1.0 and eps < s < 1.0 - eps


@njit(cache=True, nogil=True)
def _hit_triangle(p, q, a, b, c, eps):
    # Moller-Trumbore with the unnormalised segment direction, so the ray
    # parameter is directly the fraction of the segment.
    d0 = q[0] - p[0]; d1 = q[1] - p[1]; d2 = q[2] - p[2]
    e10 = b[0] - a[0]; e11 = b[1] - a[1]; e12 = b[2] - a[2]
    e20 = c[0] - a[0]; e21 = c[1] - a[1]; e22 = c[2] - a[2]
    p0 = d1 * e22 - d2 * e21
    p1 = d2 * e20 - d0 * e22
    p2 = d0 * e21 - d1 * e20
    det = e10 * p0 + e11 * p1 + e12 * p2
    scale = math.sqrt((d0 * d0 + d1 * d1 + d2 * d2)
                      * (e10 * e10 + e11 * e11 + e12 * e12)
                      * (e20 * e20 + e21 * e21 + e22 * e22))
    if abs(det) <= 1e-15 * scale:
        return False
    inv = 1.0 / det
    t0 = p[0] - a[0]; t1 = p[1] - a[1]; t2 = p[2] - a[2]
    u = (t0 * p0 + t1 * p1 + t2 * p2) * inv
    if u < 0.0 or u > 1.0:
        return False
    q0 = t1 * e12 - t2 * e11
    q1 = t2 * e10 - t0 * e12
    q2 = t0 * e11 - t1 * e10
    v = (d0 * q0 + d1 * q1 + d2 * q2) * inv
    if v < 0.0 or u + v > 1.0:
        return False
    s = (e20 * q0 + e21 * q1 + e22 * q2) * inv
    return eps < s < 1.0 - eps


@njit(cache=True, nogil=True)
def _hit_facet(p, q, verts, facets, f, eps):
    if verts.shape[1] == 2:
        return _hit_segment2(p, q, verts[facets[f, 0]], verts[facets[f, 1]], eps)
    return _hit_triangle(p, q, verts[facets[f, 0]], verts[facets[f, 1]],
                         verts[facets[f, 2]], eps)


@njit(cache=True, nogil=True)
def _segment_box(p, q, lo, hi):
    tmin = 0.0
    tmax = 1.0
    for k in range(p.shape[0]):
        dk = q[k] - p[k]
        if dk == 0.0:
            if p[k] < lo[k] or p[k] > hi[k]:
                return False
        else:
            inv = 1.0 / dk
            t1 = (lo[k] - p[k]) * inv
            t2 = (hi[k] - p[k]) * inv
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return False
    return True


@njit(cache=True, nogil=True)
def occluded_bvh(p, q, verts, facets, status, lo, hi, left, right, start,
                 count, order, eps):
    stack = np.empty(_STACK, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _segment_box(p, q, lo[node], hi[node]):
            continue
        if left[node] < 0:
            for j in range(start[node], start[node] + count[node]):
                f = order[j]
                if status[f] != REGULAR:
                    continue
                if _hit_facet(p, q, verts, facets, f, eps):
                    return True
        else:
            stack[sp] = left[node]
            stack[sp + 1] = right[node]
            sp += 2
    return False


@njit(cache=True, nogil=True)
def visible_pairs_bvh(ps, qs, verts, facets, status, lo, hi, left, right,
                      start, count, order, eps, out):
    for i in range(ps.shape[0]):
        out[i] = not occluded_bvh(ps[i], qs[i], verts, facets, status, lo, hi,
                                  left, right, start, count, order, eps)


@njit(cache=True, nogil=True)
def visible_pairs_brute(ps, qs, verts, facets, status, eps, out):
    for i in range(ps.shape[0]):
        vis = True
        for f in range(facets.shape[0]):
            if status[f] != REGULAR:
                continue
            if _hit_facet(ps[i], qs[i], verts, facets, f, eps):
                vis = False
                break
        out[i] = vis


# -- winding numbers ---------------------------------------------------------

@njit(cache=True, nogil=True)
def winding_numbers(points, verts, facets, status, out):
    n, d = points.shape
    nf = facets.shape[0]
    for i in range(n):
        x = points[i]
        total = 0.0
        if d == 2:
            for f in range(nf):
                if status[f] != REGULAR:
                    continue
                a = verts[facets[f, 0]]
                b = verts[facets[f, 1]]
                ax = a[0] - x[0]; ay = a[1] - x[1]
                bx = b[0] - x[0]; by = b[1] - x[1]
                total += math.atan2(ax * by - ay * bx, ax * bx + ay * by)
            out[i] = total / (2.0 * math.pi)
        else:
            for f in range(nf):
                if status[f] != REGULAR:
                    continue
                a = verts[facets[f, 0]]
                b = verts[facets[f, 1]]
                c = verts[facets[f, 2]]
                a0 = a[0] - x[0]; a1 = a[1] - x[1]; a2 = a[2] - x[2]
                b0 = b[0] - x[0]; b1 = b[1] - x[1]; b2 = b[2] - x[2]
                c0 = c[0] - x[0]; c1 = c[1] - x[1]; c2 = c[2] - x[2]
                la = math.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
                lb = math.sqrt(b0 * b0 + b1 * b1 + b2 * b2)
                lc = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
                det = (a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0)
                       + a2 * (b0 * c1 - b1 * c0))
                den = (la * lb * lc + (a0 * b0 + a1 * b1 + a2 * b2) * lc
                       + (b0 * c0 + b1 * c1 + b2 * c2) * la
                       + (c0 * a0 + c1 * a1 + c2 * a2) * lb)
                total += 2.0 * math.atan2(det, den)
            out[i] = total / (4.0 * math.pi)


# -- uniform grid ------------------------------------------------------------

@njit(cache=True, nogil=True)
def _cell_range(x, r, origin, cell, dims, lo_out, hi_out):
    for k in range(x.shape[0]):
        a = int(math.floor((x[k] - r - origin[k]) / cell))
        b = int(math.floor((x[k] + r - origin[k]) / cell))
        if a < 0:
            a = 0
        if b > dims[k] - 1:
            b = dims[k] - 1
        lo_out[k] = a
        hi_out[k] = b


@njit(cache=True, nogil=True)
def grid_count(queries, radius, sites, origin, cell, dims, cell_start, order, out):
    """Number of sites within ``radius`` of each query."""
    n, d = queries.shape
    r2 = radius * radius
    for i in range(n):
        x = queries[i]
        lo = np.empty(d, dtype=np.int64)
        hi = np.empty(d, dtype=np.int64)
        _cell_range(x, radius, origin, cell, dims, lo, hi)
        c = 0
        if d == 2:
            for iy in range(lo[1], hi[1] + 1):
                for ix in range(lo[0], hi[0] + 1):
                    cid = ix + dims[0] * iy
                    for j in range(cell_start[cid], cell_start[cid + 1]):
                        s = order[j]
                        e0 = sites[s, 0] - x[0]
                        e1 = sites[s, 1] - x[1]
                        if e0 * e0 + e1 * e1 <= r2:
                            c += 1
        else:
            for iz in range(lo[2], hi[2] + 1):
                for iy in range(lo[1], hi[1] + 1):
                    for ix in range(lo[0], hi[0] + 1):
                        cid = ix + dims[0] * (iy + dims[1] * iz)
                        for j in range(cell_start[cid], cell_start[cid + 1]):
                            s = order[j]
                            e0 = sites[s, 0] - x[0]
                            e1 = sites[s, 1] - x[1]
                            e2 = sites[s, 2] - x[2]
                            if e0 * e0 + e1 * e1 + e2 * e2 <= r2:
                                c += 1
        out[i] = c


@njit(cache=True, nogil=True)
def grid_fill(queries, radius, sites, origin, cell, dims, cell_start, order,
              indptr, out_idx, out_d2):
    """Write neighbor indices (ascending) and squared distances per query."""
    n, d = queries.shape
    r2 = radius * radius
    for i in range(n):
        x = queries[i]
        lo = np.empty(d, dtype=np.int64)
        hi = np.empty(d, dtype=np.int64)
        _cell_range(x, radius, origin, cell, dims, lo, hi)
        p = indptr[i]
        if d == 2:
            for iy in range(lo[1], hi[1] + 1):
                for ix in range(lo[0], hi[0] + 1):
                    cid = ix + dims[0] * iy
                    for j in range(cell_start[cid], cell_start[cid + 1]):
                        s = order[j]
                        e0 = sites[s, 0] - x[0]
                        e1 = sites[s, 1] - x[1]
                        dd = e0 * e0 + e1 * e1
                        if dd <= r2:
                            out_idx[p] = s
                            out_d2[p] = dd
                            p += 1
        else:
            for iz in range(lo[2], hi[2] + 1):
                for iy in range(lo[1], hi[1] + 1):
                    for ix in range(lo[0], hi[0] + 1):
                        cid = ix + dims[0] * (iy + dims[1] * iz)
                        for j in range(cell_start[cid], cell_start[cid + 1]):
                            s = order[j]
                            e0 = sites[s, 0] - x[0]
                            e1 = sites[s, 1] - x[1]
                            e2 = sites[s, 2] - x[2]
                            dd = e0 * e0 + e1 * e1 + e2 * e2
                            if dd <= r2:
                                out_idx[p] = s
                                out_d2[p] = dd
                                p += 1
        # insertion sort by site index; rows are short
        a = indptr[i]
        for u in range(a + 1, p):
            ki = out_idx[u]
            kd = out_d2[u]
            w = u - 1
            while w >= a and out_idx[w] > ki:
                out_idx[w + 1] = out_idx[w]
                out_d2[w + 1] = out_d2[w]
                w -= 1
            out_idx[w + 1] = ki
            out_d2[w + 1] = kd
