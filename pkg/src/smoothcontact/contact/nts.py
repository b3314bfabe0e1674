"""Node-to-segment contact: each probe pairs with its single closest segment."""
from __future__ import annotations

import numpy as np

from ..energy import Assembler
from ..errors import PenetrationError
from ..geometry import point_segment_distances
from .barrier import barrier_derivatives
from .primitives import point_line, point_point


class SurfaceFrame:
    """Per-evaluation cache of segment and pseudo-normals for sign tests."""

    def __init__(self, poly):
        self.poly = poly
        self.seg_a, self.seg_b = poly.segment_ends()
        self.seg_normals = poly.segment_normals()
        pseudo = np.zeros_like(poly.vertices)
        np.add.at(pseudo, self.seg_a, self.seg_normals)
        np.add.at(pseudo, self.seg_b, self.seg_normals)
        self.pseudo_normals = pseudo


def closest_feature(p, frame):
    """Signed closest-point distance of ``p`` to the polyline.

    Returns ``(gap, segment_index, closest, bary)``. The closest segment is the
    one with smallest unsigned distance, ties going to the lowest index. The
    sign comes from the segment normal for interior projections and from the
    vertex pseudo-normal when the projection is clamped to an endpoint.
    """
    dist, closest, bary = point_segment_distances(np.asarray(p, dtype=float), frame.poly)
    k = int(np.argmin(dist))
    c = closest[k]
    s = bary[k]
    if 0.0 < s < 1.0:
        normal = frame.seg_normals[k]
    else:
        normal = frame.pseudo_normals[frame.seg_a[k] if s <= 0.0 else frame.seg_b[k]]
    side = float(normal @ (p - c))
    gap = dist[k] if side > 0.0 else -dist[k]
    return float(gap), k, c, float(s)


def gap_nts(p, poly):
    """Signed gap, closest segment index and closest point."""
    gap, k, c, _ = closest_feature(p, SurfaceFrame(poly))
    return gap, k, c


def _gap_derivatives(p, frame, k, bary, gap):
    """Gradient/Hessian of the signed gap over (p, a_k, b_k)."""
    poly = frame.poly
    a = poly.vertices[frame.seg_a[k]]
    b = poly.vertices[frame.seg_b[k]]
    if 0.0 < bary < 1.0:
        g, grad, hess = point_line(p, a, b)
        sign = poly.orientation
        return sign * grad, sign * hess
    _, grad4, hess4 = point_point(p, a if bary <= 0.0 else b)
    cols = [0, 1, 2, 3] if bary <= 0.0 else [0, 1, 4, 5]
    sign = 1.0 if gap > 0 else -1.0
    grad = np.zeros(6)
    hess = np.zeros((6, 6))
    grad[cols] = sign * grad4
    hess[np.ix_(cols, cols)] = sign * hess4
    return grad, hess


def accumulate_nts(asm, probes, probe_ids, poly, poly_ids, params):
    frame = SurfaceFrame(poly)
    d_hat, kappa = params.d_hat, params.kappa
    for i, p in enumerate(probes):
        gap, k, _, bary = closest_feature(p, frame)
        if gap <= 0.0:
            raise PenetrationError(gap=gap)
        if gap >= d_hat:
            continue
        phi, d1, d2 = barrier_derivatives(gap, d_hat)
        ids = [probe_ids[i], poly_ids[frame.seg_a[k]], poly_ids[frame.seg_b[k]]]
        if asm.order == 0:
            asm.add(ids, kappa * phi)
            continue
        grad, hess = _gap_derivatives(p, frame, k, bary, gap)
        asm.add(ids, kappa * phi, kappa * d1 * grad,
                kappa * (d2 * np.outer(grad, grad) + d1 * hess))


def energy_nts(probe_vertices, poly, params, order=2):
    """NTS contact energy over coordinates ``[probes, polyline vertices]``."""
    probes = np.atleast_2d(np.asarray(probe_vertices, dtype=float))
    m, n = len(probes), len(poly)
    asm = Assembler(2 * (m + n), order)
    accumulate_nts(asm, probes, np.arange(m), poly, np.arange(m, m + n), params)
    return asm.finish()
