"""IPC-style superposed barriers over every nearby vertex-segment and vertex-vertex pair."""
from __future__ import annotations

import numpy as np

from ..energy import Assembler
from ..errors import PenetrationError
from ..geometry import point_segment_distances
from .barrier import barrier_derivatives
from .nts import SurfaceFrame, closest_feature
from .primitives import point_point, point_segment


def constraint_set(p, poly, d_hat):
    """Active (kind, index, distance) pairs for probe ``p``.

    ``kind`` is ``"segment"`` or ``"vertex"``; distances are unsigned.
    """
    seg_d, _, _ = point_segment_distances(p, poly)
    vert_d = np.linalg.norm(poly.vertices - p, axis=1)
    active = [("segment", int(k), float(seg_d[k])) for k in np.flatnonzero(seg_d < d_hat)]
    active += [("vertex", int(j), float(vert_d[j])) for j in np.flatnonzero(vert_d < d_hat)]
    return active


def accumulate_ipc(asm, probes, probe_ids, poly, poly_ids, params):
    frame = SurfaceFrame(poly)
    d_hat, kappa = params.d_hat, params.kappa
    ia, ib = frame.seg_a, frame.seg_b
    V = poly.vertices
    n_active = 0
    for i, p in enumerate(probes):
        # no continuous collision detection: a probe that jumped through the
        # surface still has a positive unsigned distance, so check the side too
        gap, *_ = closest_feature(p, frame)
        if gap <= 0.0:
            raise PenetrationError(gap=gap)
        for kind, j, dist in constraint_set(p, poly, d_hat):
            n_active += 1
            phi, d1, d2 = barrier_derivatives(dist, d_hat)
            if kind == "segment":
                ids = [probe_ids[i], poly_ids[ia[j]], poly_ids[ib[j]]]
                if asm.order == 0:
                    asm.add(ids, kappa * phi)
                    continue
                _, grad, hess, _ = point_segment(p, V[ia[j]], V[ib[j]])
            else:
                ids = [probe_ids[i], poly_ids[j]]
                if asm.order == 0:
                    asm.add(ids, kappa * phi)
                    continue
                _, grad, hess = point_point(p, V[j])
            asm.add(ids, kappa * phi, kappa * d1 * grad,
                    kappa * (d2 * np.outer(grad, grad) + d1 * hess))
    return n_active


def energy_ipc(probe_vertices, poly, params, order=2):
    """IPC contact energy over coordinates ``[probes, polyline vertices]``."""
    probes = np.atleast_2d(np.asarray(probe_vertices, dtype=float))
    m, n = len(probes), len(poly)
    asm = Assembler(2 * (m + n), order)
    n_active = accumulate_ipc(asm, probes, np.arange(m), poly, np.arange(m, m + n), params)
    return asm.finish(active_pairs=n_active)
