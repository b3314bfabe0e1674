"""Distance primitives with analytic gradients and Hessians.

Local variable order is the concatenation of the listed points, each as
(x, y): ``point_point`` works on (p, a) and the line/segment functions on
(p, a, b).
"""
from __future__ import annotations

import numpy as np

from ..geometry import ROT90

_I2 = np.eye(2)


def point_point(p, a):
    """Distance ``|p - a|`` with gradient (4,) and Hessian (4, 4)."""
    u = np.asarray(p, dtype=float) - np.asarray(a, dtype=float)
    d = float(np.hypot(u[0], u[1]))
    uh = u / d
    g_u = uh
    h_u = (_I2 - np.outer(uh, uh)) / d
    grad = np.concatenate([g_u, -g_u])
    hess = np.block([[h_u, -h_u], [-h_u, h_u]])
    return d, grad, hess


def point_line(p, a, b):
    """Signed distance of ``p`` to the line through ``a, b``, positive on the left.

    Uses ``cross(b - a, p - a) / |b - a|``.
    """
    p, a, b = (np.asarray(z, dtype=float) for z in (p, a, b))
    u = p - a
    t = b - a
    L2 = float(t @ t)
    L = np.sqrt(L2)
    c = t[0] * u[1] - t[1] * u[0]
    g = c / L
    Jt = ROT90 @ t
    Ju = ROT90 @ u
    g_u = Jt / L
    g_t = -Ju / L - c * t / (L2 * L)
    h_ut = ROT90 / L - np.outer(Jt, t) / (L2 * L)
    h_tt = (np.outer(Ju, t) + np.outer(t, Ju)) / (L2 * L) - c * _I2 / (L2 * L) \
        + 3.0 * c * np.outer(t, t) / (L2 * L2 * L)
    # u = p - a, t = b - a
    Au = np.hstack([_I2, -_I2, np.zeros((2, 2))])
    At = np.hstack([np.zeros((2, 2)), -_I2, _I2])
    grad = Au.T @ g_u + At.T @ g_t
    cross_term = Au.T @ h_ut @ At
    hess = cross_term + cross_term.T + At.T @ h_tt @ At
    return g, grad, hess


def _embed_point_point(d, grad4, hess4, which):
    """Lift (p, endpoint) derivatives into the (p, a, b) layout."""
    cols = [0, 1, 2, 3] if which == 0 else [0, 1, 4, 5]
    grad = np.zeros(6)
    hess = np.zeros((6, 6))
    grad[cols] = grad4
    hess[np.ix_(cols, cols)] = hess4
    return d, grad, hess


def point_segment(p, a, b):
    """Unsigned point-segment distance with derivatives over (p, a, b).

    Returns ``(distance, grad, hess, bary)``. Where the projection is clamped,
    the distance is the point-point distance to that endpoint.
    """
    p, a, b = (np.asarray(z, dtype=float) for z in (p, a, b))
    t = b - a
    s = float((p - a) @ t) / float(t @ t)
    if s <= 0.0:
        d, g, h = _embed_point_point(*point_point(p, a), which=0)
        return d, g, h, 0.0
    if s >= 1.0:
        d, g, h = _embed_point_point(*point_point(p, b), which=1)
        return d, g, h, 1.0
    d, g, h = point_line(p, a, b)
    if d < 0.0:
        d, g, h = -d, -g, -h
    return d, g, h, s
