"""Robust implicit moving least squares (IMLS) distance and smooth contact.

The surface of an obstacle is the zero level set of

    psi(x) = sum_i a_i phi_i(x) n_i . (x - x_i) / sum_i a_i phi_i(x),

with compactly supported kernels ``phi_i(x) = (1 - |x - x_i|^2 / R^2)^4`` and
robust weights ``a_i`` from a few rounds of iteratively re-weighted least
squares. Derivatives treat the robust weights of the final round as
constants, so the energy seen by the solver is the frozen-weight energy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..energy import Assembler
from ..errors import OutOfSupportError, PenetrationError
from ..geometry import ROT90, PointCloud, Polyline, SupportGrid, vertex_normals
from .barrier import barrier_derivatives
from .nts import SurfaceFrame, closest_feature

_I2 = np.eye(2)


@dataclass(frozen=True)
class ImlsParams:
    """Kernel support radius ``R`` (m), robust scales and IRLS round count."""

    R: float
    sigma_r: float = 0.5
    sigma_n: float = 1.0
    irls_iters: int = 1

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not (self.sigma_r > 0 and self.sigma_n > 0):
            raise ValueError("sigma_r and sigma_n must be positive")
        if self.irls_iters < 0:
            raise ValueError("irls_iters must be >= 0")


class ImlsValue(NamedTuple):
    psi: float
    grad: np.ndarray
    weights: np.ndarray
    support: list


def _surface_normals(surface):
    if isinstance(surface, PointCloud):
        return surface.normals
    return vertex_normals(surface).normals


def _kernel(d, R):
    base = 1.0 - np.einsum("ij,ij->i", d, d) / (R * R)
    phi = base**4
    dphi = (-8.0 / (R * R)) * (base**3)[:, None] * d
    return base, phi, dphi


def _weighted_pass(p, X, N, a, R):
    """IMLS value and spatial gradient for fixed per-sample weights ``a``."""
    d = p - X
    _, phi, dphi = _kernel(d, R)
    u = np.einsum("ij,ij->i", N, d)
    aw = a * phi
    D = aw.sum()
    psi = float(aw @ u) / D
    grad = (aw @ N + (a * (u - psi)) @ dphi) / D
    return psi, grad, u


def robust_weights(p, X, N, params):
    """Run the IRLS rounds; returns ``(weights, psi, grad)`` of the last round."""
    a = np.ones(len(X))
    psi, grad, u = _weighted_pass(p, X, N, a, params.R)
    for _ in range(params.irls_iters):
        r = psi - u
        dn = grad - N
        a = np.exp(-(r / params.sigma_r) ** 2) \
            * np.exp(-np.einsum("ij,ij->i", dn, dn) / params.sigma_n**2)
        psi, grad, u = _weighted_pass(p, X, N, a, params.R)
    return a, psi, grad


def imls_value(x, surface, params, grid=None):
    """Robust IMLS signed distance at ``x``.

    ``surface`` is a :class:`Polyline` (normals derived from its vertices) or a
    :class:`PointCloud` (normals given).
    """
    x = np.asarray(x, dtype=float)
    grid = grid or SupportGrid(surface.vertices, params.R)
    support = grid.query(x)
    if not support:
        raise OutOfSupportError()
    N = _surface_normals(surface)[support]
    a, psi, grad = robust_weights(x, surface.vertices[support], N, params)
    return ImlsValue(psi, grad, a, support)


def _psi_sample_derivatives(p, X, N, a, R):
    """Gradient/Hessian of psi over per-sample variables ``(x - x_i, n_i)``."""
    k = len(X)
    d = p - X
    base, phi, dphi = _kernel(d, R)
    Hphi = (-8.0 / R**2) * (base**3)[:, None, None] * _I2 \
        + (48.0 / R**4) * (base**2)[:, None, None] * np.einsum("ij,ik->ijk", d, d)
    u = np.einsum("ij,ij->i", N, d)
    aw = a * phi
    D = aw.sum()
    psi = float(aw @ u) / D

    gN = np.zeros((k, 4))
    gD = np.zeros((k, 4))
    gN[:, :2] = a[:, None] * (dphi * u[:, None] + phi[:, None] * N)
    gN[:, 2:] = aw[:, None] * d
    gD[:, :2] = a[:, None] * dphi
    gpsi = (gN - psi * gD) / D

    blk = np.zeros((k, 4, 4))
    blk[:, :2, :2] = a[:, None, None] * (
        Hphi * (u - psi)[:, None, None]
        + np.einsum("ij,ik->ijk", dphi, N) + np.einsum("ij,ik->ijk", N, dphi))
    blk[:, :2, 2:] = a[:, None, None] * (np.einsum("ij,ik->ijk", dphi, d)
                                         + phi[:, None, None] * _I2)
    blk[:, 2:, :2] = np.transpose(blk[:, :2, 2:], (0, 2, 1))
    H = np.zeros((4 * k, 4 * k))
    for i in range(k):
        H[4 * i:4 * i + 4, 4 * i:4 * i + 4] = blk[i]
    gpf, gDf = gpsi.ravel(), gD.ravel()
    H = (H - np.outer(gpf, gDf) - np.outer(gDf, gpf)) / D
    return psi, gpf, H


def _normal_second_derivative(n, r, g):
    """``sum_c g_c d^2 n_c / dm^2`` for ``n = m / |m|``, ``r = |m|``."""
    ng = float(n @ g)
    return (-np.outer(g, n) - np.outer(n, g) - ng * _I2 + 3.0 * ng * np.outer(n, n)) / (r * r)


def psi_derivatives(p, surface, support, a, R):
    """psi with gradient and Hessian over the probe and every surface vertex it depends on.

    Returns ``(psi, local_vertices, grad, hess)``; ``local_vertices[0]`` is -1
    for the probe, the rest are surface vertex indices.
    """
    support = np.asarray(support)
    X = surface.vertices[support]
    polyline = isinstance(surface, Polyline)
    if polyline:
        prev, nxt = surface.neighbor_stencil()
        sigma = surface.orientation
        m = sigma * ((surface.vertices[nxt[support]] - surface.vertices[prev[support]]) @ ROT90.T)
        r = np.linalg.norm(m, axis=1)
        N = m / r[:, None]
        involved = np.unique(np.concatenate([support, prev[support], nxt[support]]))
    else:
        N = surface.normals[support]
        involved = support
    slot = {int(v): j + 1 for j, v in enumerate(involved)}
    L = len(involved) + 1

    psi, gY, HY = _psi_sample_derivatives(p, X, N, a, R)
    k = len(support)
    A = np.zeros((4 * k, 2 * L))
    B = []
    for i, v in enumerate(support):
        s = slot[int(v)]
        A[4 * i:4 * i + 2, 0:2] += _I2
        A[4 * i:4 * i + 2, 2 * s:2 * s + 2] -= _I2
        if polyline:
            sJ = sigma * ROT90
            dn_dm = (_I2 - np.outer(N[i], N[i])) / r[i]
            sn, sp_ = slot[int(nxt[v])], slot[int(prev[v])]
            A[4 * i + 2:4 * i + 4, 2 * sn:2 * sn + 2] += dn_dm @ sJ
            A[4 * i + 2:4 * i + 4, 2 * sp_:2 * sp_ + 2] -= dn_dm @ sJ
            Bi = np.zeros((2, 2 * L))
            Bi[:, 2 * sn:2 * sn + 2] += sJ
            Bi[:, 2 * sp_:2 * sp_ + 2] -= sJ
            B.append(Bi)
    grad = A.T @ gY
    hess = A.T @ HY @ A
    if polyline:
        for i in range(k):
            G = _normal_second_derivative(N[i], r[i], gY[4 * i + 2:4 * i + 4])
            hess += B[i].T @ G @ B[i]
    return psi, np.concatenate([[-1], involved]), grad, hess


def accumulate_imls(asm, probes, probe_ids, surface, surface_ids, params, imls, frozen=None):
    """Add the IMLS barrier energy of every probe; returns the weights used.

    ``frozen`` optionally gives, per probe, a ``{vertex: weight}`` map that
    replaces the IRLS rounds (used to differentiate the frozen-weight energy).
    """
    if imls.R < 2.0 * params.d_hat:
        raise ValueError("IMLS support radius must be at least 2 * d_hat")
    grid = SupportGrid(surface.vertices, imls.R)
    normals = _surface_normals(surface)
    frame = SurfaceFrame(surface) if isinstance(surface, Polyline) else None
    used = []
    for i, p in enumerate(probes):
        support = grid.query(p)
        if not support:
            used.append({})
            # outside every kernel; only guard against probes that tunneled in
            if frame is not None and closest_feature(p, frame)[0] <= 0.0:
                raise PenetrationError(gap=closest_feature(p, frame)[0])
            continue
        if frozen is not None and frozen[i] is not None:
            a = np.array([frozen[i].get(v, 1.0) for v in support])
            psi, _, _ = _weighted_pass(p, surface.vertices[support], normals[support], a, imls.R)
        else:
            a, psi, _ = robust_weights(p, surface.vertices[support], normals[support], imls)
        used.append(dict(zip(support, a)))
        if psi <= 0.0:
            raise PenetrationError(gap=psi)
        if psi >= params.d_hat:
            continue
        phi, d1, d2 = barrier_derivatives(psi, params.d_hat)
        kappa = params.kappa
        if asm.order == 0:
            asm.add([probe_ids[i]], kappa * phi)
            continue
        _, local, g, H = psi_derivatives(p, surface, support, a, imls.R)
        ids = [probe_ids[i]] + [surface_ids[v] for v in local[1:]]
        asm.add(ids, kappa * phi, kappa * d1 * g,
                kappa * (d2 * np.outer(g, g) + d1 * H))
    return used


def energy_imls(probe_vertices, surface, params, imls, order=2, frozen=None):
    """IMLS contact energy over coordinates ``[probes, surface vertices]``.

    ``info["weights"]`` holds the robust weights used for each probe; passing
    them back as ``frozen`` evaluates the same frozen-weight energy elsewhere.
    """
    probes = np.atleast_2d(np.asarray(probe_vertices, dtype=float))
    m, n = len(probes), len(surface)
    asm = Assembler(2 * (m + n), order)
    used = accumulate_imls(asm, probes, np.arange(m), surface, np.arange(m, m + n),
                           params, imls, frozen)
    return asm.finish(weights=used)
