"""Neo-Hookean triangle FEM, lumped mass and the implicit-Euler incremental potential."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .contact.formulation import ContactSurface, pairwise_contact
from .energy import Assembler, EnergyDerivatives
from .errors import InversionError
from .geometry import Polyline, TriMesh2D


@dataclass(frozen=True)
class Material:
    youngs_modulus: float = 1e6
    poisson_ratio: float = 0.3
    density: float = 1000.0

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")
        if not self.density > 0:
            raise ValueError("density must be positive")

    def lame(self):
        """Plane-strain Lame parameters ``(mu, lambda)``."""
        E, nu = self.youngs_modulus, self.poisson_ratio
        return E / (2.0 * (1.0 + nu)), E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


@dataclass(eq=False)
class DeformableBody:
    mesh: TriMesh2D
    material: Material = field(default_factory=Material)
    fixed: frozenset = frozenset()
    name: str = "body"
    offset: int = 0  # first global vertex index, assigned by Scene

    def __post_init__(self):
        self.fixed = frozenset(int(i) for i in self.fixed)
        Dm = self._edge_matrix(self.mesh.vertices)
        self._Dm_inv = np.linalg.inv(Dm)
        self._rest_area = 0.5 * np.linalg.det(Dm)
        inv = self._Dm_inv
        # d F / d x_v = e_c (x) G[v] for vertex v of the element
        self._G = np.stack([-(inv[:, 0, :] + inv[:, 1, :]), inv[:, 0, :], inv[:, 1, :]], axis=1)

    @property
    def n_vertices(self):
        return len(self.mesh.vertices)

    @property
    def dofs(self):
        return range(2 * self.offset, 2 * (self.offset + self.n_vertices))

    def _edge_matrix(self, x):
        t = self.mesh.triangles
        return np.stack([x[t[:, 1]] - x[t[:, 0]], x[t[:, 2]] - x[t[:, 0]]], axis=2)

    def deformation_gradients(self, positions):
        x = np.asarray(positions, dtype=float).reshape(-1, 2)
        return self._edge_matrix(x) @ self._Dm_inv


@dataclass(eq=False)
class Obstacle:
    """Fixed polyline; every vertex is pinned."""

    polyline: Polyline
    name: str = "obstacle"
    offset: int = 0

    @property
    def n_vertices(self):
        return len(self.polyline)


@dataclass
class SimState:
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).ravel()
        self.velocities = np.asarray(self.velocities, dtype=float).ravel()
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have equal length")


def neo_hookean_energy(body, positions, order=2):
    """Compressible Neo-Hookean energy over the body's ``2 * n_vertices`` coordinates.

    Density ``mu/2 (tr(F^T F) - 2) - mu ln J + lambda/2 (ln J)^2`` per unit rest area.
    """
    mu, lam = body.material.lame()
    F = body.deformation_gradients(positions)
    J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    if np.any(J <= 0.0):
        raise InversionError(element=int(np.flatnonzero(J <= 0.0)[0]))
    A = body._rest_area
    lnJ = np.log(J)
    # tr(C) - 2 - 2 ln J = sum_i (t_i - log1p(t_i)) over eigenvalues t_i of C - I;
    # this form avoids cancelling O(1) terms and keeps the value accurate near rest
    T = np.einsum("eki,ekj->eij", F, F) - np.eye(2)
    m = 0.5 * (T[:, 0, 0] + T[:, 1, 1])
    r = np.hypot(0.5 * (T[:, 0, 0] - T[:, 1, 1]), T[:, 0, 1])
    # larger-magnitude eigenvalue directly, the other from the determinant
    t1 = m + np.copysign(r, m)
    det = T[:, 0, 0] * T[:, 1, 1] - T[:, 0, 1] ** 2
    t2 = np.divide(det, t1, out=np.zeros_like(t1), where=t1 != 0.0)
    dev = (t1 - np.log1p(t1)) + (t2 - np.log1p(t2))
    psi = 0.5 * mu * dev + 0.5 * lam * lnJ**2
    value = float(A @ psi)
    n = 2 * body.n_vertices
    if order == 0:
        return EnergyDerivatives(value)
    Finv = np.linalg.inv(F)
    FinvT = np.transpose(Finv, (0, 2, 1))
    P = mu * (F - FinvT) + (lam * lnJ)[:, None, None] * FinvT
    G = body._G  # (e, 3 vertices, 2)
    t = body.mesh.triangles
    # grad[v, c] = A * sum_j P[c, j] G[v, j]
    g_local = A[:, None, None] * np.einsum("ecj,evj->evc", P, G)
    dofs = np.stack([2 * t, 2 * t + 1], axis=2).reshape(-1, 6)
    grad = np.zeros(n)
    np.add.at(grad, dofs.ravel(), g_local.reshape(-1))
    if order == 1:
        return EnergyDerivatives(value, grad)
    eye = np.eye(2)
    C = (mu * np.einsum("ik,jl->ijkl", eye, eye)[None]
         + (mu - lam * lnJ)[:, None, None, None, None] * np.einsum("ejk,eli->eijkl", Finv, Finv)
         + lam * np.einsum("eji,elk->eijkl", Finv, Finv))
    # B[(i,j), (v,c)] = delta_ic G[v, j]
    B = np.einsum("ic,evj->eijvc", eye, G).reshape(-1, 4, 6)
    Ke = A[:, None, None] * np.einsum("eab,ebc,ecd->ead", np.transpose(B, (0, 2, 1)),
                                      C.reshape(-1, 4, 4), B)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    hess = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return EnergyDerivatives(value, grad, hess)


def lumped_mass(body):
    """Diagonal mass matrix over the body's coordinates (rho/3 of each adjacent area)."""
    areas = body.mesh.areas()
    m = np.zeros(body.n_vertices)
    np.add.at(m, body.mesh.triangles.ravel(), np.repeat(body.material.density * areas / 3.0, 3))
    return sp.diags(np.repeat(m, 2)).tocsr()


class Scene:
    """Bodies and obstacles sharing one global vertex numbering.

    ``contact_pairs`` lists ordered ``(probe_name, obstacle_name)``; by default
    every deformable body probes every other body and every obstacle.
    """

    def __init__(self, bodies, obstacles=(), contact_pairs=None):
        self.bodies = list(bodies)
        self.obstacles = list(obstacles)
        offset = 0
        for part in self.bodies + self.obstacles:
            part.offset = offset
            offset += part.n_vertices
        self.n_vertices = offset
        self.n_dofs = 2 * offset

        self.rest_positions = np.zeros(self.n_dofs)
        self.mass = np.zeros(self.n_dofs)
        fixed = np.zeros(self.n_dofs, dtype=bool)
        self.surfaces = []
        names = []
        for body in self.bodies:
            sl = slice(2 * body.offset, 2 * (body.offset + body.n_vertices))
            self.rest_positions[sl] = body.mesh.vertices.ravel()
            self.mass[sl] = lumped_mass(body).diagonal()
            for v in body.fixed:
                fixed[2 * (body.offset + v):2 * (body.offset + v) + 2] = True
            self.surfaces.append(ContactSurface(body.mesh.boundary_indices + body.offset, True))
            names.append(body.name)
        for obs in self.obstacles:
            sl = slice(2 * obs.offset, 2 * (obs.offset + obs.n_vertices))
            self.rest_positions[sl] = obs.polyline.vertices.ravel()
            fixed[sl] = True
            self.surfaces.append(ContactSurface(np.arange(obs.n_vertices) + obs.offset,
                                                obs.polyline.closed))
            names.append(obs.name)
        self.names = names
        self.free_dofs = np.flatnonzero(~fixed)
        if contact_pairs is None:
            nb = len(self.bodies)
            self.pairs = [(i, j) for i in range(nb) for j in range(len(names)) if i != j]
        else:
            index = {name: k for k, name in enumerate(names)}
            self.pairs = [(index[a], index[b]) for a, b in contact_pairs]

    def initial_state(self, positions=None, velocities=None):
        x = self.rest_positions.copy() if positions is None else np.asarray(positions, float).ravel()
        v = np.zeros(self.n_dofs) if velocities is None else np.asarray(velocities, float).ravel()
        return SimState(x, v, 0.0)

    def gravity_force(self, g=(0.0, -9.81)):
        f = np.zeros(self.n_dofs)
        f[0::2] = self.mass[0::2] * g[0]
        f[1::2] = self.mass[1::2] * g[1]
        return f

    def body_slice(self, name):
        body = next(b for b in self.bodies if b.name == name)
        return slice(2 * body.offset, 2 * (body.offset + body.n_vertices))

    def elastic_energy(self, x, order=2):
        asm = Assembler(self.n_dofs, order)
        for body in self.bodies:
            e = neo_hookean_energy(body, x[body.dofs.start:body.dofs.stop], order)
            dofs = np.arange(body.dofs.start, body.dofs.stop)
            asm.value += e.value
            if order > 0:
                asm.gradient[dofs] += e.gradient
            if order > 1:
                h = e.hessian.tocoo()
                asm.add_coo(dofs[h.row], dofs[h.col], h.data)
        return asm.finish()

    def contact_energy(self, x, formulation, order=2, frozen=None):
        if formulation is None or not self.pairs:
            return EnergyDerivatives.zeros(self.n_dofs, order)
        return pairwise_contact(x.reshape(-1, 2), self.surfaces, formulation, self.pairs,
                                order, frozen)


def incremental_potential(scene, state, x, h, f_ext=None, formulation=None, order=2, frozen=None):
    """Implicit-Euler objective restricted to the scene's free coordinates.

    ``E(x) = (x - y)^T M (x - y) / (2 h^2) + Psi(x) - (x - x_t)^T f_ext + E_contact(x)``
    with ``y = x_t + h v_t``, whose minimizer is the backward-Euler update.
    ``x`` is the full coordinate vector (pinned entries must match ``state``);
    ``frozen`` passes IMLS robust weights through to the contact term.
    """
    if not h > 0:
        raise ValueError("time step must be positive")
    x = np.asarray(x, dtype=float)
    M = scene.mass
    # differences taken before products keep the value free of large offsets
    r = (x - state.positions) - h * state.velocities
    total = EnergyDerivatives(float(0.5 * r @ (M * r)) / h**2)
    if order > 0:
        total.gradient = M * r / h**2
        total.hessian = sp.diags(M / h**2).tocsr() if order > 1 else None
    if f_ext is not None:
        # work term measured from x_t; differs from -x^T f_ext by a constant
        total.value -= float((x - state.positions) @ f_ext)
        if order > 0:
            total.gradient = total.gradient - f_ext
    total = total + scene.elastic_energy(x, order)
    total = total + scene.contact_energy(x, formulation, order, frozen)
    return total.restrict(scene.free_dofs)
