"""Equilibrium sensitivities and gradient-descent design on the annulus problem.

The annulus problem has a point A inside a circular track of radius ``r1``
(a polyline whose normals face the center) and a point B on an outer circle
of radius ``r2``. A zero-rest-length spring pulls A toward B, pressing it
against the track; without spurious tangential forces the equilibrium has A
radially aligned with B.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .contact.barrier import BarrierParams, barrier_derivatives
from .contact.formulation import ContactFormulation, Kind, contact_energy
from .contact.imls import ImlsParams
from .energy import EnergyDerivatives
from .errors import ForwardDivergenceError, SingularEquilibriumError, SolverError
from .geometry import arc_polyline
from .solver import LaggedObjective, SolverConfig, newton_minimize

SENSITIVITY_STEP = 1e-6


def equilibrium_sensitivity(x_star, energy, theta, step=SENSITIVITY_STEP):
    """``dx*/dtheta`` at an equilibrium of ``energy(x, theta, order)``.

    Solves ``H s = -d(grad E)/d theta`` with the analytic Hessian ``H`` and the
    mixed partial from central differences of the analytic gradient in
    ``theta``.

    Raises
    ------
    SingularEquilibriumError
        If the Hessian at ``x_star`` is numerically singular.
    """
    x_star = np.asarray(x_star, dtype=float)
    H = energy(x_star, theta, 2).hessian
    g_plus = energy(x_star, theta + step, 1).gradient
    g_minus = energy(x_star, theta - step, 1).gradient
    mixed = (g_plus - g_minus) / (2.0 * step)
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
    if Hd.size == 0:
        return np.zeros(0)
    if not np.all(np.isfinite(Hd)):
        raise SingularEquilibriumError("singular equilibrium: non-finite Hessian")
    # reciprocal condition estimate from the LU factors
    try:
        with warnings.catch_warnings():
            # exact zero pivots are reported below as a singular equilibrium
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(Hd, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularEquilibriumError(f"singular equilibrium: {exc}") from exc
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-13 * max(diag.max(), np.finfo(float).tiny):
        raise SingularEquilibriumError("singular equilibrium")
    return -sla.lu_solve((lu, piv), mixed)


@dataclass
class Annulus:
    """Forward model: point A against an inner polyline track, spring to B on the outer circle.

    The track covers the quarter circle ``[0, pi/2]`` plus ``guard_segments``
    extra segments on each side, so vertex angles sit at multiples of
    ``pi / (2 * segments_per_quarter)``.
    """

    r1: float = 1.0
    r2: float = 1.5
    spring_stiffness: float = 100.0
    segments_per_quarter: int = 16
    guard_segments: int = 4
    d_hat: float = 0.05
    support_radius: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.r1 < self.r2:
            raise ValueError("annulus radii must satisfy 0 < r1 < r2")
        if not self.spring_stiffness > 0:
            raise ValueError("spring stiffness must be positive")
        if self.segments_per_quarter < 1 or self.guard_segments < 0:
            raise ValueError("invalid track resolution")
        g = self.guard_segments
        d = self.segment_angle
        self.track = arc_polyline(self.r1, -g * d, 0.5 * np.pi + g * d,
                                  self.segments_per_quarter + 2 * g)

    @property
    def segment_angle(self):
        return 0.5 * np.pi / self.segments_per_quarter

    @property
    def vertex_angles(self):
        return np.arange(self.segments_per_quarter + 1) * self.segment_angle

    @property
    def kappa(self):
        """Barrier stiffness that balances the radial spring force at gap ``d_hat / 2``."""
        force = self.spring_stiffness * (self.r2 - self.r1)
        return force / abs(barrier_derivatives(0.5 * self.d_hat, self.d_hat)[1])

    def formulation(self, kind):
        return ContactFormulation(Kind.parse(kind), BarrierParams(self.d_hat, self.kappa),
                                  ImlsParams(self.support_radius))

    def point_b(self, theta_b):
        return self.r2 * np.array([np.cos(theta_b), np.sin(theta_b)])

    def energy(self, x, theta_b, formulation, order=2, frozen=None):
        """Spring plus contact energy over A's two coordinates."""
        x = np.asarray(x, dtype=float)
        r = x - self.point_b(theta_b)
        k = self.spring_stiffness
        c = contact_energy([x], self.track, formulation, order,
                           None if frozen is None else frozen)
        value = 0.5 * k * float(r @ r) + c.value
        info = {"weights": c.info.get("weights")}
        if order == 0:
            return EnergyDerivatives(value, info=info)
        grad = k * r + c.gradient[:2]
        hess = None
        if order > 1:
            hess = sp.csr_matrix(k * np.eye(2) + c.hessian[:2, :2].toarray())
        return EnergyDerivatives(value, grad, hess, info)

    def initial_guess(self, theta):
        return (self.r1 - 0.5 * self.d_hat) * np.array([np.cos(theta), np.sin(theta)])

    def equilibrium(self, theta_b, formulation, x0=None, config=None, stream=None):
        """Static equilibrium of A for a given ``theta_b``; returns ``(x_A, stats)``."""
        x0 = self.initial_guess(theta_b) if x0 is None else x0
        cfg = config or SolverConfig.for_force_scale(
            [self.spring_stiffness * (self.r2 - self.r1)])
        objective = LaggedObjective(
            lambda z, order, frozen: self.energy(z, theta_b, formulation, order, frozen))
        return newton_minimize(objective, x0, cfg, stream)

    def sensitivity(self, x_star, theta_b, formulation):
        """``dx_A/dtheta_B`` at an equilibrium, with robust weights frozen at ``x_star``."""
        frozen = self.energy(x_star, theta_b, formulation, 0).info["weights"]
        return equilibrium_sensitivity(
            x_star, lambda z, th, order: self.energy(z, th, formulation, order, frozen), theta_b)

    @staticmethod
    def angle(x):
        return float(np.arctan2(x[1], x[0]))


@dataclass
class DesignProblem:
    """Single-parameter design: choose ``theta_B`` so that A settles at ``target_theta_A``."""

    theta_B: float
    target_theta_A: float
    r1: float = 1.0
    r2: float = 1.5
    spring_stiffness: float = 100.0
    lr: float | None = None  # None: 0.5 / r1**2
    max_steps: int = 30
    obj_tol: float = 1e-6
    max_halvings: int = 30

    def __post_init__(self):
        if not 0.0 < self.r1 < self.r2:
            raise ValueError("annulus radii must satisfy 0 < r1 < r2")
        if not self.spring_stiffness > 0:
            raise ValueError("spring stiffness must be positive")
        if self.lr is None:
            self.lr = 0.5 / self.r1**2
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def objective(self, x):
        """Squared distance from A to its target at the same radius, with gradient."""
        x = np.asarray(x, dtype=float)
        u = np.array([np.cos(self.target_theta_A), np.sin(self.target_theta_A)])
        rho = np.linalg.norm(x)
        xu = float(x @ u)
        value = 2.0 * rho**2 - 2.0 * rho * xu
        grad = 4.0 * x - 2.0 * xu * x / rho - 2.0 * rho * u
        return value, grad


@dataclass
class InverseResult:
    theta_B: float
    objectives: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    steps: int = 0
    converged: bool = False
    halvings: int = 0

    def to_csv(self):
        buf = io.StringIO()
        buf.write("# schema: step[-],theta_B[rad],objective[m^2]\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "theta_B", "objective"])
        for k, (th, o) in enumerate(zip(self.thetas, self.objectives)):
            w.writerow([k, repr(float(th)), repr(float(o))])
        return buf.getvalue()


def solve_inverse(problem, formulation, annulus=None):
    """Gradient descent on ``theta_B`` through the equilibrium constraint.

    Each step re-solves the forward equilibrium warm-started from the previous
    one. When the objective would increase, the learning rate is halved and
    the step retried; after ``max_halvings`` failed retries the step is
    recorded as stalled and ``theta_B`` is kept.

    Raises
    ------
    ForwardDivergenceError
        If a forward equilibrium solve fails.
    """
    model = annulus or Annulus(problem.r1, problem.r2, problem.spring_stiffness)
    theta = float(problem.theta_B)
    try:
        x, _ = model.equilibrium(theta, formulation)
    except SolverError as exc:
        raise ForwardDivergenceError(step=0) from exc
    obj, grad = problem.objective(x)
    result = InverseResult(theta, [obj], [theta])
    lr = problem.lr
    for step in range(1, problem.max_steps + 1):
        if obj < problem.obj_tol:
            result.converged = True
            break
        dtheta = float(grad @ model.sensitivity(x, theta, formulation))
        if dtheta == 0.0:
            break
        for _ in range(problem.max_halvings + 1):
            trial = theta - lr * dtheta
            try:
                xt, _ = model.equilibrium(trial, formulation, x0=x)
            except SolverError as exc:
                raise ForwardDivergenceError(step=step) from exc
            obj_t, grad_t = problem.objective(xt)
            if obj_t <= obj:
                theta, x, obj, grad = trial, xt, obj_t, grad_t
                break
            lr *= 0.5
            result.halvings += 1
        result.objectives.append(obj)
        result.thetas.append(theta)
        result.steps = step
    else:
        result.converged = obj < problem.obj_tol
    result.theta_B = theta
    return result
