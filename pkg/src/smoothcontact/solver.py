"""Newton minimization with adaptive regularization and a feasibility-aware line search.

Objectives are callables ``objective(x, order)`` returning
:class:`~smoothcontact.energy.EnergyDerivatives`; ``order=0`` asks for the
value only. They raise :class:`~smoothcontact.errors.InfeasibleStateError`
outside their domain (penetration, inverted elements), which the line search
treats as a rejected trial and answers by shrinking the step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InfeasibleStateError, LineSearchError, SingularSystemError

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-8


@dataclass
class SolverConfig:
    grad_tol: float = 1e-8
    max_iters: int = 200
    ls_shrink: float = 0.5
    ls_armijo: float = 1e-4
    reg_init: float | None = None  # None: 1e-8 * ||H||_inf at the first iteration
    reg_growth: float = 10.0
    reg_max_tries: int = 40
    min_step: float = 1e-12
    energy_noise: float = 1e-14  # relative rounding resolution of objective values

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not (0 < self.ls_shrink < 1 and 0 < self.ls_armijo < 1):
            raise ValueError("line search constants must lie in (0, 1)")
        if not self.reg_growth > 1:
            raise ValueError("reg_growth must exceed 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")

    @classmethod
    def for_force_scale(cls, f_ext=None, **kw):
        """Default tolerance ``1e-8 * max(1, ||f_ext||_inf)``."""
        scale = 1.0 if f_ext is None or len(f_ext) == 0 else max(1.0, float(np.max(np.abs(f_ext))))
        kw.setdefault("grad_tol", 1e-8 * scale)
        return cls(**kw)


@dataclass
class NewtonStats:
    iterations: int = 0
    converged: bool = False
    energies: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    mus: list = field(default_factory=list)
    rejected_infeasible: int = 0
    rejected_armijo: int = 0
    noise_accepts: int = 0
    accepted: list = field(default_factory=list)  # line-search value of each accepted step

    def rows(self):
        """Per-iteration ``(iteration, energy, grad_norm, alpha, mu)``; the last row has no step."""
        out = []
        for k, (e, g) in enumerate(zip(self.energies, self.grad_norms)):
            a = self.alphas[k] if k < len(self.alphas) else float("nan")
            m = self.mus[k] if k < len(self.mus) else float("nan")
            out.append((k, e, g, a, m))
        return out


class LaggedObjective:
    """Objective whose auxiliary state (IMLS robust weights) is frozen between refreshes.

    ``fn(x, order, frozen)`` must return :class:`EnergyDerivatives` carrying the
    state it used in ``info["weights"]``. :func:`newton_minimize` calls
    :meth:`refresh` at every accepted iterate, so the value seen by the line
    search and the gradient driving it describe the same function.
    """

    def __init__(self, fn):
        self.fn = fn
        self.frozen = None

    def refresh(self, x):
        self.frozen = None
        self.frozen = self.fn(x, 0, None).info.get("weights")

    def __call__(self, x, order):
        return self.fn(x, order, self.frozen)


def solve_linear_spd(H, rhs):
    """Solve ``H x = rhs`` for symmetric positive definite ``H``.

    Raises :class:`SingularSystemError` when ``H`` is not numerically SPD or
    the relative residual stays above 1e-8.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = len(rhs)
    if n == 0:
        return rhs.copy()
    if sp.issparse(H) and n > DENSE_LIMIT:
        try:
            lu = spla.splu(sp.csc_matrix(H), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SingularSystemError(f"singular system: {exc}") from exc
        if np.any(lu.U.diagonal() <= 0.0):
            raise SingularSystemError("singular system: matrix is not positive definite")
        solve = lu.solve
        matvec = H.dot
    else:
        Hd = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
        try:
            factor = sla.cho_factor(Hd, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystemError(f"singular system: {exc}") from exc

        def solve(b):
            return sla.cho_solve(factor, b)
        matvec = Hd.dot
    x = solve(rhs)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return x
    # iterative refinement with the same factorization
    for _ in range(3):
        r = rhs - matvec(x)
        if np.linalg.norm(r) < RESIDUAL_TOL * bnorm:
            return x
        x = x + solve(r)
    if not np.linalg.norm(rhs - matvec(x)) < RESIDUAL_TOL * bnorm:
        raise SingularSystemError("singular system: residual above tolerance")
    return x


def _inf_norm(H):
    if sp.issparse(H):
        return float(abs(H).sum(axis=1).max()) if H.nnz else 0.0
    return float(np.max(np.sum(np.abs(H), axis=1))) if H.size else 0.0


def regularized_direction(H, g, reg_init, growth, max_tries, mu_hint=0.0):
    """Newton direction from ``(H + mu I) dx = -g`` with the smallest workable ``mu``.

    ``mu = 0`` is tried first, then ``max(reg_init, mu_hint / growth)`` grown
    geometrically until the solve succeeds and ``dx`` is a descent direction.
    """
    n = len(g)
    eye = sp.identity(n, format="csr")
    mu = 0.0
    next_mu = max(reg_init, mu_hint / growth)
    for _ in range(max_tries + 1):
        try:
            dx = solve_linear_spd(H + mu * eye if mu else H, -g)
            if float(g @ dx) < 0.0:
                return dx, mu
        except SingularSystemError:
            pass
        mu, next_mu = next_mu, next_mu * growth
    raise SingularSystemError("singular system: regularization exhausted")


def newton_minimize(objective, x0, config=None, stream=None):
    """Minimize ``objective`` from ``x0``.

    Parameters
    ----------
    objective : callable ``(x, order) -> EnergyDerivatives``
    x0 : array_like
        Feasible starting point.
    config : SolverConfig, optional
    stream : file-like, optional
        Receives one CSV row per iteration: ``iteration,energy,grad_norm,alpha,mu``.

    Returns
    -------
    x : ndarray
    stats : NewtonStats
        ``stats.converged`` is False when ``max_iters`` was reached.
    """
    cfg = config or SolverConfig()
    x = np.array(x0, dtype=float)
    stats = NewtonStats()
    refresh = getattr(objective, "refresh", None)
    if refresh is not None:
        refresh(x)
    e = objective(x, 2)
    reg_init = cfg.reg_init
    mu_hint = 0.0
    for it in range(cfg.max_iters + 1):
        g = e.gradient
        gnorm = float(np.max(np.abs(g))) if len(g) else 0.0
        stats.energies.append(e.value)
        stats.grad_norms.append(gnorm)
        if gnorm <= cfg.grad_tol:
            stats.converged = True
            break
        if it == cfg.max_iters:
            break
        if reg_init is None:
            reg_init = 1e-8 * max(_inf_norm(e.hessian), 1.0)
        dx, mu = regularized_direction(e.hessian, g, reg_init, cfg.reg_growth,
                                       cfg.reg_max_tries, mu_hint)
        mu_hint = mu
        slope = float(g @ dx)
        alpha = 1.0
        while True:
            if alpha < cfg.min_step:
                raise LineSearchError(diagnostics={
                    "iteration": it, "energy": e.value, "grad_norm": gnorm, "slope": slope,
                    "mu": mu, "rejected_infeasible": stats.rejected_infeasible,
                    "rejected_armijo": stats.rejected_armijo})
            xt = x + alpha * dx
            try:
                et = objective(xt, 0)
            except InfeasibleStateError:
                stats.rejected_infeasible += 1
                alpha *= cfg.ls_shrink
                continue
            decrease = cfg.ls_armijo * alpha * slope
            if et.value <= e.value + decrease:
                break
            floor = cfg.energy_noise * max(1.0, abs(e.value))
            if -alpha * slope <= 100.0 * floor:
                # the predicted decrease is below what E can resolve: take the
                # step if the gradient shrinks and E moved only by rounding
                if alpha == 1.0 and et.value <= e.value + floor:
                    gt = objective(xt, 1).gradient
                    if np.max(np.abs(gt)) < gnorm:
                        stats.noise_accepts += 1
                        break
                if et.value <= e.value:
                    break
            stats.rejected_armijo += 1
            alpha *= cfg.ls_shrink
        stats.alphas.append(alpha)
        stats.mus.append(mu)
        if stream is not None:
            stream.write(f"{it},{e.value!r},{gnorm!r},{alpha!r},{mu!r}\n")
        stats.accepted.append(et.value)
        x = xt
        if refresh is not None:
            refresh(x)
        e = objective(x, 2)
        stats.iterations = it + 1
    if stream is not None and stats.converged:
        stream.write(f"{stats.iterations},{e.value!r},{stats.grad_norms[-1]!r},,\n")
    if not stats.converged:
        log.debug("newton: max_iters reached with |g|=%g", stats.grad_norms[-1])
    return x, stats
