"""Implicit-Euler time stepping over a :class:`~smoothcontact.elasticity.Scene`."""
from __future__ import annotations

from .elasticity import SimState, incremental_potential
from .solver import LaggedObjective, SolverConfig, newton_minimize


def implicit_euler_step(scene, state, h, f_ext=None, formulation=None, config=None, stream=None):
    """Advance one step by minimizing the incremental potential.

    The Newton solve starts from the current positions, which are feasible
    by construction. Returns ``(new_state, stats)``.
    """
    free = scene.free_dofs
    base = state.positions.copy()

    def potential(z, order, frozen):
        x = base.copy()
        x[free] = z
        return incremental_potential(scene, state, x, h, f_ext, formulation, order, frozen)

    objective = LaggedObjective(potential)

    cfg = config or SolverConfig.for_force_scale(f_ext)
    z, stats = newton_minimize(objective, base[free], cfg, stream)
    x = base.copy()
    x[free] = z
    v = (x - state.positions) / h
    return SimState(x, v, state.time + h), stats


def simulate(scene, state, h, steps, f_ext=None, formulation=None, config=None, stream=None):
    """Run ``steps`` implicit-Euler steps; returns the list of states (initial included) and stats."""
    states = [state]
    all_stats = []
    for _ in range(steps):
        state, stats = implicit_euler_step(scene, state, h, f_ext, formulation, config, stream)
        states.append(state)
        all_stats.append(stats)
    return states, all_stats


def centroid(scene, state, name):
    """Mass-weighted centroid of one body."""
    sl = scene.body_slice(name)
    x = state.positions[sl].reshape(-1, 2)
    m = scene.mass[sl][0::2]
    return m @ x / m.sum()


def momentum(scene, state):
    v = state.velocities.reshape(-1, 2)
    return (scene.mass[0::2, None] * v).sum(axis=0)


__all__ = ["implicit_euler_step", "simulate", "centroid", "momentum"]
