"""Formulation selection and multi-body contact assembly."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ..energy import Assembler
from ..geometry import Polyline
from .barrier import BarrierParams
from .imls import ImlsParams, accumulate_imls
from .ipc import accumulate_ipc
from .nts import accumulate_nts


class Kind(str, Enum):
    NTS = "NTS"
    IPC = "IPC"
    IMLS = "IMLS"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().upper())
        except ValueError:
            raise ValueError(f"unknown formulation {name!r}; expected NTS, IPC or IMLS") from None


@dataclass(frozen=True)
class ContactFormulation:
    kind: Kind
    barrier: BarrierParams
    imls: ImlsParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if self.kind is Kind.IMLS:
            if self.imls is None:
                raise ValueError("IMLS formulation needs ImlsParams")
            if self.imls.R < 2.0 * self.barrier.d_hat:
                raise ValueError("IMLS support radius must be at least 2 * d_hat")

    def with_kind(self, kind):
        return replace(self, kind=Kind.parse(kind))


@dataclass(eq=False)
class ContactSurface:
    """Boundary of one body: vertex indices into the global position array."""

    vertex_ids: np.ndarray
    closed: bool = True
    probes: np.ndarray | None = field(default=None)

    def polyline(self, positions):
        return Polyline(positions[self.vertex_ids], closed=self.closed)

    @property
    def probe_ids(self):
        return self.vertex_ids if self.probes is None else self.probes


def accumulate_pair(asm, probes, probe_ids, poly, poly_ids, formulation, frozen=None):
    kind = formulation.kind
    if kind is Kind.NTS:
        accumulate_nts(asm, probes, probe_ids, poly, poly_ids, formulation.barrier)
        return None
    if kind is Kind.IPC:
        accumulate_ipc(asm, probes, probe_ids, poly, poly_ids, formulation.barrier)
        return None
    return accumulate_imls(asm, probes, probe_ids, poly, poly_ids,
                           formulation.barrier, formulation.imls, frozen)


def contact_energy(probe_vertices, poly, formulation, order=2, frozen=None):
    """Single probe-set/obstacle evaluation over ``[probes, polyline vertices]``."""
    probes = np.atleast_2d(np.asarray(probe_vertices, dtype=float))
    m, n = len(probes), len(poly)
    asm = Assembler(2 * (m + n), order)
    used = accumulate_pair(asm, probes, np.arange(m), poly, np.arange(m, m + n),
                           formulation, frozen)
    return asm.finish(weights=used)


def pairwise_contact(positions, surfaces, formulation, pairs=None, order=2, frozen=None):
    """Sum the formulation over ordered ``(probe, obstacle)`` surface pairs.

    Parameters
    ----------
    positions : ndarray of shape (n_vertices, 2)
        Global vertex positions.
    surfaces : list of ContactSurface
    pairs : list of (int, int), optional
        Ordered surface index pairs; defaults to every ``i != j``.

    Returns
    -------
    EnergyDerivatives over all ``2 * n_vertices`` coordinates.
    ``info["weights"]`` maps each pair to the IMLS weights used.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if pairs is None:
        pairs = [(i, j) for i in range(len(surfaces)) for j in range(len(surfaces)) if i != j]
    asm = Assembler(2 * len(positions), order)
    used = {}
    for i, j in pairs:
        probe, obstacle = surfaces[i], surfaces[j]
        poly = obstacle.polyline(positions)
        pid = probe.probe_ids
        used[(i, j)] = accumulate_pair(
            asm, positions[pid], pid, poly, obstacle.vertex_ids, formulation,
            None if frozen is None else frozen.get((i, j)))
    return asm.finish(weights=used)
