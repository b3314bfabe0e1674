"""Energy value/gradient/Hessian container and sparse assembly."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class EnergyDerivatives:
    """Energy with first and second partials over a coordinate vector.

    ``gradient`` and ``hessian`` are ``None`` for value-only evaluations.
    """

    value: float
    gradient: np.ndarray | None = None
    hessian: sp.csr_matrix | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, n, order=2):
        if order == 0:
            return cls(0.0)
        return cls(0.0, np.zeros(n), sp.csr_matrix((n, n)))

    @property
    def size(self):
        return None if self.gradient is None else len(self.gradient)

    def __add__(self, other):
        if self.gradient is None or other.gradient is None:
            return EnergyDerivatives(self.value + other.value, info={**self.info, **other.info})
        hess = None
        if self.hessian is not None and other.hessian is not None:
            hess = (self.hessian + other.hessian).tocsr()
        return EnergyDerivatives(self.value + other.value, self.gradient + other.gradient,
                                 hess, {**self.info, **other.info})

    def restrict(self, dofs):
        """Sub-problem over the coordinates ``dofs`` (others held fixed)."""
        if self.gradient is None:
            return EnergyDerivatives(self.value, info=self.info)
        dofs = np.asarray(dofs)
        hess = None if self.hessian is None else self.hessian[dofs][:, dofs].tocsr()
        return EnergyDerivatives(self.value, self.gradient[dofs], hess, self.info)


class Assembler:
    """Accumulates local vertex-block contributions into global arrays.

    Contributions are summed in insertion order, so results are bit-stable
    for a fixed evaluation order.
    """

    def __init__(self, n_dofs, order=2):
        self.n = int(n_dofs)
        self.order = order
        self.value = 0.0
        self.gradient = np.zeros(self.n) if order > 0 else None
        self._rows, self._cols, self._vals = [], [], []

    def add(self, vertex_ids, value, grad=None, hess=None):
        self.value += value
        if self.order == 0:
            return
        vid = np.asarray(vertex_ids, dtype=np.int64)
        dofs = np.column_stack([2 * vid, 2 * vid + 1]).ravel()
        np.add.at(self.gradient, dofs, grad)
        if self.order > 1 and hess is not None:
            k = len(dofs)
            self._rows.append(np.repeat(dofs, k))
            self._cols.append(np.tile(dofs, k))
            self._vals.append(np.asarray(hess).ravel())

    def add_dofs(self, dofs, value, grad=None, hess=None):
        """Like :meth:`add` but with explicit coordinate indices."""
        self.value += value
        if self.order == 0:
            return
        dofs = np.asarray(dofs, dtype=np.int64)
        np.add.at(self.gradient, dofs, grad)
        if self.order > 1 and hess is not None:
            k = len(dofs)
            self._rows.append(np.repeat(dofs, k))
            self._cols.append(np.tile(dofs, k))
            self._vals.append(np.asarray(hess).ravel())

    def add_coo(self, rows, cols, vals):
        self._rows.append(np.asarray(rows))
        self._cols.append(np.asarray(cols))
        self._vals.append(np.asarray(vals))

    def finish(self, **info):
        if self.order == 0:
            return EnergyDerivatives(float(self.value), info=info)
        hess = None
        if self.order > 1:
            if self._rows:
                hess = sp.coo_matrix((np.concatenate(self._vals),
                                      (np.concatenate(self._rows), np.concatenate(self._cols))),
                                     shape=(self.n, self.n)).tocsr()
            else:
                hess = sp.csr_matrix((self.n, self.n))
        return EnergyDerivatives(float(self.value), self.gradient, hess, info)
