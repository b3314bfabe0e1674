from .barrier import BarrierParams, barrier, barrier_derivatives, barrier_grad, barrier_hess, kappa_for_gap
from .formulation import (ContactFormulation, ContactSurface, Kind, contact_energy,
                          pairwise_contact)
from .imls import ImlsParams, ImlsValue, energy_imls, imls_value
from .ipc import constraint_set, energy_ipc
from .nts import energy_nts, gap_nts

__all__ = [
    "BarrierParams", "ContactFormulation", "ContactSurface", "ImlsParams", "ImlsValue", "Kind",
    "barrier", "barrier_derivatives", "barrier_grad", "barrier_hess", "constraint_set",
    "contact_energy", "energy_imls", "energy_ipc", "energy_nts", "gap_nts", "imls_value",
    "kappa_for_gap", "pairwise_contact",
]
