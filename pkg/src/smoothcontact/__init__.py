"""2D deformable contact with node-to-segment, IPC-style and robust IMLS contact energies."""

from .contact import (BarrierParams, ContactFormulation, ContactSurface, ImlsParams, Kind,
                      energy_imls, energy_ipc, energy_nts, gap_nts, imls_value,
                      pairwise_contact)
from .energy import EnergyDerivatives
from .geometry import PointCloud, Polyline, TriMesh2D, point_segment_distance, vertex_normals

__version__ = "0.1.0"

__all__ = [
    "BarrierParams", "ContactFormulation", "ContactSurface", "EnergyDerivatives", "ImlsParams",
    "Kind", "PointCloud", "Polyline", "TriMesh2D", "energy_imls", "energy_ipc", "energy_nts",
    "gap_nts", "imls_value", "pairwise_contact", "point_segment_distance", "vertex_normals",
]
