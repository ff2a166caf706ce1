"""Second-order Unruh-DeWitt detectors in coherent states of a massless scalar field."""

from .detectors import CompactBump, DetectorSpec, GaussianSmearing, GaussianSwitching, PointLike
from .field_state import CoherentAmplitude, Packet, Regulator
from .perturbation import PerturbativeTerms, assemble_terms
from .quadrature import QuadratureConfig
from .state_assembly import (
    assemble_rho_A,
    assemble_rho_AB,
    negativity,
    partial_transpose_B,
    spectrum_report,
)

__all__ = [
    "CoherentAmplitude", "CompactBump", "DetectorSpec", "GaussianSmearing",
    "GaussianSwitching", "Packet", "PerturbativeTerms", "PointLike", "QuadratureConfig",
    "Regulator", "assemble_rho_A", "assemble_rho_AB", "assemble_terms", "negativity",
    "partial_transpose_B", "spectrum_report",
]
__version__ = "0.1.0"
