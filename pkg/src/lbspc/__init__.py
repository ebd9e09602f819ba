"""Registration-free SPC of 3D part geometry via Laplace-Beltrami spectra."""

from ._backend import NUMBA_ENABLED, backend_name
from .charts import (Phase1Result, Phase2Result, estimate_changepoint,
                     phase1_test, phase2_chart)
from .fem import (BoundaryCondition, LBSpectrum, assemble, scaled_spectrum,
                  solve_lowest, spectrum_of)
from .mesh import (MeshError, NonManifoldError, RepairPolicy, TriangleMesh,
                   aspect_ratios, connected_components, load_mesh, save_mesh,
                   validate_and_repair)
from .proximity import SurfaceIndex, deviation_map
from .reconstruct import (ScreeCurve, frobenius_distance, orthonormal_basis,
                          reconstruct, scree_curve, select_k)
from .register import (RigidTransform, icp_register, initial_align, localize,
                       procrustes)
from .remesh import RemeshParams, isotropic_remesh, target_edge_length
from .roi import RoiTrace, correspondence_distances, find_roi, nodal_partition
from .synthetic import add_bump, add_noise, icosphere, spectra_stream

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "backend_name",
    "Phase1Result", "Phase2Result", "estimate_changepoint", "phase1_test",
    "phase2_chart",
    "BoundaryCondition", "LBSpectrum", "assemble", "scaled_spectrum",
    "solve_lowest", "spectrum_of",
    "MeshError", "NonManifoldError", "RepairPolicy", "TriangleMesh",
    "aspect_ratios", "connected_components", "load_mesh", "save_mesh",
    "validate_and_repair",
    "SurfaceIndex", "deviation_map",
    "ScreeCurve", "frobenius_distance", "orthonormal_basis", "reconstruct",
    "scree_curve", "select_k",
    "RigidTransform", "icp_register", "initial_align", "localize", "procrustes",
    "RemeshParams", "isotropic_remesh", "target_edge_length",
    "RoiTrace", "correspondence_distances", "find_roi", "nodal_partition",
    "add_bump", "add_noise", "icosphere", "spectra_stream",
]
