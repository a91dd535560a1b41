"""Null and positive paths of diffeomorphisms on standard contact R^3 (alpha = dz + x dy)."""

from .contact import REEB, X, Y, Z, alpha, conformal_factor, hamiltonian_vector_field, kernel_defect
from .diffeo import Box, FlowFamily, builtin, builtin_family, reeb_time
from .extension import extend_positive, well_example
from .factorize import auto_factorize, factorize
from .legendrian import isotopy_classify, jet_legendrian, transport
from .paths import classify, hofer_length
from .synthesis import null_path_to, positive_path_to, reeb_null_path, subdivide_and_connect
from .verify import verify

__version__ = "0.1.0"

__all__ = [
    "REEB", "X", "Y", "Z", "alpha", "conformal_factor", "hamiltonian_vector_field", "kernel_defect",
    "Box", "FlowFamily", "builtin", "builtin_family", "reeb_time", "extend_positive", "well_example",
    "auto_factorize", "factorize", "isotopy_classify", "jet_legendrian", "transport", "classify",
    "hofer_length", "null_path_to", "positive_path_to", "reeb_null_path", "subdivide_and_connect", "verify",
]
