"""Statistical shape models of the female breast from unregistered surface scans."""

__version__ = "0.1.0"

from .errors import BreastSSMError, ConfigError, MeshFormatError, NumericalError, ValidationError
from .mesh import GUIDANCE_LANDMARKS, LANDMARK_NAMES, TriangleMesh
from .io import load_mesh, save_mesh
from .masks import compute_mask, derive_params, mask_for
from .rigid import RigidConfig, SimilarityTransform, rigid_align
from .casap import CasapConfig, register
from .multires import PipelineConfig, run_pipeline
from .model import ShapeModel, build, gpa, load_model, reconstruct, sample, save_model
from .apps import edit, fit_edit_map, posterior_predict

__all__ = [
    "BreastSSMError", "ConfigError", "MeshFormatError", "NumericalError", "ValidationError",
    "GUIDANCE_LANDMARKS", "LANDMARK_NAMES", "TriangleMesh", "load_mesh", "save_mesh",
    "compute_mask", "derive_params", "mask_for", "RigidConfig", "SimilarityTransform", "rigid_align",
    "CasapConfig", "register", "PipelineConfig", "run_pipeline",
    "ShapeModel", "build", "gpa", "load_model", "reconstruct", "sample", "save_model",
    "edit", "fit_edit_map", "posterior_predict",
]
