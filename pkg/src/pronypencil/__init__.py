"""Sparse multivariate exponential-sum recovery via a randomized matrix pencil.

Library layout:

- model       signal definition, sampling grids, noise, parameter files
- pencil      the reconstruction pipeline (SVD, pencil matrices, random
              linear combination, simultaneous diagonalization)
- randsphere  complex-sphere sampling and eigenvalue-gap probability bounds
- microscopy  Gaussian-PSF imaging model, DFT/spectral division, subpixel
              localization
- presets     checked-in experiment configurations
- cli         command-line front end (`pronypencil`)
"""

from .model import (
    ParameterSet,
    SampleTable,
    add_noise,
    eval_exponential_sum,
    match_locations,
    min_separation,
    random_params,
    sample_grid,
    torus_distance,
)
from .pencil import (
    ClusteringError,
    GridOrder,
    PencilError,
    ReconstructConfig,
    ReconstructionResult,
    StageError,
    ZeroDataError,
    reconstruct,
)
from .microscopy import ImageGrid, PSFModel, localize, render_image
from .presets import load_preset, preset_names

__version__ = "0.1.0"

__all__ = [
    "ParameterSet",
    "SampleTable",
    "GridOrder",
    "ReconstructConfig",
    "ReconstructionResult",
    "ImageGrid",
    "PSFModel",
    "PencilError",
    "ZeroDataError",
    "ClusteringError",
    "StageError",
    "eval_exponential_sum",
    "sample_grid",
    "min_separation",
    "random_params",
    "add_noise",
    "torus_distance",
    "match_locations",
    "reconstruct",
    "render_image",
    "localize",
    "load_preset",
    "preset_names",
    "__version__",
]
