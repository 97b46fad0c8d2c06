"""Coding and dictionary learning on Grassmann manifolds.

Subspaces of R^d are embedded into symmetric matrices through their
projection matrices; sparse and locality-constrained codes, dictionary
learning and residual classification all operate in that embedding, with
kernelized counterparts for nonlinear data.
"""

from .geometry import (
    GrassmannPoint,
    TangentVector,
    chordal_distance,
    exp_map,
    frechet_mean,
    geodesic_distance,
    log_map,
    orthonormalize,
    principal_angles,
    proj_to_manifold,
    projection_inner,
    random_point,
    random_tangent,
    weighted_chordal_mean,
)
from .solvers import (
    LassoProblem,
    LassoResult,
    SolverConfig,
    affine_local_solve,
    lasso_solve,
)
from .coding import (
    CodeVector,
    GrassmannDictionary,
    build_dictionary,
    glc_encode,
    gsc_encode,
    loge_encode,
    reconstruct,
)
from .kernels import (
    GaussianKernel,
    KernelDictionary,
    KernelSubspace,
    LinearKernel,
    PolynomialKernel,
    build_kernel_dictionary,
    gram_basis,
    kernel_subspace_inner,
    kgsc_encode,
    kglc_encode,
    median_gamma,
    parse_kernel,
)
from .learning import DLConfig, DLTrace, dl_objective, gdl_learn, kgdl_learn
from .modeling import ArmaParams, appearance_subspace, fit_arma, observability_subspace
from .evaluation import (
    CodingSpec,
    SyntheticSpec,
    generate_synthetic,
    residual_classify,
    run_experiment,
    run_trials,
)
from .estimators import (
    GrassmannCoder,
    GrassmannDictionaryLearning,
    KernelGrassmannCoder,
    KernelGrassmannDictionaryLearning,
)

__version__ = "0.1.0"

__all__ = [
    "GrassmannPoint",
    "TangentVector",
    "chordal_distance",
    "exp_map",
    "frechet_mean",
    "geodesic_distance",
    "log_map",
    "orthonormalize",
    "principal_angles",
    "proj_to_manifold",
    "projection_inner",
    "random_point",
    "random_tangent",
    "weighted_chordal_mean",
    "LassoProblem",
    "LassoResult",
    "SolverConfig",
    "affine_local_solve",
    "lasso_solve",
    "CodeVector",
    "GrassmannDictionary",
    "build_dictionary",
    "glc_encode",
    "gsc_encode",
    "loge_encode",
    "reconstruct",
    "GaussianKernel",
    "KernelDictionary",
    "KernelSubspace",
    "LinearKernel",
    "PolynomialKernel",
    "build_kernel_dictionary",
    "gram_basis",
    "kernel_subspace_inner",
    "kgsc_encode",
    "kglc_encode",
    "median_gamma",
    "parse_kernel",
    "DLConfig",
    "DLTrace",
    "dl_objective",
    "gdl_learn",
    "kgdl_learn",
    "ArmaParams",
    "appearance_subspace",
    "fit_arma",
    "observability_subspace",
    "CodingSpec",
    "SyntheticSpec",
    "generate_synthetic",
    "residual_classify",
    "run_experiment",
    "run_trials",
    "GrassmannCoder",
    "GrassmannDictionaryLearning",
    "KernelGrassmannCoder",
    "KernelGrassmannDictionaryLearning",
]
