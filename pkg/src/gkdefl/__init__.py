"""Deflated generalized Golub-Kahan (CRAIG) solvers for saddle-point systems.

Core objects: build or load a :class:`~gkdefl.problems.SaddlePointSystem`,
solve it with :func:`~gkdefl.solver.craig_solve` or
:func:`~gkdefl.minres.minres_preconditioned`, compute elliptic singular
triplets (:mod:`gkdefl.esvd`), and accelerate the solve by deflation
(:mod:`gkdefl.deflation`).
"""

from . import _kernels
from .analysis import (
    ErrorCoefficients,
    SpectrumReport,
    direct_solution,
    effective_condition,
    error_coefficients,
    plateau_length,
    schur_spectrum_dense,
)
from .deflation import (
    DeflationOperators,
    EllipticTriplets,
    correct_solution,
    deflated_matvec,
    deflated_solve,
    load_triplets,
    make_deflation,
    save_triplets,
)
from .esvd import (
    EsvdOptions,
    TripletResiduals,
    esvd_direct,
    esvd_recycled,
    esvd_restarted,
    gkb_restarted,
    triplet_residuals,
)
from .linops import SPDFactor, Tolerances, apply_inverse, spd_factorize, w_inner, w_norm
from .minres import (
    MinresOptions,
    MinresReport,
    MonolithicSystem,
    minres_deflated,
    minres_preconditioned,
    saddle_eig_from_sigma,
    saddle_eigvecs_from_triplets,
)
from .problems import (
    ChannelSpec,
    SaddlePointSystem,
    build_1d_channel,
    load_system,
    load_system_dir,
    save_system,
)
from .solver import (
    BidiagFactors,
    CraigOptions,
    SolveReport,
    craig_error_estimate,
    craig_solve,
    gkb_run,
)

__version__ = "0.1.0"

kernel_backend = _kernels.backend_name
