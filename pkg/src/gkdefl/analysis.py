"""Spectral and error diagnostics.

Dense oracles live here: the Schur-complement spectrum, the deflated-
operator spectrum, a direct reference solve, the decomposition of an
initial solver error over the left elliptic singular vectors, and the
plateau measure used to quantify stagnation.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DimensionMismatch, SizeExceeded

DENSE_EIG_MAX = 2048
COEFF_THRESHOLD = 1e-7


def direct_solution(system):
    """Reference (u, p) from a sparse direct solve of the monolithic system."""
    m, n = system.A.shape
    K = sp.bmat([[system.W, system.A], [system.A.T, None]], format="csc")
    z = splu(K).solve(np.concatenate([system.g, system.r]))
    return z[:m], z[m:]


@dataclass
class SpectrumReport:
    """Sorted (descending) spectrum with its effective condition number.

    ``source`` is 'schur_eigen', 'elliptic_sv' or 'deflated'. For elliptic
    singular values the effective condition is squared so it refers to the
    Schur complement.
    """

    values: np.ndarray
    source: str
    effective_condition: float

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("index,value\n")
            for i, v in enumerate(self.values):
                fh.write("%d,%r\n" % (i, float(v)))
        return path


def effective_condition(values, deflated_count=0):
    """(values[0] / values[-1 - deflated_count])^2 for descending elliptic values."""
    values = np.asarray(values, dtype=np.float64)
    if deflated_count >= len(values):
        raise ValueError("deflated_count must leave at least one value")
    small = values[len(values) - 1 - deflated_count]
    return float((values[0] / small) ** 2)


def schur_spectrum_dense(system, max_n=DENSE_EIG_MAX):
    """Eigenvalues of S = A^T W^{-1} A, computed densely."""
    m, n = system.A.shape
    if n > max_n:
        raise SizeExceeded(f"dense Schur spectrum refused for n = {n} > {max_n}")
    factor = system.factor()
    Ad = system.A.toarray()
    WinvA = np.column_stack([factor.solve(Ad[:, j]) for j in range(n)])
    S = Ad.T @ WinvA
    vals = np.linalg.eigvalsh((S + S.T) / 2.0)[::-1]
    return SpectrumReport(vals, "schur_eigen", float(vals[0] / vals[-1]))


def elliptic_spectrum_report(sigma):
    """Report for a descending set of elliptic singular values."""
    sigma = np.asarray(sigma, dtype=np.float64)
    return SpectrumReport(sigma, "elliptic_sv", effective_condition(sigma))


def deflated_spectrum_dense(system, triplets, max_n=DENSE_EIG_MAX):
    """Elliptic singular values of the deflated operator, dense oracle.

    Uses the left-projected form (I - G^T U U^T G) L^{-1} A in whitened
    coordinates, whose rank drops by exactly k whenever the left vectors
    lie in the range of W^{-1} A.
    """
    m, n = system.A.shape
    if n > max_n:
        raise SizeExceeded(f"dense deflated spectrum refused for n = {n} > {max_n}")
    factor = system.factor()
    Ad = system.A.toarray()
    Awhite = np.column_stack([factor.whiten(Ad[:, j]) for j in range(n)])
    if triplets.k:
        Ut = np.column_stack([factor.colorize_t(triplets.U[:, i])
                              for i in range(triplets.k)])
        Awhite = Awhite - Ut @ (Ut.T @ Awhite)
    vals = np.linalg.svd(Awhite, compute_uv=False)
    nz = vals[vals > 1e-10 * max(vals[0], 1e-300)]
    eff = float((nz[0] / nz[-1]) ** 2) if len(nz) else np.inf
    return SpectrumReport(vals, "deflated", eff)


@dataclass
class ErrorCoefficients:
    """Coefficients z with U z = (u_reference - u_initial), descending-sigma order."""

    z: np.ndarray
    threshold_mask: np.ndarray

    def write_csv(self, path, filtered=False):
        with open(path, "w") as fh:
            fh.write("index,coefficient\n")
            for i, v in enumerate(self.z):
                if filtered and not self.threshold_mask[i]:
                    continue
                fh.write("%d,%r\n" % (i, float(v)))
        return path


def error_coefficients(system, triplets, u_reference, u_initial,
                       threshold=COEFF_THRESHOLD):
    """z = U^T W (u_reference - u_initial), exploiting U^T W U = I.

    With the full decomposition (k = n) this solves U z = error exactly,
    since the error lies in range(W^{-1} A).
    """
    u_reference = np.asarray(u_reference, dtype=np.float64)
    u_initial = np.asarray(u_initial, dtype=np.float64)
    if u_reference.shape != (system.m,) or u_initial.shape != (system.m,):
        raise DimensionMismatch(
            f"expected velocity vectors of length {system.m}")
    z = triplets.U.T @ (system.W @ (u_reference - u_initial))
    return ErrorCoefficients(z, np.abs(z) > threshold)


def plateau_length(history, drop_factor=0.1):
    """Leading iterations before the error first drops below
    drop_factor * initial error; the full length when it never does."""
    history = np.asarray(history, dtype=np.float64)
    if len(history) == 0:
        return 0
    limit = drop_factor * history[0]
    below = np.nonzero(history < limit)[0]
    return int(below[0]) if len(below) else len(history)
