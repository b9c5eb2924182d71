"""Matched-accuracy comparison of CRAIG and preconditioned MINRES.

The two solvers minimize different quantities, so iteration counts are only
comparable against an external yardstick: both runs are stopped at the
first iterate whose error against a shared direct-solve reference drops
below the requested accuracy.
"""

from dataclasses import dataclass

import numpy as np

from .analysis import direct_solution
from .deflation import correct_solution, deflated_solve, make_deflation
from .errors import NoConvergence
from .esvd import esvd_direct
from .minres import MinresOptions, minres_deflated, minres_preconditioned
from .minres import saddle_eigvecs_from_triplets
from .solver import CraigOptions, craig_solve


@dataclass
class ComparisonResult:
    craig_iterations: int
    minres_iterations: int
    deflated_k: int
    accuracy: float

    @property
    def ratio(self):
        return self.minres_iterations / max(self.craig_iterations, 1)

    def row(self):
        return (self.deflated_k, self.craig_iterations,
                self.minres_iterations, self.ratio)


def _first_below(errors, accuracy):
    errors = np.asarray(errors)
    hit = np.nonzero(errors <= accuracy)[0]
    return int(hit[0]) + 1 if len(hit) else None


def iterations_to_accuracy(errors, accuracy, label):
    count = _first_below(errors, accuracy)
    if count is None:
        raise NoConvergence(
            f"{label} never reached relative accuracy {accuracy:.1e} "
            f"(best {np.min(errors) if len(errors) else np.inf:.3e})")
    return count


def craig_error_curve(system, accuracy_reference, defl=None, opts=None,
                      metric="up_euclid"):
    """Per-iteration relative errors of (corrected) CRAIG iterates.

    ``metric`` is 'up_euclid' (concatenated solution vector) or 'u_energy'
    (W-energy of the velocity error, the quantity CRAIG minimizes).
    """
    u_ref, p_ref = accuracy_reference
    ref_vec = np.concatenate([u_ref, p_ref])
    ref_norm = np.linalg.norm(ref_vec)
    W = system.W
    ref_energy = np.sqrt(u_ref @ (W @ u_ref))
    errs = []

    def cb(k, u, p):
        if defl is not None:
            u, p = correct_solution(defl, system, u, p)
        if metric == "up_euclid":
            errs.append(np.linalg.norm(np.concatenate([u, p]) - ref_vec) / ref_norm)
        else:
            d = u - u_ref
            errs.append(np.sqrt(max(d @ (W @ d), 0.0)) / ref_energy)

    opts = opts or CraigOptions(tol=1e-12)
    if defl is not None:
        deflated_solve(system, defl, opts, iterate_callback=cb)
    else:
        craig_solve(system, opts, iterate_callback=cb)
    return np.array(errs)


def minres_error_curve(system, accuracy_reference, Y=None, opts=None):
    opts = opts or MinresOptions(tol=1e-12)
    if Y is None or Y.shape[1] == 0:
        report = minres_preconditioned(system, opts, reference=accuracy_reference)
    else:
        report = minres_deflated(system, Y, opts, reference=accuracy_reference)
    return report.err_true


def compare_solvers(system, deflate_k=0, accuracy=1e-8, triplets=None,
                    metric="up_euclid"):
    """Run both solvers to matched accuracy; returns a ComparisonResult.

    ``deflate_k > 0`` deflates the k smallest elliptic singular values on
    both sides: CRAIG through the triplet projectors, MINRES through the 2k
    eigenvectors of the preconditioned matrix built from the same triplets.
    """
    reference = direct_solution(system)
    if deflate_k > 0:
        if triplets is None:
            triplets = esvd_direct(system, deflate_k, target="smallest")
        defl = make_deflation(triplets, system)
        Y = saddle_eigvecs_from_triplets(triplets, system)
    else:
        defl, Y = None, None
    craig_errs = craig_error_curve(system, reference, defl=defl, metric=metric)
    minres_errs = minres_error_curve(system, reference, Y=Y)
    c = iterations_to_accuracy(craig_errs, accuracy, "CRAIG")
    m = iterations_to_accuracy(minres_errs, accuracy, "MINRES")
    return ComparisonResult(c, m, deflate_k, accuracy)


def write_ratio_table(path, results):
    with open(path, "w") as fh:
        fh.write("deflated_k,craig_iterations,minres_iterations,ratio\n")
        for r in results:
            k, c, m, ratio = r.row()
            fh.write("%d,%d,%d,%r\n" % (k, c, m, float(ratio)))
    return path
