"""Experiment command line.

Subcommands: generate, solve, compare, coeffs, esvd, spectrum. Options can
come from a JSON config file (--config); explicit flags override file
values. All randomness flows from --seed, so a rerun with the same config
produces byte-identical CSVs. Default output root is $GKD_OUTPUT_DIR or
./gkd_out.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure
(partial outputs are still written).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, compare
from .deflation import make_deflation, deflated_solve, correct_solution, save_triplets
from .errors import GkdeflError, InvalidSpec
from .esvd import EsvdOptions, esvd_direct, esvd_recycled, esvd_restarted, triplet_residuals
from .minres import MinresOptions, minres_deflated
from .minres import saddle_eigvecs_from_triplets
from .problems import build_1d_channel, load_system_dir, save_system
from .solver import CraigOptions, craig_solve

CONFIG_KEYS = ("n", "files", "solver", "deflation", "k", "eta", "esvd_tol",
               "esvd_max_iter", "mode", "tol", "max_iter", "seed", "out",
               "rhs_mode", "target", "drop_factor")


def _default_out():
    return os.environ.get("GKD_OUTPUT_DIR", "gkd_out")


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--n", type=int, help="channel length (cells)")
    p.add_argument("--files", help="directory with <label>_{W,A,g,r}.mtx")
    p.add_argument("--rhs-mode", dest="rhs_mode", choices=["consistent", "display"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default $GKD_OUTPUT_DIR)")


def _add_solver(p):
    p.add_argument("--solver", choices=["craig", "minres"])
    p.add_argument("--deflation", choices=["none", "exact", "esvd2", "recycled"])
    p.add_argument("--k", type=int)
    p.add_argument("--eta", type=int)
    p.add_argument("--esvd-tol", dest="esvd_tol", type=float)
    p.add_argument("--esvd-max-iter", dest="esvd_max_iter", type=int)
    p.add_argument("--mode", choices=["general", "simplified"])
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--target", choices=["smallest", "largest"])


class Config:
    """Flag/file merge with defaults; flags win over the file."""

    DEFAULTS = dict(n=None, files=None, solver="craig", deflation="none",
                    k=0, eta=None, esvd_tol=1e-8, esvd_max_iter=30,
                    mode="general", tol=1e-8, max_iter=None, seed=0,
                    out=None, rhs_mode="consistent", target="smallest",
                    drop_factor=0.1)

    def __init__(self, args):
        merged = dict(self.DEFAULTS)
        path = getattr(args, "config", None)
        if path:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise InvalidSpec(f"cannot read config {path}: {exc}") from exc
            unknown = set(data) - set(CONFIG_KEYS)
            if unknown:
                raise InvalidSpec(f"unknown config keys: {sorted(unknown)}")
            merged.update(data)
        for key in CONFIG_KEYS:
            val = getattr(args, key, None)
            if val is not None:
                merged[key] = val
        self.__dict__.update(merged)
        if self.out is None:
            self.out = _default_out()

    def system(self):
        if self.files:
            return load_system_dir(self.files)
        if self.n is None:
            raise InvalidSpec("specify a problem: --n <cells> or --files <dir>")
        return build_1d_channel(self.n, rhs_mode=self.rhs_mode)

    def rng(self):
        return np.random.default_rng(self.seed)

    def craig_options(self, **over):
        kw = dict(tol=self.tol, max_iter=self.max_iter)
        kw.update(over)
        return CraigOptions(**kw)

    def esvd_options(self):
        if self.k < 1:
            raise InvalidSpec(f"deflation '{self.deflation}' needs --k >= 1")
        return EsvdOptions(k=self.k, target=self.target, eta=self.eta,
                           tol=self.esvd_tol, max_iter=self.esvd_max_iter)


def _triplets_for(cfg, system):
    """Compute the deflation triplets requested by the config."""
    if cfg.deflation == "exact":
        if cfg.k < 1:
            raise InvalidSpec("deflation 'exact' needs --k >= 1")
        return esvd_direct(system, cfg.k, target=cfg.target)
    if cfg.deflation == "esvd2":
        return esvd_restarted(system, cfg.esvd_options(), rng=cfg.rng()).triplets
    if cfg.deflation == "recycled":
        trace_opts = cfg.craig_options(keep_trace=True, reorthogonalize="full")
        trace = craig_solve(system, trace_opts).trace
        return esvd_recycled(system, trace, cfg.esvd_options())
    raise InvalidSpec(f"unknown deflation kind {cfg.deflation!r}")


def cmd_generate(args):
    cfg = Config(args)
    if cfg.n is None:
        raise InvalidSpec("generate needs --n")
    system = build_1d_channel(cfg.n, rhs_mode=cfg.rhs_mode)
    paths = save_system(system, cfg.out)
    for name in ("W", "A", "g", "r"):
        print(f"wrote {paths[name]}")
    return 0


def _write_spectrum_if_dense(system, out_dir):
    if system.n <= analysis.DENSE_EIG_MAX:
        rep = analysis.schur_spectrum_dense(system)
        path = rep.write_csv(os.path.join(out_dir, "spectrum_schur.csv"))
        print(f"wrote {path}")


def cmd_solve(args):
    cfg = Config(args)
    system = cfg.system()
    os.makedirs(cfg.out, exist_ok=True)
    failed = False

    if cfg.solver == "minres":
        Y = np.zeros((system.m + system.n, 0))
        if cfg.deflation != "none":
            triplets = _triplets_for(cfg, system)
            save_triplets(triplets, cfg.out)
            Y = saddle_eigvecs_from_triplets(triplets, system)
        report = minres_deflated(system, Y, MinresOptions(tol=cfg.tol, max_iter=cfg.max_iter))
        path = report.write_csv(os.path.join(cfg.out, "minres_report.csv"))
        print(f"wrote {path} ({report.iterations} iterations, "
              f"converged={report.converged})")
        failed = not report.converged
    else:
        if cfg.deflation != "none":
            triplets = _triplets_for(cfg, system)
            save_triplets(triplets, cfg.out)
            defl = make_deflation(triplets, system, mode=cfg.mode)
            report = deflated_solve(system, defl, cfg.craig_options())
            u, p = correct_solution(defl, system, report.u, report.p)
            report.u, report.p = u, p
        else:
            reference = None
            if system.n <= analysis.DENSE_EIG_MAX:
                reference = analysis.direct_solution(system)[0]
            report = craig_solve(system, cfg.craig_options(), reference=reference)
        path = report.write_csv(os.path.join(cfg.out, "solve_report.csv"))
        print(f"wrote {path} ({report.iterations} iterations, "
              f"converged={report.converged})")
        failed = not report.converged

    _write_spectrum_if_dense(system, cfg.out)
    return 3 if failed else 0


def cmd_compare(args):
    cfg = Config(args)
    system = cfg.system()
    os.makedirs(cfg.out, exist_ok=True)
    results = [compare.compare_solvers(system, 0, accuracy=cfg.tol)]
    if cfg.k > 0:
        results.append(compare.compare_solvers(system, cfg.k, accuracy=cfg.tol))
    path = compare.write_ratio_table(os.path.join(cfg.out, "ratio_table.csv"), results)
    for r in results:
        print(f"k={r.deflated_k}: CRAIG {r.craig_iterations}, "
              f"MINRES {r.minres_iterations}, ratio {r.ratio:.3f}")
    print(f"wrote {path}")
    return 0


def cmd_coeffs(args):
    cfg = Config(args)
    system = cfg.system()
    os.makedirs(cfg.out, exist_ok=True)
    triplets = esvd_direct(system, system.n, target="largest")  # full set, descending
    u_ref = analysis.direct_solution(system)[0]
    first = craig_solve(system, cfg.craig_options(max_iter=1))
    coeffs = analysis.error_coefficients(system, triplets, u_ref, first.u)
    p1 = coeffs.write_csv(os.path.join(cfg.out, "coeffs_full.csv"))
    p2 = coeffs.write_csv(os.path.join(cfg.out, "coeffs_filtered.csv"), filtered=True)
    print(f"wrote {p1}")
    print(f"wrote {p2}")
    return 0


def cmd_esvd(args):
    cfg = Config(args)
    system = cfg.system()
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.deflation in ("none", "exact"):
        if cfg.k < 1:
            raise InvalidSpec("esvd needs --k >= 1")
        triplets = esvd_direct(system, cfg.k, target=cfg.target)
    else:
        triplets = _triplets_for(cfg, system)
    save_triplets(triplets, cfg.out)
    res = triplet_residuals(system, triplets)
    path = os.path.join(cfg.out, "triplet_residuals.csv")
    with open(path, "w") as fh:
        fh.write("index,sigma,scalar_residual,vector_residual\n")
        for i in range(triplets.k):
            fh.write("%d,%r,%r,%r\n" % (i, float(triplets.sigma[i]),
                                        float(res.scalar[i]), float(res.vector[i])))
    print(f"wrote {path}")
    return 0


def cmd_spectrum(args):
    cfg = Config(args)
    system = cfg.system()
    os.makedirs(cfg.out, exist_ok=True)
    rep = analysis.schur_spectrum_dense(system)
    path = rep.write_csv(os.path.join(cfg.out, "spectrum_schur.csv"))
    print(f"effective condition (k=0): {rep.effective_condition:.6e}")
    print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gkdefl",
        description="Deflated Golub-Kahan/CRAIG experiments on saddle-point systems")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, with_solver in (
            ("generate", cmd_generate, False),
            ("solve", cmd_solve, True),
            ("compare", cmd_compare, True),
            ("coeffs", cmd_coeffs, False),
            ("esvd", cmd_esvd, True),
            ("spectrum", cmd_spectrum, False)):
        p = sub.add_parser(name)
        _add_common(p)
        if with_solver:
            _add_solver(p)
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidSpec as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GkdeflError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
