"""Saddle-point test problems: the 1D channel generator and file I/O.

The channel models transport through two stacked rows of n cells with
inflow through the upper-left edge and outflow through the lower-right
edge. Velocity unknowns are ordered row-wise (all top, then all bottom);
pressure unknowns p_1 .. p_{n-1}. The first mass constraint is replaced by
the half-difference of the first and last constraints and the last is
dropped, which removes the constant-pressure rank deficiency.
"""

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import InvalidSpec, IoError, NotSPD, ParseError, ShapeError
from .errors import NotPositiveDefinite, NotSymmetric
from .linops import DEFAULT_TOL, spd_factorize

RANK_CHECK_LIMIT = 1000


@dataclass(eq=False)
class SaddlePointSystem:
    """Blocks of [[W, A], [A^T, 0]] [u; p] = [g; r] with SPD W, full-rank A."""

    W: sp.csr_matrix
    A: sp.csr_matrix
    g: np.ndarray
    r: np.ndarray
    label: str = ""
    _factor: object = field(default=None, repr=False, compare=False)

    @property
    def m(self):
        return self.W.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def factor(self, tol=DEFAULT_TOL):
        """Cached Cholesky factor of W."""
        if self._factor is None:
            self._factor = spd_factorize(self.W, tol)
        return self._factor

    def validate(self, rank_limit=RANK_CHECK_LIMIT):
        """Check shapes, n < m, SPD W and (for small n) full column rank of A."""
        m, n = self.A.shape
        if self.W.shape != (m, m):
            raise ShapeError(f"W is {self.W.shape} but A has {m} rows")
        if not n < m:
            raise ShapeError(f"A must be tall (n < m), got {m}x{n}")
        if self.g.shape != (m,) or self.r.shape != (n,):
            raise ShapeError(
                f"rhs shapes {self.g.shape}, {self.r.shape} do not match blocks {m}, {n}")
        self.factor()
        if n <= rank_limit:
            gram = (self.A.T @ self.A).toarray()
            rank = np.linalg.matrix_rank(gram, hermitian=True)
            if rank < n:
                raise ShapeError(f"A is column-rank deficient: rank {rank} < {n}")
        return self


@dataclass(frozen=True)
class ChannelSpec:
    """1D channel of length_n cells; boundary velocities at the two open edges."""

    length_n: int
    inflow_top: float = 1.0
    outflow_bottom: float = 1.0

    def __post_init__(self):
        if self.length_n < 2:
            raise InvalidSpec(f"channel needs at least 2 cells, got {self.length_n}")


def build_1d_channel(spec, rhs_mode="consistent"):
    """Assemble the channel system.

    ``rhs_mode='consistent'`` assembles the first constraint value with the
    same blend as the matrix row; ``'display'`` always uses
    r = (1, 0, ..., 0). The two agree for the default boundary data.
    """
    if rhs_mode not in ("consistent", "display"):
        raise InvalidSpec(f"unknown rhs_mode {rhs_mode!r}")
    if not isinstance(spec, ChannelSpec):
        spec = ChannelSpec(int(spec))
    n = spec.length_n
    nv = n - 1          # interior velocities per row
    m = 2 * nv
    npress = n - 1

    # momentum rows: -v_{i-1} + 4 v_i - v_{i+1} in each row, -1 coupling across
    T = sp.diags([-np.ones(nv - 1), 4.0 * np.ones(nv), -np.ones(nv - 1)],
                 [-1, 0, 1], format="csr")
    I = sp.identity(nv, format="csr")
    W = sp.bmat([[T, -I], [-I, T]], format="csr")

    # constraint columns; column j>=1 is v_j - v_{j-1} summed over both rows.
    # Column 0 blends the first and the (dropped) last constraint as
    # 0.5 c_1 - 0.5 c_n: the +0.5/+0.5 signs keep A at full column rank
    # (the naive 0.5 c_1 + 0.5 c_n is a combination of the other columns).
    rows, cols, vals = [], [], []
    for blk in (0, nv):                      # top block offset 0, bottom offset nv
        rows += [blk + 0, blk + nv - 1]
        cols += [0, 0]
        vals += [0.5, 0.5]
        for j in range(1, npress):
            rows += [blk + j, blk + j - 1]
            cols += [j, j]
            vals += [1.0, -1.0]
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, npress))
    A.sum_duplicates()

    # eliminated Dirichlet values: v_0^t and v_n^b enter the first top /
    # last bottom momentum rows (v_0^b = v_n^t = 0 contribute nothing)
    g = np.zeros(m)
    g[0] = spec.inflow_top
    g[m - 1] = spec.outflow_bottom

    r = np.zeros(npress)
    if rhs_mode == "consistent":
        # same blend as the matrix row: 0.5 (v_0^t + v_0^b) + 0.5 (v_n^t + v_n^b)
        r[0] = 0.5 * spec.inflow_top + 0.5 * spec.outflow_bottom
    else:
        r[0] = 1.0

    system = SaddlePointSystem(W, A, g, r, label=f"channel{n}")
    return system.validate()


def _read_mm(path, kind):
    if not os.path.exists(path):
        raise IoError(f"no such file: {path}")
    try:
        mat = scipy.io.mmread(path)
    except Exception as exc:
        raise ParseError(f"cannot parse {path}: {exc}") from exc
    if kind == "matrix":
        return sp.csr_matrix(mat)
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim == 2:
        if 1 not in arr.shape:
            raise ShapeError(f"{path}: expected a vector, got shape {arr.shape}")
        arr = arr.ravel()
    return arr


def load_system(path_W, path_A, path_g, path_r, label=""):
    """Load a system from four Matrix-Market files and validate it."""
    W = _read_mm(path_W, "matrix")
    A = _read_mm(path_A, "matrix")
    g = _read_mm(path_g, "vector")
    r = _read_mm(path_r, "vector")
    system = SaddlePointSystem(W, A, g, r, label=label or "loaded")
    try:
        return system.validate()
    except (NotSymmetric, NotPositiveDefinite) as exc:
        raise NotSPD(f"W block failed the SPD check: {exc}") from exc


def save_system(system, directory):
    """Write the four blocks as Matrix-Market files; returns the paths.

    Values carry 17 significant digits so a round trip is bit-exact.
    """
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    label = system.label or "system"
    paths = {}
    try:
        for name, obj in (("W", system.W), ("A", system.A),
                          ("g", system.g), ("r", system.r)):
            path = os.path.join(directory, f"{label}_{name}.mtx")
            if name == "W":
                scipy.io.mmwrite(path, sp.coo_matrix(obj), precision=17, symmetry="symmetric")
            elif name == "A":
                scipy.io.mmwrite(path, sp.coo_matrix(obj), precision=17)
            else:
                scipy.io.mmwrite(path, np.asarray(obj).reshape(-1, 1), precision=17)
            paths[name] = path
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return paths


def load_system_dir(directory, label=None):
    """Load ``<label>_{W,A,g,r}.mtx`` from a directory (label auto-detected)."""
    if label is None:
        candidates = {f[:-6] for f in os.listdir(directory) if f.endswith("_W.mtx")}
        if len(candidates) != 1:
            raise IoError(
                f"expected exactly one '<label>_W.mtx' in {directory}, found {sorted(candidates)}")
        label = candidates.pop()
    paths = [os.path.join(directory, f"{label}_{name}.mtx") for name in ("W", "A", "g", "r")]
    return load_system(*paths, label=label)
