"""Shared domain types: datasets, basis expansion, quantile grids, seeded RNG.

All types here are immutable once built. Arrays held by them are marked
read-only so a shared instance cannot be mutated by accident.
"""
import csv
import itertools
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatch, InvalidM, NonFinite


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Offline simulation record: covariate rows and matching responses.

    ``response`` is 1-D for a single output and ``(n, d)`` for ``d`` outputs.
    Build through :func:`validate_dataset`.
    """

    design: np.ndarray
    response: np.ndarray

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    @property
    def d(self):
        return 1 if self.response.ndim == 1 else self.response.shape[1]

    def output(self, l):
        """Response column ``l`` (0-based) as a vector."""
        if self.response.ndim == 1:
            if l != 0:
                raise DimensionMismatch(f"single-output dataset has no column {l}")
            return self.response
        return self.response[:, l]


def validate_dataset(design, response) -> Dataset:
    """Check shapes and finiteness and wrap the arrays in a :class:`Dataset`.

    Rank and n >= p are deliberately not checked here; fitting does that,
    so a one-row sample of a test problem is still a valid dataset.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"design must be 2-D, got shape {X.shape}")
    if y.ndim not in (1, 2):
        raise DimensionMismatch(f"response must be 1-D or 2-D, got shape {y.shape}")
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    n, p = X.shape
    if y.shape[0] != n:
        raise DimensionMismatch(f"design has {n} rows but response has {y.shape[0]}")
    if p < 1 or n < 1:
        raise DimensionMismatch(f"need n >= 1 rows and p >= 1 columns, got n={n}, p={p}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFinite("dataset contains NaN or infinite entries")
    return Dataset(_frozen(X), _frozen(y))


@dataclass(frozen=True)
class BasisSpec:
    """Feature map b(x) applied to covariates before fitting and prediction.

    ``identity`` passes x through unchanged, so the input must already carry
    any intercept column. ``polynomial`` takes the raw covariates (no leading
    1) and returns every monomial of total degree <= ``degree``, constant
    first, in graded lexicographic order. For two inputs and degree 3::

        1, x1, x2, x1^2, x1 x2, x2^2, x1^3, x1^2 x2, x1 x2^2, x2^3
    """

    kind: str
    input_dim: int
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("identity", "polynomial"):
            raise ConfigError(f"unknown basis kind {self.kind!r}")
        if int(self.input_dim) < 1:
            raise ConfigError("input_dim must be positive")
        if self.kind == "polynomial" and int(self.degree) < 1:
            raise ConfigError("polynomial degree must be positive")

    @property
    def output_dim(self):
        if self.kind == "identity":
            return self.input_dim
        return comb(self.input_dim + self.degree, self.degree)

    def exponents(self):
        """Exponent tuples of the polynomial monomials in canonical order."""
        out = []
        for deg in range(self.degree + 1):
            for idx in itertools.combinations_with_replacement(range(self.input_dim), deg):
                e = [0] * self.input_dim
                for i in idx:
                    e[i] += 1
                out.append(tuple(e))
        return out

    def to_dict(self):
        return {"kind": self.kind, "degree": self.degree, "input_dim": self.input_dim}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], input_dim=int(d["input_dim"]), degree=int(d.get("degree", 1)))


def identity_basis(input_dim):
    return BasisSpec("identity", input_dim)


def polynomial_basis(input_dim, degree):
    return BasisSpec("polynomial", input_dim, degree)


def expand_basis(spec: BasisSpec, x) -> np.ndarray:
    """Evaluate b(x) for one covariate vector or for each row of a matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DimensionMismatch(
            f"basis expects input dimension {spec.input_dim}, got {x.shape[-1] if x.ndim else 0}"
        )
    if spec.kind == "identity":
        B = X.copy()
    else:
        cols = [np.ones(X.shape[0])]
        # degree-by-degree products keep this O(output_dim) multiplications
        prev = {(): cols[0]}
        for deg in range(1, spec.degree + 1):
            cur = {}
            for idx in itertools.combinations_with_replacement(range(spec.input_dim), deg):
                col = prev[idx[:-1]] * X[:, idx[-1]]
                cur[idx] = col
                cols.append(col)
            prev = cur
        B = np.column_stack(cols)
    return B[0] if single else B


@dataclass(frozen=True)
class QuantileGrid:
    """Equally spaced levels j/m, j = 1..m-1."""

    m: int
    levels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise InvalidM(f"m must be an integer >= 2, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        # one division per level; no accumulated rounding
        object.__setattr__(self, "levels", _frozen(np.arange(1, self.m) / self.m))

    def __len__(self):
        return self.m - 1


def make_grid(m) -> QuantileGrid:
    return QuantileGrid(m)


def default_m(n):
    """Grid size floor(sqrt(n)), at least 2."""
    return max(2, int(np.floor(np.sqrt(n))))


class SeededRng:
    """Reproducible uniform stream keyed by a 64-bit seed and a sub-stream path.

    The generator is Philox-4x64-10 seeded through ``numpy.random.SeedSequence``
    with the path as its spawn key. Uniforms are built from the top 53 bits of
    the raw 64-bit output as ``(k + 0.5) / 2**53``, so they lie strictly inside
    (0, 1) and depend only on the bit generator, whose stream numpy keeps
    stable across releases.

    ``child(*keys)`` gives an independent stream for a sub-task; children
    with the same path are identical. Instances are stateful and must not be
    shared between threads.
    """

    ALGORITHM = "philox4x64-10/seedseq/top53-v1"

    def __init__(self, seed, path=()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.path = tuple(int(k) for k in path)
        ss = np.random.SeedSequence(seed, spawn_key=self.path)
        self._bitgen = np.random.Philox(ss)

    def child(self, *keys):
        return SeededRng(self.seed, self.path + tuple(keys))

    def uniform(self, size=None):
        """Uniforms on the open interval (0, 1)."""
        if size is None:
            return float(self.uniform(1)[0])
        raw = self._bitgen.random_raw(size)
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def uniform_range(self, lo, hi, size=None):
        return lo + (hi - lo) * self.uniform(size)

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, path={self.path})"


def as_rng(rng):
    """Accept a :class:`SeededRng` or a plain integer seed."""
    if isinstance(rng, SeededRng):
        return rng
    return SeededRng(rng)


# ---------------------------------------------------------------------------
# CSV dataset format: header row, covariates x1..xp, responses y1..yd.


def read_dataset_csv(path, add_intercept=False) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    if not ycols:
        raise ConfigError(f"{path}: no response columns (y1..yd) in header")
    try:
        data = np.array([[float(r[i]) for i in range(len(header))] for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed row ({exc})") from None
    if data.size == 0:
        raise ConfigError(f"{path}: no data rows")
    X = data[:, xcols]
    if add_intercept:
        X = np.column_stack([np.ones(len(data)), X])
    return validate_dataset(X, data[:, ycols])


def write_dataset_csv(path, dataset: Dataset, drop_intercept=False):
    """Write ``dataset``; ``drop_intercept`` omits a leading constant column."""
    X = np.asarray(dataset.design)
    if drop_intercept:
        if not np.all(X[:, 0] == 1.0):
            raise ConfigError("first design column is not a constant intercept")
        X = X[:, 1:]
    Y = dataset.response.reshape(dataset.n, -1)
    header = [f"x{i + 1}" for i in range(X.shape[1])] + [f"y{i + 1}" for i in range(Y.shape[1])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.column_stack([X, Y]):
            w.writerow([repr(float(v)) for v in row])
