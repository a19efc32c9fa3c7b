"""Multi-output generation by chaining single-output metamodels.

Stage l models Y_l given (x, y_1, ..., y_{l-1}); sampling fills each row
left to right, feeding the generated components into later stages.

Stream discipline: stage l (0-based) draws its K uniforms from the child
stream ``rng.child(l)``, in row order. Adding or removing later stages
therefore never changes the earlier columns under the same seed.
"""
from dataclasses import dataclass

import numpy as np

from .core import BasisSpec, Dataset, as_rng, validate_dataset
from .errors import ConfigError, DimensionMismatch, QrgmmError
from .metamodel import GenerativeMetamodel, fit_grid, generate, sample_rows
from .nnqr import MlpSpec, NnQuantileModel, fit_nn_grid, nn_generate, nn_sample_rows


@dataclass(frozen=True)
class SequentialModel:
    stages: tuple

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise ConfigError("a sequential model needs at least one stage")
        dims = [_input_dim(s) for s in stages]
        for l in range(1, len(dims)):
            if dims[l] != dims[0] + l:
                raise DimensionMismatch(
                    f"stage {l + 1} takes {dims[l]} inputs, expected {dims[0] + l}")
        object.__setattr__(self, "stages", stages)

    @property
    def d(self):
        return len(self.stages)

    @property
    def input_dim(self):
        return _input_dim(self.stages[0])


def _input_dim(stage):
    return stage.basis.input_dim if isinstance(stage, GenerativeMetamodel) else stage.input_dim


def fit_multi(dataset: Dataset, bases, m, opts=None, *, nn_m=None):
    """Fit stage l on the design [x, y_1..y_{l-1}] against y_l.

    ``bases[l]`` is a :class:`BasisSpec` (linear quantile regression) or an
    :class:`~qrgmm.nnqr.MlpSpec` (network quantile regression). Errors are
    re-raised tagged with the 1-based stage index.
    """
    bases = list(bases)
    d = dataset.d
    if len(bases) != d:
        raise DimensionMismatch(f"dataset has {d} outputs but {len(bases)} bases were given")
    Y = dataset.response.reshape(dataset.n, d)
    stages = []
    for l, spec in enumerate(bases):
        want = dataset.p + l
        try:
            aug = validate_dataset(np.column_stack([dataset.design, Y[:, :l]]), Y[:, l])
            if isinstance(spec, MlpSpec):
                if spec.widths[0] != want:
                    raise DimensionMismatch(f"network input width {spec.widths[0]} != {want}")
                stages.append(fit_nn_grid(aug, spec, m if nn_m is None else nn_m))
            elif isinstance(spec, BasisSpec):
                if spec.input_dim != want:
                    raise DimensionMismatch(f"basis input_dim {spec.input_dim} != {want}")
                stages.append(fit_grid(aug, spec, m, opts))
            else:
                raise ConfigError(f"stage {l + 1}: unsupported model spec {type(spec).__name__}")
        except QrgmmError as exc:
            raise exc.tag(stage=l + 1)
    return SequentialModel(tuple(stages))


def generate_multi(model: SequentialModel, x, K, rng):
    """K x d samples at covariate vector ``x``."""
    K = int(K)
    if K < 1:
        raise ConfigError("K must be >= 1")
    rng = as_rng(rng)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise DimensionMismatch(f"expected a covariate vector of length {model.input_dim}")
    out = np.empty((K, model.d))
    for l, stage in enumerate(model.stages):
        sub = rng.child(l)
        if l == 0:
            if isinstance(stage, NnQuantileModel):
                out[:, 0] = nn_generate(stage, x, K, sub)
            else:
                out[:, 0] = generate(stage, x, K, sub)
            continue
        X = np.column_stack([np.broadcast_to(x, (K, x.shape[0])), out[:, :l]])
        u = sub.uniform(K)
        if isinstance(stage, NnQuantileModel):
            out[:, l] = nn_sample_rows(stage, X, u)
        else:
            out[:, l] = sample_rows(stage, X, u)
    return out
