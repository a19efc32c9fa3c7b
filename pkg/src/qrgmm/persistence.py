"""JSON model files.

Every document carries ``format_version`` and ``kind``:

``qrgmm``      {basis: {kind, degree, input_dim}, m, coefficients (row-major,
               m-1 rows), rearranged, rng_algorithm}
``nnqr``       {m, spec, params (nested arrays, level axis first), x_shift,
               x_scale, y_shift, y_scale, converged, rng_algorithm}
``sequential`` {d, stages: [stage documents], rng_algorithm}

Floats are written with Python's shortest round-trip repr, so a loaded model
predicts bit-identically to the saved one.
"""
import json
from pathlib import Path

import numpy as np

from .core import BasisSpec, QuantileGrid, SeededRng
from .errors import CorruptFile, FormatVersionMismatch, QrgmmError
from .metamodel import GenerativeMetamodel, QuantileCoefficientTable
from .multioutput import SequentialModel
from .nnqr import MlpSpec, NnQuantileModel

FORMAT_VERSION = 1


def model_to_dict(model):
    if isinstance(model, GenerativeMetamodel):
        doc = {"kind": "qrgmm", "basis": model.basis.to_dict(), "m": model.m,
               "coefficients": model.table.coefficients.tolist(), "rearranged": model.rearranged}
    elif isinstance(model, NnQuantileModel):
        doc = {"kind": "nnqr", "m": model.m, "spec": model.spec.to_dict(),
               "params": [np.asarray(p).tolist() for p in model.params],
               "x_shift": np.asarray(model.x_shift).tolist(), "x_scale": np.asarray(model.x_scale).tolist(),
               "y_shift": model.y_shift, "y_scale": model.y_scale, "converged": model.converged}
    elif isinstance(model, SequentialModel):
        doc = {"kind": "sequential", "d": model.d, "stages": [model_to_dict(s) for s in model.stages]}
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, **doc, "rng_algorithm": SeededRng.ALGORITHM}


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise CorruptFile("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"model format_version {version!r}, this library reads {FORMAT_VERSION}")
    if doc.get("rng_algorithm") != SeededRng.ALGORITHM:
        raise FormatVersionMismatch(f"model written for generator {doc.get('rng_algorithm')!r}")
    try:
        kind = doc["kind"]
        if kind == "qrgmm":
            basis = BasisSpec.from_dict(doc["basis"])
            coefs = np.array(doc["coefficients"], dtype=float)
            table = QuantileCoefficientTable(QuantileGrid(int(doc["m"])), coefs)
            return GenerativeMetamodel(basis, table, bool(doc["rearranged"]))
        if kind == "nnqr":
            params = []
            for p in doc["params"]:
                a = np.array(p, dtype=float)
                a.setflags(write=False)
                params.append(a)
            return NnQuantileModel(QuantileGrid(int(doc["m"])), MlpSpec.from_dict(doc["spec"]), tuple(params),
                                   np.array(doc["x_shift"], dtype=float), np.array(doc["x_scale"], dtype=float),
                                   float(doc["y_shift"]), float(doc["y_scale"]), bool(doc["converged"]))
        if kind == "sequential":
            stages = tuple(model_from_dict(s) for s in doc["stages"])
            if len(stages) != int(doc["d"]):
                raise CorruptFile("stage count does not match d")
            return SequentialModel(stages)
    except QrgmmError as exc:
        if isinstance(exc, (CorruptFile, FormatVersionMismatch)):
            raise
        raise CorruptFile(f"invalid model document: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"invalid model document: {exc!r}") from None
    raise CorruptFile(f"unknown model kind {kind!r}")


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: not a readable model file ({exc})") from None
    return model_from_dict(doc)
