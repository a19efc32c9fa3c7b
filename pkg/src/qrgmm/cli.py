"""Command-line front end.

    qrgmm fit --data train.csv [--add-intercept] [--m M] [--degree K] --out model.json
    qrgmm generate --model model.json --x 1,6,1,2 --K 1000 --seed 7 --out samples.csv
    qrgmm evaluate --samples samples.csv (--reference ref.csv | --problem tp1 --x 1,6,1,2)
    qrgmm experiment convergence --config cfg.json --out results/conv.csv
    qrgmm simulate-testbed --problem tp1 --n 10000 --seed 1 --out train.csv

Every verb accepts ``--seed``, ``--out`` and ``--config``. The config file
is the JSON form of an experiment config; for the non-experiment verbs only
its ``problem``, ``n_grid`` (first entry), ``m_values`` (first entry),
``K``, ``x_star``, ``seed`` and ``basis_degree`` keys are consulted, and
explicit flags win.

Exit status: 0 success, 2 bad input or configuration, 3 numerical failure.
"""
import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core import (SeededRng, default_m, identity_basis, polynomial_basis, read_dataset_csv,
                   validate_dataset)
from .errors import ConfigError, CorruptFile, FormatVersionMismatch, NumericalError, QrgmmError
from .experiments import KINDS, ExperimentConfig, load_config, run_experiment
from .metamodel import GenerativeMetamodel, fit_grid, generate
from .metrics import ks_two_sample, ks_vs_cdf, summary_stats, wasserstein_1d
from .multioutput import SequentialModel, fit_multi, generate_multi
from .nnqr import NnQuantileModel, nn_generate
from .persistence import load_model, save_model
from .solver import METHODS, SolverOptions
from .testbeds import PROBLEMS, get_problem, sample_dataset

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _floats(text):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _config_defaults(path):
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a JSON object")
    out = {}
    for key in ("problem", "K", "seed", "basis_degree"):
        if d.get(key) is not None:
            out[key] = d[key]
    if d.get("n_grid"):
        out["n"] = d["n_grid"][0]
    if d.get("m_values"):
        out["m"] = d["m_values"][0]
    if d.get("x_star") is not None:
        out["x"] = ",".join(repr(float(v)) for v in d["x_star"])
    return out


def _pick(args, cfg, name, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get({"degree": "basis_degree"}.get(name, name), default)


def _write_rows(out, header, rows):
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if out:
            fh.close()


def _read_columns(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
    except (OSError, StopIteration, ValueError) as exc:
        raise ConfigError(f"cannot read samples from {path}: {exc}") from None
    if data.size == 0:
        raise ConfigError(f"{path}: no rows")
    return header, data.reshape(-1, len(header))


# ---------------------------------------------------------------------------


def cmd_fit(args, cfg):
    ds = read_dataset_csv(args.data, add_intercept=args.add_intercept)
    m = int(_pick(args, cfg, "m", default_m(ds.n)))
    degree = _pick(args, cfg, "degree")
    opts = SolverOptions(method=args.method)
    design = ds.design
    if degree is not None:
        if args.add_intercept:
            design = design[:, 1:]
        mk = lambda l: polynomial_basis(design.shape[1] + l, int(degree))
    else:
        mk = lambda l: identity_basis(design.shape[1] + l)
    ds = validate_dataset(design, ds.response)
    if ds.d == 1:
        model = fit_grid(ds, mk(0), m, opts)
        if args.rearranged:
            model = model.with_rearrangement(True)
    else:
        model = fit_multi(ds, [mk(l) for l in range(ds.d)], m, opts)
    if args.out is None:
        raise ConfigError("fit needs --out for the model file")
    save_model(model, args.out)
    print(f"fitted m={m} on n={ds.n} rows, d={ds.d}; model written to {args.out}", file=sys.stderr)


def _model_input(model, x, add_intercept):
    x = np.asarray(x, dtype=float)
    if add_intercept:
        x = np.concatenate([[1.0], x])
    return x


def cmd_generate(args, cfg):
    model = load_model(args.model)
    xtext = _pick(args, cfg, "x")
    if xtext is None:
        raise ConfigError("generate needs --x")
    x = _model_input(model, _floats(xtext), args.add_intercept)
    K = int(_pick(args, cfg, "K", 1000))
    rng = SeededRng(int(_pick(args, cfg, "seed", 0)))
    if isinstance(model, SequentialModel):
        Y = generate_multi(model, x, K, rng)
    elif isinstance(model, NnQuantileModel):
        Y = nn_generate(model, x, K, rng)[:, None]
    elif isinstance(model, GenerativeMetamodel):
        Y = generate(model, x, K, rng)[:, None]
    else:
        raise ConfigError("unsupported model file")
    _write_rows(args.out, [f"y{i + 1}" for i in range(Y.shape[1])], Y)


def cmd_evaluate(args, cfg):
    _, S = _read_columns(args.samples)
    report = {}
    if args.reference:
        _, R = _read_columns(args.reference)
        if R.shape[1] != S.shape[1]:
            raise ConfigError("samples and reference have different column counts")
        for j in range(S.shape[1]):
            mean, sd = summary_stats(S[:, j])
            report[f"y{j + 1}"] = {"mean": mean, "sd": sd, "ks": ks_two_sample(S[:, j], R[:, j]),
                                   "wasserstein": wasserstein_1d(S[:, j], R[:, j])}
    else:
        name = _pick(args, cfg, "problem")
        xtext = _pick(args, cfg, "x")
        if name is None or xtext is None:
            raise ConfigError("evaluate needs --reference, or --problem and --x")
        prob = get_problem(name)
        if prob.cdf is None:
            raise ConfigError(f"{name} has no exact CDF; use --reference")
        x = _floats(xtext)
        if x.shape[0] == prob.covariate_dim:
            x = np.concatenate([[1.0], x])
        mean, sd = summary_stats(S[:, 0])
        report["y1"] = {"mean": mean, "sd": sd, "ks": ks_vs_cdf(S[:, 0], lambda y: prob.cdf(x, y))}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_experiment(args, cfg_unused):
    overrides = {k: getattr(args, k) for k in ("seed", "out", "replications", "K") if getattr(args, k, None) is not None}
    if args.config:
        config = load_config(args.config, kind=args.kind, **overrides)
    else:
        config = ExperimentConfig.default(args.kind, **overrides)
    res = run_experiment(config)
    if config.out is None:
        sys.stdout.write(res.to_csv())
    print(f"{config.kind}: {len(res.rows)} rows, {len(res.failures)} failed replications, "
          f"{res.timing.get('total_seconds', 0):.1f}s", file=sys.stderr)


def cmd_simulate(args, cfg):
    name = _pick(args, cfg, "problem")
    if name is None:
        raise ConfigError("simulate-testbed needs --problem")
    n = int(_pick(args, cfg, "n", 1000))
    prob = get_problem(name)
    rng = SeededRng(int(_pick(args, cfg, "seed", 0)))
    if args.out is None:
        ds = sample_dataset(prob, n, rng)
        X = ds.design[:, 1:]
        Y = ds.response.reshape(ds.n, -1)
        header = [f"x{i + 1}" for i in range(X.shape[1])] + [f"y{i + 1}" for i in range(Y.shape[1])]
        _write_rows(None, header, np.column_stack([X, Y]))
    else:
        sample_dataset(prob, n, rng, csv_path=args.out)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (64-bit unsigned)")
    common.add_argument("--out", help="output path (default: stdout where sensible)")
    common.add_argument("--config", help="JSON experiment config supplying defaults")

    p = argparse.ArgumentParser(prog="qrgmm", description="Quantile-regression generative metamodels.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit a model to a CSV dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--add-intercept", action="store_true", help="prepend a constant column to x1..xp")
    f.add_argument("--m", type=int, help="grid size (default floor(sqrt(n)))")
    f.add_argument("--degree", type=int, help="polynomial basis degree in the raw covariates")
    f.add_argument("--method", choices=METHODS, default="interior-point")
    f.add_argument("--rearranged", action="store_true", help="store the model with rearrangement on")
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("generate", parents=[common], help="draw conditional samples from a model")
    g.add_argument("--model", required=True)
    g.add_argument("--x", help="covariates, comma-separated, as the model expects them")
    g.add_argument("--add-intercept", action="store_true", help="prepend 1 to --x")
    g.add_argument("--K", type=int, help="number of samples (default 1000)")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", parents=[common], help="metrics of a sample file")
    e.add_argument("--samples", required=True)
    e.add_argument("--reference", help="CSV of reference samples (two-sample metrics)")
    e.add_argument("--problem", choices=sorted(PROBLEMS), help="test problem with an exact CDF")
    e.add_argument("--x", help="covariates for --problem (leading 1 optional)")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("experiment", parents=[common], help="run a study and write its result table")
    x.add_argument("kind", choices=KINDS)
    x.add_argument("--replications", type=int)
    x.add_argument("--K", type=int)
    x.set_defaults(func=cmd_experiment)

    s = sub.add_parser("simulate-testbed", parents=[common], help="sample a dataset from a test problem")
    s.add_argument("--problem", choices=sorted(PROBLEMS))
    s.add_argument("--n", type=int)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_defaults(args.config) if args.verb != "experiment" else {}
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            args.func(args, cfg)
    except (ConfigError, FormatVersionMismatch, CorruptFile) as exc:
        print(f"qrgmm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"qrgmm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except QrgmmError as exc:
        print(f"qrgmm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"qrgmm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
