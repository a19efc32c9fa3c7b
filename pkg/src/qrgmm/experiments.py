"""Experiment harness: convergence, m-effect, crossing, summary statistics,
rearrangement and multi-output studies on the synthetic test problems.

Every study is a pure function of its :class:`ExperimentConfig`. Replication
r at sample size n uses the stream ``SeededRng(seed, (n, r))`` with children

    0  training dataset
    1  generation uniforms (shared by every m or c at that n and r)
    2  test covariates / oracle samples
    3  oracle responses for test covariates

so changing the m grid never changes the data a replication sees.

Result tables (schema ``RESULTS_SCHEMA``) are CSV with a header row. Column
sets per kind are listed in ``COLUMNS``. A replication that raises a
package error is counted in the ``failed`` column and excluded from the
means; it is never dropped silently. The JSON sidecar holds the config echo,
the git description of the source tree, failure messages and wall times.
"""
import csv
import io
import json
import subprocess
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import SeededRng, identity_basis, polynomial_basis, validate_dataset
from .errors import ConfigError, QrgmmError
from .metamodel import crossing_frequency, fit_grid, generate, generate_rows
from .metrics import ks_two_sample, ks_vs_cdf, summary_stats, wasserstein_1d
from .multioutput import fit_multi, generate_multi
from .solver import SolverOptions
from .testbeds import get_problem, sample_dataset

RESULTS_SCHEMA = "qrgmm-results/1"
KINDS = ("convergence", "m_effect", "crossing", "table1", "rearrangement_compare", "multi_output")
M_RULES = ("sqrt_n", "fixed", "c_sqrt_n")

COLUMNS = {
    "convergence": ("n", "m", "mean_ks", "sd_ks", "ok", "failed"),
    "m_effect": ("n", "m", "mean_ks", "sd_ks", "ok", "failed"),
    "crossing": ("n", "c", "m", "mean_crossing", "mean_crossing_rearranged", "ok", "failed"),
    "table1": ("label", "replication", "n", "m", "K", "mean", "sd", "ks", "wasserstein"),
    "rearrangement_compare": ("label", "replication", "n", "m", "K", "mean", "sd", "ks", "wasserstein"),
    "multi_output": ("label", "replication", "n", "m", "K", "correlation", "ks_y1", "ks_y2"),
}

_DEFAULTS = {
    "convergence": dict(problem="tp1", n_grid=(400, 2500, 10000), m_rule="sqrt_n", x_star=(1, 6, 1, 2)),
    "m_effect": dict(problem="tp1", n_grid=(10000,), m_rule="fixed", m_values=(10, 100, 1000), x_star=(1, 6, 1, 2)),
    "crossing": dict(problem="tp1", n_grid=(10000,), m_rule="c_sqrt_n", c_values=(1, 5, 10), x_star=(1, 6, 1, 2)),
    "table1": dict(problem="tp1", n_grid=(10000,), m_rule="fixed", m_values=(300,), x_star=None),
    "rearrangement_compare": dict(problem="tp2", n_grid=(10000,), m_rule="sqrt_n", x_star=(1, 4, 4)),
    "multi_output": dict(problem="bivariate", n_grid=(10000,), m_rule="fixed", m_values=(100,), x_star=(1, 3, 1)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs of one study. ``basis_degree`` None fits the design as is
    (identity basis, intercept included); an integer fits a polynomial of
    that degree in the raw covariates."""

    kind: str
    problem: str = "tp1"
    n_grid: tuple = (10000,)
    m_rule: str = "sqrt_n"
    m_values: tuple = ()
    c_values: tuple = (1.0,)
    replications: int = 10
    K: int = 100000
    x_star: tuple | None = None
    seed: int = 0
    out: str | None = None
    basis_degree: int | None = None
    timing_repeats: int = 7

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.m_rule not in M_RULES:
            raise ConfigError(f"unknown m rule {self.m_rule!r}; choose from {M_RULES}")
        prob = get_problem(self.problem)
        for name in ("n_grid", "m_values", "c_values"):
            vals = tuple(getattr(self, name))
            if any(not v > 0 for v in vals):
                raise ConfigError(f"{name} values must be positive")
            object.__setattr__(self, name, vals)
        if not self.n_grid:
            raise ConfigError("n_grid is empty")
        if self.m_rule == "fixed" and not self.m_values:
            raise ConfigError("m_rule 'fixed' needs m_values")
        if self.m_rule == "c_sqrt_n" and not self.c_values:
            raise ConfigError("m_rule 'c_sqrt_n' needs c_values")
        if int(self.replications) < 1 or int(self.K) < 1:
            raise ConfigError("replications and K must be >= 1")
        if self.x_star is not None:
            xs = tuple(float(v) for v in self.x_star)
            if len(xs) != prob.design_dim:
                raise ConfigError(f"x_star needs {prob.design_dim} entries for {prob.name}")
            object.__setattr__(self, "x_star", xs)
        elif self.kind not in ("table1",):
            raise ConfigError(f"experiment {self.kind} needs x_star")
        if self.basis_degree is not None and int(self.basis_degree) < 1:
            raise ConfigError("basis_degree must be >= 1")

    @classmethod
    def default(cls, kind, **overrides):
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}; choose from {KINDS}")
        return cls(kind=kind, **{**_DEFAULTS[kind], **overrides})

    def to_dict(self):
        d = asdict(self)
        for k in ("n_grid", "m_values", "c_values", "x_star"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("config needs a 'kind'")
        kind = d["kind"]
        base = dict(_DEFAULTS.get(kind, {}))
        base.update(d)
        return cls(**base)


def load_config(path, **overrides):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a JSON object")
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)


@dataclass
class ExperimentResult:
    kind: str
    columns: tuple
    rows: list
    config: ExperimentConfig
    failures: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def sidecar(self):
        return {"schema": RESULTS_SCHEMA, "kind": self.kind, "config": self.config.to_dict(),
                "git": git_describe(), "failures": self.failures, "timing": self.timing,
                "columns": list(self.columns)}

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8")
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")

    def column(self, name, **where):
        return [r[name] for r in self.rows if all(r.get(k) == v for k, v in where.items())]


def _cell(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


# ---------------------------------------------------------------------------
# shared pieces


def grid_size(config, n, value=None):
    """m for sample size n; ``value`` is the fixed m or the multiplier c."""
    if config.m_rule == "sqrt_n":
        return max(2, int(np.floor(np.sqrt(n))))
    if config.m_rule == "fixed":
        return int(value)
    return max(2, int(round(value * np.sqrt(n))))


def _model_setup(config, problem):
    """Basis and a map from design rows (leading 1) to basis inputs."""
    if config.basis_degree is None:
        return identity_basis(problem.design_dim), (lambda X: X)
    return polynomial_basis(problem.covariate_dim, int(config.basis_degree)), (lambda X: np.asarray(X)[..., 1:])


def _rep_rng(config, n, r):
    return SeededRng(config.seed, (int(n), int(r)))


def _fit(config, problem, n, r, m, cache=None):
    basis, to_input = _model_setup(config, problem)
    ds = sample_dataset(problem, n, _rep_rng(config, n, r).child(0))
    ds = validate_dataset(to_input(ds.design), ds.response)
    return fit_grid(ds, basis, m, SolverOptions(), cache=cache), to_input


def _mean_sd(vals):
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        return None, None
    return float(vals.mean()), (float(vals.std(ddof=1)) if vals.size > 1 else None)


def _record_failure(failures, exc, **where):
    failures.append({**where, "error": type(exc).__name__, "message": str(exc)})


# ---------------------------------------------------------------------------
# studies


def _ks_study(config, m_of):
    """Shared body of the convergence and m-effect studies."""
    problem = get_problem(config.problem)
    if problem.cdf is None:
        raise ConfigError(f"{problem.name} has no exact conditional CDF")
    xs = np.array(config.x_star)
    rows, failures = [], []
    for n in config.n_grid:
        n = int(n)
        ms = m_of(n)
        ks = {m: [] for m in ms}
        failed = {m: 0 for m in ms}
        for r in range(int(config.replications)):
            cache = {}
            for m in ms:
                try:
                    model, to_input = _fit(config, problem, n, r, m, cache)
                    s = generate(model, to_input(xs), config.K, _rep_rng(config, n, r).child(1))
                    ks[m].append(ks_vs_cdf(s, lambda y: problem.cdf(xs, y)))
                except QrgmmError as exc:
                    failed[m] += 1
                    _record_failure(failures, exc, n=n, m=m, replication=r)
        for m in ms:
            mean, sd = _mean_sd(ks[m])
            rows.append({"n": n, "m": m, "mean_ks": mean, "sd_ks": sd, "ok": len(ks[m]), "failed": failed[m]})
    return rows, failures


def _ms(config):
    if config.m_rule == "fixed":
        return lambda n: [int(v) for v in config.m_values]
    if config.m_rule == "c_sqrt_n":
        return lambda n: [grid_size(config, n, c) for c in config.c_values]
    return lambda n: [grid_size(config, n)]


def run_convergence(config):
    """Mean one-sample KS at x* over replications, per n."""
    rows, failures = _ks_study(config, _ms(config))
    return ExperimentResult("convergence", COLUMNS["convergence"], rows, config, failures)


def run_m_effect(config):
    """Mean one-sample KS at x* over replications, per m; data shared across m."""
    rows, failures = _ks_study(config, _ms(config))
    return ExperimentResult("m_effect", COLUMNS["m_effect"], rows, config, failures)


def run_crossing(config, model_hook=None):
    """Mean crossing frequency at x* per (n, c) with m = c sqrt(n).

    ``model_hook(model)`` may replace each fitted model (used to inject
    monotone models in tests).
    """
    problem = get_problem(config.problem)
    xs = np.array(config.x_star)
    cs = config.c_values if config.m_rule == "c_sqrt_n" else (None,)
    rows, failures = [], []
    for n in config.n_grid:
        n = int(n)
        freq = {c: [] for c in cs}
        freq_r = {c: [] for c in cs}
        failed = {c: 0 for c in cs}
        for r in range(int(config.replications)):
            cache = {}
            for c in cs:
                m = grid_size(config, n, c if c is not None else (config.m_values[0] if config.m_values else None))
                try:
                    model, to_input = _fit(config, problem, n, r, m, cache)
                    if model_hook is not None:
                        model = model_hook(model)
                    freq[c].append(crossing_frequency(model, to_input(xs)))
                    freq_r[c].append(crossing_frequency(model.with_rearrangement(True), to_input(xs)))
                except QrgmmError as exc:
                    failed[c] += 1
                    _record_failure(failures, exc, n=n, c=c, replication=r)
        for c in cs:
            rows.append({"n": n, "c": c, "m": grid_size(config, n, c) if c is not None else None,
                         "mean_crossing": _mean_sd(freq[c])[0],
                         "mean_crossing_rearranged": _mean_sd(freq_r[c])[0],
                         "ok": len(freq[c]), "failed": failed[c]})
    return ExperimentResult("crossing", COLUMNS["crossing"], rows, config, failures)


def _summary_rows(reports, label, n, m, K):
    ok = [r for r in reports if r is not None]
    out = {"label": label, "replication": "mean", "n": n, "m": m, "K": K}
    for key in ("mean", "sd", "ks", "wasserstein"):
        out[key] = _mean_sd([r[key] for r in ok])[0]
    return out


def run_table1(config, generator=None):
    """Unconditional summary statistics of generated versus true responses.

    Each replication draws K test covariates x'_k, one true response y'_k
    and one generated response per x'_k. ``generator(X, rng)`` overrides the
    fitted model (e.g. with the oracle itself).
    """
    problem = get_problem(config.problem)
    rows, failures = [], []
    for n in config.n_grid:
        n = int(n)
        m = grid_size(config, n, config.m_values[0] if config.m_values else None)
        per = []
        for r in range(int(config.replications)):
            rng = _rep_rng(config, n, r)
            try:
                Xt = problem.sample_covariates(int(config.K), rng.child(2))
                yt = problem.sample_responses(Xt, rng.child(3))
                if generator is None:
                    model, to_input = _fit(config, problem, n, r, m)
                    yg = generate_rows(model, to_input(Xt), rng.child(1))
                else:
                    yg = generator(Xt, rng.child(1))
                mean, sd = summary_stats(yg)
                row = {"label": "qrgmm" if generator is None else "custom", "replication": r, "n": n,
                       "m": m, "K": int(config.K), "mean": mean, "sd": sd,
                       "ks": ks_two_sample(yg, yt), "wasserstein": wasserstein_1d(yg, yt)}
                mt, st = summary_stats(yt)
                rows.append(row)
                rows.append({"label": "truth", "replication": r, "n": n, "m": m, "K": int(config.K),
                             "mean": mt, "sd": st})
                per.append(row)
            except QrgmmError as exc:
                _record_failure(failures, exc, n=n, replication=r)
        rows.append(_summary_rows(per, per[0]["label"] if per else "qrgmm", n, m, int(config.K)))
    res = ExperimentResult("table1", COLUMNS["table1"], rows, config, failures)
    return res


def _best_time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_rearrangement_compare(config):
    """Plain versus rearranged generation at x* from the same fitted tables
    and the same uniforms. Wall times (best of ``timing_repeats``, K samples)
    go to the sidecar only, so the CSV stays reproducible byte for byte."""
    problem = get_problem(config.problem)
    xs = np.array(config.x_star)
    rows, failures = [], []
    times = {"qrgmm": [], "qrgmm-r": []}
    for n in config.n_grid:
        n = int(n)
        m = grid_size(config, n, config.m_values[0] if config.m_values else None)
        per = {"qrgmm": [], "qrgmm-r": []}
        for r in range(int(config.replications)):
            rng = _rep_rng(config, n, r)
            try:
                model, to_input = _fit(config, problem, n, r, m)
                xin = to_input(xs)
                truth = problem.sample_at(xs, int(config.K), rng.child(2))
                for label, mod in (("qrgmm", model), ("qrgmm-r", model.with_rearrangement(True))):
                    yg = generate(mod, xin, int(config.K), rng.child(1))
                    mean, sd = summary_stats(yg)
                    row = {"label": label, "replication": r, "n": n, "m": m, "K": int(config.K),
                           "mean": mean, "sd": sd, "ks": ks_two_sample(yg, truth),
                           "wasserstein": wasserstein_1d(yg, truth)}
                    rows.append(row)
                    per[label].append(row)
                plain, rearr = model, model.with_rearrangement(True)
                tp = tr = np.inf
                # interleave so drifts in machine load hit both alike
                for _ in range(int(config.timing_repeats)):
                    tp = min(tp, _best_time(lambda: generate(plain, xin, int(config.K), rng.child(9)), 1))
                    tr = min(tr, _best_time(lambda: generate(rearr, xin, int(config.K), rng.child(9)), 1))
                times["qrgmm"].append(tp)
                times["qrgmm-r"].append(tr)
            except QrgmmError as exc:
                _record_failure(failures, exc, n=n, replication=r)
        for label in ("qrgmm", "qrgmm-r"):
            rows.append(_summary_rows(per[label], label, n, m, int(config.K)))
    timing = {k: {"best_seconds": min(v) if v else None, "median_best_seconds": float(np.median(v)) if v else None}
              for k, v in times.items()}
    return ExperimentResult("rearrangement_compare", COLUMNS["rearrangement_compare"], rows, config, failures, timing)


def run_multi_output(config):
    """Sequential two-stage model at x*: sample correlation and per-margin KS
    against oracle samples."""
    problem = get_problem(config.problem)
    if problem.outputs < 2:
        raise ConfigError(f"{problem.name} is single-output")
    xs = np.array(config.x_star)
    rows, failures, per = [], [], []
    for n in config.n_grid:
        n = int(n)
        m = grid_size(config, n, config.m_values[0] if config.m_values else None)
        for r in range(int(config.replications)):
            rng = _rep_rng(config, n, r)
            try:
                ds = sample_dataset(problem, n, rng.child(0))
                bases = [identity_basis(problem.design_dim + l) for l in range(problem.outputs)]
                model = fit_multi(ds, bases, m)
                Yg = generate_multi(model, xs, int(config.K), rng.child(1))
                Yt = problem.sample_at(xs, int(config.K), rng.child(2))
                row = {"label": "qrgmm", "replication": r, "n": n, "m": m, "K": int(config.K),
                       "correlation": float(np.corrcoef(Yg[:, 0], Yg[:, 1])[0, 1]),
                       "ks_y1": ks_two_sample(Yg[:, 0], Yt[:, 0]), "ks_y2": ks_two_sample(Yg[:, 1], Yt[:, 1])}
                truth = {"label": "truth", "replication": r, "n": n, "m": m, "K": int(config.K),
                         "correlation": float(np.corrcoef(Yt[:, 0], Yt[:, 1])[0, 1])}
                rows += [row, truth]
                per.append(row)
            except QrgmmError as exc:
                _record_failure(failures, exc, n=n, replication=r)
        summary = {"label": "qrgmm", "replication": "mean", "n": n, "m": m, "K": int(config.K)}
        for key in ("correlation", "ks_y1", "ks_y2"):
            summary[key] = _mean_sd([p[key] for p in per if p["n"] == n])[0]
        rows.append(summary)
    return ExperimentResult("multi_output", COLUMNS["multi_output"], rows, config, failures)


RUNNERS = {
    "convergence": run_convergence,
    "m_effect": run_m_effect,
    "crossing": run_crossing,
    "table1": run_table1,
    "rearrangement_compare": run_rearrangement_compare,
    "multi_output": run_multi_output,
}


def run_experiment(config):
    t0 = time.perf_counter()
    res = RUNNERS[config.kind](config)
    res.timing = {**res.timing, "total_seconds": time.perf_counter() - t0}
    if config.out:
        res.write(config.out)
    return res
