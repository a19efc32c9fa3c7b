"""Distribution distances and summary statistics for generated samples."""
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .errors import EmptySample, SingletonSd


def _sample(a, name="sample"):
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise EmptySample(f"{name} is empty")
    return a


def ks_two_sample(a, b):
    """sup_t |F_a(t) - F_b(t)| over the merged support, exact with ties."""
    a = np.sort(_sample(a, "a"))
    b = np.sort(_sample(b, "b"))
    return _kernels.ks_sorted(a, b)


def ks_vs_cdf(sample, cdf):
    """One-sample KS statistic of ``sample`` against a CDF.

    max_i max(i/K - F(y_(i)), F(y_(i)-) - (i-1)/K). The left limit F(y-)
    is taken from ``cdf.left`` when the callable has one (distributions
    with atoms); otherwise F is assumed continuous and F(y-) = F(y).
    """
    y = np.sort(_sample(sample))
    K = y.size
    F = np.asarray(cdf(y), dtype=float)
    left = getattr(cdf, "left", None)
    F_left = F if left is None else np.asarray(left(y), dtype=float)
    i = np.arange(1, K + 1)
    return float(max(np.max(i / K - F), np.max(F_left - (i - 1) / K)))


def wasserstein_1d(a, b):
    """Integral over (0, 1) of |F_a^-1(u) - F_b^-1(u)|, exact for step quantiles."""
    a = np.sort(_sample(a, "a"))
    b = np.sort(_sample(b, "b"))
    return _kernels.wasserstein_sorted(a, b)


def summary_stats(sample):
    """(mean, sd) with the n-1 denominator."""
    a = _sample(sample)
    if a.size < 2:
        raise SingletonSd("sd needs at least two values")
    return float(np.mean(a)), float(np.std(a, ddof=1))


@dataclass(frozen=True)
class MetricReport:
    """Per-replication metrics. Unrequested metrics are ``None``.

    CSV column order is ``CSV_COLUMNS``; empty cells stand for ``None``.
    """

    replication: int
    seed: int
    n: int
    m: int
    K: int
    mean: float | None = None
    sd: float | None = None
    ks: float | None = None
    wasserstein: float | None = None
    label: str = ""

    CSV_COLUMNS = ("label", "replication", "seed", "n", "m", "K", "mean", "sd", "ks", "wasserstein")

    def __post_init__(self):
        if self.ks is not None and not 0.0 <= self.ks <= 1.0:
            raise ValueError("ks must lie in [0, 1]")
        if self.wasserstein is not None and self.wasserstein < 0:
            raise ValueError("wasserstein must be >= 0")
        if self.sd is not None and self.sd < 0:
            raise ValueError("sd must be >= 0")

    def csv_row(self):
        d = asdict(self)
        return ["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else str(d[c]))
                for c in self.CSV_COLUMNS]

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def compare_samples(generated, truth, **meta):
    """MetricReport with mean/sd of ``generated`` plus KS and W1 against ``truth``."""
    mean, sd = summary_stats(generated)
    return MetricReport(mean=mean, sd=sd, ks=ks_two_sample(generated, truth),
                        wasserstein=wasserstein_1d(generated, truth), **meta)
