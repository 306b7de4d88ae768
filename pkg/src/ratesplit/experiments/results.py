"""Result rows and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import PreconditionError
from ..optimizer.power_split import ci95

HEADER = ("experiment", "scheme", "x_name", "x_value", "metric", "mean", "ci95", "trials", "seed")


@dataclass(frozen=True)
class Row:
    experiment: str
    scheme: str
    x_name: str
    x_value: float
    metric: str
    mean: float
    ci95: float
    trials: int
    seed: int


@dataclass
class ResultTable:
    experiment: str
    seed: int
    echo: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def add(self, scheme, x_name, x_value, metric, mean, ci=0.0, trials=0):
        self.rows.append(Row(self.experiment, scheme, x_name, float(x_value), metric,
                             float(mean), float(ci), int(trials), int(self.seed)))

    def add_samples(self, scheme, x_name, x_value, metric, values):
        """Row from per-trial values: sample mean and 95% half-width."""
        v = np.asarray(values, dtype=float)
        self.add(scheme, x_name, x_value, metric, v.mean(), ci95(v), v.size)

    def select(self, scheme=None, metric=None, x_name=None):
        return [r for r in self.rows
                if (scheme is None or r.scheme == scheme)
                and (metric is None or r.metric == metric)
                and (x_name is None or r.x_name == x_name)]

    def value(self, scheme, metric, x_value, x_name=None):
        for r in self.select(scheme, metric, x_name):
            if math.isclose(r.x_value, x_value, rel_tol=0, abs_tol=1e-9):
                return r
        raise KeyError(f"no row for {scheme}/{metric} at {x_value}")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.rows:
            w.writerow([r.experiment, r.scheme, r.x_name, _fmt(r.x_value), r.metric,
                        _fmt(r.mean), _fmt(r.ci95), r.trials, r.seed])
        return buf.getvalue()

    def to_json(self):
        rows = [{k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                 for k, v in asdict(r).items()} for r in self.rows]
        doc = {"experiment": self.experiment, "seed": self.seed,
               "scenario": {k: list(v) if isinstance(v, tuple) else v for k, v in self.echo.items()},
               "rows": rows}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    def write(self, path, fmt="csv"):
        text = self.to_csv() if fmt == "csv" else self.to_json()
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _fmt(x):
    return f"{x:.17g}"


def read_csv(path):
    with open(path) as fh:
        return parse_csv(fh.read())


def parse_csv(text):
    """Rows back from CSV text (lossless for floats)."""
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for d in reader:
        rows.append(Row(d["experiment"], d["scheme"], d["x_name"], float(d["x_value"]), d["metric"],
                        float(d["mean"]), float(d["ci95"]), int(d["trials"]), int(d["seed"])))
    return rows


def measure_slope(table: ResultTable, scheme, lo_db, hi_db, metric="sum_rate"):
    """High-SNR slope ``(R(hi) - R(lo)) / log2(10**((hi - lo) / 10))``."""
    try:
        lo = table.value(scheme, metric, lo_db, "snr_db").mean
        hi = table.value(scheme, metric, hi_db, "snr_db").mean
    except KeyError as exc:
        raise PreconditionError(f"slope window not in table: {exc}") from None
    if not hi_db > lo_db:
        raise PreconditionError("slope window must have hi_db > lo_db")
    return (hi - lo) / np.log2(10.0 ** ((hi_db - lo_db) / 10.0))
