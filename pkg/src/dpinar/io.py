"""Reading count series and writing run artifacts.

Input series come in two layouts:

``single``
    one nonnegative integer per line, optional text header on the first line.
``long``
    ``series_id,epoch,count`` rows (optional header), epochs contiguous
    from 1 within each series; rows may appear in any order.

Every file written here starts with ``# dpinar <version> config=<hash> seed=<seed>``
and is written to a temporary file first and then renamed into place.
"""

from __future__ import annotations

import csv
import io as _io
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from .core import CountSeries, DomainError
from .evaluation import Comparison, EvalPlan, EvalReport, FoldRecord
from .forecast import ForecastDistribution
from .gibbs import PosteriorDraws

__all__ = [
    "IngestError", "NonIntegerCount", "NegativeCount", "EpochGap", "EmptySeries",
    "ingest", "atomic_write_text", "header_line",
    "write_series", "write_draws", "read_draws", "write_summary", "write_forecast", "read_forecast",
    "write_report", "read_report", "write_comparison",
]


class IngestError(DomainError):
    """Malformed input; ``line`` is the 1-based line number (0 if not tied to a line)."""

    def __init__(self, message: str, line: int = 0, path: str = ""):
        self.line = line
        self.path = path
        where = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)


class NonIntegerCount(IngestError):
    pass


class NegativeCount(IngestError):
    pass


class EpochGap(IngestError):
    pass


class EmptySeries(IngestError):
    pass


def _version() -> str:
    from . import __version__

    return __version__


def header_line(config_hash: str, seed: int) -> str:
    return f"# dpinar {_version()} config={config_hash} seed={seed}"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` so readers never see a partially written file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def _parse_count(text: str, lineno: int, path: str, allow_header: bool):
    """Integer count, or None when ``text`` is a header and headers are allowed."""
    text = text.strip()
    try:
        value = int(text)
    except ValueError:
        try:
            float(text)
        except ValueError:
            if allow_header:
                return None
        raise NonIntegerCount(f"count {text!r} is not an integer", lineno, path)
    if value < 0:
        raise NegativeCount(f"count {value} is negative", lineno, path)
    return value


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def _ingest_single(text: str, path: str) -> CountSeries:
    counts = []
    first = True
    for lineno, line in _data_lines(text):
        value = _parse_count(line, lineno, path, allow_header=first)
        first = False
        if value is not None:
            counts.append(value)
    if not counts:
        raise EmptySeries("no counts found", 0, path)
    if len(counts) < 2:
        raise EmptySeries("a series needs at least two epochs", 0, path)
    return CountSeries(np.asarray(counts, dtype=np.int64))


def _ingest_long(text: str, path: str) -> Dict[str, CountSeries]:
    rows: Dict[str, Dict[int, int]] = {}
    first = True
    for lineno, line in _data_lines(text):
        fields = [f.strip() for f in next(csv.reader([line]))]
        if len(fields) != 3:
            raise IngestError(f"expected 3 fields (series_id,epoch,count), got {len(fields)}",
                              lineno, path)
        sid, epoch_text, count_text = fields
        try:
            epoch = int(epoch_text)
        except ValueError:
            if first:
                first = False
                continue
            raise IngestError(f"epoch {epoch_text!r} is not an integer", lineno, path)
        first = False
        count = _parse_count(count_text, lineno, path, allow_header=False)
        per = rows.setdefault(sid, {})
        if epoch in per:
            raise IngestError(f"duplicate epoch {epoch} for series {sid!r}", lineno, path)
        if epoch < 1:
            raise EpochGap(f"epoch {epoch} for series {sid!r}; epochs start at 1", lineno, path)
        per[epoch] = (count, lineno)
    if not rows:
        raise EmptySeries("no rows found", 0, path)
    out = {}
    for sid, per in rows.items():
        epochs = sorted(per)
        expected = 1
        for e in epochs:
            if e != expected:
                raise EpochGap(f"series {sid!r} jumps from epoch {expected - 1} to {e}",
                               per[e][1], path)
            expected += 1
        if len(epochs) < 2:
            raise EmptySeries(f"series {sid!r} needs at least two epochs", per[epochs[0]][1], path)
        out[sid] = CountSeries(np.asarray([per[e][0] for e in epochs], dtype=np.int64))
    return out


def detect_format(text: str) -> str:
    for _, line in _data_lines(text):
        return "long" if "," in line else "single"
    return "single"


def ingest(path, format: str = "auto") -> Union[CountSeries, Dict[str, CountSeries]]:
    """Read a count series file.

    Returns a :class:`CountSeries` for the ``single`` layout and a dict of
    series keyed by id (first-appearance order) for ``long``.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError("file not found", 0, str(path))
    text = path.read_text()
    if format == "auto":
        format = detect_format(text)
    if format == "single":
        return _ingest_single(text, str(path))
    if format == "long":
        return _ingest_long(text, str(path))
    raise DomainError(f"unknown format {format!r}; expected single, long or auto")


def write_series(path, series: CountSeries, config_hash: str, seed: int) -> None:
    lines = [header_line(config_hash, seed), "count"]
    lines += [str(int(v)) for v in series.counts]
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# draws
# ---------------------------------------------------------------------------

def _f(x: float) -> str:
    # repr round-trips exactly
    return repr(float(x))


def write_draws(path, draws: PosteriorDraws, config_hash: str, seed: int) -> None:
    n = draws.lambdas.shape[1]
    buf = _io.StringIO()
    buf.write(header_line(config_hash, seed) + "\n")
    buf.write(f"# model={draws.model}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "alpha", "tau", "k"] + [f"lambda_{t}" for t in range(2, n + 2)])
    for i in range(len(draws)):
        writer.writerow([int(draws.iterations[i]), _f(draws.alpha[i]), _f(draws.tau[i]),
                         int(draws.cluster_counts[i])] + [_f(v) for v in draws.lambdas[i]])
    atomic_write_text(path, buf.getvalue())


def _comments(text: str) -> Dict[str, str]:
    meta = {}
    for raw in text.splitlines():
        if not raw.startswith("#"):
            continue
        for token in raw[1:].split():
            if "=" in token:
                key, value = token.split("=", 1)
                meta[key] = value
    return meta


def read_draws(path) -> PosteriorDraws:
    text = Path(path).read_text()
    meta = _comments(text)
    rows = list(csv.reader(line for line in text.splitlines()
                           if line and not line.startswith("#")))
    if len(rows) < 2:
        raise DomainError(f"{path}: no draws found")
    body = rows[1:]
    iterations = np.array([int(r[0]) for r in body], dtype=np.int64)
    alpha = np.array([float(r[1]) for r in body])
    tau = np.array([float(r[2]) for r in body])
    k = np.array([int(r[3]) for r in body], dtype=np.int64)
    lambdas = np.array([[float(v) for v in r[4:]] for r in body])
    return PosteriorDraws(alpha, tau, lambdas, None, k, iterations,
                          model=meta.get("model", "dp"))


def write_summary(path, summary: dict, config_hash: str, seed: int) -> None:
    """Posterior diagnostics: scalar means, per-epoch rate means and the K histogram.

    Rows are ``section,key,value`` so one file stays plot-ready.
    """
    buf = _io.StringIO()
    buf.write(header_line(config_hash, seed) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "key", "value"])
    for key in ("model", "N", "alpha_mean", "alpha_sd", "tau_mean", "mean_rate_mean", "k_mode"):
        value = summary[key]
        writer.writerow(["posterior", key, _f(value) if isinstance(value, float) else value])
    for t, value in enumerate(summary["lambda_mean"], start=2):
        writer.writerow(["lambda_mean", t, _f(value)])
    for k, count in sorted(summary["k_histogram"].items()):
        writer.writerow(["k_histogram", k, count])
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# forecasts
# ---------------------------------------------------------------------------

def write_forecast(path, dist: ForecastDistribution, config_hash: str, seed: int,
                   series_id: str = "") -> None:
    buf = _io.StringIO()
    buf.write(header_line(config_hash, seed) + "\n")
    meta = (f"# h={dist.horizon} N={dist.n_draws} point_forecast={dist.point_forecast} "
            f"tail_mass={_f(dist.tail_mass)} y_cap={dist.y_cap}")
    if series_id:
        meta += f" series={series_id}"
    buf.write(meta + "\n")
    buf.write("count,probability\n")
    for y, p in enumerate(dist.pmf):
        buf.write(f"{y},{_f(p)}\n")
    atomic_write_text(path, buf.getvalue())


def read_forecast(path) -> ForecastDistribution:
    text = Path(path).read_text()
    meta = _comments(text)
    rows = [line.split(",") for line in text.splitlines()
            if line and not line.startswith("#")][1:]
    pmf = np.array([float(r[1]) for r in rows])
    return ForecastDistribution(int(meta["h"]), pmf, float(meta["tail_mass"]),
                                int(meta["point_forecast"]), int(meta["N"]))


# ---------------------------------------------------------------------------
# evaluation reports
# ---------------------------------------------------------------------------

def write_report(path, reports: Sequence[EvalReport], config_hash: str, seed: int) -> None:
    """Per-target rows for each series followed by a per-series MAD row."""
    if not reports:
        raise DomainError("no reports to write")
    first = reports[0]
    buf = _io.StringIO()
    buf.write(header_line(config_hash, seed) + "\n")
    buf.write(f"# model={first.model} horizon={first.plan.horizon} "
              f"holdout={first.plan.holdout_len}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["series_id", "target", "truth", "forecast", "deviation"])
    for report in reports:
        for r in report.records:
            writer.writerow([report.series_id, r.target, r.truth, r.forecast, r.deviation])
        writer.writerow([report.series_id, "MAD", "", "", _f(report.mad)])
    atomic_write_text(path, buf.getvalue())


def read_report(path) -> List[EvalReport]:
    text = Path(path).read_text()
    meta = _comments(text)
    model = meta["model"]
    h = int(meta["horizon"])
    holdout = int(meta["holdout"])
    rows = list(csv.reader(line for line in text.splitlines()
                           if line and not line.startswith("#")))[1:]
    grouped: Dict[str, List[FoldRecord]] = {}
    for sid, target, truth, forecast, _ in rows:
        if target == "MAD":
            continue
        grouped.setdefault(sid, []).append(FoldRecord(int(target), int(truth), int(forecast)))
    reports = []
    for sid, records in grouped.items():
        # targets always run up to the last epoch
        T = max(r.target for r in records)
        reports.append(EvalReport(model, EvalPlan(T, holdout, h), tuple(records), sid))
    return reports


def write_comparison(path, rows: Sequence[Comparison], win_fraction: float,
                     config_hash: str, seed: int) -> None:
    if not rows:
        raise DomainError("no comparisons to write")
    first, second = rows[0].first, rows[0].second
    buf = _io.StringIO()
    buf.write(header_line(config_hash, seed) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["area", f"mad_{first}", f"mad_{second}", "winner"])
    for row in rows:
        writer.writerow([row.series_id, f"{row.mad_first:.4f}", f"{row.mad_second:.4f}",
                         row.winner])
    buf.write(f"# {first}_win_fraction={win_fraction:.4f} n_series={len(rows)}\n")
    atomic_write_text(path, buf.getvalue())
