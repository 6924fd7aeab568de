"""Trace and data ingestion, config files and result documents.

Result documents are JSON in which every float is written with 17
significant digits, so ``loads(dumps(doc)) == doc`` and equal documents
serialize to identical bytes.
"""

from __future__ import annotations

import json
import math
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from bmclt import __version__
from bmclt.errors import ConfigInvalid, DimensionMismatch, EmptyTrace, ParseError
from bmclt.estimators import (
    BatchSchedule,
    BmEstimate,
    Rule,
    batch_schedule,
    estimate_from_batch_means,
    normal_quantile,
)
from bmclt.harness import ExperimentConfig, ReplicationResult
from bmclt.lasso import LassoData, make_lasso_data

SEED_ENV = "BMCLT_SEED"

# ---------------------------------------------------------------------------
# serialization


def _encode(obj, out: list) -> None:
    if obj is None or obj is True or obj is False:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"cannot serialize non-finite float {x}")
        out.append(format(x, ".17g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(k)))
            out.append(":")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc) -> str:
    out: list[str] = []
    _encode(doc, out)
    return "".join(out) + "\n"


def loads(text: str):
    return json.loads(text)


def _nullable(x: float):
    return float(x) if math.isfinite(x) else None


def schedule_dict(s: BatchSchedule) -> dict:
    return {"n": s.n, "b_n": s.b_n, "a_n": s.a_n, "rule": s.rule.tag}


def estimate_document(est: BmEstimate, level: float, ci, extra: dict | None = None, seed=None) -> dict:
    doc = {
        "tool": "bmclt",
        "version": __version__,
        "base_seed": seed,
        "schedule": schedule_dict(est.schedule),
        "sigma2_hat": est.sigma2_hat,
        "chain_mean": est.chain_mean,
        "ci": {
            "level": level,
            "lower": ci.lower,
            "upper": ci.upper,
            "truncated_lower": ci.truncated_lower,
        },
    }
    doc.update(extra or {})
    return doc


def result_document(result: ReplicationResult, coverage=(), histograms=None) -> dict:
    """Everything reproducible about an experiment; wall-clock and worker count excluded."""
    cfg = result.config
    z = normal_quantile(0.5 * (1.0 + cfg.level))
    cells = []
    for c, row in enumerate(result.schedules):
        for k, sched in enumerate(row):
            s2 = result.sigma2[:, c, k]
            half = z * math.sqrt(2.0 / sched.a_n) * s2
            cells.append(
                {
                    "n": sched.n,
                    "rule": cfg.rules[k],
                    "schedule": schedule_dict(sched),
                    "sigma2_hat": [_nullable(v) for v in s2],
                    "chain_mean": [_nullable(v) for v in result.chain_mean[:, c, k]],
                    "ci_lower": [_nullable(v) for v in s2 - half],
                    "ci_upper": [_nullable(v) for v in s2 + half],
                }
            )
    return {
        "tool": "bmclt",
        "version": __version__,
        "base_seed": cfg.base_seed,
        "config": cfg.echo(),
        "stream_ids": list(result.metadata.get("stream_ids", range(cfg.replicates))),
        "cells": cells,
        "failures": list(result.failures),
        "coverage": [
            {"n": r.n, "rule": r.rule, "coverage": r.coverage, "interval_count": r.interval_count, "failed": r.failed}
            for r in coverage
        ],
        "histograms": {k: h.as_dict() for k, h in (histograms or {}).items()},
    }


def result_from_document(doc: dict) -> ReplicationResult:
    """Rebuild the estimate tensor of a toy/ar1 experiment from its document."""
    echo = dict(doc["config"])
    if echo["model"] == "lasso":
        raise ConfigInvalid("lasso documents do not embed the data; rerun from the config")
    cfg = ExperimentConfig(**{k: v for k, v in echo.items()})
    C, K, R = len(cfg.checkpoints), len(cfg.rules), cfg.replicates
    s2 = np.full((R, C, K), np.nan)
    mean = np.full((R, C, K), np.nan)
    for cell in doc["cells"]:
        c, k = cfg.checkpoints.index(cell["n"]), cfg.rules.index(cell["rule"])
        s2[:, c, k] = [np.nan if v is None else v for v in cell["sigma2_hat"]]
        mean[:, c, k] = [np.nan if v is None else v for v in cell["chain_mean"]]
    schedules = [[batch_schedule(n, r) for r in cfg.parsed_rules()] for n in cfg.checkpoints]
    return ReplicationResult(cfg, schedules, s2, mean, list(doc["failures"]), {"stream_ids": doc["stream_ids"]})


# ---------------------------------------------------------------------------
# traces


def _parse_value(token: str, line: int) -> float:
    try:
        x = float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", line) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite value {token!r}", line)
    return x


def iter_trace_values(path) -> Iterator[float]:
    """Yield trace values in file order, validating as it goes.

    A first line reading ``value`` is a header; blank lines are skipped.
    """
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            token = raw.strip()
            if not token:
                continue
            if lineno == 1 and token.lower() == "value":
                continue
            yield _parse_value(token, lineno)


def read_trace_csv(path) -> np.ndarray:
    values = np.fromiter(iter_trace_values(path), dtype=np.float64)
    if values.size == 0:
        raise EmptyTrace(f"{path}: no values")
    return values


def write_trace_csv(values, fh) -> None:
    fh.write("value\n")
    for v in values:
        fh.write(format(float(v), ".17g"))
        fh.write("\n")


@contextmanager
def seekable_path(path) -> Iterator[Path]:
    """Yield a re-readable path; ``-`` (stdin) and pipes are spooled to a temp file."""
    if str(path) != "-" and Path(path).is_file():
        yield Path(path)
        return
    src = sys.stdin if str(path) == "-" else open(path, "r")
    fd, tmp = tempfile.mkstemp(prefix="bmclt-", suffix=".csv")
    try:
        with os.fdopen(fd, "w") as out:
            shutil.copyfileobj(src, out)
        yield Path(tmp)
    finally:
        if src is not sys.stdin:
            src.close()
        os.unlink(tmp)


def streaming_estimate(path, rule: Rule) -> tuple[BmEstimate, float, int]:
    """Batch means estimate from a trace file without holding the trace in memory.

    Two passes: the first counts values and forms the overall mean, the
    second accumulates batch means and squared deviations about that mean.
    Returns the estimate, the sample variance (ddof=1) and n.
    """
    n = 0
    total = 0.0
    for v in iter_trace_values(path):
        n += 1
        total += v
    if n == 0:
        raise EmptyTrace(f"{path}: no values")
    sched = batch_schedule(n, rule)
    mean = total / n
    means = np.empty(sched.a_n)
    buf = np.empty(sched.b_n)
    ss = 0.0
    comp = 0.0
    for i, v in enumerate(iter_trace_values(path)):
        d = v - mean
        ss += d * d
        comp += d
        if i < sched.used:
            j = i % sched.b_n
            buf[j] = v
            if j == sched.b_n - 1:
                means[i // sched.b_n] = buf.mean()
    # corrected two-pass sum of squares
    var = (ss - comp * comp / n) / (n - 1) if n > 1 else 0.0
    return estimate_from_batch_means(means, sched), var, n


# ---------------------------------------------------------------------------
# lasso data


def _read_rows(path) -> list[list[float]]:
    rows = []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise ParseError(f"not a number in {fields!r}", lineno) from None
            if not all(math.isfinite(x) for x in rows[-1]):
                raise ParseError("non-finite value", lineno)
    return rows


def read_lasso_csv(y_path, x_path, lam: float) -> LassoData:
    """Read Y (one value per row) and X (one comma-separated row per observation).

    Columns of X are centered and scaled to unit sample standard deviation.
    """
    y_rows = _read_rows(y_path)
    x_rows = _read_rows(x_path)
    if any(len(r) != 1 for r in y_rows):
        raise DimensionMismatch(f"{y_path}: expected one value per row")
    if not x_rows:
        raise DimensionMismatch(f"{x_path}: no rows")
    p = len(x_rows[0])
    if any(len(r) != p for r in x_rows):
        raise DimensionMismatch(f"{x_path}: ragged rows")
    if len(y_rows) != len(x_rows):
        raise DimensionMismatch(f"Y has {len(y_rows)} rows, X has {len(x_rows)}")
    return make_lasso_data(
        [r[0] for r in y_rows],
        x_rows,
        lam,
        provenance={"y_path": str(y_path), "x_path": str(x_path)},
    )


# ---------------------------------------------------------------------------
# config


CONFIG_KEYS = {
    "model", "replicates", "burn_in", "checkpoints", "rules", "level", "base_seed",
    "workers", "rho", "tau2", "y_path", "x_path", "lambda", "eta2_mode", "ig_mode",
    "hist_bins", "hist_range",
}


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigInvalid(f"{SEED_ENV}={raw!r} is not an integer") from None


def load_config(path) -> ExperimentConfig:
    """Read a flat TOML experiment config.

    Keys mirror ``ExperimentConfig``; ``lambda`` names the lasso penalty and
    relative ``y_path``/``x_path`` resolve against the config's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigInvalid(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {k: v for k, v in raw.items() if k != "lambda"}
    kwargs.setdefault("base_seed", default_seed())
    if raw.get("model") == "lasso":
        if "lambda" not in raw or "y_path" not in raw or "x_path" not in raw:
            raise ConfigInvalid("lasso config needs y_path, x_path and lambda")
        y_path = (path.parent / raw["y_path"]).resolve()
        x_path = (path.parent / raw["x_path"]).resolve()
        kwargs["lam"] = float(raw["lambda"])
        kwargs["lasso_data"] = read_lasso_csv(y_path, x_path, kwargs["lam"])
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None
