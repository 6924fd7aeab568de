"""Replicated simulation experiments: coverage tables and standardized estimates.

Replicate ``r`` always draws from ``RngStream(base_seed, r)`` and the estimate
at checkpoint ``n`` only looks at the first ``n`` post-burn-in values of that
replicate's trace, so results do not depend on the number of workers or on
the other checkpoints requested.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bmclt.errors import ComputationError, ConfigInvalid, InvalidRange, MissingCells
from bmclt.estimators import (
    BatchSchedule,
    BmEstimate,
    Rule,
    batch_means_estimate,
    batch_schedule,
    normal_quantile,
    parse_rule,
    variance_ci,
)
from bmclt.lasso import ETA2_MODES, IG_MODES, LassoData, lasso_chain
from bmclt.samplers import (
    TOY_INNOVATION_VAR,
    TOY_RHO,
    RngStream,
    ar1_chain,
    ar1_sigma2,
    toy_chain,
)

MODELS = ("toy", "ar1", "lasso")


@dataclass
class ExperimentConfig:
    model: str = "toy"
    replicates: int = 100
    burn_in: int = 20000
    checkpoints: list = field(default_factory=lambda: [5000, 10000, 50000, 100000, 500000])
    rules: list = field(default_factory=lambda: ["sqrt", "pow:0.4", "cbrt"])
    level: float = 0.95
    base_seed: int = 0
    workers: int = 1
    rho: float = TOY_RHO
    tau2: float = TOY_INNOVATION_VAR
    lasso_data: Optional[LassoData] = None
    y_path: Optional[str] = None
    x_path: Optional[str] = None
    lam: Optional[float] = None
    eta2_mode: str = "blocked"
    ig_mode: str = "standard"
    hist_bins: int = 40
    hist_range: tuple = (-4.0, 4.0)

    def __post_init__(self):
        self.checkpoints = [int(c) for c in self.checkpoints]
        self.rules = [r if isinstance(r, str) else r.tag for r in self.rules]
        self.hist_range = tuple(float(v) for v in self.hist_range)
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigInvalid(f"model must be one of {MODELS}, got {self.model!r}")
        if self.replicates < 1:
            raise ConfigInvalid("replicates must be positive")
        if self.burn_in < 0:
            raise ConfigInvalid("burn_in must be nonnegative")
        if self.workers < 1:
            raise ConfigInvalid("workers must be positive")
        if not self.checkpoints or any(c < 4 for c in self.checkpoints):
            raise ConfigInvalid("checkpoints must be a nonempty list of integers >= 4")
        if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ConfigInvalid("checkpoints must be strictly ascending")
        if not self.rules:
            raise ConfigInvalid("at least one batch rule is required")
        if not 0.0 < self.level < 1.0:
            raise ConfigInvalid(f"level must lie in (0, 1), got {self.level}")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigInvalid("base_seed must be a 64-bit unsigned integer")
        if self.model == "ar1" and not (-1.0 < self.rho < 1.0 and self.tau2 > 0.0):
            raise ConfigInvalid("ar1 needs |rho| < 1 and tau2 > 0")
        if self.model == "lasso":
            if self.lasso_data is None:
                raise ConfigInvalid("lasso model needs data (y_path, x_path, lambda)")
            if self.eta2_mode not in ETA2_MODES or self.ig_mode not in IG_MODES:
                raise ConfigInvalid(f"bad lasso mode {self.eta2_mode!r}/{self.ig_mode!r}")
        if self.hist_bins < 1 or not self.hist_range[0] < self.hist_range[1]:
            raise ConfigInvalid("histogram needs bins >= 1 and lo < hi")
        try:
            for n in self.checkpoints:
                for r in self.parsed_rules():
                    batch_schedule(n, r)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None

    def parsed_rules(self) -> list[Rule]:
        return [parse_rule(r) for r in self.rules]

    @property
    def total_iterations(self) -> int:
        return self.burn_in + max(self.checkpoints)

    def echo(self) -> dict:
        """Result-determining fields only; ``workers`` is deliberately left out."""
        out = {
            "model": self.model,
            "replicates": self.replicates,
            "burn_in": self.burn_in,
            "checkpoints": list(self.checkpoints),
            "rules": list(self.rules),
            "level": self.level,
            "base_seed": self.base_seed,
            "hist_bins": self.hist_bins,
            "hist_range": list(self.hist_range),
        }
        if self.model == "ar1":
            out.update(rho=self.rho, tau2=self.tau2)
        if self.model == "lasso":
            out.update(
                y_path=self.y_path,
                x_path=self.x_path,
                lam=self.lasso_data.lam,
                eta2_mode=self.eta2_mode,
                ig_mode=self.ig_mode,
                m=self.lasso_data.m,
                p=self.lasso_data.p,
                standardization=self.lasso_data.provenance.get("standardization"),
            )
        return out

    def truth(self) -> Optional[float]:
        if self.model == "toy":
            return ar1_sigma2(TOY_RHO, TOY_INNOVATION_VAR)
        if self.model == "ar1":
            return ar1_sigma2(self.rho, self.tau2)
        return None


@dataclass
class ReplicationResult:
    config: ExperimentConfig
    schedules: list  # [checkpoint][rule] -> BatchSchedule
    sigma2: np.ndarray  # (replicate, checkpoint, rule); NaN marks a failed cell
    chain_mean: np.ndarray
    failures: list  # [{"replicate": r, "error": type, "message": str}]
    metadata: dict = field(default_factory=dict)

    def index(self, n: int, rule: str) -> tuple[int, int]:
        try:
            return self.config.checkpoints.index(n), self.config.rules.index(rule)
        except ValueError:
            raise MissingCells(f"no cell for n={n}, rule={rule!r}") from None

    def estimate(self, replicate: int, n: int, rule: str) -> BmEstimate:
        c, k = self.index(n, rule)
        val = self.sigma2[replicate, c, k]
        if not np.isfinite(val):
            raise MissingCells(f"replicate {replicate} failed for n={n}, rule={rule!r}")
        return BmEstimate(float(val), self.schedules[c][k], float(self.chain_mean[replicate, c, k]))

    def valid(self, n: int, rule: str) -> np.ndarray:
        c, k = self.index(n, rule)
        col = self.sigma2[:, c, k]
        return col[np.isfinite(col)]


def _replicate_trace(config: ExperimentConfig, r: int) -> np.ndarray:
    rng = RngStream(config.base_seed, r).generator()
    n, burn = max(config.checkpoints), config.burn_in
    if config.model == "lasso":
        return lasso_chain(config.lasso_data, n, burn, rng, None, config.eta2_mode, config.ig_mode)
    init = float(rng.standard_normal())
    if config.model == "toy":
        return toy_chain(n, burn, init, rng)
    return ar1_chain(config.rho, config.tau2, n, burn, init, rng)


def _run_replicates(config: ExperimentConfig, replicates: range):
    schedules = [[batch_schedule(n, rule) for rule in config.parsed_rules()] for n in config.checkpoints]
    shape = (len(replicates), len(config.checkpoints), len(config.rules))
    s2 = np.full(shape, np.nan)
    mean = np.full(shape, np.nan)
    failures = []
    for i, r in enumerate(replicates):
        try:
            trace = _replicate_trace(config, r)
        except ComputationError as exc:
            failures.append({"replicate": r, "error": type(exc).__name__, "message": str(exc)})
            continue
        for c, row in enumerate(schedules):
            for k, sched in enumerate(row):
                est = batch_means_estimate(trace[: sched.n], sched)
                s2[i, c, k] = est.sigma2_hat
                mean[i, c, k] = est.chain_mean
    return s2, mean, failures


def _chunks(total: int, parts: int) -> list[range]:
    size = math.ceil(total / parts)
    return [range(lo, min(lo + size, total)) for lo in range(0, total, size)]


def run_experiment(config: ExperimentConfig) -> ReplicationResult:
    config.validate()
    start = time.perf_counter()
    workers = min(config.workers, config.replicates)
    if workers == 1:
        parts = [_run_replicates(config, range(config.replicates))]
    else:
        chunks = _chunks(config.replicates, workers * 4)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_replicates, [config] * len(chunks), chunks))
    sigma2 = np.concatenate([p[0] for p in parts])
    chain_mean = np.concatenate([p[1] for p in parts])
    failures = sorted((f for p in parts for f in p[2]), key=lambda f: f["replicate"])
    schedules = [[batch_schedule(n, rule) for rule in config.parsed_rules()] for n in config.checkpoints]
    meta = {
        "stream_ids": list(range(config.replicates)),
        "wall_clock_seconds": time.perf_counter() - start,
        "workers": workers,
    }
    return ReplicationResult(config, schedules, sigma2, chain_mean, failures, meta)


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class CoverageRow:
    n: int
    rule: str
    coverage: float
    interval_count: int
    failed: int = 0


def compute_coverage(result: ReplicationResult, truth: float, level: float | None = None) -> list[CoverageRow]:
    """Fraction of raw (untruncated) intervals containing ``truth`` per (n, rule).

    Failed replicates are excluded from the denominator and counted in ``failed``.
    """
    if not math.isfinite(truth):
        raise ValueError(f"truth must be finite, got {truth}")
    level = result.config.level if level is None else level
    z = normal_quantile(0.5 * (1.0 + level))
    rows = []
    for c, n in enumerate(result.config.checkpoints):
        for k, rule in enumerate(result.config.rules):
            col = result.sigma2[:, c, k]
            ok = col[np.isfinite(col)]
            if ok.size == 0:
                raise MissingCells(f"no successful replicates for n={n}, rule={rule!r}")
            half = z * math.sqrt(2.0 / result.schedules[c][k].a_n) * ok
            hits = int(np.count_nonzero((ok - half <= truth) & (truth <= ok + half)))
            rows.append(CoverageRow(n, rule, hits / ok.size, int(ok.size), int(col.size - ok.size)))
    return rows


@dataclass(frozen=True)
class Standardization:
    center: float
    scale: float  # the sigma^2 multiplying sqrt(2 / a_n)
    sd: float
    mode: str  # "exact-truth" or "approximate"


def standardization(result: ReplicationResult, n: int, rule: str, truth: float | None = None) -> Standardization:
    c, k = result.index(n, rule)
    a = result.schedules[c][k].a_n
    if truth is not None:
        center, mode = float(truth), "exact-truth"
    else:
        ref = result.valid(max(result.config.checkpoints), rule)
        if ref.size == 0:
            raise MissingCells(f"no successful replicates at the largest n for rule {rule!r}")
        center, mode = float(ref.mean()), "approximate"
    return Standardization(center, center, center * math.sqrt(2.0 / a), mode)


def standardize(result: ReplicationResult, n: int, rule: str, truth: float | None = None) -> np.ndarray:
    """``(sigma2_hat - center) / (center * sqrt(2 / a_n))`` per replicate.

    With ``truth`` the center is the known variance; without it, the
    replicate-average estimate at the largest checkpoint for the same rule.
    Failed replicates come out as NaN.
    """
    c, k = result.index(n, rule)
    st = standardization(result, n, rule, truth)
    return (result.sigma2[:, c, k] - st.center) / st.sd


@dataclass(frozen=True)
class HistogramExport:
    bin_edges: np.ndarray
    counts: np.ndarray
    underflow: int
    overflow: int
    nonfinite: int
    standardization: Optional[Standardization] = None

    def as_dict(self) -> dict:
        st = self.standardization
        return {
            "bin_edges": [float(e) for e in self.bin_edges],
            "counts": [int(c) for c in self.counts],
            "underflow": self.underflow,
            "overflow": self.overflow,
            "nonfinite": self.nonfinite,
            "standardization": None
            if st is None
            else {"mean": st.center, "sd": st.sd, "mode": st.mode},
        }


def histogram_export(values, bins: int, value_range: tuple[float, float], standardization=None) -> HistogramExport:
    """Equal-width bins on [lo, hi]; bins are [left, right) except the last, which is closed."""
    lo, hi = float(value_range[0]), float(value_range[1])
    if bins < 1 or not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise InvalidRange(f"need bins >= 1 and finite lo < hi, got {bins}, ({lo}, {hi})")
    vals = np.asarray(values, dtype=np.float64).ravel()
    finite = vals[np.isfinite(vals)]
    edges = np.linspace(lo, hi, bins + 1)
    under = int(np.count_nonzero(finite < lo))
    over = int(np.count_nonzero(finite > hi))
    inside = finite[(finite >= lo) & (finite <= hi)]
    idx = np.searchsorted(edges, inside, side="right") - 1
    idx = np.minimum(idx, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return HistogramExport(edges, counts, under, over, int(vals.size - finite.size), standardization)


def summarize(result: ReplicationResult) -> tuple[list[CoverageRow], dict]:
    """Coverage rows (when a truth is known) and histograms for every (n, rule)."""
    cfg = result.config
    truth = cfg.truth()
    coverage = compute_coverage(result, truth) if truth is not None else []
    histograms = {}
    for n in cfg.checkpoints:
        for rule in cfg.rules:
            if result.valid(n, rule).size == 0:
                continue
            st = standardization(result, n, rule, truth)
            z = standardize(result, n, rule, truth)
            histograms[f"n={n}|{rule}"] = histogram_export(z, cfg.hist_bins, cfg.hist_range, st)
    return coverage, histograms
