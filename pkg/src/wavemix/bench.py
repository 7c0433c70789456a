"""Monte-Carlo study runner.

A study is a list of :class:`~wavemix.simgen.SimulationConfig` cells crossed
with a list of :class:`Estimator`. Every estimator sees the same simulated
panels (paired design), so differences between estimators are not blurred by
independent noise draws.

Work is split into ``(config, repetition)`` tasks and run on a thread pool
whose size is taken from ``WAVEMIX_THREADS`` (default: CPU count). Results are
written into preallocated slots, so the report does not depend on scheduling.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import simgen
from .dwt import inverse_array
from .errors import CellError, ConfigurationError, StructureError, WavemixError
from .estimator import (
    average_then_shrink_coefficients,
    normalize_variance_mode,
    pointwise_average_coefficients,
    shrink_then_average_coefficients,
)
from .shrinkage import ShrinkageRule
from .threshold import ThresholdPolicy

STRATEGIES = ("average_then_shrink", "shrink_then_average", "pointwise")
PLAN_VERSION = 1

# Per-function display factors used in formatted tables.
DISPLAY_UNITS = {"blocks": 1.0, "bumps": 1.0, "heavisine": 1e-2, "doppler": 1e-4}

CSV_FIELDS = (
    "cell", "test_function", "M", "N", "snr", "tau", "eta", "structure", "bernoulli_p",
    "filter", "seed", "snr_definition", "estimator", "strategy", "rule", "selector", "j0",
    "scale", "variance_mode", "repetitions", "mean_mise", "sd_mise", "median_repetition",
)


def mise(mu_hat, mu_true) -> float:
    """Grid approximation of the integrated squared error: ``mean((mu_hat - mu)^2)``."""
    a = np.asarray(mu_hat, dtype=float)
    b = np.asarray(mu_true, dtype=float)
    if a.shape != b.shape:
        raise StructureError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


@dataclass(frozen=True)
class Estimator:
    """A named mean-curve estimator: strategy, threshold policy and variance mode."""

    name: str
    policy: Optional[ThresholdPolicy] = None
    variance_mode: str = "heteroscedastic"
    strategy: str = "average_then_shrink"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        object.__setattr__(self, "variance_mode", normalize_variance_mode(self.variance_mode))
        if self.policy is None and self.strategy != "pointwise":
            object.__setattr__(self, "policy", ThresholdPolicy())

    def estimate(self, coeffs: np.ndarray, filt) -> np.ndarray:
        if self.strategy == "pointwise":
            return pointwise_average_coefficients(coeffs, filt).mu_hat
        if self.strategy == "shrink_then_average":
            return shrink_then_average_coefficients(coeffs, filt, self.policy).mu_hat
        return average_then_shrink_coefficients(coeffs, filt, self.policy, self.variance_mode).mu_hat

    def to_dict(self) -> dict:
        p = self.policy
        return {
            "name": self.name,
            "strategy": self.strategy,
            "rule": p.rule.kind if p else "",
            "selector": p.selector if p else "",
            "j0": p.j0 if p else "",
            "scale": p.scale if p else "",
            "variance_mode": self.variance_mode,
        }


@dataclass
class CellResult:
    index: int
    config: simgen.SimulationConfig
    estimator: Estimator
    mise: np.ndarray
    wall_time: float = 0.0
    traces: Optional[np.ndarray] = field(default=None, repr=False)
    mu_true: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def repetitions(self) -> int:
        return int(self.mise.size)

    @property
    def mean(self) -> float:
        return float(np.mean(self.mise))

    @property
    def sd(self) -> float:
        return float(np.std(self.mise, ddof=1)) if self.mise.size > 1 else 0.0

    @property
    def median_repetition(self) -> int:
        """Repetition whose MISE is the (lower) median, as used for typical-case plots."""
        order = np.argsort(self.mise, kind="stable")
        return int(order[(order.size - 1) // 2])

    @property
    def identity(self) -> str:
        c = self.config
        return (
            f"#{self.index} {c.test_function} M={c.M} N={c.N} snr={c.snr:g} tau={c.tau:g} "
            f"{c.structure} est={self.estimator.name}"
        )


@dataclass
class StudyReport:
    cells: list[CellResult]
    wall_time: float = 0.0

    def __iter__(self):
        return iter(self.cells)

    def __len__(self):
        return len(self.cells)

    def find(self, **criteria) -> list[CellResult]:
        """Cells whose config fields (or ``estimator`` name) equal the given values."""
        out = []
        for cell in self.cells:
            ok = True
            for key, want in criteria.items():
                have = cell.estimator.name if key == "estimator" else getattr(cell.config, key)
                if have != want:
                    ok = False
                    break
            if ok:
                out.append(cell)
        return out

    def get(self, **criteria) -> CellResult:
        hits = self.find(**criteria)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match {criteria}")
        return hits[0]

    def rows(self) -> list[dict]:
        out = []
        for cell in self.cells:
            c = cell.config
            row = {
                "cell": cell.index,
                "test_function": c.test_function,
                "M": c.M,
                "N": c.N,
                "snr": repr(float(c.snr)),
                "tau": "inf" if math.isinf(c.tau) else repr(float(c.tau)),
                "eta": repr(float(c.eta)),
                "structure": c.structure,
                "bernoulli_p": repr(float(c.bernoulli_p)),
                "filter": f"d{c.filter}",
                "seed": c.seed,
                "snr_definition": c.snr_definition,
            }
            est = cell.estimator.to_dict()
            row.update(
                estimator=est["name"],
                strategy=est["strategy"],
                rule=est["rule"],
                selector=est["selector"],
                j0=est["j0"],
                scale=repr(float(est["scale"])) if est["scale"] != "" else "",
                variance_mode=est["variance_mode"],
                repetitions=cell.repetitions,
                mean_mise=repr(cell.mean),
                sd_mise=repr(cell.sd),
                median_repetition=cell.median_repetition,
            )
            out.append(row)
        return out

    def to_csv(self) -> str:
        """CSV text without timing columns, so reruns compare byte for byte."""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> str:
        cells = []
        for cell, row in zip(self.cells, self.rows()):
            entry = dict(row)
            entry["mise"] = [float(v) for v in cell.mise]
            entry["wall_time"] = cell.wall_time
            cells.append(entry)
        return json.dumps({"version": PLAN_VERSION, "wall_time": self.wall_time, "cells": cells}, indent=2)

    def format_table(self) -> str:
        """Human-readable table; Heavisine and Doppler are shown in their customary units."""
        lines = [f"{'function':<10} {'N':>4} {'snr':>5} {'tau':>6} {'estimator':<14} {'mean (sd)':>24}"]
        for cell in self.cells:
            c = cell.config
            unit = DISPLAY_UNITS[c.test_function]
            tag = "" if unit == 1.0 else f" x{unit:.0e}"
            val = f"{cell.mean / unit:.4g} ({cell.sd / unit:.3g}){tag}"
            lines.append(
                f"{c.test_function:<10} {c.N:>4} {c.snr:>5g} {c.tau:>6g} {cell.estimator.name:<14} {val:>24}"
            )
        return "\n".join(lines)

    def write_traces(self, directory: str) -> list[str]:
        """One CSV per cell with ``t, mu_true, mu_hat`` at the median-MISE repetition."""
        os.makedirs(directory, exist_ok=True)
        written = []
        for cell in self.cells:
            if cell.traces is None:
                raise StructureError("study was run without keep_traces=True")
            rep = cell.median_repetition
            path = os.path.join(directory, f"cell{cell.index:04d}_median.csv")
            t = simgen.grid(cell.config.M)
            with open(path, "w", newline="") as fh:
                fh.write(f"# {cell.identity} repetition={rep}\n")
                fh.write("t,mu_true,mu_hat\n")
                for ti, m, h in zip(t, cell.mu_true, cell.traces[rep]):
                    fh.write(f"{float(ti)!r},{float(m)!r},{float(h)!r}\n")
            written.append(path)
        return written


def thread_count(threads: Optional[int] = None) -> int:
    if threads is not None:
        n = int(threads)
    else:
        env = os.environ.get("WAVEMIX_THREADS", "").strip()
        n = int(env) if env else (os.cpu_count() or 1)
    return max(1, n)


def run_study(
    configs: Sequence[simgen.SimulationConfig],
    estimators: Sequence[Estimator],
    *,
    threads: Optional[int] = None,
    keep_traces: bool = False,
) -> StudyReport:
    """Run every estimator on ``config.repetitions`` simulated panels of every config.

    Config ``i`` draws its variance field from stream ``(1, i)`` and repetition
    ``r`` from ``(2, i, r)`` of its own seed.
    """
    configs = list(configs)
    estimators = list(estimators)
    if not configs:
        raise ConfigurationError("study grid is empty")
    if not estimators:
        raise ConfigurationError("study has no estimators")
    names = [e.name for e in estimators]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"estimator names must be unique, got {names}")

    start = time.perf_counter()
    prepared = []
    for i, cfg in enumerate(configs):
        try:
            mu = simgen.mu_coefficients(cfg.test_function, cfg.M, cfg.filter)
            noise = simgen.calibrate(cfg, mu, cell=i)
        except WavemixError as exc:
            raise CellError(_config_identity(i, cfg), exc) from exc
        prepared.append((mu, noise, inverse_array(mu.coeffs, cfg.filter)))

    n_est = len(estimators)
    results = [np.empty((n_est, cfg.repetitions)) for cfg in configs]
    timings = [np.zeros(n_est) for _ in configs]
    traces = [np.empty((n_est, cfg.repetitions, cfg.M)) for cfg in configs] if keep_traces else None

    def task(i: int, r: int) -> None:
        cfg = configs[i]
        mu, noise, mu_true = prepared[i]
        coeffs = simgen.generate_panel(cfg, noise, simgen.rng_for(cfg.seed, 2, i, r), mu)
        for e, est in enumerate(estimators):
            t0 = time.perf_counter()
            try:
                mu_hat = est.estimate(coeffs, cfg.filter)
            except Exception as exc:
                raise CellError(f"{_config_identity(i, cfg)} est={est.name} rep={r}", exc) from exc
            timings[i][e] += time.perf_counter() - t0
            results[i][e, r] = mise(mu_hat, mu_true)
            if traces is not None:
                traces[i][e, r] = mu_hat

    jobs = [(i, r) for i, cfg in enumerate(configs) for r in range(cfg.repetitions)]
    n_threads = thread_count(threads)
    if n_threads == 1:
        for i, r in jobs:
            task(i, r)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = [pool.submit(task, i, r) for i, r in jobs]
            # surface the first failure in job order, not completion order
            for fut in futures:
                fut.result()

    cells = []
    for i, cfg in enumerate(configs):
        for e, est in enumerate(estimators):
            cells.append(
                CellResult(
                    index=len(cells),
                    config=cfg,
                    estimator=est,
                    mise=results[i][e].copy(),
                    wall_time=float(timings[i][e]),
                    traces=traces[i][e] if traces is not None else None,
                    mu_true=prepared[i][2] if traces is not None else None,
                )
            )
    return StudyReport(cells, wall_time=time.perf_counter() - start)


def _config_identity(i: int, cfg: simgen.SimulationConfig) -> str:
    return f"#{i} {cfg.test_function} M={cfg.M} N={cfg.N} snr={cfg.snr:g} tau={cfg.tau:g} {cfg.structure}"


# -- presets ---------------------------------------------------------------

def config_grid(base: Optional[Mapping] = None, **axes: Iterable) -> list[simgen.SimulationConfig]:
    """Cartesian product of ``axes`` over the fixed fields in ``base``.

    Axis order follows keyword order, with the last axis varying fastest.
    """
    base = dict(base or {})
    keys = list(axes)
    values = [list(axes[k]) for k in keys]
    return [simgen.SimulationConfig(**base, **dict(zip(keys, combo))) for combo in itertools.product(*values)]


def heteroscedasticity_study(repetitions: int = 50, seed: int = 0, scale: float = 0.5, **base):
    """He vs Ho with SCAD + universal thresholds on the zero-coefficient structure."""
    configs = config_grid(
        dict(repetitions=repetitions, seed=seed, structure="zeros", **base),
        test_function=simgen.FUNCTIONS,
        snr=(1.0, 5.0),
        tau=(0.1, 1.0),
    )
    policy = ThresholdPolicy(ShrinkageRule("scad"), "universal", scale=scale)
    estimators = [Estimator("He", policy, "heteroscedastic"), Estimator("Ho", policy, "homoscedastic")]
    return configs, estimators


def homoscedastic_study(repetitions: int = 50, seed: int = 0, scale: float = 0.5, snr=(5.0,), **base):
    """Same estimators as :func:`heteroscedasticity_study` on noise with no extra variance."""
    configs = config_grid(
        dict(repetitions=repetitions, seed=seed, tau=math.inf, **base),
        test_function=simgen.FUNCTIONS,
        snr=snr,
    )
    policy = ThresholdPolicy(ShrinkageRule("scad"), "universal", scale=scale)
    estimators = [Estimator("He", policy, "heteroscedastic"), Estimator("Ho", policy, "homoscedastic")]
    return configs, estimators


def selector_study(repetitions: int = 50, seed: int = 0, scale: float = 0.5, **base):
    """Soft/SCAD x universal/hybrid heteroscedastic thresholding on the Bernoulli structure."""
    configs = config_grid(
        dict(repetitions=repetitions, seed=seed, structure="bernoulli", **base),
        test_function=simgen.FUNCTIONS,
        snr=(1.0, 5.0),
        tau=(0.1, 0.25, 1.0),
    )
    estimators = [
        Estimator(f"{rule}+{sel}", ThresholdPolicy(ShrinkageRule(rule), sel, scale=scale), "heteroscedastic")
        for rule in ("soft", "scad")
        for sel in ("universal", "hybrid")
    ]
    return configs, estimators


# -- JSON study plans ----------------------------------------------

_CONFIG_FIELDS = {
    "test_function", "M", "N", "snr", "tau", "eta", "structure", "bernoulli_p",
    "filter", "zero_tol", "snr_definition",
}
_ESTIMATOR_FIELDS = {"name", "rule", "scad_a", "selector", "j0", "scale", "variance", "strategy", "divide_by_sqrt_n"}


def _as_list(value, where: str) -> list:
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ConfigurationError(f"{where}: empty list")
    return items


def _parse_tau(value, where: str):
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigurationError(f"{where}: expected a number or \"inf\", got {value!r}")


def parse_study_plan(plan: Mapping) -> tuple[list[simgen.SimulationConfig], list[Estimator]]:
    """Validate a version-1 study document and expand it into configs and estimators.

    Layout::

        {"version": 1, "seed": 0, "repetitions": 20,
         "grid": {"test_function": ["blocks", "bumps"], "snr": [1, 5], "tau": [0.1, 1]},
         "estimators": [{"name": "He", "rule": "scad", "selector": "universal",
                         "scale": 0.5, "variance": "het"}]}

    Grid values may be scalars or lists; lists are crossed. Errors name the
    offending field.
    """
    if not isinstance(plan, Mapping):
        raise ConfigurationError("study plan must be a JSON object")
    version = plan.get("version")
    if version != PLAN_VERSION:
        raise ConfigurationError(f"version: expected {PLAN_VERSION}, got {version!r}")
    unknown = set(plan) - {"version", "seed", "repetitions", "grid", "estimators", "description"}
    if unknown:
        raise ConfigurationError(f"unknown top-level field(s): {sorted(unknown)}")
    seed = plan.get("seed", 0)
    reps = plan.get("repetitions", 50)
    for name, val in (("seed", seed), ("repetitions", reps)):
        if not isinstance(val, int) or isinstance(val, bool):
            raise ConfigurationError(f"{name}: expected an integer, got {val!r}")

    grid = plan.get("grid")
    if not isinstance(grid, Mapping) or not grid:
        raise ConfigurationError("grid: must be a non-empty object")
    bad = set(grid) - _CONFIG_FIELDS
    if bad:
        raise ConfigurationError(f"grid: unknown field(s) {sorted(bad)}")
    axes = {}
    for key, value in grid.items():
        items = _as_list(value, f"grid.{key}")
        if key == "tau":
            items = [_parse_tau(v, f"grid.tau[{n}]") for n, v in enumerate(items)]
        axes[key] = items
    configs = []
    keys = list(axes)
    for combo in itertools.product(*(axes[k] for k in keys)):
        fields = dict(zip(keys, combo))
        try:
            configs.append(simgen.SimulationConfig(repetitions=reps, seed=seed, **fields))
        except (ConfigurationError, TypeError) as exc:
            raise ConfigurationError(f"grid: {exc}") from exc

    raw_est = plan.get("estimators")
    if not isinstance(raw_est, list) or not raw_est:
        raise ConfigurationError("estimators: must be a non-empty list")
    estimators = []
    for n, item in enumerate(raw_est):
        where = f"estimators[{n}]"
        if not isinstance(item, Mapping):
            raise ConfigurationError(f"{where}: must be an object")
        bad = set(item) - _ESTIMATOR_FIELDS
        if bad:
            raise ConfigurationError(f"{where}: unknown field(s) {sorted(bad)}")
        strategy = item.get("strategy", "average_then_shrink")
        try:
            rule = ShrinkageRule(item.get("rule", "scad"), item.get("scad_a", 3.7))
        except ConfigurationError as exc:
            raise ConfigurationError(f"{where}.rule: {exc}") from exc
        try:
            policy = ThresholdPolicy(
                rule,
                item.get("selector", "universal"),
                item.get("j0", 3),
                item.get("scale", 0.5),
                item.get("divide_by_sqrt_n", True),
            )
        except ConfigurationError as exc:
            raise ConfigurationError(f"{where}.selector/j0/scale: {exc}") from exc
        try:
            est = Estimator(
                str(item.get("name", f"estimator{n}")),
                policy,
                item.get("variance", "het"),
                strategy,
            )
        except ConfigurationError as exc:
            raise ConfigurationError(f"{where}.variance/strategy: {exc}") from exc
        estimators.append(est)
    names = [e.name for e in estimators]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"estimators: names must be unique, got {names}")
    return configs, estimators


def load_study_plan(path: str):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"study plan is not valid JSON: {exc}") from exc
    return parse_study_plan(doc)
