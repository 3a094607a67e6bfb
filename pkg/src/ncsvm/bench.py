"""Grid-search benchmark over (rho1, rho2) and w-update profiling.

The grid search evaluates every pair on the held-out split and reports all
rows; the best row is picked by test accuracy, so it is a reproduction
harness rather than a clean model-selection protocol.
"""

import asyncio
import csv
import itertools
import logging
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ncsvm.admm import DivergenceError, SolverConfig, fit
from ncsvm.data import Dataset
from ncsvm.wsolve import Branch, HOperator, build_cache, naive_inverse, solve_w

logger = logging.getLogger(__name__)

BENCH_HEADER = [
    "rho1",
    "rho2",
    "status",
    "iterations",
    "terminated_by",
    "train_accuracy",
    "test_accuracy",
    "zero_fraction",
    "objective",
    "precompute_s",
    "iterate_s",
    "running_s",
]

PROFILE_HEADER = [
    "d",
    "n",
    "cache_s",
    "solve_per_call_s",
    "reformulated_s",
    "naive_inverse_s",
    "naive_per_call_s",
    "naive_s",
    "speedup",
]


@dataclass(frozen=True)
class BenchRow:
    """Outcome of one grid point.

    status is "ok" or "diverged"; a diverged row carries NaN metrics and is
    never selected as best.
    """

    rho1: float
    rho2: float
    status: str
    iterations: int = 0
    terminated_by: str = ""
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    zero_fraction: float = float("nan")
    objective: float = float("nan")
    precompute_seconds: float = float("nan")
    iterate_seconds: float = float("nan")

    @property
    def running_seconds(self) -> float:
        return self.precompute_seconds + self.iterate_seconds

    def as_row(self) -> list:
        return [
            self.rho1,
            self.rho2,
            self.status,
            self.iterations,
            self.terminated_by,
            self.train_accuracy,
            self.test_accuracy,
            self.zero_fraction,
            self.objective,
            self.precompute_seconds,
            self.iterate_seconds,
            self.running_seconds,
        ]


@dataclass(frozen=True)
class BenchResult:
    """All grid rows in grid order plus the index of the best one (None if all diverged)."""

    rows: tuple[BenchRow, ...]
    best_index: int | None

    @property
    def best(self) -> BenchRow | None:
        return None if self.best_index is None else self.rows[self.best_index]


def parse_grid(text: str) -> list[tuple[float, float]]:
    """Parse "r1:r2,r1:r2,..." into (rho1, rho2) pairs.

    Raises:
        ValueError: If a pair is malformed or a value is not positive
    """
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        left, sep, right = chunk.partition(":")
        if not sep:
            raise ValueError(f"grid entry {chunk!r} is not of the form rho1:rho2")
        try:
            rho1, rho2 = float(left), float(right)
        except ValueError:
            raise ValueError(f"grid entry {chunk!r} contains a non-numeric value")
        if not (rho1 > 0 and rho2 > 0):
            raise ValueError(f"grid entry {chunk!r} must have positive values")
        pairs.append((rho1, rho2))
    if not pairs:
        raise ValueError("grid is empty")
    return pairs


def default_grid(values: Sequence[float]) -> list[tuple[float, float]]:
    """Cartesian product values x values, rho1 varying slowest."""
    return list(itertools.product(values, values))


def select_best(rows: Sequence[BenchRow]) -> int | None:
    """Highest test accuracy, then fewest iterations, then earliest in grid order."""
    candidates = [i for i, row in enumerate(rows) if row.status == "ok"]
    if not candidates:
        return None
    return min(candidates, key=lambda i: (-rows[i].test_accuracy, rows[i].iterations, i))


def evaluate_point(
    train: Dataset, test: Dataset, cfg: SolverConfig, **fit_options
) -> BenchRow:
    """Fit one configuration and score it on both splits."""
    try:
        report = fit(train, cfg, **fit_options)
    except DivergenceError as e:
        logger.info("rho1=%g rho2=%g diverged: %s", cfg.rho1, cfg.rho2, e)
        return BenchRow(rho1=cfg.rho1, rho2=cfg.rho2, status="diverged")

    model = report.model
    return BenchRow(
        rho1=cfg.rho1,
        rho2=cfg.rho2,
        status="ok",
        iterations=report.iterations,
        terminated_by=report.terminated_by.value,
        train_accuracy=model.accuracy(train),
        test_accuracy=model.accuracy(test),
        zero_fraction=model.coefficient_sparsity().fraction,
        objective=report.final_objective,
        precompute_seconds=report.precompute_seconds,
        iterate_seconds=report.iterate_seconds,
    )


async def run_grid(
    train: Dataset,
    test: Dataset,
    base: SolverConfig,
    grid: Iterable[tuple[float, float]],
    workers: int = 1,
    **fit_options,
) -> BenchResult:
    """Evaluate every (rho1, rho2) pair, at most `workers` fits at a time.

    Fits run in worker threads over the shared immutable datasets. Rows come
    back in grid order whatever the completion order.
    """
    semaphore = asyncio.Semaphore(workers)
    configs = [
        SolverConfig.model_validate({**base.model_dump(), "rho1": rho1, "rho2": rho2})
        for rho1, rho2 in grid
    ]

    async def run_one(cfg: SolverConfig) -> BenchRow:
        async with semaphore:
            row = await asyncio.to_thread(evaluate_point, train, test, cfg, **fit_options)
        logger.info(
            "Grid point rho1=%g rho2=%g: %s, test accuracy %.4f",
            row.rho1,
            row.rho2,
            row.status,
            row.test_accuracy,
        )
        return row

    rows = await asyncio.gather(*(run_one(cfg) for cfg in configs))
    return BenchResult(rows=tuple(rows), best_index=select_best(rows))


def write_bench_csv(result: BenchResult, path: Path) -> None:
    """One row per grid pair; the three timing columns come last."""
    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for row in result.rows:
            writer.writerow(row.as_row())


def format_table(result: BenchResult) -> str:
    """Human-readable grid table with the best row marked by '*'."""
    lines = [
        f"  {'rho1':>6} {'rho2':>6} {'iters':>6} {'pre(s)':>9} {'iter(s)':>9} "
        f"{'run(s)':>9} {'test acc':>9} {'zeros':>7}"
    ]
    for i, row in enumerate(result.rows):
        marker = "*" if i == result.best_index else " "
        if row.status != "ok":
            lines.append(f"{marker} {row.rho1:>6g} {row.rho2:>6g} {row.status:>6}")
            continue
        lines.append(
            f"{marker} {row.rho1:>6g} {row.rho2:>6g} {row.iterations:>6d} "
            f"{row.precompute_seconds:>9.4f} {row.iterate_seconds:>9.4f} "
            f"{row.running_seconds:>9.4f} {100 * row.test_accuracy:>8.2f}% "
            f"{100 * row.zero_fraction:>6.1f}%"
        )
    return "\n".join(lines)


@dataclass(frozen=True)
class ProfileRow:
    """Timings of the reformulated and naive w-updates at one dimension.

    reformulated_s covers the n x n factorization plus every solve; naive_s
    covers the explicit d x d inverse plus every matrix-vector product.
    """

    d: int
    n: int
    cache_seconds: float
    solve_per_call_seconds: float
    reformulated_seconds: float
    naive_inverse_seconds: float
    naive_per_call_seconds: float
    naive_seconds: float

    @property
    def speedup(self) -> float:
        return self.naive_seconds / self.reformulated_seconds

    def as_row(self) -> list:
        return [
            self.d,
            self.n,
            self.cache_seconds,
            self.solve_per_call_seconds,
            self.reformulated_seconds,
            self.naive_inverse_seconds,
            self.naive_per_call_seconds,
            self.naive_seconds,
            self.speedup,
        ]


def dense_synthetic(n: int, d: int, seed: int = 0) -> Dataset:
    """Dense Gaussian features with random +-1 labels."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return Dataset(features=sp.csr_matrix(X), labels=y)


def profile_w_update(
    n: int = 200,
    dims: Sequence[int] = (1000, 2000, 4000),
    iterations: int = 20,
    seed: int = 0,
    rho1: float = 1.0,
    rho2: float = 1.0,
) -> list[ProfileRow]:
    """Time the cached wide-data w-update against the dense-inverse update.

    For every d, both paths solve the same `iterations` right-hand sides.
    """
    rows = []
    for d in dims:
        ds = dense_synthetic(n, d, seed)
        h = HOperator(ds)
        rhs = np.random.default_rng(seed + 1).standard_normal((iterations, d))

        started = time.perf_counter()
        cache = build_cache(ds, rho1, rho2, branch=Branch.WIDE, max_dense_dim=max(n, d))
        cache_seconds = time.perf_counter() - started
        started = time.perf_counter()
        for f in rhs:
            solve_w(cache, h, f)
        solve_seconds = time.perf_counter() - started

        started = time.perf_counter()
        inverse = naive_inverse(ds, rho1, rho2)
        inverse_seconds = time.perf_counter() - started
        started = time.perf_counter()
        for f in rhs:
            inverse @ (rho2 * f)
        naive_solve_seconds = time.perf_counter() - started

        row = ProfileRow(
            d=d,
            n=n,
            cache_seconds=cache_seconds,
            solve_per_call_seconds=solve_seconds / iterations,
            reformulated_seconds=cache_seconds + solve_seconds,
            naive_inverse_seconds=inverse_seconds,
            naive_per_call_seconds=naive_solve_seconds / iterations,
            naive_seconds=inverse_seconds + naive_solve_seconds,
        )
        logger.info("Profiled d=%d: speedup %.1fx", d, row.speedup)
        rows.append(row)
    return rows


def write_profile_csv(rows: Sequence[ProfileRow], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(PROFILE_HEADER)
        for row in rows:
            writer.writerow(row.as_row())


def format_profile_table(rows: Sequence[ProfileRow]) -> str:
    lines = [f"{'d':>7} {'cache(s)':>10} {'solve/call(s)':>14} {'naive(s)':>10} {'speedup':>8}"]
    for row in rows:
        lines.append(
            f"{row.d:>7d} {row.cache_seconds:>10.4f} {row.solve_per_call_seconds:>14.6f} "
            f"{row.naive_seconds:>10.4f} {row.speedup:>7.1f}x"
        )
    return "\n".join(lines)
