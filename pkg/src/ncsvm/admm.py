"""ADMM iteration for nonconvex penalized linear SVMs.

The hinge-loss problem is split with auxiliary variables z (copy of w),
xi (hinge slacks) and s (margin surplus):

    minimize   (1/n) 1^T xi + P(z)
    subject to w = z,  H w + b y + xi - s - 1 = 0,  xi >= 0,  s >= 0

Each iteration updates w, b, z, xi, s and then the scaled duals u and v, in
that order. Duals are kept in scaled form only (gamma = rho1 u, tau = rho2 v).
"""

import csv
import json
import logging
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, replace
from enum import StrEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ncsvm.data import Dataset
from ncsvm.model import LinearModel
from ncsvm.penalty import PenaltyConfig, penalty_total, prox_vector
from ncsvm.wsolve import (
    Branch,
    DimensionMismatchError,
    FactorCache,
    HOperator,
    assemble_f,
    build_cache,
    solve_w,
)

logger = logging.getLogger(__name__)

TRACE_HEADER = [
    "iter",
    "objective",
    "rel_change",
    "res_wz",
    "res_cons",
    "state_delta",
    "test_accuracy",
    "wall_time_s",
]
OBJECTIVE_FLOOR = 1e-12


class DivergenceError(RuntimeError):
    """Raised when an iterate becomes NaN or infinite."""

    def __init__(self, variable: str, iteration: int):
        self.variable = variable
        self.iteration = iteration
        super().__init__(
            f"non-finite value in {variable} at iteration {iteration}; "
            f"try a different rho1/rho2 balance or a small beta > 0"
        )


class SolverConfig(BaseModel):
    """Penalty plus ADMM parameters for one fit.

    The iteration itself is deterministic; seed only drives the stratified
    train/test split in the CLI and benchmark harness.
    """

    model_config = ConfigDict(frozen=True)

    penalty: PenaltyConfig
    rho1: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    rho2: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    beta: float = Field(default=0.0, ge=0, allow_inf_nan=False)
    epsilon: float = Field(default=1e-4, gt=0)
    max_iters: int = Field(default=1000, ge=1)
    seed: int = 0


@dataclass
class SolverState:
    """Primal variables (w, b, z, xi, s), scaled duals (u, v) and the iteration count."""

    w: np.ndarray
    b: float
    z: np.ndarray
    xi: np.ndarray
    s: np.ndarray
    u: np.ndarray
    v: np.ndarray
    iter: int = 0

    def copy(self) -> "SolverState":
        return SolverState(
            w=self.w.copy(),
            b=self.b,
            z=self.z.copy(),
            xi=self.xi.copy(),
            s=self.s.copy(),
            u=self.u.copy(),
            v=self.v.copy(),
            iter=self.iter,
        )

    def as_vector(self) -> np.ndarray:
        """All seven components stacked, for measuring ||D^(k+1) - D^(k)||."""
        return np.concatenate([self.w, [self.b], self.z, self.xi, self.s, self.u, self.v])


@dataclass(frozen=True)
class TraceRecord:
    """Per-iteration diagnostics.

    wall_time is solver seconds since the loop started, excluding the time
    spent scoring eval data. test_accuracy is NaN when fit ran without eval data.
    """

    iter: int
    objective: float
    rel_change: float
    primal_residual_wz: float
    primal_residual_cons: float
    state_delta: float
    wall_time: float
    test_accuracy: float = float("nan")

    def as_row(self) -> list:
        return [
            self.iter,
            self.objective,
            self.rel_change,
            self.primal_residual_wz,
            self.primal_residual_cons,
            self.state_delta,
            self.test_accuracy,
            self.wall_time,
        ]


class TerminatedBy(StrEnum):
    TOLERANCE = "tolerance"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class StepResult:
    """One full iteration.

    Attributes:
        previous: State at the start of the iteration
        state: State after all seven updates
        f: Right-hand side used by the w-update
        constraint_residual: H w + b y + xi - s - 1 with the new primal values
    """

    previous: SolverState
    state: SolverState
    f: np.ndarray
    constraint_residual: np.ndarray


@dataclass(frozen=True)
class FitReport:
    """Result of fit: the trained model plus iteration history and timings."""

    model: LinearModel
    iterations: int
    terminated_by: TerminatedBy
    precompute_seconds: float
    iterate_seconds: float
    trace: tuple[TraceRecord, ...] = field(default_factory=tuple)
    final_objective: float = float("nan")
    true_objective: float = float("nan")
    branch: Branch = Branch.TALL

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "iterations": self.iterations,
            "terminated_by": self.terminated_by.value,
            "precompute_seconds": self.precompute_seconds,
            "iterate_seconds": self.iterate_seconds,
            "final_objective": self.final_objective,
            "true_objective": self.true_objective,
            "branch": self.branch.value,
            "trace": [asdict(record) for record in self.trace],
        }


def initialize(n: int, d: int, cfg: SolverConfig | None = None) -> SolverState:
    """Starting point: w = b = z = s = u = v = 0 and xi = 1.

    xi = 1 is the hinge loss of every sample at w = 0, b = 0, so the start
    satisfies the margin constraint and obj^(0) = 1 + P(0) = 1.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    return SolverState(
        w=np.zeros(d),
        b=0.0,
        z=np.zeros(d),
        xi=np.ones(n),
        s=np.zeros(n),
        u=np.zeros(d),
        v=np.zeros(n),
        iter=0,
    )


def update_b(state: SolverState, h: HOperator, hw: np.ndarray | None = None) -> float:
    """b = y^T (s + 1 - H w - xi - v) / n, using the new w and the old xi, s, v."""
    if hw is None:
        hw = h.matvec(state.w)
    y = h.y
    return float(y @ (state.s + 1.0 - hw - state.xi - state.v)) / y.shape[0]


def update_z(state: SolverState, cfg: SolverConfig) -> np.ndarray:
    """Proximal step on w + u; with beta > 0 the previous z pulls the target.

    The beta term (beta/2)||z - z_prev||^2 merges with the rho1 quadratic into
    a single prox with target (rho1 (w + u) + beta z_prev) / (rho1 + beta) and
    modulus rho1 + beta.
    """
    target = state.w + state.u
    if cfg.beta == 0:
        return prox_vector(target, cfg.rho1, cfg.penalty)
    modulus = cfg.rho1 + cfg.beta
    merged = (cfg.rho1 * target + cfg.beta * state.z) / modulus
    return prox_vector(merged, modulus, cfg.penalty)


def update_xi(
    state: SolverState, h: HOperator, cfg: SolverConfig, hw: np.ndarray | None = None
) -> np.ndarray:
    """xi = max(s + 1 - v - H w - b y - 1/(n rho2), 0) with the new w and b."""
    if hw is None:
        hw = h.matvec(state.w)
    n = h.shape[0]
    unclamped = state.s + 1.0 - state.v - hw - state.b * h.y - 1.0 / (n * cfg.rho2)
    return np.maximum(unclamped, 0.0)


def update_s(state: SolverState, h: HOperator, hw: np.ndarray | None = None) -> np.ndarray:
    """s = max(H w + b y + xi - 1 + v, 0) with the new w, b and xi."""
    if hw is None:
        hw = h.matvec(state.w)
    return np.maximum(hw + state.b * h.y + state.xi - 1.0 + state.v, 0.0)


def constraint_residual(state: SolverState, h: HOperator, hw: np.ndarray | None = None) -> np.ndarray:
    """H w + b y + xi - s - 1."""
    if hw is None:
        hw = h.matvec(state.w)
    return hw + state.b * h.y + state.xi - state.s - 1.0


def update_duals(
    state: SolverState, h: HOperator, hw: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """u + (w - z) and v + (H w + b y + xi - s - 1), all primal values new."""
    return state.u + (state.w - state.z), state.v + constraint_residual(state, h, hw)


def objective(state: SolverState, cfg: SolverConfig) -> float:
    """obj = (1/n) 1^T xi + P(z), the quantity monitored by the stopping rule."""
    return float(np.mean(state.xi)) + penalty_total(cfg.penalty, state.z)


def true_objective(model: LinearModel, ds: Dataset, cfg: SolverConfig) -> float:
    """Penalized hinge loss (1/n) sum [1 - y_i (w^T x_i + b)]_+ + P(w) on (w, b)."""
    margins = ds.labels * model.decision_function(ds.features)
    return float(np.mean(np.maximum(1.0 - margins, 0.0))) + penalty_total(cfg.penalty, model.w)


def augmented_lagrangian(state: SolverState, cfg: SolverConfig, h: HOperator) -> float:
    """Scaled-form augmented Lagrangian, including the -rho/2 ||dual||^2 terms."""
    r = constraint_residual(state, h)
    return (
        objective(state, cfg)
        + 0.5 * cfg.rho1 * float(np.sum((state.w - state.z + state.u) ** 2))
        + 0.5 * cfg.rho2 * float(np.sum((r + state.v) ** 2))
        - 0.5 * cfg.rho1 * float(state.u @ state.u)
        - 0.5 * cfg.rho2 * float(state.v @ state.v)
    )


def w_stationarity_residual(
    previous: SolverState, w: np.ndarray, h: HOperator, cfg: SolverConfig
) -> float:
    """Max-norm of the w optimality condition with every other variable from `previous`."""
    r = h.matvec(w) + previous.b * h.y + previous.xi - previous.s - 1.0 + previous.v
    g = cfg.rho1 * (w - previous.z + previous.u) + cfg.rho2 * h.rmatvec(r)
    return float(np.max(np.abs(g)))


def b_stationarity_residual(previous: SolverState, w: np.ndarray, b: float, h: HOperator) -> float:
    """|y^T (H w + b y + xi - s - 1 + v)| with xi, s, v from `previous`."""
    r = h.matvec(w) + b * h.y + previous.xi - previous.s - 1.0 + previous.v
    return abs(float(h.y @ r))


def _check_finite(state: SolverState) -> None:
    for name in ("w", "b", "z", "xi", "s", "u", "v"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise DivergenceError(name, state.iter)


def step(state: SolverState, cache: FactorCache, h: HOperator, cfg: SolverConfig) -> StepResult:
    """Run one iteration: w, b, z, xi, s, then u and v.

    Each update sees the values already produced in this iteration and the
    previous values of everything else.

    Raises:
        DivergenceError: If any updated variable is non-finite
    """
    previous = state
    f = assemble_f(state.z, state.u, state.s, state.xi, state.v, state.b, h, cache.rho)

    current = replace(previous, w=solve_w(cache, h, f), iter=previous.iter + 1)
    hw = h.matvec(current.w)
    current.b = update_b(current, h, hw)
    current.z = update_z(current, cfg)
    current.xi = update_xi(current, h, cfg, hw)
    current.s = update_s(current, h, hw)

    residual = constraint_residual(current, h, hw)
    current.u, current.v = update_duals(current, h, hw)

    _check_finite(current)
    return StepResult(previous=previous, state=current, f=f, constraint_residual=residual)


def fit(
    ds: Dataset,
    cfg: SolverConfig,
    *,
    callback: Callable[[StepResult], None] | None = None,
    branch: Branch | None = None,
    max_dense_dim: int = 20_000,
    dense_density: float = 0.25,
    jitter_scale: float = 1e-10,
    zero_tolerance: float = 1e-6,
    eval_data: Dataset | None = None,
) -> FitReport:
    """Train a penalized SVM on ds.

    The factorization is built first and timed separately. Iteration stops
    when |obj^(k+1) - obj^(k)| / max(|obj^(k)|, 1e-12) < epsilon or after
    max_iters iterations.

    Args:
        ds: Training data
        cfg: Penalty and ADMM parameters
        callback: Called with every StepResult, in iteration order
        branch: Force the tall or wide factorization (defaults to the shape rule)
        max_dense_dim: Largest factor dimension allowed
        dense_density: Density above which Gram products use dense BLAS
        jitter_scale: Relative diagonal shift for a failed factorization
        zero_tolerance: Sparsity threshold stored on the returned model
        eval_data: Held-out data scored after every iteration into
            TraceRecord.test_accuracy, for accuracy-versus-time curves

    Returns:
        FitReport with the final (w, b) as its model

    Raises:
        FactorizationError: If the w-system cannot be factored
        DivergenceError: If an iterate becomes non-finite
        DimensionMismatchError: If eval_data has more features than ds
    """
    if eval_data is not None and eval_data.n_features > ds.n_features:
        raise DimensionMismatchError(
            f"eval data has {eval_data.n_features} features but the training data has {ds.n_features}"
        )

    started = time.perf_counter()
    h = HOperator(ds)
    cache = build_cache(
        ds,
        cfg.rho1,
        cfg.rho2,
        branch=branch,
        max_dense_dim=max_dense_dim,
        dense_density=dense_density,
        jitter_scale=jitter_scale,
    )
    precompute_seconds = time.perf_counter() - started

    loop_started = time.perf_counter()
    state = initialize(ds.n_samples, ds.n_features, cfg)
    obj = objective(state, cfg)
    trace: list[TraceRecord] = []
    terminated_by = TerminatedBy.MAX_ITERS
    scoring_seconds = 0.0

    while True:
        result = step(state, cache, h, cfg)
        if callback is not None:
            callback(result)
        new_obj = objective(result.state, cfg)
        rel_change = abs(new_obj - obj) / max(abs(obj), OBJECTIVE_FLOOR)
        record = TraceRecord(
            iter=result.state.iter,
            objective=new_obj,
            rel_change=rel_change,
            primal_residual_wz=float(np.linalg.norm(result.state.w - result.state.z)),
            primal_residual_cons=float(np.linalg.norm(result.constraint_residual)),
            state_delta=float(np.linalg.norm(result.state.as_vector() - state.as_vector())),
            wall_time=time.perf_counter() - loop_started - scoring_seconds,
        )
        if eval_data is not None:
            scoring_started = time.perf_counter()
            snapshot = LinearModel(w=result.state.w, b=result.state.b, penalty=cfg.penalty)
            record = replace(record, test_accuracy=snapshot.accuracy(eval_data))
            scoring_seconds += time.perf_counter() - scoring_started
        trace.append(record)
        logger.debug(
            "iter %d obj=%.6g rel=%.3e res_wz=%.3e res_cons=%.3e",
            record.iter,
            record.objective,
            record.rel_change,
            record.primal_residual_wz,
            record.primal_residual_cons,
        )

        state, obj = result.state, new_obj
        if rel_change < cfg.epsilon:
            terminated_by = TerminatedBy.TOLERANCE
            break
        if state.iter >= cfg.max_iters:
            break

    iterate_seconds = time.perf_counter() - loop_started - scoring_seconds
    model = LinearModel(w=state.w.copy(), b=state.b, penalty=cfg.penalty, zero_tolerance=zero_tolerance)
    report = FitReport(
        model=model,
        iterations=state.iter,
        terminated_by=terminated_by,
        precompute_seconds=precompute_seconds,
        iterate_seconds=iterate_seconds,
        trace=tuple(trace),
        final_objective=obj,
        true_objective=true_objective(model, ds, cfg),
        branch=cache.branch,
    )
    logger.info(
        "Fit %s lambda=%.4g finished after %d iterations (%s), obj=%.6g, %.3fs + %.3fs",
        cfg.penalty.kind.value,
        cfg.penalty.lam,
        report.iterations,
        terminated_by.value,
        obj,
        precompute_seconds,
        iterate_seconds,
    )
    return report


def write_trace_csv(report: FitReport, path: Path) -> None:
    """One row per iteration; wall_time_s is the only non-deterministic column."""
    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for record in report.trace:
            writer.writerow(record.as_row())


def write_report_json(report: FitReport, path: Path) -> None:
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
