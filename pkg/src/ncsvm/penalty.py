"""Nonconvex penalties and their scalar proximal operators.

Four sparsity-inducing penalties are supported, each parameterized by a
tuning parameter lambda and a shape parameter theta:

    lsp        lambda * log(1 + |w| / theta)
    scad       lambda|w| / quadratic blend / (theta + 1) lambda^2 / 2   (theta > 2)
    mcp        lambda|w| - w^2 / (2 theta) up to theta*lambda, then theta lambda^2 / 2
    capped_l1  lambda * min(|w|, theta)

The proximal operator solves, per coordinate,

    argmin_z  h(z) = 1/2 (z - psi)^2 + p(z) / rho1

by evaluating h on a finite candidate set that provably contains a global
minimizer (the stationary point of every convex piece of the penalty, clipped
to its region, plus the region endpoints). Candidates are built on |psi| and
the sign of psi is restored afterwards.
"""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class PenaltyKind(StrEnum):
    """Supported penalty families, serialized by their lowercase names."""

    LSP = "lsp"
    SCAD = "scad"
    MCP = "mcp"
    CAPPED_L1 = "capped_l1"


_DEFAULT_THETA = {
    PenaltyKind.SCAD: 3.7,
    PenaltyKind.MCP: 3.0,
    PenaltyKind.LSP: 1.0,
    PenaltyKind.CAPPED_L1: 1.0,
}


def default_theta(kind: PenaltyKind | str) -> float:
    """Conventional theta for a penalty kind.

    SCAD uses 3.7 and MCP uses 3. LSP and capped-l1 have no conventional
    value; 1.0 is used for both.
    """
    return _DEFAULT_THETA[PenaltyKind(kind)]


class PenaltyConfig(BaseModel):
    """Penalty kind with its lambda and theta parameters.

    `lam` is exposed as `lambda` when serialized, matching model files and
    configuration documents.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    kind: PenaltyKind
    lam: float = Field(alias="lambda", gt=0, allow_inf_nan=False)
    theta: float = Field(gt=0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _check_scad_theta(self) -> "PenaltyConfig":
        if self.kind is PenaltyKind.SCAD and self.theta <= 2:
            raise ValueError(f"SCAD requires theta > 2 (got theta={self.theta})")
        return self

    def to_dict(self) -> dict:
        """Serializable form: {"kind", "lambda", "theta"}."""
        return self.model_dump(mode="json", by_alias=True)


@dataclass(frozen=True)
class ProxProblem:
    """Scalar proximal problem argmin_z 1/2 (z - psi)^2 + p(z) / rho1."""

    psi: float
    rho1: float
    penalty: PenaltyConfig

    def __post_init__(self):
        if not (self.rho1 > 0 and np.isfinite(self.rho1)):
            raise ValueError(f"rho1 must be positive and finite, got {self.rho1}")
        if not np.isfinite(self.psi):
            raise ValueError(f"psi must be finite, got {self.psi}")


def penalty_value(cfg: PenaltyConfig, w):
    """Evaluate p_lambda element-wise; returns a float for scalar input."""
    a = np.abs(np.asarray(w, dtype=np.float64))
    lam, theta = cfg.lam, cfg.theta

    match cfg.kind:
        case PenaltyKind.LSP:
            out = lam * np.log1p(a / theta)
        case PenaltyKind.SCAD:
            middle = (-a * a + 2.0 * theta * lam * a - lam * lam) / (2.0 * (theta - 1.0))
            out = np.where(
                a <= lam,
                lam * a,
                np.where(a <= theta * lam, middle, (theta + 1.0) * lam * lam / 2.0),
            )
        case PenaltyKind.MCP:
            out = np.where(a <= theta * lam, lam * a - a * a / (2.0 * theta), theta * lam * lam / 2.0)
        case PenaltyKind.CAPPED_L1:
            out = lam * np.minimum(a, theta)

    return float(out) if out.ndim == 0 else out


def penalty_total(cfg: PenaltyConfig, z) -> float:
    """P(z) = sum_j p_lambda(z_j)."""
    return float(np.sum(penalty_value(cfg, np.asarray(z, dtype=np.float64))))


def prox_objective(p: ProxProblem, z):
    """h(z) = 1/2 (z - psi)^2 + p_lambda(z) / rho1, element-wise in z."""
    z = np.asarray(z, dtype=np.float64)
    value = 0.5 * (z - p.psi) ** 2 + penalty_value(p.penalty, z) / p.rho1
    return float(value) if np.ndim(value) == 0 else value


def _candidates(a: np.ndarray, rho: float, cfg: PenaltyConfig) -> np.ndarray:
    """Candidate minimizers on the nonnegative half-line for targets a = |psi|.

    Returns an array of shape (m, len(a)).
    """
    lam, theta = cfg.lam, cfg.theta
    zeros = np.zeros_like(a)

    match cfg.kind:
        case PenaltyKind.LSP:
            # roots of rho z^2 + rho (theta - a) z + lambda - rho a theta = 0
            disc = rho * rho * (a - theta) ** 2 - 4.0 * rho * (lam - rho * a * theta)
            real = disc > 0
            root = np.sqrt(np.where(real, disc, 0.0))
            upper = np.where(real, np.maximum((rho * (a - theta) + root) / (2.0 * rho), 0.0), 0.0)
            lower = np.where(real, np.maximum((rho * (a - theta) - root) / (2.0 * rho), 0.0), 0.0)
            return np.stack([zeros, upper, lower])

        case PenaltyKind.SCAD:
            x1 = np.minimum(lam, np.maximum(0.0, a - lam / rho))
            curvature = rho * (theta - 1.0) - 1.0
            if curvature > 0:
                x2 = np.clip((rho * a * (theta - 1.0) - theta * lam) / curvature, lam, theta * lam)
            else:
                # concave middle piece: its minimum sits on a region endpoint
                x2 = np.full_like(a, lam)
            x3 = np.maximum(theta * lam, a)
            return np.stack([x1, x2, np.full_like(a, lam), np.full_like(a, theta * lam), x3])

        case PenaltyKind.MCP:
            curvature = rho * theta - 1.0
            if curvature > 0:
                inner = np.clip((rho * a - lam) * theta / curvature, 0.0, theta * lam)
            else:
                inner = zeros
            outer = np.maximum(theta * lam, a)
            return np.stack([zeros, inner, np.full_like(a, theta * lam), outer])

        case PenaltyKind.CAPPED_L1:
            x1 = np.maximum(theta, a)
            x2 = np.minimum(theta, np.maximum(0.0, a - lam / rho))
            return np.stack([x1, x2])

    raise ValueError(f"unsupported penalty kind {cfg.kind!r}")


def _prox_abs(a: np.ndarray, rho: float, cfg: PenaltyConfig) -> np.ndarray:
    candidates = _candidates(a, rho, cfg)
    h = 0.5 * (candidates - a) ** 2 + penalty_value(cfg, candidates) / rho
    # ties go to the smallest |z|
    tied = h <= h.min(axis=0)
    return np.where(tied, candidates, np.inf).min(axis=0)


def prox_vector(z_target, rho1: float, cfg: PenaltyConfig) -> np.ndarray:
    """Element-wise proximal operator with psi_i = z_target_i and modulus rho1."""
    if not (rho1 > 0 and np.isfinite(rho1)):
        raise ValueError(f"rho1 must be positive and finite, got {rho1}")
    psi = np.asarray(z_target, dtype=np.float64)
    return np.sign(psi) * _prox_abs(np.abs(psi), rho1, cfg)


def prox(p: ProxProblem) -> float:
    """Global minimizer of h for a single scalar problem."""
    return float(prox_vector(np.array([p.psi]), p.rho1, p.penalty)[0])


def oracle_halfwidth(p: ProxProblem, anchor: float = 0.0) -> float:
    """Search half-width large enough to contain every minimizer of h."""
    return abs(p.psi) + abs(anchor) + p.penalty.lam / p.rho1 + p.penalty.theta * max(
        1.0, p.penalty.lam
    ) + 1.0


def prox_oracle(
    p: ProxProblem,
    halfwidth: float | None = None,
    grid_points: int = 100_001,
    *,
    beta: float = 0.0,
    anchor: float = 0.0,
) -> float:
    """Brute-force minimizer of h by grid search, for validating prox.

    Searches a uniform grid on [-halfwidth, halfwidth], then narrows twice to
    a grid spanning two coarse steps on either side of the best point. With
    the default 100001 points the final resolution is far below 1e-7.

    With beta > 0 the objective gains (beta / (2 rho1)) (z - anchor)^2, the
    scalar form of the proximal z-update.
    """
    if halfwidth is None:
        halfwidth = oracle_halfwidth(p, anchor)

    def objective(z: np.ndarray) -> np.ndarray:
        value = prox_objective(p, z)
        if beta:
            value = value + beta / (2.0 * p.rho1) * (z - anchor) ** 2
        return value

    grid = np.linspace(-halfwidth, halfwidth, grid_points)
    best = grid[np.argmin(objective(grid))]
    step = grid[1] - grid[0]
    for _ in range(2):
        grid = np.linspace(best - 2.0 * step, best + 2.0 * step, grid_points)
        best = grid[np.argmin(objective(grid))]
        step = grid[1] - grid[0]
    return float(best)
