"""Trained linear classifiers: prediction, accuracy, sparsity and model files."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ncsvm.data import Dataset
from ncsvm.penalty import PenaltyConfig
from ncsvm.wsolve import DimensionMismatchError


@dataclass(frozen=True)
class SparsityReport:
    """Coefficient sparsity of a model.

    Attributes:
        zero_count: Number of coefficients with |w_j| < zero_tolerance
        total: Number of coefficients
        fraction: zero_count / total
    """

    zero_count: int
    total: int
    fraction: float


@dataclass(frozen=True)
class LinearModel:
    """Linear decision rule sign(w^T x + b); a zero margin predicts +1.

    Attributes:
        w: Coefficient vector of length d
        b: Intercept
        penalty: Penalty the model was trained with
        zero_tolerance: Magnitude below which a coefficient counts as zero
    """

    w: np.ndarray
    b: float
    penalty: PenaltyConfig
    zero_tolerance: float = 1e-6

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("w must be a vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ValueError("model coefficients must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def _align(self, X: sp.spmatrix) -> sp.csr_matrix:
        """Pad X with empty columns up to the model dimension."""
        X = sp.csr_matrix(X)
        if X.shape[1] > self.dim:
            raise DimensionMismatchError(
                f"data has {X.shape[1]} features but the model was trained on {self.dim}"
            )
        if X.shape[1] < self.dim:
            X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], self.dim))
        return X

    def decision_function(self, X: sp.spmatrix) -> np.ndarray:
        """Margins w^T x_i + b for every row of X."""
        return self._align(X) @ self.w + self.b

    def predict(self, X: sp.spmatrix) -> np.ndarray:
        """Labels in {-1, +1} for every row of X (a single row gives a length-1 array)."""
        return np.where(self.decision_function(X) >= 0.0, 1.0, -1.0)

    def accuracy(self, ds: Dataset) -> float:
        """Fraction of samples whose predicted label equals the true label."""
        if ds.n_samples == 0:
            return 0.0
        return float(np.mean(self.predict(ds.features) == ds.labels))

    def coefficient_sparsity(self) -> SparsityReport:
        zeros = int(np.count_nonzero(np.abs(self.w) < self.zero_tolerance))
        total = self.dim
        return SparsityReport(zero_count=zeros, total=total, fraction=zeros / total if total else 0.0)

    def to_dict(self) -> dict:
        """Model file content: dim, bias, nonzero [index, value] pairs, penalty."""
        nonzero = np.flatnonzero(self.w)
        return {
            "dim": self.dim,
            "bias": self.b,
            "weights": [[int(j), float(self.w[j])] for j in nonzero],
            "penalty": self.penalty.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict, zero_tolerance: float = 1e-6) -> "LinearModel":
        """Rebuild a model from its file content.

        Raises:
            ValueError: If keys are missing or weight indices fall outside dim
        """
        try:
            dim = int(data["dim"])
            w = np.zeros(dim)
            for index, value in data["weights"]:
                if not 0 <= int(index) < dim:
                    raise ValueError(f"weight index {index} outside [0, {dim})")
                w[int(index)] = float(value)
            penalty = PenaltyConfig.model_validate(data["penalty"])
            bias = float(data["bias"])
        except KeyError as e:
            raise ValueError(f"model file is missing key {e}")
        return cls(w=w, b=bias, penalty=penalty, zero_tolerance=zero_tolerance)

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path, zero_tolerance: float = 1e-6) -> "LinearModel":
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), zero_tolerance)


def predict(m: LinearModel, x: sp.spmatrix) -> np.ndarray:
    """Predicted labels for the rows of x."""
    return m.predict(x)


def accuracy(m: LinearModel, ds: Dataset) -> float:
    return m.accuracy(ds)


def coefficient_sparsity(m: LinearModel) -> SparsityReport:
    return m.coefficient_sparsity()
