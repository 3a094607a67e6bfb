"""LIBSVM dataset loading, stratified splitting and summary statistics."""

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class LibSVMFormatError(ValueError):
    """Raised when LIBSVM text cannot be parsed into a dataset."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SplitError(ValueError):
    """Raised when a stratified split cannot be satisfied."""

    pass


@dataclass(frozen=True)
class Dataset:
    """Feature matrix X (CSR, n x d) with labels in {-1, +1}.

    Attributes:
        features: Sparse feature matrix, one sample per row
        labels: Float array of length n with entries -1.0 or +1.0

    The arrays are made read-only on construction so a Dataset can be
    shared between fits running in different threads.
    """

    features: sp.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        features = sp.csr_matrix(self.features, dtype=np.float64, copy=True)
        features.sort_indices()
        labels = np.asarray(self.labels, dtype=np.float64).copy()

        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError(
                f"labels length {labels.shape[0]} does not match {features.shape[0]} rows"
            )
        if not np.all(np.abs(labels) == 1.0):
            raise ValueError("labels must be exactly -1 or +1")

        for array in (features.data, features.indices, features.indptr, labels):
            array.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> dict[int, int]:
        """Number of samples per label, keyed by -1 and +1."""
        return {
            -1: int(np.count_nonzero(self.labels < 0)),
            1: int(np.count_nonzero(self.labels > 0)),
        }

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Dataset restricted to the given row indices (order preserved)."""
        return Dataset(features=self.features[rows], labels=self.labels[rows])


@dataclass(frozen=True)
class SplitSpec:
    """Stratified train/test split parameters.

    Attributes:
        test_fraction: Share of each class assigned to the test set, in (0, 1)
        seed: Seed for the per-class permutation
    """

    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


def _strip_comment(line: str) -> str:
    hash_pos = line.find("#")
    if hash_pos >= 0:
        line = line[:hash_pos]
    return line.strip()


def _read_rows(
    lines: str | Iterable[str],
) -> tuple[list[float] | None, list[int], list[int], list[float], int]:
    """Tokenize LIBSVM lines into CSR components.

    Returns:
        (raw labels or None, indptr, 0-based indices, values, max 1-based index seen)
    """
    raw_labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_index = 0
    labeled: bool | None = None

    if isinstance(lines, str):
        lines = lines.splitlines()

    for line_number, line in enumerate(lines, start=1):
        text = _strip_comment(line)
        if not text:
            continue
        tokens = text.split()

        has_label = ":" not in tokens[0]
        if labeled is None:
            labeled = has_label
        elif labeled != has_label:
            raise LibSVMFormatError("mixes labeled and unlabeled lines", line_number)

        if has_label:
            try:
                raw_labels.append(float(tokens[0]))
            except ValueError:
                raise LibSVMFormatError(f"invalid label {tokens[0]!r}", line_number)
            tokens = tokens[1:]

        previous = 0
        for token in tokens:
            index_text, sep, value_text = token.partition(":")
            if not sep:
                raise LibSVMFormatError(f"expected idx:val, got {token!r}", line_number)
            try:
                index = int(index_text)
                value = float(value_text)
            except ValueError:
                raise LibSVMFormatError(f"malformed feature {token!r}", line_number)
            if index < 1:
                raise LibSVMFormatError(f"feature index {index} is below 1", line_number)
            if index <= previous:
                raise LibSVMFormatError(
                    f"feature indices must be strictly increasing ({previous} then {index})",
                    line_number,
                )
            previous = index
            indices.append(index - 1)
            values.append(value)

        max_index = max(max_index, previous)
        indptr.append(len(indices))

    return (raw_labels if labeled else None), indptr, indices, values, max_index


def _map_labels(raw: np.ndarray, require_both_classes: bool) -> np.ndarray:
    """Map raw labels onto {-1, +1}.

    Labels already in {-1, +1} are kept. Otherwise the smaller of two distinct
    values becomes -1 and the larger +1.
    """
    distinct = np.unique(raw)
    if distinct.size > 2:
        raise LibSVMFormatError(
            f"expected a binary problem, found {distinct.size} distinct labels: "
            f"{distinct[:5].tolist()}"
        )
    if np.all(np.isin(distinct, (-1.0, 1.0))):
        mapped = raw.copy()
    elif distinct.size == 2:
        mapped = np.where(raw == distinct[0], -1.0, 1.0)
    else:
        raise LibSVMFormatError(
            f"cannot map the single label value {distinct[0]!r} onto -1/+1"
        )

    if require_both_classes and np.unique(mapped).size < 2:
        raise LibSVMFormatError("dataset must contain both a -1 and a +1 sample")
    return mapped


def _build_matrix(
    indptr: list[int], indices: list[int], values: list[float], max_index: int, n_features: int | None
) -> sp.csr_matrix:
    if n_features is None:
        n_features = max_index
    elif max_index > n_features:
        raise LibSVMFormatError(
            f"feature index {max_index} exceeds the requested column count {n_features}"
        )
    return sp.csr_matrix(
        (
            np.asarray(values, dtype=np.float64),
            np.asarray(indices, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(indptr) - 1, n_features),
    )


def parse_libsvm(
    text_stream: str | TextIO | Iterable[str],
    n_features: int | None = None,
    require_both_classes: bool = True,
) -> Dataset:
    """Parse LIBSVM text (`label idx:val ...`) into a Dataset.

    Args:
        text_stream: Text stream or iterable of lines
        n_features: Column count override so train and test share a dimension
        require_both_classes: Reject data that contains a single class

    Returns:
        Dataset with 0-based column indices and labels in {-1, +1}

    Raises:
        LibSVMFormatError: On malformed lines, bad indices or unmappable labels
    """
    raw_labels, indptr, indices, values, max_index = _read_rows(text_stream)
    if raw_labels is None:
        if len(indptr) == 1:
            raise LibSVMFormatError("no samples found")
        raise LibSVMFormatError("labels are required but the data is unlabeled")

    labels = _map_labels(np.asarray(raw_labels, dtype=np.float64), require_both_classes)
    features = _build_matrix(indptr, indices, values, max_index, n_features)
    dataset = Dataset(features=features, labels=labels)
    logger.info(
        "Parsed %d samples x %d features (%d stored values), class counts %s",
        dataset.n_samples,
        dataset.n_features,
        features.nnz,
        dataset.class_counts(),
    )
    return dataset


def parse_libsvm_features(
    text_stream: str | TextIO | Iterable[str], n_features: int | None = None
) -> tuple[sp.csr_matrix, np.ndarray | None]:
    """Parse LIBSVM text that may lack labels.

    Returns:
        (feature matrix, labels mapped to {-1, +1} or None when unlabeled)
    """
    raw_labels, indptr, indices, values, max_index = _read_rows(text_stream)
    features = _build_matrix(indptr, indices, values, max_index, n_features)
    if raw_labels is None:
        return features, None
    return features, _map_labels(np.asarray(raw_labels, dtype=np.float64), False)


def load_libsvm(path: Path | str, n_features: int | None = None) -> Dataset:
    """Read a LIBSVM file from disk (UTF-8, LF or CRLF line endings)."""
    with open(path, encoding="utf-8") as stream:
        return parse_libsvm(stream, n_features=n_features)


def dump_libsvm(ds: Dataset, stream: TextIO) -> None:
    """Write a Dataset as LIBSVM text with 1-based indices and +1/-1 labels."""
    X = ds.features
    for row in range(ds.n_samples):
        start, end = X.indptr[row], X.indptr[row + 1]
        label = "+1" if ds.labels[row] > 0 else "-1"
        pairs = " ".join(
            f"{col + 1}:{float(val)!r}" for col, val in zip(X.indices[start:end], X.data[start:end])
        )
        stream.write(f"{label} {pairs}\n" if pairs else f"{label}\n")


def stratified_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic per-class train/test split.

    Each class contributes floor(test_fraction * count + 0.5) samples to the
    test set, chosen by a permutation drawn from a generator seeded with
    spec.seed. Both partitions keep the original row order.

    Returns:
        (train, test)

    Raises:
        SplitError: If a class would contribute no test sample or keep no
            training sample
    """
    rng = np.random.default_rng(spec.seed)
    test_rows: list[np.ndarray] = []

    for label in (-1.0, 1.0):
        members = np.flatnonzero(ds.labels == label)
        n_test = math.floor(spec.test_fraction * members.size + 0.5)
        if n_test < 1:
            raise SplitError(
                f"class {int(label):+d} has {members.size} samples; test_fraction "
                f"{spec.test_fraction} selects none of them"
            )
        if n_test >= members.size:
            raise SplitError(
                f"class {int(label):+d} has {members.size} samples; test_fraction "
                f"{spec.test_fraction} leaves none of them for training"
            )
        test_rows.append(rng.permutation(members)[:n_test])

    test_mask = np.zeros(ds.n_samples, dtype=bool)
    test_mask[np.concatenate(test_rows)] = True
    train = ds.subset(np.flatnonzero(~test_mask))
    test = ds.subset(np.flatnonzero(test_mask))
    logger.info("Stratified split: %d train / %d test", train.n_samples, test.n_samples)
    return train, test


def sparsity(ds: Dataset) -> float:
    """Percentage of nonzero entries in X (explicit stored zeros excluded)."""
    cells = ds.n_samples * ds.n_features
    if cells == 0:
        return 0.0
    return 100.0 * ds.features.count_nonzero() / cells
