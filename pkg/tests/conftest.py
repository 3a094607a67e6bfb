"""Pytest configuration and shared fixtures for ncsvm tests."""

import os
from pathlib import Path

import pytest

from ncsvm.admm import SolverConfig
from ncsvm.config import NCSVMConfig
from ncsvm.data import Dataset, parse_libsvm
from ncsvm.penalty import PenaltyConfig, PenaltyKind
from tests.fixtures.synthetic import SMALL_LIBSVM, linear_dataset, random_dataset


@pytest.fixture
def small_libsvm_file(tmp_path: Path) -> Path:
    """Write a four-sample LIBSVM file.

    Args:
        tmp_path: Pytest temporary directory fixture

    Returns:
        Path to the file
    """
    path = tmp_path / "small.libsvm"
    path.write_text(SMALL_LIBSVM, encoding="utf-8")
    return path


@pytest.fixture
def small_dataset() -> Dataset:
    return parse_libsvm(SMALL_LIBSVM)


@pytest.fixture
def tall_dataset() -> Dataset:
    """More samples than features (n=40, d=6)."""
    return random_dataset(40, 6, seed=1)


@pytest.fixture
def wide_dataset() -> Dataset:
    """More features than samples (n=12, d=30)."""
    return random_dataset(12, 30, seed=2)


@pytest.fixture
def separable_dataset() -> Dataset:
    return linear_dataset(n=80, informative=4, seed=3)


@pytest.fixture
def scad_config() -> SolverConfig:
    """SCAD with lambda = 2^-6 and theta = 3.7, rho1 = rho2 = 1."""
    return SolverConfig(penalty=PenaltyConfig(kind=PenaltyKind.SCAD, lam=2.0**-6, theta=3.7))


@pytest.fixture
def ncsvm_config(tmp_path: Path, monkeypatch) -> NCSVMConfig:
    """Settings isolated from the caller's environment and .env file.

    Args:
        tmp_path: Pytest temporary directory fixture
        monkeypatch: Pytest monkeypatch fixture

    Returns:
        Settings with out_dir inside tmp_path
    """
    for key in list(os.environ):
        if key.startswith("NCSVM_") and key != "NCSVM_DATA_DIR":
            monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)
    return NCSVMConfig(out_dir=tmp_path / "runs")


@pytest.fixture
def data_dir() -> Path:
    """Directory holding real LIBSVM datasets; skips when NCSVM_DATA_DIR is unset."""
    value = os.environ.get("NCSVM_DATA_DIR")
    if not value:
        pytest.skip("NCSVM_DATA_DIR not set")
    return Path(value)
