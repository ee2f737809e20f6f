"""Pytest configuration and fixtures."""

from pathlib import Path

import numpy as np
import pytest

from src.core import ObservationSeries, StudyDesign


FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    """Directory of the shipped data fixtures."""
    return FIXTURES_DIR


@pytest.fixture
def design():
    """Default study design: 30 days, 6 slots per day, S* = 6, v = 4, R = 10."""
    return StudyDesign()


@pytest.fixture
def small_design():
    """Two-day design with 3 slots per day for hand-checked timelines."""
    return StudyDesign(n_days=2, slots_per_day=3, start_point=2, target_triggers=1, trigger_cap=2)


@pytest.fixture
def full_series():
    """Fully adherent series of 180 Beta(2, 5) draws.

    Returns:
        Callable taking a seed and a subject id.
    """
    def make(seed: int = 0, subject_id: str = "full"):
        rng = np.random.default_rng(seed)
        return ObservationSeries(subject_id, tuple(rng.beta(2.0, 5.0, size=180)))
    return make


@pytest.fixture
def sparse_series():
    """Series with roughly 40% adherence of Beta(3, 3) draws.

    Returns:
        Callable taking a seed and a subject id.
    """
    def make(seed: int = 0, subject_id: str = "sparse"):
        rng = np.random.default_rng(seed)
        draws = rng.beta(3.0, 3.0, size=180)
        present = rng.random(180) < 0.4
        return ObservationSeries(subject_id, tuple(float(x) if p else None for x, p in zip(draws, present)))
    return make
