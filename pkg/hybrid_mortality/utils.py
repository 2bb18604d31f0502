"""
Utility functions shared across the forecasting pipeline.

This module provides seed derivation, clamping and a thin wrapper over
joblib for running independent jobs.
"""

from __future__ import annotations

import zlib
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from joblib import Parallel, delayed

T = TypeVar('T')
R = TypeVar('R')

SEED_MODULUS = 2 ** 31 - 1


def clamp(value: float, min_val: float, max_val: float) -> float:
    """
    Clamp a value to a range.

    Args:
        value: Value to clamp
        min_val: Minimum allowed value
        max_val: Maximum allowed value

    Returns:
        Value clamped to [min_val, max_val]

    Example:
        >>> clamp(101, 2, 100)
        100
    """
    return max(min_val, min(value, max_val))


def derive_seed(master_seed: int, *labels: object) -> int:
    """
    Derive a reproducible sub-seed from a master seed and a list of labels.

    The labels are hashed with CRC32 (stable across interpreter runs,
    unlike ``hash``) and used as the spawn key of a SeedSequence whose
    entropy is the master seed.

    Args:
        master_seed: Run-level seed
        *labels: Anything with a stable ``str`` (dataset name, model, age...)

    Returns:
        Integer seed in [0, 2**31 - 1)

    Example:
        >>> a = derive_seed(7, "Australia/female", "ARIMA-LSTM-recursive", 40)
        >>> a == derive_seed(7, "Australia/female", "ARIMA-LSTM-recursive", 40)
        True
    """
    key = tuple(zlib.crc32(str(label).encode('utf-8')) for label in labels)
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return int(sequence.generate_state(1, dtype=np.uint32)[0] % SEED_MODULUS)


def run_parallel(
    func: Callable[[T], R],
    items: Iterable[T],
    n_jobs: int = 1
) -> list[R]:
    """
    Apply a function to independent items, optionally in worker processes.

    Results come back in submission order, so the output never depends
    on scheduling.

    Args:
        func: Picklable callable applied to each item
        items: Work items
        n_jobs: Worker count; 1 runs inline, -1 uses every core

    Returns:
        List of results aligned with ``items``
    """
    work: Sequence[T] = list(items)
    if n_jobs == 1 or len(work) <= 1:
        return [func(item) for item in work]
    return list(Parallel(n_jobs=n_jobs)(delayed(func)(item) for item in work))
