"""Small shared helpers: integer logs, caps, worker count."""
from __future__ import annotations

import os
from fractions import Fraction


class CapExceeded(ValueError):
    """A requested computation exceeds its configured exhaustive-size cap."""


class RetryBudgetExceeded(RuntimeError):
    """A retry-until-certified loop ran out of attempts."""


def ceil_log2(x: int) -> int:
    """Smallest k with 2**k >= x, for integer x >= 1."""
    if x < 1:
        raise ValueError(f"ceil_log2 needs x >= 1, got {x}")
    return (x - 1).bit_length()


def ceil_log2_fraction(f: Fraction) -> int:
    """Smallest k with 2**k >= f, for a rational f >= 1.

    Exact: 2**k is an integer, so 2**k >= p/q iff 2**k >= ceil(p/q).
    """
    if f < 1:
        raise ValueError(f"ceil_log2_fraction needs f >= 1, got {f}")
    return ceil_log2(-(-f.numerator // f.denominator))


def worker_count() -> int:
    """Worker cap for parallel loops; EQCOMM_THREADS overrides cpu count."""
    env = os.environ.get("EQCOMM_THREADS", "")
    if env.strip():
        value = int(env)
        if value < 1:
            raise ValueError("EQCOMM_THREADS must be a positive integer")
        return value
    return os.cpu_count() or 1
