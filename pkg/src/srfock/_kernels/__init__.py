"""Monte Carlo counting kernels.

Two interchangeable implementations of the same trial loop: a compiled
Cython core and a pure NumPy fallback.  Both consume a counter-based
generator (splitmix-style), so every trial draws its random numbers by
index rather than by sequence position; results are bit-identical across
backends, chunk sizes, and call order.  The active backend is picked at
import time; set ``SRFOCK_KERNEL=python`` or ``SRFOCK_KERNEL=compiled``
to force one.
"""

from __future__ import annotations

import os

import numpy as np

from . import _mc_fallback
from ._mc_fallback import SEED_MASK, derive_stream_seed  # noqa: F401

_forced = os.environ.get("SRFOCK_KERNEL", "").strip().lower()
if _forced not in ("", "python", "compiled"):
    raise ImportError(f"SRFOCK_KERNEL must be 'python' or 'compiled', got {_forced!r}")

_core = None
if _forced != "python":
    try:
        from . import _mc_core as _core
    except ImportError:
        _core = None
if _forced == "compiled" and _core is None:
    raise ImportError("SRFOCK_KERNEL=compiled but no compiled kernel is installed")

BACKEND = "compiled" if _core is not None else "python"


def available_backends() -> tuple[str, ...]:
    """Backends usable in this installation, preferred first."""
    return ("compiled", "python") if _core is not None else ("python",)


def simulate_counts(
    seed: int,
    n_trials: int,
    geom_cdf,
    cum1,
    dark1,
    cum2,
    dark2,
    backend: str | None = None,
    trial_offset: int = 0,
) -> np.ndarray:
    """Run threshold-detection trials and tally click coincidences.

    Parameters
    ----------
    seed : int
        Master seed (used modulo 2**64).
    n_trials : int
        Number of trials to run.
    geom_cdf : array_like
        Cumulative distribution of the photon number; ``geom_cdf[k]`` is
        ``P(n <= k)`` and the last entry must be 1.
    cum1, cum2 : array_like
        Cumulative per-photon click thresholds of each tree, i.e. the
        cumulative sums of ``routing * efficiency`` per leaf.
    dark1, dark2 : array_like
        Per-leaf dark click probabilities.
    backend : str, optional
        ``"compiled"`` or ``"python"``; defaults to the active backend.
    trial_offset : int
        Global index of the first trial; lets a run be split across calls
        without changing any draw.

    Returns
    -------
    numpy.ndarray
        ``counts[i, j]`` trials with ``i`` field-1 and ``j`` field-2 clicks,
        shape ``(len(cum1) + 1, len(cum2) + 1)``, dtype int64.
    """
    name = backend or BACKEND
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _core is None:
        raise ValueError("compiled backend requested but not installed")
    if n_trials < 0:
        raise ValueError(f"n_trials must be non-negative, got {n_trials}")

    geom_cdf = np.ascontiguousarray(geom_cdf, dtype=np.float64)
    cum1 = np.ascontiguousarray(cum1, dtype=np.float64)
    dark1 = np.ascontiguousarray(dark1, dtype=np.float64)
    cum2 = np.ascontiguousarray(cum2, dtype=np.float64)
    dark2 = np.ascontiguousarray(dark2, dtype=np.float64)
    if geom_cdf.size < 1 or abs(geom_cdf[-1] - 1.0) > 0.0:
        raise ValueError("geom_cdf must end exactly at 1.0")
    if cum1.size != dark1.size or cum2.size != dark2.size:
        raise ValueError("cumulative thresholds and dark arrays must align")
    if cum1.size > 63 or cum2.size > 63:
        raise ValueError("at most 63 leaves per tree")

    counts = np.zeros((cum1.size + 1, cum2.size + 1), dtype=np.int64)
    seed = int(seed) & SEED_MASK
    if n_trials == 0:
        return counts
    if name == "compiled":
        _core.simulate_counts(
            seed, n_trials, trial_offset, geom_cdf, cum1, dark1, cum2, dark2, counts
        )
    else:
        _mc_fallback.simulate_counts(
            seed, n_trials, trial_offset, geom_cdf, cum1, dark1, cum2, dark2, counts
        )
    return counts
