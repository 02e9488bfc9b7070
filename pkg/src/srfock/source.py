"""Number statistics of a two-mode pair source with geometric (thermal)
excitation-number distribution and perfect pair correlation.

A single write/read cycle of the source stores ``n`` collective excitations
with probability ``(1 - p) * p**n`` and retrieves exactly ``n`` photons, so
both output modes carry the same photon number.  Heralding ``i`` detector
clicks on the first mode with a non-number-resolving detector chain reweights
the number distribution of the second mode; the reweighted distribution stays
geometric above the herald count, which is what makes these states useful as
approximate one- and two-photon Fock sources at small ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CutoffError",
    "PairSource",
    "ConditionalState",
    "number_probability",
    "mean_photon_number",
    "default_cutoff",
    "conditional_state",
]


class CutoffError(ValueError):
    """A photon-number truncation leaves more tail probability than allowed."""


@dataclass(frozen=True)
class PairSource:
    """Two-mode pair source with geometric number statistics.

    Parameters
    ----------
    p : float
        Single-trial excitation probability, ``0 <= p < 1``.  The photon
        number in each mode is ``n`` with probability ``(1 - p) * p**n``.
    """

    p: float

    def __post_init__(self):
        if not (isinstance(self.p, (int, float)) and math.isfinite(self.p)):
            raise ValueError(f"excitation probability must be finite, got {self.p!r}")
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"excitation probability must be in [0, 1), got {self.p}")


def number_probability(source: PairSource, n: int) -> float:
    """Probability that a trial produces exactly ``n`` pairs.

    Parameters
    ----------
    source : PairSource
    n : int
        Photon number, ``n >= 0``.

    Returns
    -------
    float
        ``(1 - p) * p**n``.
    """
    if n < 0:
        raise ValueError(f"photon number must be non-negative, got {n}")
    return (1.0 - source.p) * source.p**n


def mean_photon_number(source: PairSource) -> float:
    """Mean photon number per mode, ``p / (1 - p)``."""
    return source.p / (1.0 - source.p)


def default_cutoff(source: PairSource, tail_tol: float = 1e-12) -> int:
    """Smallest ``n_max`` whose truncation tail is below ``tail_tol``.

    The discarded tail mass of the geometric distribution truncated at
    ``n_max`` is ``p**(n_max + 1) / (1 - p)`` (the survival function); this
    returns the smallest ``n_max`` making that smaller than ``tail_tol``.

    Parameters
    ----------
    source : PairSource
    tail_tol : float
        Maximum allowed tail probability mass, default ``1e-12``.

    Returns
    -------
    int
    """
    if not 0.0 < tail_tol < 1.0:
        raise ValueError(f"tail tolerance must be in (0, 1), got {tail_tol}")
    p = source.p
    if p == 0.0:
        return 0
    # p**(n+1) < tol*(1-p)  =>  n+1 > log(tol*(1-p)) / log(p)
    n = max(0, math.ceil(math.log(tail_tol * (1.0 - p)) / math.log(p)) - 1)
    # guard against rounding at the boundary
    while p ** (n + 1) >= tail_tol * (1.0 - p):
        n += 1
    while n > 0 and p**n < tail_tol * (1.0 - p):
        n -= 1
    return n


@dataclass(frozen=True, eq=False)
class ConditionalState:
    """Photon-number distribution of the second mode given a herald.

    ``weights[k]`` is the probability of ``n = herald_count + k`` photons,
    normalized over the truncated support ``herald_count .. n_max``.

    Attributes
    ----------
    herald_count : int
        Number of clicks that heralded the state (1 or 2).
    weights : numpy.ndarray
        Normalized weights over ``n = herald_count, ..., n_max``.
    """

    herald_count: int
    weights: np.ndarray = field(repr=False)

    @property
    def n_values(self) -> np.ndarray:
        """Photon numbers carried by ``weights``."""
        return self.herald_count + np.arange(self.weights.size)

    def mean(self) -> float:
        """Mean photon number of the conditional state."""
        return float(np.dot(self.n_values, self.weights))


def conditional_state(
    source: PairSource,
    heralds: int,
    n_max: int | None = None,
    tail_tol: float = 1e-12,
) -> ConditionalState:
    """Conditional number distribution after ``heralds`` detector clicks.

    With a geometric source and a click detector that cannot resolve photon
    number, observing ``i`` clicks restricts the photon number to ``n >= i``
    and the conditional weights stay proportional to ``p**(n - i)``.  (Leaf
    routing and efficiency rescale every weight by the same click probability
    only in the small-``p`` limit; this function implements that limit, which
    is the standard approximation for heralded Fock-state preparation.)

    Parameters
    ----------
    source : PairSource
    heralds : int
        Herald click count, 1 or 2.
    n_max : int, optional
        Truncation photon number.  Defaults to the automatic cutoff for
        ``tail_tol``.
    tail_tol : float
        Maximum allowed truncated tail mass, default ``1e-12``.

    Returns
    -------
    ConditionalState

    Raises
    ------
    CutoffError
        If an explicit ``n_max`` leaves more tail mass than ``tail_tol``.
    """
    if heralds not in (1, 2):
        raise ValueError(f"herald count must be 1 or 2, got {heralds}")
    p = source.p
    if n_max is None:
        n_max = max(heralds, heralds + default_cutoff(source, tail_tol))
    if n_max < heralds:
        raise ValueError(f"n_max={n_max} is below the herald count {heralds}")
    # tail of the *conditional* distribution: sum_{n > n_max} p**(n-i) * (1-p)
    tail = p ** (n_max - heralds + 1)
    if tail >= tail_tol:
        raise CutoffError(
            f"truncation at n_max={n_max} leaves tail mass {tail:.3e} "
            f">= {tail_tol:.3e}; raise n_max or loosen tail_tol"
        )
    k = n_max - heralds + 1
    raw = np.ones(k)
    if k > 1:
        raw[1:] = p
        raw = np.cumprod(raw)
    weights = raw / raw.sum()
    return ConditionalState(herald_count=heralds, weights=weights)
