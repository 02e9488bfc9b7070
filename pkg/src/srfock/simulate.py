"""Monte Carlo trial simulation of heralded coincidence experiments.

Each trial samples a photon number from the pair source, routes every photon
through both detector trees, applies dark clicks, and tallies the pair of
distinct-click counts.  The heavy loop runs in a compiled kernel when
available (see ``srfock._kernels``); results are bit-identical between the
compiled and pure NumPy backends and reproducible from the seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .detection import CoincidenceTable, DetectionTree
from .source import PairSource, default_cutoff

__all__ = ["TrialConfig", "SweepSpec", "run_trials", "sweep"]

# The geometric sampler uses a finite CDF table; cap its length so a p very
# close to 1 fails loudly instead of truncating visibly.
_MAX_GEOM_TABLE = 4096
_GEOM_TAIL_TOL = 1e-15


@dataclass(frozen=True)
class TrialConfig:
    """One Monte Carlo run: source, both trees, trial count, seed."""

    source: PairSource
    field1_tree: DetectionTree
    field2_tree: DetectionTree
    n_trials: int
    seed: int

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError(f"n_trials must be positive, got {self.n_trials}")
        if not isinstance(self.seed, int):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")


@dataclass(frozen=True)
class SweepSpec:
    """A sweep over excitation probabilities at fixed detection setup.

    Every point gets its own decorrelated seed derived from ``seed``, so
    adding or removing points does not change the others.
    """

    p_values: tuple[float, ...]
    field1_tree: DetectionTree
    field2_tree: DetectionTree
    trials_per_point: int
    seed: int

    def __post_init__(self):
        if len(self.p_values) == 0:
            raise ValueError("sweep needs at least one excitation probability")
        if self.trials_per_point < 1:
            raise ValueError(
                f"trials_per_point must be positive, got {self.trials_per_point}"
            )


def _geometric_cdf_table(source: PairSource) -> np.ndarray:
    """CDF table for the photon-number sampler, last entry exactly 1.

    The table truncates the geometric tail below ``_GEOM_TAIL_TOL``; the
    clamp is invisible at any realistic trial count.
    """
    n_cap = default_cutoff(source, _GEOM_TAIL_TOL) + 1
    if n_cap > _MAX_GEOM_TABLE:
        raise ValueError(
            f"p={source.p} too close to 1 for the Monte Carlo sampler "
            f"(needs a {n_cap}-entry table, cap {_MAX_GEOM_TABLE})"
        )
    k = np.arange(1, n_cap + 1, dtype=float)
    cdf = 1.0 - source.p**k
    cdf[-1] = 1.0
    return cdf


def run_trials(config: TrialConfig, backend: str | None = None) -> CoincidenceTable:
    """Simulate trials and return the observed coincidence table.

    Parameters
    ----------
    config : TrialConfig
    backend : str, optional
        Kernel backend override (``"compiled"`` or ``"python"``).

    Returns
    -------
    CoincidenceTable
        ``probs[i, j]`` is the observed fraction of ``j``-click outcomes
        among trials with ``i`` heralds, ``sigma`` the Poisson estimate
        ``sqrt(N_ij) / N_i``, ``counts`` the raw tallies.  Herald counts
        that never occurred give NaN rows flagged in ``notes``.
    """
    tree1, tree2 = config.field1_tree, config.field2_tree
    counts = _kernels.simulate_counts(
        config.seed,
        config.n_trials,
        _geometric_cdf_table(config.source),
        np.cumsum(tree1.click_probs),
        tree1.dark_probs,
        np.cumsum(tree2.click_probs),
        tree2.dark_probs,
        backend=backend,
    )
    n_heralds = counts.sum(axis=1)
    probs = np.full(counts.shape, np.nan)
    sigma = np.full(counts.shape, np.nan)
    notes = []
    for i, n_i in enumerate(n_heralds):
        if n_i > 0:
            probs[i] = counts[i] / n_i
            sigma[i] = np.sqrt(counts[i]) / n_i
        else:
            notes.append(f"no trial produced i={i} heralds; row unavailable")
    return CoincidenceTable(
        p=config.source.p,
        p1=float(n_heralds[1]) / config.n_trials,
        probs=probs,
        sigma=sigma,
        herald_probs=n_heralds / config.n_trials,
        engine=f"mc-{backend or _kernels.BACKEND}",
        seed=config.seed,
        n_trials=config.n_trials,
        counts=counts,
        notes=tuple(notes),
    )


def sweep(spec: SweepSpec, backend: str | None = None) -> list[CoincidenceTable]:
    """Run one Monte Carlo point per excitation probability.

    Point ``k`` uses the derived seed ``derive_stream_seed(spec.seed, k)``,
    recorded in the returned table so any point can be reproduced alone.
    """
    tables = []
    for k, p in enumerate(spec.p_values):
        config = TrialConfig(
            source=PairSource(p),
            field1_tree=spec.field1_tree,
            field2_tree=spec.field2_tree,
            n_trials=spec.trials_per_point,
            seed=_kernels.derive_stream_seed(spec.seed, k),
        )
        tables.append(run_trials(config, backend=backend))
    return tables
