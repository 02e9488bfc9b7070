"""Exact click statistics of photon-number states on multiplexed detector
trees, and exact herald/coincidence tables for the geometric pair source.

A detector tree routes each incoming photon to one of ``L`` leaves (a fiber
beam splitter for the heralding mode, a time-multiplexed chain for the
analyzed mode); each leaf is a threshold detector with some efficiency and
dark-click probability.  Photons are routed independently, so for a Fock
state of ``n`` photons the probability that a given photon fires leaf ``l``
is ``q_l = routing_l * efficiency_l``.  The number of *distinct* leaves that
click is the observable.

The exact distribution over click patterns follows by inclusion-exclusion
over leaf subsets, then an independent dark-click OR layer per leaf.  A
brute-force enumeration over per-photon outcomes is kept alongside as a
reference implementation for validation.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .source import CutoffError, PairSource, default_cutoff, number_probability

__all__ = [
    "MAX_EXACT_PHOTONS",
    "DetectorModel",
    "DetectionTree",
    "ClickDistribution",
    "CoincidenceTable",
    "click_distribution",
    "enumerate_click_distribution",
    "coincidence_table_exact",
    "poisson_reference_table",
]

# Exact mode enumerates leaf subsets per photon number; keep the photon
# number bounded so tables stay cheap and cancellation stays harmless.
MAX_EXACT_PHOTONS = 20

_MAX_LEAVES = 16


@dataclass(frozen=True)
class DetectorModel:
    """Threshold (non-number-resolving) detector leaf.

    Attributes
    ----------
    efficiency : float
        Probability that a photon reaching this leaf produces a click.
    dark_prob : float
        Probability of a spurious click per trial, independent of light.
    """

    efficiency: float
    dark_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if not 0.0 <= self.dark_prob < 1.0:
            raise ValueError(f"dark_prob must be in [0, 1), got {self.dark_prob}")


@dataclass(frozen=True)
class DetectionTree:
    """Passive splitting tree terminated by threshold detectors.

    Attributes
    ----------
    leaves : tuple of DetectorModel
        One detector per output port.
    routing : tuple of float
        Probability that a photon entering the tree reaches each leaf.
        Entries are non-negative and sum to at most 1; any deficit is loss
        before the detectors.
    """

    leaves: tuple[DetectorModel, ...]
    routing: tuple[float, ...]

    def __post_init__(self):
        if len(self.leaves) == 0:
            raise ValueError("a detection tree needs at least one leaf")
        if len(self.leaves) > _MAX_LEAVES:
            raise ValueError(f"at most {_MAX_LEAVES} leaves supported")
        if len(self.routing) != len(self.leaves):
            raise ValueError(
                f"routing has {len(self.routing)} entries for {len(self.leaves)} leaves"
            )
        for r in self.routing:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"routing probabilities must be in [0, 1], got {r}")
        if sum(self.routing) > 1.0 + 1e-12:
            raise ValueError(f"routing probabilities sum to {sum(self.routing)} > 1")

    @classmethod
    def balanced(
        cls,
        n_leaves: int,
        efficiency: float,
        dark_prob: float = 0.0,
        throughput: float = 1.0,
    ) -> "DetectionTree":
        """Tree splitting uniformly over ``n_leaves`` identical detectors.

        ``throughput`` is an overall pre-tree transmission; a two-leaf tree
        models a 50/50 fiber splitter, a four-leaf tree a time-multiplexed
        detection chain with four bins.
        """
        if n_leaves < 1:
            raise ValueError(f"n_leaves must be positive, got {n_leaves}")
        if not 0.0 <= throughput <= 1.0:
            raise ValueError(f"throughput must be in [0, 1], got {throughput}")
        det = DetectorModel(efficiency=efficiency, dark_prob=dark_prob)
        return cls(
            leaves=(det,) * n_leaves,
            routing=(throughput / n_leaves,) * n_leaves,
        )

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def click_probs(self) -> np.ndarray:
        """Per-photon probability of firing each leaf, ``routing * efficiency``."""
        return np.array(
            [r * leaf.efficiency for r, leaf in zip(self.routing, self.leaves)]
        )

    @property
    def dark_probs(self) -> np.ndarray:
        return np.array([leaf.dark_prob for leaf in self.leaves])


@dataclass(frozen=True, eq=False)
class ClickDistribution:
    """Distribution of the number of distinct clicking leaves.

    ``probabilities[k]`` is the probability of exactly ``k`` clicks,
    ``k = 0 .. n_leaves``.
    """

    probabilities: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probabilities must be a 1-d array")
        if np.any(p < -1e-12):
            raise ValueError("negative click probability")
        if not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
            raise ValueError(f"click probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probabilities", p)

    @property
    def n_leaves(self) -> int:
        return self.probabilities.size - 1

    def p_click(self, k: int) -> float:
        """Probability of exactly ``k`` distinct clicks."""
        return float(self.probabilities[k])


def _subset_sums(values: np.ndarray) -> np.ndarray:
    """``out[mask] = sum of values[l] over bits l set in mask``."""
    L = values.size
    out = np.zeros(1 << L)
    for mask in range(1, 1 << L):
        low = (mask & -mask).bit_length() - 1
        out[mask] = out[mask & (mask - 1)] + values[low]
    return out


def _exact_pattern_probs(n_photons: int, tree: DetectionTree) -> np.ndarray:
    """Probability of each exact click pattern (bitmask over leaves).

    Inclusion-exclusion: with ``q_l`` the per-photon click probability of
    leaf ``l`` and ``q_0`` the per-photon no-click probability,
    ``P(pattern = S) = sum_{T subset S} (-1)^{|S|-|T|} (q(T) + q_0)**n``.
    Dark clicks are applied afterwards as an independent OR per leaf.
    """
    q = tree.click_probs
    L = q.size
    q_none = max(0.0, 1.0 - float(q.sum()))
    sums = _subset_sums(q)
    f = (sums + q_none) ** n_photons
    # Moebius transform over subsets turns "all photons land inside T"
    # into "clicked set is exactly S".
    for b in range(L):
        bit = 1 << b
        for mask in range(1 << L):
            if mask & bit:
                f[mask] -= f[mask ^ bit]
    np.clip(f, 0.0, None, out=f)

    dark = tree.dark_probs
    for b in range(L):
        d = float(dark[b])
        if d == 0.0:
            continue
        bit = 1 << b
        for mask in range(1 << L):
            if not mask & bit:
                a = f[mask]
                f[mask] = a * (1.0 - d)
                f[mask | bit] += a * d
    return f


def _bincount_patterns(pattern_probs: np.ndarray, n_leaves: int) -> np.ndarray:
    out = np.zeros(n_leaves + 1)
    for mask, prob in enumerate(pattern_probs):
        out[int(mask).bit_count()] += prob
    return out


def click_distribution(n_photons: int, tree: DetectionTree) -> ClickDistribution:
    """Exact distribution of distinct clicking leaves for an ``n``-photon state.

    Parameters
    ----------
    n_photons : int
        Photon number, ``0 <= n_photons <= MAX_EXACT_PHOTONS``.
    tree : DetectionTree

    Returns
    -------
    ClickDistribution

    Raises
    ------
    ValueError
        If the photon number is negative or above ``MAX_EXACT_PHOTONS``.
    """
    if n_photons < 0:
        raise ValueError(f"photon number must be non-negative, got {n_photons}")
    if n_photons > MAX_EXACT_PHOTONS:
        raise ValueError(
            f"exact click statistics limited to {MAX_EXACT_PHOTONS} photons, "
            f"got {n_photons}"
        )
    probs = _bincount_patterns(_exact_pattern_probs(n_photons, tree), tree.n_leaves)
    return ClickDistribution(probabilities=probs)


def enumerate_click_distribution(n_photons: int, tree: DetectionTree) -> ClickDistribution:
    """Brute-force reference for :func:`click_distribution`.

    Enumerates every per-photon outcome (detected at leaf ``l`` or lost) and
    every dark-click pattern.  Exponential in the photon number; kept for
    validating the inclusion-exclusion path on small inputs.
    """
    L = tree.n_leaves
    if n_photons < 0:
        raise ValueError(f"photon number must be non-negative, got {n_photons}")
    if (L + 1) ** n_photons * (1 << L) > 5_000_000:
        raise ValueError("enumeration too large; use click_distribution")
    q = tree.click_probs
    outcome_probs = np.append(q, 1.0 - q.sum())  # leaf 0..L-1, then "lost"
    dark = tree.dark_probs
    out = np.zeros(L + 1)
    for photon_fates in itertools.product(range(L + 1), repeat=n_photons):
        p_light = 1.0
        lit = 0
        for fate in photon_fates:
            p_light *= outcome_probs[fate]
            if fate < L:
                lit |= 1 << fate
        for dark_mask in range(1 << L):
            p_dark = 1.0
            for l in range(L):
                if dark_mask & (1 << l):
                    p_dark *= dark[l]
                else:
                    p_dark *= 1.0 - dark[l]
            out[int(lit | dark_mask).bit_count()] += p_light * p_dark
    return ClickDistribution(probabilities=out)


def _fmt(x: float) -> str:
    """Shortest representation that round-trips the float exactly."""
    return repr(float(x))


@dataclass(frozen=True, eq=False)
class CoincidenceTable:
    """Conditional click statistics ``P(j | i)`` between the two fields.

    ``probs[i, j]`` is the probability of ``j`` clicks on the analyzed field
    given ``i`` clicks on the heralding field; rows with no heralds are NaN
    and flagged in ``notes``.  ``sigma`` carries per-entry statistical
    uncertainties (zero for exact tables).

    Attributes
    ----------
    p : float
        Source excitation probability.
    p1 : float
        Probability that a trial produces exactly one heralding click.
    probs, sigma : numpy.ndarray
        Shape ``(n_field1_leaves + 1, n_field2_leaves + 1)``.
    herald_probs : numpy.ndarray
        Unconditional probability (or observed fraction) of each herald
        count ``i``.
    engine : str
        ``"exact"``, ``"mc-compiled"``, ``"mc-python"`` or ``"baseline"``.
    seed, n_trials : int or None
        Monte Carlo provenance; None for exact tables.
    counts : numpy.ndarray or None
        Raw trial counts per ``(i, j)``; Monte Carlo tables only.
    notes : tuple of str
        Human-readable caveats, e.g. herald counts that never occurred.
    """

    p: float
    p1: float
    probs: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    herald_probs: np.ndarray = field(repr=False)
    engine: str = "exact"
    seed: int | None = None
    n_trials: int | None = None
    counts: np.ndarray | None = field(default=None, repr=False)
    notes: tuple[str, ...] = ()
    version: str = __version__

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if probs.shape != sigma.shape or probs.ndim != 2:
            raise ValueError("probs and sigma must be 2-d arrays of equal shape")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(
            self, "herald_probs", np.asarray(self.herald_probs, dtype=float)
        )

    @property
    def n_herald_bins(self) -> int:
        return self.probs.shape[0]

    @property
    def n_click_bins(self) -> int:
        return self.probs.shape[1]

    def entry(self, i: int, j: int) -> tuple[float, float]:
        """``(P(j | i), sigma)`` for one table cell."""
        return float(self.probs[i, j]), float(self.sigma[i, j])

    def row_available(self, i: int) -> bool:
        """Whether herald count ``i`` occurred (row is meaningful)."""
        return bool(np.isfinite(self.probs[i]).all())

    # -- serialization ----------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        """Write the table as CSV with a run-metadata header.

        Columns are ``p, p1, i, j, P_ij, sigma``; metadata lines start with
        ``#``.  All floats use their shortest exact representation, so the
        file round-trips bit-exactly through :meth:`from_csv`.
        """
        lines = [
            "# srfock coincidence table v1",
            f"# version={self.version}",
            f"# engine={self.engine}",
            f"# seed={'' if self.seed is None else self.seed}",
            f"# trials={'' if self.n_trials is None else self.n_trials}",
            f"# herald_probs={','.join(_fmt(w) for w in self.herald_probs)}",
        ]
        for note in self.notes:
            lines.append(f"# note={note}")
        lines.append("p,p1,i,j,P_ij,sigma")
        for i in range(self.n_herald_bins):
            for j in range(self.n_click_bins):
                lines.append(
                    f"{_fmt(self.p)},{_fmt(self.p1)},{i},{j},"
                    f"{_fmt(self.probs[i, j])},{_fmt(self.sigma[i, j])}"
                )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "CoincidenceTable":
        """Parse a table written by :meth:`to_csv`.

        Raw Monte Carlo counts are not part of the CSV schema; the parsed
        table carries ``counts=None``.
        """
        meta: dict[str, str] = {}
        notes: list[str] = []
        rows: list[tuple[float, float, int, int, float, float]] = []
        header_seen = False
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    if key == "note":
                        notes.append(value)
                    else:
                        meta[key] = value
                continue
            if line.startswith("p,"):
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ValueError(f"malformed table row: {line!r}")
            rows.append(
                (
                    float(parts[0]),
                    float(parts[1]),
                    int(parts[2]),
                    int(parts[3]),
                    float(parts[4]),
                    float(parts[5]),
                )
            )
        if not header_seen or not rows:
            raise ValueError(f"{path}: not a coincidence table CSV")
        n_i = max(r[2] for r in rows) + 1
        n_j = max(r[3] for r in rows) + 1
        probs = np.full((n_i, n_j), np.nan)
        sigma = np.full((n_i, n_j), np.nan)
        for p, p1, i, j, pij, sig in rows:
            probs[i, j] = pij
            sigma[i, j] = sig
        herald = meta.get("herald_probs", "")
        herald_probs = (
            np.array([float(tok) for tok in herald.split(",")])
            if herald
            else np.full(n_i, np.nan)
        )
        return cls(
            p=rows[0][0],
            p1=rows[0][1],
            probs=probs,
            sigma=sigma,
            herald_probs=herald_probs,
            engine=meta.get("engine", "unknown"),
            seed=int(meta["seed"]) if meta.get("seed") else None,
            n_trials=int(meta["trials"]) if meta.get("trials") else None,
            counts=None,
            notes=tuple(notes),
            version=meta.get("version", "unknown"),
        )

    def to_json_dict(self) -> dict:
        return {
            "schema": "srfock-coincidence-table",
            "schema_version": 1,
            "version": self.version,
            "engine": self.engine,
            "seed": self.seed,
            "n_trials": self.n_trials,
            "p": self.p,
            "p1": self.p1,
            "herald_probs": [float(w) for w in self.herald_probs],
            "probs": [[float(x) for x in row] for row in self.probs],
            "sigma": [[float(x) for x in row] for row in self.sigma],
            "counts": None
            if self.counts is None
            else [[int(c) for c in row] for row in self.counts],
            "notes": list(self.notes),
        }

    def to_json(self, path: str | Path) -> None:
        """Write the full table (including raw counts) as JSON.

        Keys are sorted and floats keep their exact shortest representation,
        so the output is deterministic and round-trips bit-exactly.
        """
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def from_json_dict(cls, data: dict) -> "CoincidenceTable":
        if data.get("schema") != "srfock-coincidence-table":
            raise ValueError("not a coincidence table JSON document")
        counts = data.get("counts")
        return cls(
            p=data["p"],
            p1=data["p1"],
            probs=np.array(data["probs"], dtype=float),
            sigma=np.array(data["sigma"], dtype=float),
            herald_probs=np.array(data["herald_probs"], dtype=float),
            engine=data["engine"],
            seed=data["seed"],
            n_trials=data["n_trials"],
            counts=None if counts is None else np.array(counts, dtype=np.int64),
            notes=tuple(data.get("notes", ())),
            version=data.get("version", "unknown"),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "CoincidenceTable":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def equals(self, other: "CoincidenceTable", include_counts: bool = True) -> bool:
        """Bitwise equality of all numeric fields (NaN-aware)."""

        def same(a, b):
            return np.array_equal(np.asarray(a, float), np.asarray(b, float), equal_nan=True)

        if not (
            same([self.p, self.p1], [other.p, other.p1])
            and same(self.probs, other.probs)
            and same(self.sigma, other.sigma)
            and same(self.herald_probs, other.herald_probs)
            and self.engine == other.engine
            and self.seed == other.seed
            and self.n_trials == other.n_trials
            and self.notes == other.notes
        ):
            return False
        if include_counts:
            if (self.counts is None) != (other.counts is None):
                return False
            if self.counts is not None and not np.array_equal(self.counts, other.counts):
                return False
        return True


def coincidence_table_exact(
    source: PairSource,
    field1_tree: DetectionTree,
    field2_tree: DetectionTree,
    n_max: int | None = None,
    tail_tol: float = 1e-12,
) -> CoincidenceTable:
    """Exact coincidence table by summing click statistics over photon number.

    The joint click distribution is ``sum_n P(n) C1(i | n) C2(j | n)`` with
    the same ``n`` entering both trees (perfect pair correlation); rows are
    then normalized by the herald probability.

    Parameters
    ----------
    source : PairSource
    field1_tree, field2_tree : DetectionTree
        Heralding and analyzed detector trees.
    n_max : int, optional
        Photon-number truncation; defaults to the automatic cutoff leaving
        less than ``tail_tol`` tail mass.
    tail_tol : float
        Maximum tail mass allowed at the truncation.

    Returns
    -------
    CoincidenceTable
        With ``sigma`` identically zero and ``engine="exact"``.

    Raises
    ------
    CutoffError
        If the required truncation exceeds ``MAX_EXACT_PHOTONS`` (source too
        bright for exact mode) or an explicit ``n_max`` leaves too much tail.
    """
    needed = default_cutoff(source, tail_tol)
    if n_max is None:
        n_max = needed
    else:
        tail = source.p ** (n_max + 1) / (1.0 - source.p)
        if tail >= tail_tol:
            raise CutoffError(
                f"truncation at n_max={n_max} leaves tail mass {tail:.3e} "
                f">= {tail_tol:.3e}"
            )
    if n_max > MAX_EXACT_PHOTONS:
        raise CutoffError(
            f"exact mode needs photon numbers up to {n_max} for p={source.p}, "
            f"beyond the supported {MAX_EXACT_PHOTONS}; use the Monte Carlo engine"
        )
    L1, L2 = field1_tree.n_leaves, field2_tree.n_leaves
    joint = np.zeros((L1 + 1, L2 + 1))
    for n in range(n_max + 1):
        pn = number_probability(source, n)
        c1 = click_distribution(n, field1_tree).probabilities
        c2 = click_distribution(n, field2_tree).probabilities
        joint += pn * np.outer(c1, c2)
    herald_probs = joint.sum(axis=1)
    probs = np.full_like(joint, np.nan)
    notes = []
    for i in range(L1 + 1):
        if herald_probs[i] > 0.0:
            probs[i] = joint[i] / herald_probs[i]
        else:
            notes.append(f"herald count i={i} has zero probability; row unavailable")
    return CoincidenceTable(
        p=source.p,
        p1=float(herald_probs[1]) if L1 >= 1 else 0.0,
        probs=probs,
        sigma=np.zeros_like(joint),
        herald_probs=herald_probs,
        engine="exact",
        notes=tuple(notes),
    )


def poisson_reference_table(plateau: float, n_click_bins: int = 5) -> CoincidenceTable:
    """Uncorrelated (Poissonian) single-herald reference table.

    Row ``i=1`` carries ``P(1, j) = plateau**j``: each extra analyzed-field
    click costs one constant factor, the behavior of accidental coincidences
    from independent events.  Normalized pair correlations computed from this
    table equal 1 by construction, which is the self-check it exists for.

    Parameters
    ----------
    plateau : float
        Per-click accidental probability, ``0 < plateau < 0.5``.
    n_click_bins : int
        Number of ``j`` columns including ``j=0``.
    """
    if not 0.0 < plateau < 0.5:
        raise ValueError(f"plateau must be in (0, 0.5), got {plateau}")
    probs = np.full((2, n_click_bins), np.nan)
    row = plateau ** np.arange(n_click_bins, dtype=float)
    row[0] = 1.0 - row[1:].sum()
    probs[1] = row
    return CoincidenceTable(
        p=math.nan,
        p1=math.nan,
        probs=probs,
        sigma=np.zeros_like(probs),
        herald_probs=np.array([math.nan, math.nan]),
        engine="baseline",
        notes=("herald count i=0 not modeled by the baseline",),
    )
