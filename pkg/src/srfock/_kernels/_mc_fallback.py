"""Pure NumPy Monte Carlo counting kernel.

This module is the reference definition of the trial loop; the compiled
kernel in ``_mc_core.pyx`` must match it draw for draw.  The random layout
is counter-based: trial ``t`` owns the stream seed

    s_t = mix64(seed + (t + 1) * GAMMA)

and draw index ``d`` within the trial is

    u(t, d) = (mix64(s_t + (d + 1) * GAMMA) >> 11) * 2**-53.

Draw indices are fixed by position, never by how many draws ran before:
index 0 is the photon number, photon ``k`` uses indices ``2k + 1`` (field 1)
and ``2k + 2`` (field 2), and dark clicks for field-1 leaf ``l`` / field-2
leaf ``l`` sit at ``2 * n_cap + 1 + l`` and ``2 * n_cap + 1 + L1 + l``
where ``n_cap = len(geom_cdf)``.  Sampling is threshold-based against
precomputed cumulative tables (``searchsorted`` side='right' semantics), so
no transcendental functions enter and both backends round identically.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GAMMA = np.uint64(GAMMA)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_U53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64_int(z: int) -> int:
    """Scalar splitmix-style finalizer on Python integers (mod 2**64)."""
    z &= SEED_MASK
    z ^= z >> 30
    z = (z * _MIX1) & SEED_MASK
    z ^= z >> 27
    z = (z * _MIX2) & SEED_MASK
    z ^= z >> 31
    return z


def derive_stream_seed(master_seed: int, index: int) -> int:
    """Decorrelated child seed for stream ``index`` of a master seed.

    Used to give every sweep point its own seed; the same construction
    seeds the per-trial streams inside the kernel.
    """
    if index < 0:
        raise ValueError(f"stream index must be non-negative, got {index}")
    return mix64_int((master_seed + (index + 1) * GAMMA) & SEED_MASK)


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _U_MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _U_MIX2
    return z ^ (z >> np.uint64(31))


def _u01(x: np.ndarray) -> np.ndarray:
    return (x >> np.uint64(11)) * _U53


def simulate_counts(
    seed: int,
    n_trials: int,
    trial_offset: int,
    geom_cdf: np.ndarray,
    cum1: np.ndarray,
    dark1: np.ndarray,
    cum2: np.ndarray,
    dark2: np.ndarray,
    counts: np.ndarray,
    batch_size: int | None = None,
) -> None:
    """Accumulate coincidence counts into ``counts`` (in place).

    See the package-level ``simulate_counts`` for the argument contract.
    ``batch_size`` only controls memory use; results are independent of it.
    """
    n_cap = geom_cdf.size
    L1, L2 = cum1.size, cum2.size
    any_d1 = bool(np.any(dark1 > 0.0))
    any_d2 = bool(np.any(dark2 > 0.0))
    if batch_size is None:
        batch_size = max(256, min(1 << 16, (1 << 22) // max(1, n_cap)))
    dark_base = 2 * n_cap + 1  # draw index of the first field-1 dark draw

    flat = np.zeros((L1 + 1) * (L2 + 1), dtype=np.int64)
    with np.errstate(over="ignore"):
        useed = np.uint64(seed & SEED_MASK)
        start = 0
        while start < n_trials:
            m = min(batch_size, n_trials - start)
            t = np.arange(trial_offset + start, trial_offset + start + m, dtype=np.uint64)
            s = _mix(useed + (t + np.uint64(1)) * _U_GAMMA)

            u = _u01(_mix(s + _U_GAMMA))
            n = np.searchsorted(geom_cdf, u, side="right")

            clicked1 = np.zeros((m, L1), dtype=bool)
            clicked2 = np.zeros((m, L2), dtype=bool)
            kmax = int(n.max()) if m else 0
            if kmax > 0:
                k = np.arange(kmax)
                active = k[None, :] < n[:, None]
                for cum, clicked, first_index in ((cum1, clicked1, 1), (cum2, clicked2, 2)):
                    mult = np.uint64(first_index + 1) + np.uint64(2) * k.astype(np.uint64)
                    uu = _u01(_mix(s[:, None] + mult[None, :] * _U_GAMMA))
                    leaf = np.searchsorted(cum, uu.ravel(), side="right").reshape(uu.shape)
                    for l in range(cum.size):
                        clicked[:, l] |= ((leaf == l) & active).any(axis=1)
            if any_d1:
                mult = np.uint64(dark_base + 1) + np.arange(L1, dtype=np.uint64)
                uu = _u01(_mix(s[:, None] + mult[None, :] * _U_GAMMA))
                clicked1 |= uu < dark1[None, :]
            if any_d2:
                mult = np.uint64(dark_base + 1 + L1) + np.arange(L2, dtype=np.uint64)
                uu = _u01(_mix(s[:, None] + mult[None, :] * _U_GAMMA))
                clicked2 |= uu < dark2[None, :]

            i = clicked1.sum(axis=1)
            j = clicked2.sum(axis=1)
            flat += np.bincount(
                i * (L2 + 1) + j, minlength=(L1 + 1) * (L2 + 1)
            ).astype(np.int64)
            start += m
    counts += flat.reshape(L1 + 1, L2 + 1)
