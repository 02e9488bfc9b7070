# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Monte Carlo counting kernel.

Draw-for-draw identical to ``_mc_fallback``: same counter-based generator,
same draw-index layout, same threshold comparisons.  The generator constants
below must stay in lockstep with the fallback; the cross-backend equality
test enforces that.
"""

from libc.stdint cimport int64_t, uint64_t

cdef uint64_t GAMMA = <uint64_t>0x9E3779B97F4A7C15
cdef uint64_t MIX1 = <uint64_t>0xBF58476D1CE4E5B9
cdef uint64_t MIX2 = <uint64_t>0x94D049BB133111EB
cdef double U53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z ^= z >> 30
    z = z * MIX1
    z ^= z >> 27
    z = z * MIX2
    z ^= z >> 31
    return z


cdef inline double u01(uint64_t x) noexcept nogil:
    return <double>(x >> 11) * U53


def simulate_counts(uint64_t seed,
                    int64_t n_trials,
                    int64_t trial_offset,
                    const double[::1] geom_cdf,
                    const double[::1] cum1,
                    const double[::1] dark1,
                    const double[::1] cum2,
                    const double[::1] dark2,
                    int64_t[:, ::1] counts):
    """Accumulate coincidence counts for trials
    ``[trial_offset, trial_offset + n_trials)`` into ``counts`` (in place)."""
    cdef Py_ssize_t n_cap = geom_cdf.shape[0]
    cdef Py_ssize_t L1 = cum1.shape[0]
    cdef Py_ssize_t L2 = cum2.shape[0]
    cdef bint any_d1 = False
    cdef bint any_d2 = False
    cdef Py_ssize_t l
    for l in range(L1):
        if dark1[l] > 0.0:
            any_d1 = True
    for l in range(L2):
        if dark2[l] > 0.0:
            any_d2 = True

    cdef uint64_t dark_mult0 = <uint64_t>(2 * n_cap + 2)
    cdef uint64_t s, m1, m2
    cdef double u
    cdef int64_t t
    cdef Py_ssize_t n, k, i, j
    with nogil:
        for t in range(n_trials):
            s = mix64(seed + (<uint64_t>(trial_offset + t) + 1) * GAMMA)

            u = u01(mix64(s + GAMMA))
            n = 0
            while n < n_cap and u >= geom_cdf[n]:
                n += 1

            m1 = 0
            m2 = 0
            for k in range(n):
                u = u01(mix64(s + <uint64_t>(2 * k + 2) * GAMMA))
                l = 0
                while l < L1 and u >= cum1[l]:
                    l += 1
                if l < L1:
                    m1 |= (<uint64_t>1) << l
                u = u01(mix64(s + <uint64_t>(2 * k + 3) * GAMMA))
                l = 0
                while l < L2 and u >= cum2[l]:
                    l += 1
                if l < L2:
                    m2 |= (<uint64_t>1) << l

            if any_d1:
                for l in range(L1):
                    u = u01(mix64(s + (dark_mult0 + <uint64_t>l) * GAMMA))
                    if u < dark1[l]:
                        m1 |= (<uint64_t>1) << l
            if any_d2:
                for l in range(L2):
                    u = u01(mix64(s + (dark_mult0 + <uint64_t>(L1 + l)) * GAMMA))
                    if u < dark2[l]:
                        m2 |= (<uint64_t>1) << l

            i = 0
            for l in range(L1):
                i += <Py_ssize_t>((m1 >> l) & 1)
            j = 0
            for l in range(L2):
                j += <Py_ssize_t>((m2 >> l) & 1)
            counts[i, j] += 1
