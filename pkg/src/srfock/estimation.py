"""Parameter recovery from emission-time histograms and coincidence tables.

Three damped-oscillation models cover the measurable wavepacket histograms:

* ``"single"``: ``s * exp(-g t / 2) * sin(om t / 2)**2`` for the
  single-excitation emission time,
* ``"first"``: the first-arrival marginal of the two-excitation state,
  same oscillation under an envelope decaying at ``g`` (twice the rate),
* ``"delay"``: the arrival-delay marginal, envelope rate ``g / 2`` with
  the oscillation starting at a maximum.

In every model ``g`` is the collective decay rate ``chi * Gamma`` and
``om`` the damping-shifted oscillation frequency; the bracket coefficients
of ``"first"`` and ``"delay"`` are fixed functions of ``(om, g)``, so each
fit has three free parameters (scale, frequency, rate).  Fitting is
weighted Gauss-Newton with Levenberg damping and analytic Jacobians;
weights are Poisson (``1 / max(count, 1)``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .detection import CoincidenceTable

__all__ = [
    "InsufficientDataError",
    "Histogram",
    "FitResult",
    "SlopeFit",
    "PairCorrelation",
    "fit_emission_histogram",
    "loglog_slope",
    "g2_from_table",
    "MODELS",
]


class InsufficientDataError(ValueError):
    """Histogram or point set too small for the requested estimate."""


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True, eq=False)
class Histogram:
    """Binned arrival times.

    Attributes
    ----------
    edges : numpy.ndarray
        Bin edges in seconds, strictly increasing, length ``B + 1``.
    counts : numpy.ndarray
        Event counts per bin, length ``B``.
    total_events : int
        Number of conditioning events behind the histogram (defaults to the
        sum of counts; larger when some events fell outside the bins).
    """

    edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    total_events: int | None = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("edges must be a 1-d array of at least two entries")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if counts.shape != (edges.size - 1,):
            raise ValueError(
                f"counts length {counts.shape} does not match {edges.size - 1} bins"
            )
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts = counts.astype(np.int64)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)
        if self.total_events is None:
            object.__setattr__(self, "total_events", int(counts.sum()))
        elif self.total_events < counts.sum():
            raise ValueError("total_events cannot be below the sum of counts")

    @property
    def centers(self) -> np.ndarray:
        return (self.edges[:-1] + self.edges[1:]) / 2.0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @classmethod
    def from_samples(
        cls,
        samples,
        bin_width: float = 0.5e-9,
        t_max: float | None = None,
        total_events: int | None = None,
    ) -> "Histogram":
        """Bin samples on a uniform grid starting at zero.

        ``t_max`` defaults to just past the largest sample; samples beyond
        an explicit ``t_max`` are dropped but still counted in
        ``total_events``.
        """
        samples = np.asarray(samples, dtype=float)
        if bin_width <= 0:
            raise ValueError(f"bin_width must be positive, got {bin_width}")
        if t_max is None:
            top = float(samples.max()) if samples.size else bin_width
            t_max = bin_width * math.ceil(top / bin_width + 1e-9)
        n_bins = max(1, int(round(t_max / bin_width)))
        edges = np.arange(n_bins + 1) * bin_width
        counts, _ = np.histogram(samples, bins=edges)
        return cls(
            edges=edges,
            counts=counts,
            total_events=samples.size if total_events is None else total_events,
        )

    def to_csv(self, path: str | Path) -> None:
        """Write ``bin_start_s,count`` rows with a metadata header.

        Floats use their shortest exact representation; the file
        round-trips bit-exactly through :meth:`from_csv` for uniform bins.
        """
        lines = [
            "# srfock histogram v1",
            f"# version={__version__}",
            f"# total_events={self.total_events}",
            f"# bin_width={_fmt(self.edges[1] - self.edges[0])}",
            "bin_start_s,count",
        ]
        for start, count in zip(self.edges[:-1], self.counts):
            lines.append(f"{_fmt(start)},{int(count)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "Histogram":
        meta: dict[str, str] = {}
        starts: list[float] = []
        counts: list[int] = []
        header_seen = False
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
                continue
            if line.startswith("bin_start_s"):
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"malformed histogram row: {line!r}")
            starts.append(float(parts[0]))
            counts.append(int(parts[1]))
        if not header_seen or not starts:
            raise ValueError(f"{path}: not a histogram CSV")
        width = float(meta.get("bin_width", "nan"))
        if not math.isfinite(width):
            if len(starts) < 2:
                raise ValueError(f"{path}: bin width missing")
            width = starts[1] - starts[0]
        edges = np.append(np.asarray(starts), starts[-1] + width)
        total = meta.get("total_events")
        return cls(
            edges=edges,
            counts=np.asarray(counts),
            total_events=int(total) if total else None,
        )

    def to_json_dict(self) -> dict:
        return {
            "schema": "srfock-histogram",
            "schema_version": 1,
            "version": __version__,
            "total_events": int(self.total_events),
            "edges": [float(e) for e in self.edges],
            "counts": [int(c) for c in self.counts],
        }


# -- models ----------------------------------------------------------------


def _model_single(t, s, om, g):
    """Damped oscillation of a single emission; returns value and partials."""
    half = om * t / 2.0
    env = np.exp(-g * t / 2.0)
    sin2 = np.sin(half) ** 2
    m = s * env * sin2
    dm_ds = env * sin2
    dm_dom = s * env * np.sin(om * t) * t / 2.0
    dm_dg = -t / 2.0 * m
    return m, dm_ds, dm_dom, dm_dg


def _model_first(t, s, om, g):
    """First-arrival marginal: same oscillation, envelope rate g."""
    W = om**2 + g**2 / 4.0
    b = g * om / (2.0 * W)
    c = g**2 / (4.0 * W)
    db_dom = g * (W - 2.0 * om**2) / (2.0 * W**2)
    dc_dom = -(g**2) * om / (2.0 * W**2)
    db_dg = om * (om**2 - g**2 / 4.0) / (2.0 * W**2)
    dc_dg = g * om**2 / (2.0 * W**2)

    sin_om = np.sin(om * t)
    cos_om = np.cos(om * t)
    sin2 = np.sin(om * t / 2.0) ** 2
    env = np.exp(-g * t)
    bracket = 1.0 + b * sin_om - c * cos_om

    m = s * env * sin2 * bracket
    dm_ds = env * sin2 * bracket
    dm_dom = s * env * (
        (t / 2.0) * sin_om * bracket
        + sin2 * (db_dom * sin_om + b * t * cos_om - dc_dom * cos_om + c * t * sin_om)
    )
    dm_dg = -t * m + s * env * sin2 * (db_dg * sin_om - dc_dg * cos_om)
    return m, dm_ds, dm_dom, dm_dg


def _model_delay(t, s, om, g):
    """Arrival-delay marginal: envelope rate g/2, oscillation starts high."""
    W = om**2 + g**2 / 4.0
    b = (2.0 * om**2 - g**2) / (4.0 * W)
    c = 3.0 * om * g / (4.0 * W)
    db_dom = 3.0 * om * g**2 / (4.0 * W**2)
    dc_dom = 3.0 * g * (g**2 - 4.0 * om**2) / (16.0 * W**2)
    db_dg = -3.0 * g * om**2 / (4.0 * W**2)
    dc_dg = 3.0 * om * (4.0 * om**2 - g**2) / (16.0 * W**2)

    sin_om = np.sin(om * t)
    cos_om = np.cos(om * t)
    env = np.exp(-g * t / 2.0)
    bracket = 1.0 + b * cos_om + c * sin_om

    m = s * env * bracket
    dm_ds = env * bracket
    dm_dom = s * env * (
        db_dom * cos_om - b * t * sin_om + dc_dom * sin_om + c * t * cos_om
    )
    dm_dg = -t / 2.0 * m + s * env * (db_dg * cos_om + dc_dg * sin_om)
    return m, dm_ds, dm_dom, dm_dg


MODELS = {"single": _model_single, "first": _model_first, "delay": _model_delay}

# Envelope rate of each model in units of the fitted g = chi*Gamma.
_ENVELOPE_FACTOR = {"single": 0.5, "first": 1.0, "delay": 0.5}


@dataclass(frozen=True)
class FitResult:
    """Damped-oscillation fit of an emission-time histogram.

    ``chi_gamma`` is the fitted collective decay rate (the model parameter
    ``g``), ``omega`` the oscillation frequency, ``scale`` the amplitude.
    ``stderr`` maps each parameter name to its one-sigma uncertainty from
    the weighted normal equations (Poisson weights).
    """

    model: str
    scale: float
    omega: float
    chi_gamma: float
    stderr: dict[str, float]
    rss: float
    n_points: int
    iterations: int
    converged: bool

    @property
    def envelope_rate(self) -> float:
        """Decay rate of this model's envelope, in rad/s."""
        return _ENVELOPE_FACTOR[self.model] * self.chi_gamma

    @property
    def envelope_rate_err(self) -> float:
        return _ENVELOPE_FACTOR[self.model] * self.stderr["chi_gamma"]

    def to_json_dict(self) -> dict:
        return {
            "schema": "srfock-fit-result",
            "schema_version": 1,
            "version": __version__,
            "model": self.model,
            "scale": self.scale,
            "omega": self.omega,
            "chi_gamma": self.chi_gamma,
            "stderr": {k: float(v) for k, v in self.stderr.items()},
            "envelope_rate": self.envelope_rate,
            "rss": self.rss,
            "n_points": self.n_points,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def _initial_guess(t: np.ndarray, y: np.ndarray, model: str) -> tuple[float, float, float]:
    """Starting point from the count spectrum and the decay of its maxima."""
    dt = t[1] - t[0]
    n = t.size

    # Envelope rate first, from the log-slope of the reversed cumulative
    # counts: the cumulative sum smooths the per-bin Poisson noise and
    # averages the oscillation out, leaving the exponential tail.  Local
    # maxima of the raw counts are far too noise-prone here.
    tail_counts = np.cumsum(y[::-1])[::-1]
    total = tail_counts[0]
    sel = np.flatnonzero(
        (tail_counts <= 0.6 * total) & (tail_counts >= max(3.0, 1e-4 * total))
    )
    if sel.size >= 5:
        rho = -np.polyfit(t[sel], np.log(tail_counts[sel]), 1)[0]
    else:
        # crude fallback: compare the first and last thirds
        third = max(1, n // 3)
        lead = y[:third].mean() + 1e-9
        tail = y[-third:].mean() + 1e-9
        rho = math.log(lead / tail) / (t[-third:].mean() - t[:third].mean())
    rho = abs(rho) if rho != 0 else math.pi / (n * dt)

    # Oscillation frequency from the strongest non-DC Fourier component of
    # the envelope-divided counts.  Dividing out exp(-rho*t) flattens the
    # decaying pedestal into a constant, which a rectangular-window DFT puts
    # entirely in the DC bin; the raw counts' pedestal otherwise leaks a
    # low-frequency lobe that can outweigh the oscillation peak.  The window
    # stops where the envelope has decayed by e^-6 so the division does not
    # amplify the empty-bin noise in the far tail.
    m = int(min(n, max(32, math.ceil(6.0 / (rho * dt)))))
    z = y[:m] * np.exp(rho * (t[:m] - t[0]))
    padded = 4 * m  # finer frequency grid so a peak cannot split between bins
    spectrum = np.abs(np.fft.rfft(z - z.mean(), padded))
    kpeak = 4 + int(np.argmax(spectrum[4:]))
    om = 2.0 * math.pi * kpeak / (padded * dt)
    if kpeak < spectrum.size - 1 and spectrum[kpeak - 1] > 0 and spectrum[kpeak + 1] > 0:
        lm, l0, lp = np.log(spectrum[kpeak - 1 : kpeak + 2])
        denom = lm - 2.0 * l0 + lp
        if denom < 0:  # proper local maximum in log space
            om = 2.0 * math.pi * (kpeak + 0.5 * (lm - lp) / denom) / (padded * dt)

    g = rho / _ENVELOPE_FACTOR[model]

    shape = MODELS[model](t, 1.0, om, g)[0]
    top = float(shape.max())
    s = float(y.max()) / top if top > 0 else float(y.max())
    return s, om, g


def fit_emission_histogram(
    hist: Histogram,
    model: str = "single",
    initial: tuple[float, float, float] | None = None,
    max_iter: int = 200,
    grad_tol: float = 1e-10,
) -> FitResult:
    """Fit a damped-oscillation model to an emission-time histogram.

    Parameters
    ----------
    hist : Histogram
        Uniformly binned counts; needs at least 20 nonempty bins.
    model : str
        ``"single"``, ``"first"`` or ``"delay"``.
    initial : (scale, omega, chi_gamma), optional
        Starting point; defaults to an automatic guess (Fourier peak for
        the frequency, decay of local maxima for the rate).
    max_iter : int
        Iteration cap for the damped Gauss-Newton loop.
    grad_tol : float
        Convergence threshold on the scaled gradient norm, relative to its
        starting value.

    Returns
    -------
    FitResult
        ``converged=False`` flags a fit that hit ``max_iter`` or stalled;
        its estimates should not be trusted.

    Raises
    ------
    InsufficientDataError
        Fewer than 20 nonempty bins.
    ValueError
        Unknown model name or non-positive initial guess.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {sorted(MODELS)}")
    if np.count_nonzero(hist.counts) < 20:
        raise InsufficientDataError(
            f"need at least 20 nonempty bins, got {np.count_nonzero(hist.counts)}"
        )
    t = hist.centers
    y = hist.counts.astype(float)
    sqrt_w = 1.0 / np.sqrt(np.maximum(y, 1.0))
    model_fn = MODELS[model]

    p0 = np.asarray(initial if initial is not None else _initial_guess(t, y, model), float)
    if p0.shape != (3,) or np.any(p0 <= 0) or not np.all(np.isfinite(p0)):
        raise ValueError(f"initial guess must be three positive numbers, got {p0}")

    # Work in log space relative to the starting point: parameters stay
    # positive and the gradient norm is scale-free.
    theta = np.zeros(3)

    def evaluate(th):
        p = p0 * np.exp(th)
        m, d_s, d_om, d_g = model_fn(t, *p)
        r = sqrt_w * (y - m)
        jac = np.column_stack(
            [sqrt_w * d_s * p[0], sqrt_w * d_om * p[1], sqrt_w * d_g * p[2]]
        )
        return p, r, jac

    p, r, jac = evaluate(theta)
    sse = float(r @ r)
    grad = jac.T @ r
    grad0 = max(1.0, float(np.linalg.norm(grad)))
    lam = 1e-3
    converged = False
    iterations = 0
    stalls = 0
    while iterations < max_iter:
        iterations += 1
        if np.linalg.norm(grad) <= grad_tol * grad0:
            converged = True
            break
        a = jac.T @ jac
        improved = False
        for _ in range(40):
            try:
                delta = np.linalg.solve(a + lam * np.diag(np.diag(a)), grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try, r_try, jac_try = evaluate(theta + delta)
            sse_try = float(r_try @ r_try)
            if sse_try <= sse:
                # theta is log-space, so |delta| is a relative parameter move
                if sse - sse_try <= 1e-12 * sse and np.linalg.norm(delta) <= 1e-8:
                    stalls += 1
                else:
                    stalls = 0
                theta = theta + delta
                p, r, jac = p_try, r_try, jac_try
                sse = sse_try
                grad = jac.T @ r
                lam = max(lam / 3.0, 1e-12)
                improved = True
                break
            lam *= 10.0
            if lam > 1e10:
                break
        if not improved or stalls >= 3:
            # No descent direction at any damping, or repeated steps that
            # move neither the objective nor the parameters: we are at the
            # floating-point minimum even if the scaled gradient test never
            # quite fires.
            converged = improved or bool(np.linalg.norm(grad) <= grad_tol * grad0)
            break

    # Covariance from the undamped normal equations at the solution,
    # mapped back from log space (Poisson weights, so no variance rescale).
    stderr = {}
    try:
        cov = np.linalg.inv(jac.T @ jac)
        sd = np.sqrt(np.clip(np.diag(cov), 0.0, None)) * p
    except np.linalg.LinAlgError:
        sd = np.full(3, np.nan)
    for name, value in zip(("scale", "omega", "chi_gamma"), sd):
        stderr[name] = float(value)

    return FitResult(
        model=model,
        scale=float(p[0]),
        omega=float(p[1]),
        chi_gamma=float(p[2]),
        stderr=stderr,
        rss=sse,
        n_points=int(t.size),
        iterations=iterations,
        converged=converged,
    )


@dataclass(frozen=True)
class SlopeFit:
    """Weighted least-squares line through log-log points."""

    slope: float
    intercept: float
    slope_err: float
    n_points: int


def loglog_slope(x, y, sigma=None) -> SlopeFit:
    """Fit ``log y = slope * log x + intercept``.

    Parameters
    ----------
    x, y : array_like
        Strictly positive coordinates, at least three points.
    sigma : array_like, optional
        One-sigma uncertainties of ``y``; strictly positive when given.
        Weights are propagated to log space as ``sigma / y``.

    Returns
    -------
    SlopeFit
        ``slope_err`` comes from the provided uncertainties when given,
        otherwise from the residual scatter.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if x.size < 3:
        raise InsufficientDataError(f"need at least 3 points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs strictly positive x and y")
    lx, ly = np.log(x), np.log(y)
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != y.shape:
            raise ValueError("sigma must match y in shape")
        if np.any(sigma <= 0):
            raise ValueError("sigma entries must be positive; omit sigma to unweight")
        w = (y / sigma) ** 2
    else:
        w = np.ones_like(y)
    wsum = w.sum()
    xbar = float(w @ lx) / wsum
    ybar = float(w @ ly) / wsum
    sxx = float(w @ (lx - xbar) ** 2)
    if sxx <= 0:
        raise ValueError("x values must not be all equal")
    slope = float(w @ ((lx - xbar) * ly)) / sxx
    intercept = ybar - slope * xbar
    if sigma is not None:
        slope_err = math.sqrt(1.0 / sxx)
    else:
        resid = ly - (slope * lx + intercept)
        dof = max(1, x.size - 2)
        slope_err = math.sqrt(float(w @ resid**2) / dof / sxx)
    return SlopeFit(
        slope=slope, intercept=intercept, slope_err=slope_err, n_points=int(x.size)
    )


@dataclass(frozen=True)
class PairCorrelation:
    """Normalized pair correlation of the analyzed field, with uncertainty."""

    value: float
    sigma: float


def g2_from_table(table: CoincidenceTable) -> PairCorrelation:
    """Normalized pair correlation ``P(2|1) / P(1|1)**2`` of a table.

    Heralding on one click, the probability of two analyzed-field clicks
    relative to the square of one click; 1 for uncorrelated (Poissonian)
    statistics, below 1 for a heralded single excitation.

    Raises
    ------
    ValueError
        If the single-herald row is unavailable, or ``P(1|1)`` is zero or
        consistent with zero within its uncertainty (the ratio is then
        undefined).
    """
    p11, s11 = table.entry(1, 1)
    p12, s12 = table.entry(1, 2)
    if not (math.isfinite(p11) and math.isfinite(p12)):
        raise ValueError("single-herald row unavailable; cannot form the correlation")
    if p11 <= 0 or p11 <= s11:
        raise ValueError(
            "pair correlation undefined: P(1|1) is zero or consistent with zero"
        )
    value = p12 / p11**2
    if p12 > 0:
        sigma = value * math.sqrt((s12 / p12) ** 2 + (2.0 * s11 / p11) ** 2)
    else:
        sigma = s12 / p11**2
    return PairCorrelation(value=value, sigma=sigma)
