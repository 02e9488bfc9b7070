"""Command line interface.

Four subcommands:

* ``statistics``: exact and/or Monte Carlo coincidence tables over a sweep
  of excitation probabilities, with a slope/correlation summary.
* ``wavepacket``: emission-time density curves, envelopes, and sampled
  histograms for one or more parameter sets.
* ``fit``: recover (scale, frequency, decay rate) from a histogram CSV.
* ``rerun``: repeat a previous run from its manifest; data outputs are
  byte-identical.

Exit codes: 0 on success, 2 for configuration or input errors, 3 for
numerical failures (exact mode out of range, fit did not converge).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .config import (
    ConfigError,
    StatisticsConfig,
    WavepacketConfig,
    load_statistics_config,
    load_wavepacket_config,
)
from .detection import coincidence_table_exact, poisson_reference_table
from .estimation import (
    Histogram,
    InsufficientDataError,
    fit_emission_histogram,
    g2_from_table,
    loglog_slope,
)
from .manifest import RunManifest
from .simulate import SweepSpec, sweep
from .source import CutoffError, PairSource
from .wavepacket import (
    OverdampedError,
    WavepacketParams,
    delay_density,
    density_with_background,
    envelope_curve,
    first_photon_density,
    sample_biphoton_times,
    sample_times,
    sample_times_with_background,
    single_photon_density,
)

__all__ = ["main"]

_NUMERIC_ERRORS = (CutoffError, np.linalg.LinAlgError, FloatingPointError, RuntimeError)


def _fmt(x) -> str:
    return repr(float(x))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# -- statistics -------------------------------------------------------------


def _slope_entry(tables, i, j):
    """Log-log slope of P(i, j) against p1 across a sweep, or None."""
    xs, ys, sigmas = [], [], []
    for table in tables:
        if j >= table.n_click_bins or i >= table.n_herald_bins:
            continue
        value, sigma = table.entry(i, j)
        if table.p1 > 0 and np.isfinite(value) and value > 0:
            xs.append(table.p1)
            ys.append(value)
            sigmas.append(sigma)
    if len(xs) < 3:
        return None
    sigmas = np.asarray(sigmas)
    fit = loglog_slope(xs, ys, sigma=sigmas if np.all(sigmas > 0) else None)
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "stderr": fit.slope_err,
        "n_points": fit.n_points,
    }


def _engine_summary(tables) -> dict:
    entries: dict[str, dict] = {}
    n_i = min(2, tables[0].n_herald_bins - 1)
    n_j = min(3, tables[0].n_click_bins - 1)
    for i in range(1, n_i + 1):
        for j in range(1, n_j + 1):
            values, sigmas = [], []
            for table in tables:
                value, sigma = table.entry(i, j)
                values.append(value)
                sigmas.append(sigma)
            entries[f"P{i}{j}"] = {"values": values, "sigma": sigmas}
    correlations = []
    for table in tables:
        try:
            corr = g2_from_table(table)
            correlations.append(
                {"p": table.p, "value": corr.value, "sigma": corr.sigma}
            )
        except ValueError:
            correlations.append(None)
    baseline = None
    defined = [c for c in correlations if c is not None]
    if defined:
        plateau = float(tables[0].entry(1, 1)[0])
        if 0.0 < plateau < 0.5:
            ref = g2_from_table(poisson_reference_table(plateau))
            baseline = {"plateau": plateau, "value": ref.value, "sigma": ref.sigma}
    return {
        "backend": tables[0].engine,
        "p": [t.p for t in tables],
        "p1": [t.p1 for t in tables],
        "entries": entries,
        "slopes": {
            "s12": _slope_entry(tables, 1, 2),
            "s13": _slope_entry(tables, 1, 3),
            "s23": _slope_entry(tables, 2, 3),
        },
        "pair_correlation": correlations,
        "baseline_g2": baseline,
    }


def _summary_csv_lines(engine_tables: dict) -> list[str]:
    cols = ["P11", "P12", "P13", "P21", "P22", "P23"]
    header = "engine,p,p1," + ",".join(f"{c},sig{c[1:]}" for c in cols)
    lines = [header]
    for name, tables in engine_tables.items():
        for table in tables:
            cells = [name, _fmt(table.p), _fmt(table.p1)]
            for col in cols:
                i, j = int(col[1]), int(col[2])
                if i < table.n_herald_bins and j < table.n_click_bins:
                    value, sigma = table.entry(i, j)
                else:
                    value, sigma = float("nan"), float("nan")
                cells.append(_fmt(value))
                cells.append(_fmt(sigma))
            lines.append(",".join(cells))
    return lines


def _plot_statistics(path: Path, engine_tables: dict) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2))
    styles = {"exact": dict(ls="-", marker=""), "mc": dict(ls="", marker="o")}
    for name, tables in engine_tables.items():
        style = styles.get(name, dict(ls="--", marker="x"))
        p1 = np.array([t.p1 for t in tables])
        for ax, i in zip(axes, (1, 2)):
            for j, color in zip((1, 2, 3), ("C0", "C1", "C2")):
                vals = np.array(
                    [
                        t.entry(i, j)[0]
                        if i < t.n_herald_bins and j < t.n_click_bins
                        else np.nan
                        for t in tables
                    ]
                )
                ok = np.isfinite(vals) & (vals > 0) & (p1 > 0)
                if not ok.any():
                    continue
                label = f"P({i},{j}) {name}"
                ax.loglog(p1[ok], vals[ok], color=color, label=label, **style)
    for ax, i in zip(axes, (1, 2)):
        ax.set_xlabel("p1")
        ax.set_ylabel(f"P({i}, j)")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def run_statistics(
    cfg: StatisticsConfig,
    engine: str,
    out_dir: Path,
    out_format: str,
    plot: bool,
) -> tuple[list[str], list[str], int]:
    """Execute a statistics run; returns (outputs, plots, exit_code)."""
    tree1 = cfg.field1.to_tree()
    tree2 = cfg.field2.to_tree()
    engine_tables: dict[str, list] = {}
    if engine in ("exact", "both"):
        engine_tables["exact"] = [
            coincidence_table_exact(PairSource(p), tree1, tree2) for p in cfg.p_values
        ]
    if engine in ("mc", "both"):
        engine_tables["mc"] = sweep(
            SweepSpec(
                p_values=cfg.p_values,
                field1_tree=tree1,
                field2_tree=tree2,
                trials_per_point=cfg.trials,
                seed=cfg.seed,
            )
        )
    outputs: list[str] = []
    for name, tables in engine_tables.items():
        for k, table in enumerate(tables):
            fname = f"table_{name}_{k:02d}.{out_format}"
            if out_format == "csv":
                table.to_csv(out_dir / fname)
            else:
                table.to_json(out_dir / fname)
            outputs.append(fname)
    summary = {
        "schema": "srfock-statistics-summary",
        "schema_version": 1,
        "version": __version__,
        "seed": cfg.seed,
        "trials_per_point": cfg.trials,
        "p_values": list(cfg.p_values),
        "engines": {
            name: _engine_summary(tables) for name, tables in engine_tables.items()
        },
    }
    _write_json(out_dir / "summary.json", summary)
    outputs.append("summary.json")
    (out_dir / "summary.csv").write_text(
        "\n".join(_summary_csv_lines(engine_tables)) + "\n", encoding="utf-8"
    )
    outputs.append("summary.csv")
    plots: list[str] = []
    if plot:
        _plot_statistics(out_dir / "statistics.png", engine_tables)
        plots.append("statistics.png")
    return outputs, plots, 0


# -- wavepacket -------------------------------------------------------------


def _wavepacket_curves(params: WavepacketParams, wset) -> dict:
    n_bins = max(4, int(round(wset.t_max / wset.dt)))
    t = (np.arange(n_bins) + 0.5) * wset.dt
    if wset.background > 0:
        single = density_with_background(params, t, wset.background, wset.window)
    else:
        single = single_photon_density(params, t)
    return {
        "t": t,
        "single": np.asarray(single),
        "single_env": np.asarray(envelope_curve(params, t, "single")),
        "first": np.asarray(first_photon_density(params, t)),
        "first_env": np.asarray(envelope_curve(params, t, "first")),
        "delay": np.asarray(delay_density(params, t)),
        "delay_env": np.asarray(envelope_curve(params, t, "delay")),
    }


def _write_curve(path: Path, out_format: str, label: str, model: str, t, density, envelope):
    if out_format == "csv":
        lines = [
            "# srfock curve v1",
            f"# version={__version__}",
            f"# label={label}",
            f"# model={model}",
            "t_s,density,envelope",
        ]
        for ti, di, ei in zip(t, density, envelope):
            lines.append(f"{_fmt(ti)},{_fmt(di)},{_fmt(ei)}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        _write_json(
            path,
            {
                "schema": "srfock-curve",
                "schema_version": 1,
                "version": __version__,
                "label": label,
                "model": model,
                "t_s": [float(x) for x in t],
                "density": [float(x) for x in density],
                "envelope": [float(x) for x in envelope],
            },
        )


def _write_histogram(path: Path, out_format: str, hist: Histogram) -> None:
    if out_format == "csv":
        hist.to_csv(path)
    else:
        _write_json(path, hist.to_json_dict())


def _plot_wavepacket(path: Path, rows: list[tuple[str, dict, dict]]) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(
        len(rows), 3, figsize=(12, 2.8 * len(rows)), squeeze=False
    )
    titles = ("single", "first", "delay")
    for r, (label, curves, hists) in enumerate(rows):
        t_ns = curves["t"] * 1e9
        for c, model in enumerate(titles):
            ax = axes[r][c]
            hist = hists.get(model)
            if hist is not None:
                scale = hist.total_events
                ax.stairs(hist.counts, hist.edges * 1e9, color="0.7", fill=True)
            else:
                scale = 1.0
            ax.plot(t_ns, curves[model] * scale, "C0", lw=1.2)
            ax.plot(t_ns, curves[model + "_env"] * scale, "C3", ls="--", lw=1.0)
            ax.set_title(f"{label}: {model}", fontsize=9)
            ax.set_xlabel("time (ns)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def run_wavepacket(
    cfg: WavepacketConfig,
    out_dir: Path,
    out_format: str,
    plot: bool,
) -> tuple[list[str], list[str], int]:
    """Execute a wavepacket run; returns (outputs, plots, exit_code)."""
    outputs: list[str] = []
    plot_rows = []
    for idx, wset in enumerate(cfg.sets):
        try:
            params = WavepacketParams(
                omega0=wset.omega0, chi=wset.chi, gamma=wset.gamma, dt=wset.dt
            )
        except ValueError as exc:  # overdamped or out-of-range values
            raise ConfigError(f"[wavepacket:{wset.label}] {exc}") from exc
        curves = _wavepacket_curves(params, wset)
        for model in ("single", "first", "delay"):
            fname = f"curve_{wset.label}_{model}.{out_format}"
            _write_curve(
                out_dir / fname,
                out_format,
                wset.label,
                model,
                curves["t"],
                curves[model],
                curves[model + "_env"],
            )
            outputs.append(fname)
        hists: dict[str, Histogram] = {}
        if wset.samples > 0:
            seed_single = _kernels.derive_stream_seed(cfg.seed, 2 * idx)
            seed_pair = _kernels.derive_stream_seed(cfg.seed, 2 * idx + 1)
            if wset.background > 0:
                times = sample_times_with_background(
                    params, wset.samples, seed_single, wset.background, wset.window
                )
            else:
                times = sample_times(params, wset.samples, seed_single)
            first, _, delay = sample_biphoton_times(params, wset.samples, seed_pair)
            hists["single"] = Histogram.from_samples(
                times, bin_width=wset.dt, t_max=wset.t_max, total_events=wset.samples
            )
            hists["first"] = Histogram.from_samples(
                first, bin_width=wset.dt, t_max=wset.t_max, total_events=wset.samples
            )
            hists["delay"] = Histogram.from_samples(
                delay, bin_width=wset.dt, t_max=wset.t_max, total_events=wset.samples
            )
            for model, hist in hists.items():
                fname = f"hist_{wset.label}_{model}.{out_format}"
                _write_histogram(out_dir / fname, out_format, hist)
                outputs.append(fname)
        plot_rows.append((wset.label, curves, hists))
    plots: list[str] = []
    if plot:
        _plot_wavepacket(out_dir / "wavepacket.png", plot_rows)
        plots.append("wavepacket.png")
    return outputs, plots, 0


# -- fit ---------------------------------------------------------------------


def _plot_fit(path: Path, hist: Histogram, result) -> None:
    from .estimation import MODELS

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    t = hist.centers
    ax.stairs(hist.counts, hist.edges * 1e9, color="0.7", fill=True, label="data")
    model = MODELS[result.model](t, result.scale, result.omega, result.chi_gamma)[0]
    ax.plot(t * 1e9, model, "C0", lw=1.3, label=f"{result.model} fit")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("counts")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def run_fit(
    histogram_path: str,
    model: str,
    initial: tuple[float, float, float] | None,
    out_dir: Path,
    plot: bool,
) -> tuple[list[str], list[str], int]:
    """Execute a fit run; returns (outputs, plots, exit_code)."""
    try:
        hist = Histogram.from_csv(histogram_path)
    except OSError as exc:
        raise ConfigError(f"cannot read histogram: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad histogram file {histogram_path}: {exc}") from exc
    try:
        result = fit_emission_histogram(hist, model=model, initial=initial)
    except InsufficientDataError as exc:
        raise ConfigError(str(exc)) from exc
    fname = f"fit_{model}.json"
    result.to_json(out_dir / fname)
    outputs = [fname]
    plots: list[str] = []
    if plot:
        _plot_fit(out_dir / f"fit_{model}.png", hist, result)
        plots.append(f"fit_{model}.png")
    if not result.converged:
        print(f"fit did not converge after {result.iterations} iterations", file=sys.stderr)
        return outputs, plots, 3
    return outputs, plots, 0


# -- argument parsing and dispatch --------------------------------------------


def _add_common(sub, engine: bool = False):
    sub.add_argument("--out-dir", default=".", help="output directory (created if needed)")
    sub.add_argument("--format", choices=("csv", "json"), default="csv", dest="out_format")
    sub.add_argument("--seed", type=int, default=None, help="override the configured seed")
    sub.add_argument("--plot", action="store_true", help="also render PNG figures")
    if engine:
        sub.add_argument(
            "--engine",
            choices=("exact", "mc", "both"),
            default="both",
            help="which computation to run (default: both)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srfock",
        description="Counting statistics and superradiant wavepackets of a heralded pair source.",
    )
    parser.add_argument("--version", action="version", version=f"srfock {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p_stat = subparsers.add_parser(
        "statistics", help="coincidence tables over an excitation-probability sweep"
    )
    p_stat.add_argument("--config", required=True, help="INI configuration file")
    _add_common(p_stat, engine=True)

    p_wave = subparsers.add_parser(
        "wavepacket", help="emission-time densities, envelopes and sampled histograms"
    )
    p_wave.add_argument("--config", required=True, help="INI configuration file")
    _add_common(p_wave)

    p_fit = subparsers.add_parser(
        "fit", help="fit a damped-oscillation model to a histogram CSV"
    )
    p_fit.add_argument("histogram", help="histogram CSV written by this package")
    p_fit.add_argument(
        "--model", choices=("single", "first", "delay"), default="single"
    )
    p_fit.add_argument(
        "--initial",
        type=float,
        nargs=3,
        metavar=("SCALE", "OMEGA", "CHI_GAMMA"),
        default=None,
        help="starting point override",
    )
    _add_common(p_fit)

    p_rerun = subparsers.add_parser("rerun", help="repeat a run from its manifest")
    p_rerun.add_argument("manifest", help="manifest.json of a previous run")
    p_rerun.add_argument("--out-dir", default=".", help="output directory")
    p_rerun.add_argument("--plot", action="store_true")
    return parser


def _finish(
    out_dir: Path,
    command: str,
    seed: int | None,
    engine: str | None,
    out_format: str,
    config: dict,
    started: float,
    outputs: list[str],
    plots: list[str],
    code: int,
) -> int:
    manifest = RunManifest(
        command=command,
        seed=seed,
        engine=engine,
        out_format=out_format,
        config=config,
        outputs=outputs,
        plots=plots,
        duration_s=round(time.perf_counter() - started, 3),
    )
    manifest.write(out_dir / "manifest.json")
    for name in outputs:
        print(out_dir / name)
    return code


def _cmd_statistics(args) -> int:
    started = time.perf_counter()
    cfg = load_statistics_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs, plots, code = run_statistics(
        cfg, args.engine, out_dir, args.out_format, args.plot
    )
    return _finish(
        out_dir,
        "statistics",
        cfg.seed,
        args.engine,
        args.out_format,
        cfg.to_dict(),
        started,
        outputs,
        plots,
        code,
    )


def _cmd_wavepacket(args) -> int:
    started = time.perf_counter()
    cfg = load_wavepacket_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs, plots, code = run_wavepacket(cfg, out_dir, args.out_format, args.plot)
    return _finish(
        out_dir,
        "wavepacket",
        cfg.seed,
        None,
        args.out_format,
        cfg.to_dict(),
        started,
        outputs,
        plots,
        code,
    )


def _cmd_fit(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    histogram_path = str(Path(args.histogram).resolve())
    initial = tuple(args.initial) if args.initial is not None else None
    outputs, plots, code = run_fit(
        histogram_path, args.model, initial, out_dir, args.plot
    )
    return _finish(
        out_dir,
        "fit",
        None,
        None,
        args.out_format,
        {
            "histogram": histogram_path,
            "model": args.model,
            "initial": list(initial) if initial else None,
        },
        started,
        outputs,
        plots,
        code,
    )


def _cmd_rerun(args) -> int:
    started = time.perf_counter()
    try:
        manifest = RunManifest.load(args.manifest)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad manifest {args.manifest}: {exc}") from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if manifest.command == "statistics":
        cfg = StatisticsConfig.from_dict(manifest.config)
        outputs, plots, code = run_statistics(
            cfg, manifest.engine, out_dir, manifest.out_format, args.plot
        )
        seed = cfg.seed
    elif manifest.command == "wavepacket":
        cfg = WavepacketConfig.from_dict(manifest.config)
        outputs, plots, code = run_wavepacket(
            cfg, out_dir, manifest.out_format, args.plot
        )
        seed = cfg.seed
    elif manifest.command == "fit":
        conf = manifest.config
        initial = tuple(conf["initial"]) if conf.get("initial") else None
        outputs, plots, code = run_fit(
            conf["histogram"], conf["model"], initial, out_dir, args.plot
        )
        seed = None
    else:
        raise ConfigError(f"manifest has unknown command {manifest.command!r}")
    return _finish(
        out_dir,
        manifest.command,
        seed,
        manifest.engine,
        manifest.out_format,
        manifest.config,
        started,
        outputs,
        plots,
        code,
    )


_COMMANDS = {
    "statistics": _cmd_statistics,
    "wavepacket": _cmd_wavepacket,
    "fit": _cmd_fit,
    "rerun": _cmd_rerun,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OverdampedError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
