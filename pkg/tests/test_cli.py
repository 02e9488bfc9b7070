import json

import numpy as np
import pytest

from srfock.cli import main
from srfock.wavepacket import WavepacketParams

STATS_INI = """\
[source]
p_values = 0.02, 0.05

[field1]
leaves = 2
efficiency = 0.4

[field2]
leaves = 4
efficiency = 0.03

[run]
trials = 20000
seed = 11
"""

WAVE_INI = """\
[wavepacket:demo]
omega0 = 0.4e9
chi = 4.0
samples = 40000

[run]
seed = 11
"""


@pytest.fixture
def stats_config(tmp_path):
    path = tmp_path / "stats.ini"
    path.write_text(STATS_INI, encoding="utf-8")
    return path


@pytest.fixture
def wave_config(tmp_path):
    path = tmp_path / "wave.ini"
    path.write_text(WAVE_INI, encoding="utf-8")
    return path


def test_statistics_outputs(stats_config, tmp_path):
    out = tmp_path / "out"
    code = main(["statistics", "--config", str(stats_config), "--out-dir", str(out)])
    assert code == 0
    for name in (
        "table_exact_00.csv",
        "table_exact_01.csv",
        "table_mc_00.csv",
        "table_mc_01.csv",
        "summary.csv",
        "summary.json",
        "manifest.json",
    ):
        assert (out / name).is_file(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema"] == "srfock-statistics-summary"
    assert summary["seed"] == 11
    assert summary["p_values"] == [0.02, 0.05]
    assert set(summary["engines"]) == {"exact", "mc"}
    exact = summary["engines"]["exact"]
    assert "P11" in exact["entries"]
    assert len(exact["pair_correlation"]) == 2
    header = (out / "summary.csv").read_text().splitlines()[0]
    assert header.startswith("engine,p,p1,P11,sig11")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "statistics"
    assert "summary.json" in manifest["outputs"]
    assert manifest["plots"] == []


def test_statistics_json_format_and_engine(stats_config, tmp_path):
    out = tmp_path / "json_out"
    code = main([
        "statistics", "--config", str(stats_config),
        "--out-dir", str(out), "--format", "json", "--engine", "exact",
    ])
    assert code == 0
    assert (out / "table_exact_00.json").is_file()
    assert not (out / "table_mc_00.json").exists()
    data = json.loads((out / "table_exact_00.json").read_text())
    assert data["p"] == 0.02


def test_seed_override(stats_config, tmp_path):
    out = tmp_path / "seeded"
    code = main([
        "statistics", "--config", str(stats_config),
        "--out-dir", str(out), "--seed", "123", "--engine", "mc",
    ])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 123


def test_wavepacket_outputs(wave_config, tmp_path):
    out = tmp_path / "wave_out"
    code = main(["wavepacket", "--config", str(wave_config), "--out-dir", str(out)])
    assert code == 0
    for model in ("single", "first", "delay"):
        assert (out / f"curve_demo_{model}.csv").is_file()
        assert (out / f"hist_demo_{model}.csv").is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "wavepacket"
    assert len(manifest["outputs"]) == 6


def test_fit_round_trip(wave_config, tmp_path):
    wave_out = tmp_path / "wave_out"
    assert main(["wavepacket", "--config", str(wave_config),
                 "--out-dir", str(wave_out)]) == 0
    fit_out = tmp_path / "fit_out"
    code = main([
        "fit", str(wave_out / "hist_demo_single.csv"),
        "--model", "single", "--out-dir", str(fit_out),
    ])
    assert code == 0
    result = json.loads((fit_out / "fit_single.json").read_text())
    assert result["converged"] is True
    truth = WavepacketParams(omega0=0.4e9, chi=4.0)
    assert np.isclose(result["omega"], truth.rabi, rtol=0.05)
    assert np.isclose(result["chi_gamma"], truth.decay_rate, rtol=0.05)


def test_config_errors_exit_2(tmp_path):
    assert main(["statistics", "--config", str(tmp_path / "absent.ini"),
                 "--out-dir", str(tmp_path)]) == 2

    malformed = tmp_path / "broken.ini"
    malformed.write_text("p_values = 0.01 without a section header\n")
    assert main(["statistics", "--config", str(malformed),
                 "--out-dir", str(tmp_path)]) == 2

    overdamped = tmp_path / "overdamped.ini"
    overdamped.write_text(
        "[wavepacket:bad]\nomega0 = 1e7\nchi = 4.0\n\n[run]\nseed = 1\n"
    )
    assert main(["wavepacket", "--config", str(overdamped),
                 "--out-dir", str(tmp_path)]) == 2

    garbage = tmp_path / "notahist.csv"
    garbage.write_text("nope,nope\n1,2\n")
    assert main(["fit", str(garbage), "--out-dir", str(tmp_path)]) == 2


def test_numeric_failure_exit_3(tmp_path):
    # p = 0.5 needs a photon-number cutoff beyond the exact-engine limit
    config = tmp_path / "deep.ini"
    config.write_text(STATS_INI.replace("p_values = 0.02, 0.05",
                                        "p_values = 0.5"))
    out = tmp_path / "deep_out"
    code = main(["statistics", "--config", str(config),
                 "--out-dir", str(out), "--engine", "exact"])
    assert code == 3


def test_rerun_is_byte_identical(stats_config, wave_config, tmp_path):
    first = tmp_path / "first"
    assert main(["statistics", "--config", str(stats_config),
                 "--out-dir", str(first)]) == 0
    second = tmp_path / "second"
    assert main(["rerun", str(first / "manifest.json"),
                 "--out-dir", str(second)]) == 0
    manifest = json.loads((first / "manifest.json").read_text())
    for name in manifest["outputs"]:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    again = json.loads((second / "manifest.json").read_text())
    for key in ("duration_s",):
        manifest.pop(key), again.pop(key)
    assert manifest == again

    wave_first = tmp_path / "wave_first"
    assert main(["wavepacket", "--config", str(wave_config),
                 "--out-dir", str(wave_first)]) == 0
    wave_second = tmp_path / "wave_second"
    assert main(["rerun", str(wave_first / "manifest.json"),
                 "--out-dir", str(wave_second)]) == 0
    for name in json.loads((wave_first / "manifest.json").read_text())["outputs"]:
        assert (wave_first / name).read_bytes() == (wave_second / name).read_bytes()

    assert main(["rerun", str(tmp_path / "missing.json"),
                 "--out-dir", str(tmp_path)]) == 2


def test_plot_files_listed_in_manifest(wave_config, tmp_path):
    out = tmp_path / "plotted"
    code = main(["wavepacket", "--config", str(wave_config),
                 "--out-dir", str(out), "--plot"])
    assert code == 0
    assert (out / "wavepacket.png").is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["plots"] == ["wavepacket.png"]
