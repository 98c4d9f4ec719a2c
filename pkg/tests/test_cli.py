import csv

import pytest

from stochtunnel.cli import main

SMALL_FORWARD = """
barrier.v0 = 2.5
barrier.u0 = 0.25
barrier.d = 3
packet.sigma = 0.1
packet.x0 = -30
run.seed = 12
run.n_walkers = 1500
run.t_end = 30
run.probe_times = 15, 30
run.bins = 32
run.path_pool = 200
run.n_paths = 2
"""

SMALL_BACKWARD = """
barrier.v0 = 2.5
barrier.u0 = 0.5
barrier.d = 3
run.seed = 4
run.n_walkers = 400
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_coefficients_mode(tmp_path):
    cfg = _write(tmp_path, "run.seed = 1\nbarrier.u0 = 0\n")
    assert main(["coefficients", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 0
    rows = _rows(tmp_path / "o" / "coefficients.csv")
    assert rows[0][0] == "k[1/L]"
    assert max(abs(float(r[-1])) for r in rows[1:]) < 1e-12
    assert (tmp_path / "o" / "manifest.cfg").read_text().startswith("mode = coefficients")


def test_evolve_mode_with_plot(tmp_path):
    cfg = _write(tmp_path, SMALL_FORWARD)
    out = tmp_path / "o"
    assert main(["evolve", "--config", cfg, "--out-dir", str(out), "--plot"]) == 0
    summary = _rows(out / "evolve_summary.csv")
    assert len(summary) == 3
    counts = _rows(out / "counts.csv")
    assert all(int(r[1]) + int(r[2]) == 1500 for r in counts[1:])
    svg = (out / "density.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<dc:date>" not in svg


def test_paths_mode(tmp_path):
    cfg = _write(tmp_path, SMALL_FORWARD)
    assert main(["paths", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 0
    rows = _rows(tmp_path / "o" / "paths.csv")
    assert rows[0] == ["path_id", "t[T]", "x[L]", "label"]
    assert len({r[0] for r in rows[1:]}) == 2


def test_tunneling_time_mode(tmp_path):
    cfg = _write(tmp_path, SMALL_BACKWARD)
    out = tmp_path / "o"
    assert main(["tunneling-time", "--config", cfg, "--out-dir", str(out), "--plot"]) == 0
    rows = _rows(out / "times.csv")
    assert len(rows) == 401 and all(r[-1] == "ok" for r in rows[1:])
    summary = _rows(out / "summary.csv")
    assert float(summary[1][1]) > 0
    assert (out / "times.svg").exists()


def test_non_crossing_exit_status(tmp_path):
    cfg = _write(tmp_path, SMALL_BACKWARD + "run.window = 0.05\n")
    assert main(["tunneling-time", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 2
    rows = _rows(tmp_path / "o" / "times.csv")
    assert any(r[-1] == "no_crossing" for r in rows[1:])


def test_config_error_exit_status(tmp_path, capsys):
    cfg = _write(tmp_path, "run.seed = 1\nbarrier.nope = 1\n")
    assert main(["evolve", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 1
    assert "barrier.nope" in capsys.readouterr().err
    assert main(["evolve"]) == 1


def test_seed_flag_overrides_config(tmp_path):
    cfg = _write(tmp_path, "run.seed = 1\n")
    out = tmp_path / "o"
    assert main(["coefficients", "--config", cfg, "--out-dir", str(out), "--seed", "77"]) == 0
    assert "run.seed = 77" in (out / "manifest.cfg").read_text()


@pytest.mark.parametrize("mode", ["evolve", "tunneling-time"])
def test_outputs_identical_across_thread_counts(tmp_path, monkeypatch, mode):
    text = SMALL_FORWARD if mode == "evolve" else SMALL_BACKWARD
    cfg = _write(tmp_path, text)
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("STOCHTUNNEL_THREADS", threads)
        out = tmp_path / f"o{threads}"
        assert main([mode, "--config", cfg, "--out-dir", str(out)]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    assert names
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
