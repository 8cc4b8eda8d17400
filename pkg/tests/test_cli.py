import json
import pathlib

import numpy as np
import pytest

from semiwave import birth_laws as bl
from semiwave import cli, plotting
from semiwave import evolve as E
from semiwave import kernels, spectral as S
from semiwave.grid import EDGE, Grid

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def report(path):
    out = {}
    for line in path.read_text().splitlines():
        k, v = line.split(" = ", 1)
        out[k] = v
    return out


def test_spectrum_asymmetric(tmp_path):
    code = cli.main(["spectrum", "--config", str(CONFIGS / "spectrum_asymmetric.yaml"), "--out", str(tmp_path)])
    assert code == 0
    rec = report(tmp_path / "spectrum_asymmetric" / "report.txt")
    got = sorted(abs(float(rec[k])) for k in ("c_star_minus", "c_star_plus"))
    assert got == pytest.approx([0.7, 2.7], abs=0.1)
    assert (tmp_path / "spectrum_asymmetric" / "spectrum.csv").exists()


def test_manifest_reproducible(tmp_path):
    args = ["simulate", "--config", str(CONFIGS / "simulate.yaml")]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "simulate" / "manifest.sha256").read_text()
    b = (tmp_path / "b" / "simulate" / "manifest.sha256").read_text()
    assert a == b and "trajectory.csv" in a


def test_blowup_exit_code(tmp_path):
    code = cli.main(["--out", str(tmp_path), "simulate", "--config", str(CONFIGS / "blowup.yaml")])
    assert code == 3
    diag = (tmp_path / "blowup" / "diagnostic.txt").read_text()
    assert diag.startswith("error = ")


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("kernel: {form: gaussian}\nbirth: {form: nicholson, p: 2.0}\n"
                   "frame: {c: 1.0, h_delay: -1}\nexperiment: {name: bad, kind: simulate}\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "frame.h_delay" in capsys.readouterr().err
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 2
    assert cli.main(["bogus"]) == 2
    # kind not accepted by the subcommand
    assert cli.main(["speedsel", "--config", str(CONFIGS / "profile.yaml"), "--out", str(tmp_path)]) == 2


def test_report_renders_png(tmp_path):
    assert cli.main(["report", "--config", str(CONFIGS / "profile.yaml"), "--out", str(tmp_path)]) == 0
    out = tmp_path / "profile"
    png = out / "figures" / "profile.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    meta = json.loads((out / "profile.meta.json").read_text())
    assert meta["c"] == pytest.approx(1.7045951968842843 + 0.5, abs=1e-9)
    assert meta["orientation"] == "left" and meta["residual"] < 5e-3
    assert (out / "profile.csv").read_text().startswith("z,phi\n")


def test_emit_plotdata_trajectory(tmp_path):
    law = bl.nicholson(2.0)
    f = S.FrameSpec(1, 0.0, 1.0, kernels.gaussian(0, 1), law)
    g = Grid.line(-2, 2, 0.5, (EDGE, EDGE))
    tr = E.simulate(f, law, E.DelayHistory.constant(g, 0.2, 4, 0.25), 1.0, store_fields=True)
    paths = plotting.emit_plotdata(tr, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["snapshots.csv", "snapshots.plot.txt", "trajectory.csv", "trajectory.plot.txt"]
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,probe_name,value"
    assert len(lines) == 1 + 2 * len(tr.times)
    snap = np.genfromtxt(tmp_path / "snapshots.csv", delimiter=",", names=True)
    assert len(snap) == len(tr.times) * g.shape[0]
    figs = plotting.render_figures(tr, tmp_path / "fig")
    assert [p.name for p in figs] == ["trajectory.png"]


def test_write_csv_rejects_ragged(tmp_path):
    with pytest.raises(ValueError):
        plotting.write_csv(tmp_path / "x.csv", {"a": [1, 2], "b": [1]})
    assert plotting.fmt(None) == "none" and plotting.fmt(True) == "true" and plotting.fmt(0.1) == "0.1"
