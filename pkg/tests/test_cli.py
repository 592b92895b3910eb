"""Command line driver: configuration layering and end-to-end runs."""

import os

import numpy as np
import pytest

from egflow.cli import main, parse_config, resolve
from egflow.mesh import build_uniform_quad_mesh, write_mesh


def test_parse_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment only\n"
        "case = cavity\n"
        "ra=1e4   # inline comment\n"
        "\n"
        "n = 16\n"
    )
    cfg = parse_config(path)
    assert cfg == {"case": "cavity", "ra": "1e4", "n": "16"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("just a line\n")
    with pytest.raises(ValueError):
        parse_config(bad)


class Args:
    """Stand-in for parsed flags; unset attributes resolve to None."""

    def __init__(self, **kw):
        self.case = None
        self.config = None
        self.__dict__.update(kw)

    def __getattr__(self, name):
        return None


def test_resolve_layers_defaults_file_and_flags(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("case=cavity\nra=1e4\nn=24\nsave_every=5\n")
    cfg = resolve(Args(config=str(path), n=32))
    assert cfg["case"] == "cavity"
    assert cfg["ra"] == 1e4          # file overrides default
    assert cfg["n"] == 32            # flag overrides file
    assert isinstance(cfg["n"], int)
    assert cfg["save_every"] == 5
    assert cfg["dt"] == 0.01         # untouched default
    assert cfg["out"] == os.path.join("results", "cavity")


def test_resolve_rejects_bad_input():
    with pytest.raises(ValueError):
        resolve(Args())
    with pytest.raises(ValueError):
        resolve(Args(case="cavity", method="xy"))


def test_dry_run_prints_configuration(capsys):
    assert main(["run", "--case", "pore", "--re", "100", "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "case=pore" in out
    assert "re=100.0" in out
    assert "anderson_m=10" in out


def test_cavity_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "cav"
    code = main(["run", "--case", "cavity", "--n", "8", "--dt", "0.05",
                 "--tf", "0.1", "--ra", "1000", "--out", str(out)])
    assert code == 0
    for name in ("quantities_pr.csv", "iterations_pr.csv", "summary.txt",
                 "cavity_pr.png", "iterations_pr.png", "fields_pr_0002.vtk"):
        assert (out / name).exists(), name
    text = capsys.readouterr().out
    assert "u_max" in text and "nusselt" in text
    header, row = (out / "quantities_pr.csv").read_text().strip().splitlines()
    vals = dict(zip(header.split(","), row.split(",")))
    assert float(vals["u_max"]) > 0.0
    assert float(vals["nusselt"]) > 0.0


def test_custom_run_round_trips_mesh(tmp_path, capsys):
    mesh = build_uniform_quad_mesh(6, 6)
    mesh_path = tmp_path / "box.mesh"
    write_mesh(mesh, mesh_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "case=custom\nmesh=%s\ndt=0.05\ntf=0.1\nre=10\nmethod=both\n"
        % mesh_path
    )
    out = tmp_path / "chan"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("flux_pr.csv", "flux_st.csv", "summary.txt",
                 "fields_pr_0002.vtk", "flux_pr.png"):
        assert (out / name).exists(), name
    text = capsys.readouterr().out
    assert text.count("outflow flux") == 2


def test_custom_run_needs_mesh(tmp_path):
    with pytest.raises(ValueError):
        from egflow.cli import run_custom_case
        run_custom_case({"mesh": ""}, str(tmp_path))


def test_save_every_writes_snapshots(tmp_path):
    mesh = build_uniform_quad_mesh(4, 4)
    mesh_path = tmp_path / "box.mesh"
    write_mesh(mesh, mesh_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "case=custom\nmesh=%s\ndt=0.05\ntf=0.15\nre=10\nsave_every=1\n"
        % mesh_path
    )
    out = tmp_path / "snaps"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    for k in (1, 2, 3):
        assert (out / ("fields_pr_%04d.vtk" % k)).exists()
