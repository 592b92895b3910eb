"""Output writers: file structure and value round trips."""

import numpy as np
import pytest

from egflow.ac0 import AC0Basis, Reconstruction
from egflow.fem import FemSpace
from egflow.mesh import build_uniform_quad_mesh
from egflow.report import (
    save_cavity_figure,
    save_convergence_figure,
    save_flux_figure,
    save_iterations_figure,
    write_csv,
    write_summary,
    write_vtk,
)


@pytest.fixture(scope="module")
def space():
    return FemSpace(build_uniform_quad_mesh(3, 3))


def random_state(space, seed=14):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(space.n_u), rng.standard_normal(space.n_p),
            rng.standard_normal(space.n_theta))


def test_csv_round_trip(tmp_path):
    path = tmp_path / "table.csv"
    rows = [[1.0 / 3.0, "pr", 1e-14], [2.5e8, "st", -7]]
    write_csv(path, ["value", "method", "other"], rows)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "value,method,other"
    got = lines[1].split(",")
    assert got[1] == "pr"
    assert abs(float(got[0]) - 1.0 / 3.0) < 1e-12
    assert float(got[2]) == 1e-14
    assert float(lines[2].split(",")[2]) == -7


def test_summary_writer(tmp_path):
    path = tmp_path / "summary.txt"
    write_summary(path, ["first line  ", "second"])
    assert path.read_text() == "first line\nsecond\n"


def test_vtk_structure_and_values(tmp_path, space):
    mesh = space.mesh
    state = random_state(space)
    path = tmp_path / "fields.vtk"
    write_vtk(path, space, state)
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert "POINTS %d double" % mesh.n_vertices in text
    assert "CELLS %d %d" % (mesh.n_cells, 5 * mesh.n_cells) in text
    assert text.count("\n9\n") >= 1  # quad cell type
    assert "SCALARS temperature double 1" in text
    assert "VECTORS velocity double" in text
    assert "SCALARS pressure double 1" in text
    assert "SCALARS enrichment double 1" in text
    assert "reconstruction_divergence" not in text

    k = lines.index("SCALARS temperature double 1") + 2
    theta_back = np.array([float(v) for v in lines[k:k + mesh.n_vertices]])
    assert np.allclose(theta_back, state[2], atol=1e-11)

    k = lines.index("SCALARS pressure double 1") + 2
    p_back = np.array([float(v) for v in lines[k:k + mesh.n_cells]])
    assert np.allclose(p_back, state[1], atol=1e-11)


def test_vtk_divergence_block(tmp_path, space):
    recon = Reconstruction(AC0Basis(space),
                           dirichlet_edges=space.mesh.boundary_edges)
    u = space.interpolate_velocity(
        lambda pts, t: pts - np.array([0.2, 0.9]))
    path = tmp_path / "fields.vtk"
    write_vtk(path, space, (u, np.zeros(space.n_p), np.zeros(space.n_theta)),
              reconstruction=recon)
    lines = path.read_text().splitlines()
    k = lines.index("SCALARS reconstruction_divergence double 1") + 2
    div = np.array([float(v) for v in lines[k:k + space.mesh.n_cells]])
    assert np.allclose(div, 2.0, atol=1e-11)


def test_figures_render(tmp_path, space):
    rows = [
        {"h": 0.25, "velocity_error": 1e-2, "pressure_error": 1e-1},
        {"h": 0.125, "velocity_error": 2.5e-3, "pressure_error": 5e-2},
    ]
    conv = tmp_path / "conv.png"
    save_convergence_figure(conv, {"pr": rows})

    records = [{"t": 0.1 * k, "iterations": 3 + (k % 2)} for k in range(1, 6)]
    iters = tmp_path / "iters.png"
    save_iterations_figure(iters, records, label="pr")

    series = [{"t": 0.1 * k, "flux": 0.4 + 0.01 * k} for k in range(1, 6)]
    flux = tmp_path / "flux.png"
    save_flux_figure(flux, {"Ri=0": series})

    cav = tmp_path / "cavity.png"
    save_cavity_figure(cav, space, random_state(space))

    for path in (conv, iters, flux, cav):
        data = path.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1000
