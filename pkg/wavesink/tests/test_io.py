import numpy as np
import pytest

from app.core.errors import ConfigError
from app.schemas.results import ComplexMatrix
from app.schemas.run import RunConfig
from app.services.mesh import triangulate
from app.utils.io import provenance, read_csv, read_field, read_mesh, render_csv, render_json, write_field, write_mesh


def test_mesh_dump_is_exact(disk_geometry, tmp_path):
    mesh = triangulate(disk_geometry, 0.1)
    path = tmp_path / "disk.mesh"
    write_mesh(mesh, path)
    loaded = read_mesh(path)
    np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
    np.testing.assert_array_equal(loaded.triangles, mesh.triangles)
    np.testing.assert_array_equal(loaded.regions, mesh.regions)
    assert loaded.boundary_tags.tolist() == mesh.boundary_tags.tolist()


def test_field_dump_is_exact(disk_geometry, tmp_path):
    mesh = triangulate(disk_geometry, 0.1)
    rng = np.random.default_rng(7)
    values = rng.standard_normal(mesh.n_dofs) + 1j * rng.standard_normal(mesh.n_dofs)
    path = tmp_path / "u.field"
    write_field(mesh, values, path)
    _, loaded = read_field(path)
    np.testing.assert_array_equal(loaded, values)
    with pytest.raises(ConfigError):
        write_field(mesh, values[:-1], tmp_path / "short.field")


def test_truncated_dump_rejected(tmp_path):
    path = tmp_path / "broken.mesh"
    path.write_text("3 1 0\n0 0\n1 0\n")
    with pytest.raises(ConfigError):
        read_mesh(path)


def test_csv_with_provenance():
    config = RunConfig(command="smatrix", lam=6.0, h=0.1, dtn_terms=15)
    text = render_csv(["eta", "value"], [[0.1, 1 / 3], [1.0, 2.0]], provenance(config))
    lines = text.splitlines()
    assert lines[0] == "# wavesink 1.0.0"
    assert "# command=smatrix" in lines
    rows = read_csv(text)
    assert float(rows[0]["value"]) == 1 / 3
    assert rows[1]["eta"] == "1"
    assert render_csv(["eta"], [[0.1]], provenance(config)) == render_csv(["eta"], [[0.1]], provenance(config))


def test_json_report():
    text = render_json(ComplexMatrix.from_array(1.0 - 2.0j), ["wavesink 1.0.0"])
    assert '"provenance"' in text and '"re"' in text
    assert ComplexMatrix.from_array(1.0 - 2.0j).to_array()[0, 0] == 1.0 - 2.0j


def test_run_config_validation(tmp_path):
    with pytest.raises(ValueError):
        RunConfig(command="smatrix", lam=-1.0, h=0.1, dtn_terms=15)
    with pytest.raises(ValueError):
        RunConfig(command="sweep", lam=6.0, h=0.1, dtn_terms=15, etas=[-1.0])
    with pytest.raises(ValueError):
        RunConfig(command="smatrix", lam=6.0, h=0.1, dtn_terms=15, config=str(tmp_path / "missing.toml"))
    with pytest.raises(ValueError):
        RunConfig(command="smatrix", lam=6.0, h=0.1, dtn_terms=15, output=str(tmp_path))
