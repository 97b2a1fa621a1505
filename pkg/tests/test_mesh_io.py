import json

import numpy as np
import pytest

from discrete_de_rham.generators import frustum, generate
from discrete_de_rham.mesh import MeshError
from discrete_de_rham.mesh_io import (
    MESH_FORMAT_VERSION,
    load_mesh,
    mesh_from_dict,
    mesh_to_dict,
    save_mesh,
    validate_mesh_document,
)


class TestRoundTrip:
    @pytest.mark.parametrize("text", [
        "cartesian:2:2", "simplicial:3:1", "annulus:4:2", "hexahedron", "cartesian:2:3+distort:0.2:5",
    ])
    def test_save_then_load(self, tmp_path, text):
        mesh = generate(text)
        path = tmp_path / "mesh.json"
        save_mesh(mesh, path)
        loaded = load_mesh(path)
        assert loaded.counts() == mesh.counts()
        assert np.allclose(loaded.vertices, mesh.vertices)
        assert loaded.incidence() == mesh.incidence()

    def test_frustum_keeps_orientation(self):
        mesh = frustum(1)
        loaded = mesh_from_dict(json.loads(json.dumps(mesh_to_dict(mesh))))
        for fid in mesh.cell_ids(3):
            assert loaded.facets(fid) == mesh.facets(fid)

    def test_document_layout(self, square):
        data = mesh_to_dict(square)
        assert data["version"] == MESH_FORMAT_VERSION
        assert data["ambient_dim"] == 2
        assert len(data["cells"]) == sum(square.counts())
        assert validate_mesh_document(data) == []


class TestValidation:
    def test_not_an_object(self):
        assert validate_mesh_document([]) == ["mesh document must be a JSON object"]

    def test_collects_every_problem(self, square):
        data = mesh_to_dict(square)
        data["version"] = "other"
        data["vertices"][0] = [0.0]
        data["cells"][9]["boundary"] = [[0, 2], [1, 1]]
        errors = validate_mesh_document(data)
        assert len(errors) == 3
        assert any("version" in e for e in errors)
        assert any("vertex 0" in e for e in errors)
        assert any("bad boundary entry" in e for e in errors)

    def test_broken_sign_names_the_pair(self, square):
        data = mesh_to_dict(square)
        face = next(c for c in data["cells"] if c["dim"] == 2)
        face["boundary"][1][1] *= -1
        with pytest.raises(MeshError, match=r"orientation inconsistency: .* for pair \(Cell 2-0, Cell 0-"):
            mesh_from_dict(data)

    def test_schema_error_is_mesh_error(self):
        with pytest.raises(MeshError, match="Invalid mesh file"):
            mesh_from_dict({"version": MESH_FORMAT_VERSION, "ambient_dim": 5})

    def test_corrupt_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(MeshError, match="Invalid mesh file"):
            load_mesh(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_mesh(tmp_path / "absent.json")
