import numpy as np
import pytest

from discrete_de_rham.generators import (
    GeneratorSpec,
    annulus_2d,
    boundary_vertices,
    cartesian_grid,
    distort,
    frustum,
    generate,
    min_edge_length,
    parse_generator,
    reference_simplex,
    simplicial_grid,
)
from discrete_de_rham.mesh import MeshError


class TestBuilders:
    def test_cartesian_counts(self):
        assert cartesian_grid(2, (2, 2)).counts() == (9, 12, 4)
        assert cartesian_grid(3, 2).counts() == (27, 54, 36, 8)
        assert cartesian_grid(1, 3).counts() == (4, 3)

    def test_kuhn_triangulation(self):
        mesh = simplicial_grid(3, 1)
        assert mesh.counts() == (8, 19, 18, 6)
        assert sum(c.measure for c in mesh.cells(3)) == pytest.approx(1.0)

    def test_annulus(self, annulus):
        assert annulus.counts()[2] == 12
        assert annulus.euler_characteristic() == 0

    @pytest.mark.parametrize("outer,hole", [(3, 2), (4, 0), (5, 2)])
    def test_annulus_rejects_bad_sizes(self, outer, hole):
        with pytest.raises(ValueError, match="annulus"):
            annulus_2d(outer, hole)

    def test_frustum_is_planar_and_fills_its_volume(self):
        mesh = frustum(1)
        assert mesh.counts() == (8, 12, 6, 1)
        top = mesh.vertices[mesh.vertices[:, 2] == 1.0]
        assert np.ptp(top[:, 0]) == pytest.approx(0.6)
        # truncated pyramid with square bases 1 and 0.36 and height 1
        assert mesh.cell((3, 0)).measure == pytest.approx((1.0 + 0.36 + 0.6) / 3.0)

    def test_invalid_divisions(self):
        with pytest.raises(ValueError, match="divisions"):
            cartesian_grid(2, (0, 1))
        with pytest.raises(ValueError, match="dimension"):
            cartesian_grid(4, 1)

    def test_reference_simplex(self):
        assert reference_simplex(2).counts() == (3, 3, 1)
        assert reference_simplex(3).cell((3, 0)).measure == pytest.approx(1.0 / 6.0)


class TestDistortion:
    def test_boundary_is_fixed(self):
        mesh = cartesian_grid(2, 4)
        moved = distort(mesh, 0.2 * min_edge_length(mesh), seed=3)
        fixed = sorted(boundary_vertices(mesh))
        assert np.allclose(moved.vertices[fixed], mesh.vertices[fixed])
        assert not np.allclose(moved.vertices, mesh.vertices)

    def test_seed_is_reproducible(self):
        mesh = cartesian_grid(2, 3)
        a = distort(mesh, 0.05, seed=11)
        b = distort(mesh, 0.05, seed=11)
        assert np.array_equal(a.vertices, b.vertices)

    def test_magnitude_limit(self):
        mesh = cartesian_grid(2, 2)
        with pytest.raises(ValueError, match="distortion magnitude"):
            distort(mesh, 0.3 * min_edge_length(mesh))

    def test_quadrilateral_faces_in_3d(self, cube):
        with pytest.raises(ValueError, match="triangular faces"):
            distort(cube, 0.01)


class TestGeneratorSpecs:
    @pytest.mark.parametrize("text,expected", [
        ("hexahedron", GeneratorSpec("cartesian", 3, (1, 1, 1))),
        ("cartesian:2:4x4", GeneratorSpec("cartesian", 2, (4, 4))),
        ("cartesian:3:2", GeneratorSpec("cartesian", 3, (2, 2, 2))),
        ("simplicial:2:3", GeneratorSpec("simplicial", 2, (3, 3))),
        ("annulus:4:2", GeneratorSpec("annulus", 2, (4, 2))),
        ("frustum", GeneratorSpec("frustum", 3, (1,))),
        ("frustum:2", GeneratorSpec("frustum", 3, (2,))),
    ])
    def test_parse(self, text, expected):
        assert parse_generator(text) == expected

    def test_distortion_suffix(self):
        spec = parse_generator("cartesian:2:4+distort:0.1:7")
        assert spec.distortion == pytest.approx(0.1)
        assert spec.seed == 7
        assert spec.label() == "cartesian:2:4x4+distort:0.1:7"

    @pytest.mark.parametrize("text", [
        "sphere:2:2", "cartesian:2", "cartesian:2:ax2", "cartesian:2:2+distort:0.5", "cartesian:2:2+twist:0.1",
    ])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError, match="cannot parse"):
            parse_generator(text)

    def test_refinement_doubles_divisions(self):
        spec = parse_generator("annulus:4:2").refined(2)
        assert spec.divisions == (16, 8)
        assert generate("cartesian:2:2", level=1).counts()[2] == 16

    def test_generated_mesh_errors_propagate(self):
        with pytest.raises((ValueError, MeshError)):
            generate("cartesian:3:2+distort:0.1")
