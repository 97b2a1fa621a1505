import copy

import numpy as np
import pytest

from discrete_de_rham.generators import cartesian_grid, hexahedron, simplicial_grid
from discrete_de_rham.mesh import MeshError, PolytopalMesh, cell_label


class TestQueries:
    def test_counts_of_square_grid(self, square):
        assert square.counts() == (9, 12, 4)
        assert square.ambient_dim == 2

    def test_cell_label(self):
        assert cell_label((2, 5)) == "Cell 2-5"

    def test_unknown_cell(self, square):
        with pytest.raises(MeshError, match="unknown cell"):
            square.cell((3, 0))

    def test_subcells_of_hexahedron(self, cube):
        top = (3, 0)
        assert len(cube.subcells(top, 2)) == 6
        assert len(cube.subcells(top, 1)) == 12
        assert len(cube.subcells(top, 0)) == 8
        assert cube.subcells(top, 3) == (top,)

    def test_segment_orientation(self):
        mesh = cartesian_grid(1, 1)
        (edge,) = mesh.cells(1)
        signs = dict(mesh.facets(edge.id))
        start, end = edge.vertices if mesh.vertices[edge.vertices[0], 0] < 0.5 else edge.vertices[::-1]
        assert signs[(0, end)] == 1
        assert signs[(0, start)] == -1

    def test_relative_orientation_of_non_facet(self, cube):
        with pytest.raises(MeshError, match="not a boundary facet"):
            cube.relative_orientation((3, 0), (1, 0))

    def test_cofacets(self, square):
        interior_edges = [fid for fid in square.cell_ids(1) if len(square.cofacets(fid)) == 2]
        assert len(interior_edges) == 4

    def test_mesh_size(self, square):
        assert square.h == pytest.approx(np.sqrt(0.5))


class TestTopology:
    @pytest.mark.parametrize("build", [
        lambda: cartesian_grid(2, (3, 2)),
        lambda: cartesian_grid(3, (2, 1, 1)),
        lambda: simplicial_grid(3, (1, 1, 1)),
    ])
    def test_boundary_of_boundary(self, build):
        assert build().boundary_of_boundary_residuals() == {}

    def test_euler_characteristic(self, cube, annulus):
        assert cube.euler_characteristic() == 1
        assert annulus.euler_characteristic() == 0

    def test_validate_is_clean(self, small_mesh):
        assert small_mesh.validate() == []


class TestSubdivision:
    def test_unit_square_cells(self):
        mesh = cartesian_grid(2, 1)
        chunks = mesh.simplicial_subdivision((2, 0))
        assert len(chunks) == 4
        assert sum(c.volume for c in chunks) == pytest.approx(1.0)
        assert all(c.volume == pytest.approx(0.25) for c in chunks)

    def test_unit_cube(self, cube):
        chunks = cube.simplicial_subdivision((3, 0))
        assert len(chunks) == 24
        assert sum(c.volume for c in chunks) == pytest.approx(1.0)
        assert cube.cell((3, 0)).measure == pytest.approx(1.0)

    def test_triangle_measures(self, triangles):
        assert [c.measure for c in triangles.cells(2)] == pytest.approx([0.5, 0.5])


class TestStoredOrientation:
    def incidence(self, mesh):
        facets, signs = mesh.incidence()
        return copy.deepcopy(facets), copy.deepcopy(signs)

    def test_round_trip_with_signs(self, cube):
        facets, signs = self.incidence(cube)
        rebuilt = PolytopalMesh.from_incidence(cube.vertices, facets, signs)
        assert rebuilt.counts() == cube.counts()
        assert rebuilt.incidence()[1] == signs

    def test_flipped_sign_is_reported(self, cube):
        facets, signs = self.incidence(cube)
        signs[1][0][1] *= -1
        with pytest.raises(MeshError, match="orientation inconsistency"):
            PolytopalMesh.from_incidence(cube.vertices, facets, signs)

    def test_consistent_reorientation_is_accepted(self, cube):
        facets, signs = self.incidence(cube)
        signs[1][0] = [-s for s in signs[1][0]]
        position = facets[2][0].index(0)
        signs[2][0][position] *= -1
        mesh = PolytopalMesh.from_incidence(cube.vertices, facets, signs)
        assert mesh.relative_orientation((3, 0), (2, 0)) == -cube.relative_orientation((3, 0), (2, 0))

    def test_dangling_reference(self, square):
        facets, _ = self.incidence(square)
        facets[1][0][0] = 99
        with pytest.raises(MeshError, match="dangling"):
            PolytopalMesh.from_incidence(square.vertices, facets)

    def test_wrong_number_of_levels(self, square):
        facets, _ = self.incidence(square)
        with pytest.raises(MeshError, match="expected facet lists"):
            PolytopalMesh.from_incidence(square.vertices, facets[:1])


def test_hexahedron_is_single_cube():
    assert hexahedron().counts() == (8, 12, 6, 1)
