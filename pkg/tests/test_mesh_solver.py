"""Mapped-grid assembly and the Dirichlet solve paths."""

import numpy as np
import pytest

from narrowgap import (
    BoundaryData,
    GeometryError,
    NarrowRegion,
    PolynomialField,
    SolverError,
    boundary_values,
    build_grid,
    flat_gap_exact,
    make_builtin,
    quadrature_weights,
    solve_component,
    solve_dirichlet,
    solve_system,
)
from narrowgap.mesh_solver import LinearSystem, MappedGrid, assemble

from conftest import flat_profile, p1, quad_profile


@pytest.fixture(scope="module")
def reg():
    return NarrowRegion(n=2, epsilon=0.1, profile=quad_profile())


@pytest.fixture(scope="module")
def grid(reg):
    return build_grid(reg, 33, 17)


def test_grid_layout(reg, grid):
    assert grid.dims == (33, 17)
    assert grid.axes[0][0] == -1.0 and grid.axes[0][-1] == 1.0
    assert grid.axes[1][0] == 0.0 and grid.axes[1][-1] == 1.0
    assert grid.points.shape == (33 * 17, 2)
    np.testing.assert_allclose(
        grid.delta_flat, 0.1 + grid.tang[:, 0] ** 2, atol=1e-15)
    assert grid.center_index() == (16,)


def test_grid_masks_partition(grid):
    union = grid.lateral_mask | grid.bottom_mask | grid.top_mask
    assert np.array_equal(union, grid.boundary_mask)
    assert np.array_equal(grid.interior_mask, ~grid.boundary_mask)
    assert grid.bottom_mask.sum() == 33
    assert grid.top_mask.sum() == 33
    assert grid.lateral_mask.sum() == 2 * 17
    assert grid.boundary_mask.sum() == 2 * 17 + 2 * 33 - 4


def test_grid_rejects_bad_resolution(reg):
    with pytest.raises(GeometryError):
        MappedGrid(reg, 10, 17)
    with pytest.raises(GeometryError):
        MappedGrid(reg, 33, 7)


def test_quadrature_weights_measure_the_region(reg, grid):
    # integral of delta over [-1, 1] is 2*eps + 2/3
    area = quadrature_weights(grid).sum()
    assert area == pytest.approx(0.2 + 2 / 3, rel=2e-3)
    fine = quadrature_weights(build_grid(reg, 129, 17)).sum()
    assert abs(fine - (0.2 + 2 / 3)) < abs(area - (0.2 + 2 / 3))


def test_flat_gap_solution_is_exact():
    flat = NarrowRegion(n=2, epsilon=0.05, profile=flat_profile())
    grid = build_grid(flat, 17, 9)
    data = BoundaryData((p1("1"),), (PolynomialField.zero(1),))
    sol = solve_dirichlet(make_builtin("laplace", n=2), grid, data)
    exact = flat_gap_exact(0.05, [1.0], [0.0], grid.points)
    assert np.abs(sol.values - exact.reshape(sol.values.shape)).max() < 1e-11
    assert sol.residual < 1e-10


def test_matched_linear_data_solves_exactly(reg, grid):
    # u = x1 has telescoping fluxes on the quadratic gap: nodal exactness
    data = BoundaryData((p1("x1"),), (p1("x1"),))
    sol = solve_dirichlet(make_builtin("laplace", n=2), grid, data)
    expect = grid.reshape(grid.tang[:, 0])
    assert np.abs(sol.values[0] - expect).max() < 1e-11


def test_constant_data_in_kernel(reg, grid):
    data = BoundaryData((p1("2"),), (p1("2"),))
    sol = solve_dirichlet(make_builtin("laplace", n=2), grid, data)
    assert np.abs(sol.values - 2.0).max() < 1e-10


def test_discrete_maximum_principle(reg, grid):
    data = BoundaryData((p1("x1^2"),), (PolynomialField.zero(1),))
    sol = solve_dirichlet(make_builtin("laplace", n=2), grid, data)
    bc = boundary_values(grid, data)[0][grid.boundary_mask]
    assert sol.values.min() >= bc.min() - 1e-10
    assert sol.values.max() <= bc.max() + 1e-10


def test_boundary_rows_reproduce_data(reg, grid):
    data = BoundaryData((p1("x1^2"),), (p1("x1"),))
    sol = solve_dirichlet(make_builtin("laplace", n=2), grid, data)
    flat_vals = sol.values[0].ravel()
    x1 = grid.tang[:, 0]
    np.testing.assert_allclose(flat_vals[grid.top_mask],
                               x1[grid.top_mask] ** 2, atol=1e-12)
    np.testing.assert_allclose(flat_vals[grid.bottom_mask],
                               x1[grid.bottom_mask], atol=1e-12)


def test_lateral_closures_differ_only_laterally(reg, grid):
    data = BoundaryData((p1("x1^2"),), (PolynomialField.zero(1),))
    bu = boundary_values(grid, data, "utilde")[0]
    bc = boundary_values(grid, data, "constant")[0]
    inner = grid.lateral_mask & ~grid.top_mask & ~grid.bottom_mask
    assert np.abs(bu[inner] - bc[inner]).max() > 0.1
    assert np.array_equal(bu[grid.top_mask], bc[grid.top_mask])
    assert np.array_equal(bu[grid.bottom_mask], bc[grid.bottom_mask])


def test_direct_and_krylov_paths_agree(reg, grid):
    op = make_builtin("lame", n=2)
    zero = PolynomialField.zero(1)
    data = BoundaryData((p1("1"), zero), (zero, p1("x1")))
    d = solve_dirichlet(op, grid, data, method="direct")
    k = solve_dirichlet(op, grid, data, method="krylov", tol=1e-12)
    assert d.method == "direct"
    assert k.method == "krylov"
    assert np.abs(d.values - k.values).max() < 1e-8


def test_component_split_matches_full_solve(reg, grid):
    op = make_builtin("lame", n=2)
    zero = PolynomialField.zero(1)
    data = BoundaryData((p1("1"), zero), (zero, zero))
    full = solve_dirichlet(op, grid, data)
    part = solve_component(op, reg, data, 0, grid=grid)
    assert np.abs(full.values - part.values).max() < 1e-12


def test_assemble_shapes(reg, grid):
    op = make_builtin("lame", n=2)
    zero = PolynomialField.zero(1)
    data = BoundaryData((p1("1"), zero), (zero, zero))
    system = assemble(op, grid, data=data)
    assert system.unknowns == 2 * grid.nodes
    assert system.matrix.shape == (system.unknowns, system.unknowns)
    # one shared node mask; Dirichlet rows are replicated per component
    assert system.boundary_mask.shape == (grid.nodes,)
    assert system.boundary_mask.sum() == grid.boundary_mask.sum()
    assert system.rhs.shape == (system.unknowns,)


def test_singular_system_raises():
    import scipy.sparse as sp

    mat = sp.eye(4, format="lil")
    mat[2, 2] = 0.0
    system = LinearSystem(matrix=mat.tocsr(), rhs=np.ones(4), grid=None,
                          N=1, boundary_mask=np.zeros(4, bool), label="toy")
    with pytest.raises(SolverError):
        solve_system(system, method="direct")
