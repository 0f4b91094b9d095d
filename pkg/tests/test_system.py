import json

import numpy as np
import pytest

from qcap.geometry import parse_cross_section, resolve_geometry
from qcap.mesh import Mesh, build_initial_mesh
from qcap.system import (
    EPS0,
    AssemblyError,
    ChargeSolution,
    DenseSystem,
    SingularSystemError,
    assemble_system,
    extract_capacitance,
    factor_solve,
    interface_diagonal,
    memory_bytes,
    solve_mesh,
)

SQUARE = {
    "unit": "m",
    "parameters": {},
    "ground_plane": True,
    "conductors": [{"name": "c", "loop": [[0, 1], [1, 1], [1, 2], [0, 2]], "face_eps_r": [1, 1, 1, 1]}],
}


def square_mesh(l_max=1.0):
    return build_initial_mesh(resolve_geometry(parse_cross_section(json.dumps(SQUARE))), l_max)


def flip_element(mesh, i):
    """Reverse element ``i`` and swap its permittivities: the same physical interface."""
    a, b = mesh.a.copy(), mesh.b.copy()
    a[i], b[i] = mesh.b[i], mesh.a[i]
    pos, neg = mesh.eps_r_pos.copy(), mesh.eps_r_neg.copy()
    pos[i], neg[i] = mesh.eps_r_neg[i], mesh.eps_r_pos[i]
    return Mesh(a, b, mesh.kind, mesh.cond_id, pos, neg, mesh.parent, mesh.n_cond, mesh.ground_plane)


def test_memory_model():
    assert memory_bytes(100, 2) == 8 * 100 * 104


def test_interface_diagonal_value():
    assert interface_diagonal(1.0, 2.0) == pytest.approx(3.0 / (2 * EPS0), rel=1e-15)
    assert interface_diagonal(1.0, 2.0) == pytest.approx(1.6941e11, rel=1e-4)


def test_single_grounded_conductor_has_positive_potentials():
    system = assemble_system(square_mesh())
    assert system.S.shape == (4, 4) and system.V.shape == (4, 1)
    assert np.all(system.S > 0)
    np.testing.assert_array_equal(system.V, 1.0)


def test_conductor_rows_scale_with_eps0():
    mesh = square_mesh()
    from qcap.kernel import grounded_potential_matrix

    expected = grounded_potential_matrix(mesh.a, mesh.b, mesh.midpoints) / EPS0
    np.testing.assert_allclose(assemble_system(mesh).S, expected, rtol=1e-15)


def test_assembly_rejects_elements_below_ground():
    mesh = square_mesh()
    low = Mesh(mesh.a - [0, 5], mesh.b - [0, 5], mesh.kind, mesh.cond_id, mesh.eps_r_pos,
               mesh.eps_r_neg, mesh.parent, 1, True)
    with pytest.raises(AssemblyError, match="above y = 0"):
        assemble_system(low)


def test_interface_rows(mtl2_rg):
    mesh = build_initial_mesh(mtl2_rg, 2e-5)
    system = assemble_system(mesh)
    d = np.flatnonzero(~mesh.is_conductor)
    assert np.all(system.V[d] == 0.0)
    diag = system.S[d, d]
    # grounded: the diagonal carries the own-image field on top of the jump term
    jump = interface_diagonal(mesh.eps_r_pos[d], mesh.eps_r_neg[d])
    assert np.all(np.abs(diag - jump) < 0.5 * np.abs(jump))


def test_normal_flip_negates_row_and_keeps_solution(mtl2_rg):
    mesh = build_initial_mesh(mtl2_rg, 2e-5)
    i = int(np.flatnonzero(~mesh.is_conductor)[3])
    base, flipped = assemble_system(mesh), assemble_system(flip_element(mesh, i))
    np.testing.assert_allclose(flipped.S[i], -base.S[i], rtol=1e-12, atol=1e-12 * np.abs(base.S[i]).max())
    others = np.arange(len(mesh)) != i
    np.testing.assert_allclose(flipped.S[others], base.S[others], rtol=1e-12)
    c0 = solve_mesh(mesh).capacitance.C
    c1 = solve_mesh(flip_element(mesh, i)).capacitance.C
    assert np.max(np.abs(c1 - c0)) / np.max(np.abs(c0)) <= 1e-12


def test_factor_solve_identity():
    V = np.array([[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]])
    np.testing.assert_allclose(factor_solve(DenseSystem(np.eye(3), V)).sigma, V)


def test_factor_solve_two_by_two():
    sol = factor_solve(DenseSystem(np.array([[2.0, 1.0], [1.0, 3.0]]), np.array([[3.0], [5.0]])))
    np.testing.assert_allclose(sol.sigma, [[0.8], [1.4]], rtol=1e-14)


def test_factor_solve_needs_pivoting():
    sol = factor_solve(DenseSystem(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[2.0], [3.0]])))
    np.testing.assert_allclose(sol.sigma, [[3.0], [2.0]])


def test_factor_solve_random_residual():
    rng = np.random.default_rng(7)
    S = rng.normal(size=(50, 50)) + 50 * np.eye(50)
    V = rng.normal(size=(50, 3))
    sigma = factor_solve(DenseSystem(S, V)).sigma
    assert np.max(np.abs(S @ sigma - V)) <= 1e-10


def test_factor_solve_singular():
    S = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 0.0, 1.0]])
    with pytest.raises(SingularSystemError) as info:
        factor_solve(DenseSystem(S, np.ones((3, 1))))
    assert info.value.pivot_index is not None or "residual" in str(info.value)
    with pytest.raises(SingularSystemError, match="row 1"):
        factor_solve(DenseSystem(np.array([[1.0, 0.0], [0.0, 0.0]]), np.ones((2, 1))))


def test_factor_solve_shape_checks():
    with pytest.raises(ValueError):
        factor_solve(DenseSystem(np.ones((2, 3)), np.ones((2, 1))))
    with pytest.raises(ValueError):
        factor_solve(DenseSystem(np.eye(2), np.ones((3, 1))))


def test_extraction_of_uniform_charge():
    mesh = square_mesh(0.5)
    sol = ChargeSolution(np.full((len(mesh), 1), 2.0))
    assert extract_capacitance(sol, mesh).C[0, 0] == pytest.approx(2.0 * 4.0)


def test_extraction_is_linear(mtl2_rg):
    mesh = build_initial_mesh(mtl2_rg, 2e-5)
    rng = np.random.default_rng(3)
    s1, s2 = rng.normal(size=(2, len(mesh), 2))
    c = lambda s: extract_capacitance(ChargeSolution(s), mesh).C  # noqa: E731
    np.testing.assert_allclose(c(2 * s1 - 3 * s2), 2 * c(s1) - 3 * c(s2), rtol=1e-12, atol=1e-12)


def test_extraction_ignores_interface_charge(mtl2_rg):
    mesh = build_initial_mesh(mtl2_rg, 2e-5)
    s = np.where(mesh.is_conductor[:, None], 0.0, 1.0) * np.ones((len(mesh), 2))
    np.testing.assert_array_equal(extract_capacitance(ChargeSolution(s), mesh).C, 0.0)


def test_capacitance_is_physical(mtl2_rg):
    C = solve_mesh(build_initial_mesh(mtl2_rg, 1e-5)).capacitance.C
    assert np.all(np.diag(C) > 0)
    assert C[0, 1] < 0 and C[1, 0] < 0
    assert abs(C[0, 1] - C[1, 0]) / abs(C[0, 1]) < 5e-3


def test_csv_output(mtl2_rg):
    cap = solve_mesh(build_initial_mesh(mtl2_rg, 5e-5), mtl2_rg.conductor_names).capacitance
    lines = cap.to_csv().splitlines()
    assert lines[0] == "conductor,left,right"
    assert lines[1].startswith("left,") and len(lines) == 3


def test_factor_solve_diagonal_two_by_two():
    sol = factor_solve(DenseSystem(np.array([[2.0, 0.0], [0.0, 4.0]]), np.array([[1.0], [1.0]])))
    np.testing.assert_allclose(sol.sigma, [[0.5], [0.25]])


def test_grounded_sign_sanity(mtl2_rg):
    C = solve_mesh(build_initial_mesh(mtl2_rg, 1e-5)).capacitance.C
    scale = np.max(np.abs(C))
    off = C[~np.eye(2, dtype=bool)]
    assert np.all(off <= 1e-3 * scale)
    assert np.all(C.sum(axis=1) >= -1e-3 * scale)
