import numpy as np
import pytest

from peristat.discretization import (
    BondClass,
    HorizonSpec,
    assign_critical_stretch,
    assign_micromodulus,
    build_bonds,
    build_grid,
    calibrate_micromodulus_coeffs,
)
from peristat.peridynamics import (
    DirichletSet,
    LoadProgram,
    QuasiStaticSolver,
    assemble_and_solve,
    bond_stretch,
    breaking_energy,
    dissipated_energy,
    failure_sweep,
    mirror_bond_map,
    quasi_static_run,
    reaction_stress,
    rve_tension_program,
    stretch_program,
)

spacing = 0.05
horizon = 3.0 * spacing
matrix_stretch = 0.01161


def plate(upper, notches=(), critical_stretch=np.inf):
    nodes = build_grid(np.zeros(len(upper)), upper, spacing, notches)
    bonds = build_bonds(nodes, HorizonSpec(horizon))
    coeffs = calibrate_micromodulus_coeffs(71.7, 1.0 / 3.0, spacing / 3.0, horizon, spacing, 2)
    assign_micromodulus(bonds, coeffs)
    assign_critical_stretch(bonds, {BondClass.MATRIX: critical_stretch})
    return bonds


def two_nodes(micromodulus=3.0, critical_stretch=np.inf):
    nodes = build_grid([0.0, 0.0], [2.0, 1.0], 1.0)
    bonds = build_bonds(nodes, HorizonSpec(1.0))
    bonds.micromodulus = np.array([micromodulus])
    bonds.critical_stretch = np.array([critical_stretch])
    return bonds


def two_node_program(steps, increment=0.0, force=None):
    sets = [
        DirichletSet("anchor_x", np.array([0]), 0),
        DirichletSet("anchor_y", np.array([0]), 1),
        DirichletSet("guide", np.array([1]), 1),
    ]
    if force is None:
        sets.append(DirichletSet("pull", np.array([1]), 0, increment))
    return LoadProgram(steps=steps, dirichlet=sets, forces=force, stress_set="anchor_x")


def test_stretch_of_rigid_and_dilated_fields():
    bonds = plate([0.5, 0.5])
    positions = bonds.nodes.positions
    np.testing.assert_array_equal(bond_stretch(bonds, np.zeros_like(positions)), 0.0)
    np.testing.assert_allclose(bond_stretch(bonds, np.tile([0.2, -0.3], (len(positions), 1))), 0.0, atol=1e-12)
    np.testing.assert_allclose(bond_stretch(bonds, 0.004 * positions), 0.004, rtol=1e-9)


def test_single_bond_solve():
    bonds = two_nodes()
    force = np.array([0.0, 0.0, 1.0, 0.0])
    history = quasi_static_run(bonds, two_node_program(1, force=force))
    assert history.final.u[1, 0] == pytest.approx(1.0 / 3.0, rel=1e-9)
    assert history.final.reactions["anchor_x"] == pytest.approx(-1.0, rel=1e-9)
    u = assemble_and_solve(bonds, two_node_program(1, force=force), 1)
    assert u[1, 0] == pytest.approx(1.0 / 3.0, rel=1e-9)


def test_failure_sweep_rule():
    bonds = two_nodes(critical_stretch=0.01)
    u = np.zeros((2, 2))
    u[1, 0] = 0.005
    intact, newly = failure_sweep(bonds, u)
    assert intact.all() and newly.size == 0
    u[1, 0] = 0.01
    intact, newly = failure_sweep(bonds, u)
    assert not intact[0] and newly.tolist() == [0]
    bonds.intact = intact
    intact, newly = failure_sweep(bonds, np.zeros((2, 2)))
    assert not intact[0] and newly.size == 0


def test_failure_sweep_breaks_only_at_critical_stretch():
    bonds = two_nodes(critical_stretch=0.01)
    u = np.zeros((2, 2))
    u[1, 0] = 0.01 * (1.0 - 5e-10)
    intact, newly = failure_sweep(bonds, u)
    assert intact[0] and newly.size == 0
    intact, newly = failure_sweep(bonds, u, tie_tolerance=1e-9)
    assert not intact[0] and newly.tolist() == [0]


def test_single_bond_dissipation():
    s0 = 0.01
    bonds = two_nodes(micromodulus=3.0, critical_stretch=s0)
    history = quasi_static_run(bonds, two_node_program(4, increment=s0 / 4))
    assert not history.bonds.intact[0]
    assert bonds.intact[0]
    assert dissipated_energy(history.final) == pytest.approx(0.5 * 3.0 * s0 ** 2, rel=1e-9)
    assert history.final.dissipated <= history.final.external_work * (1.0 + 1e-9)
    assert history.states[4].newly_broken == 1
    assert breaking_energy(bonds, np.array([s0]), np.array([0])) == pytest.approx(0.5 * 3.0 * s0 ** 2)


def test_zero_load():
    bonds = plate([0.5, 0.5], critical_stretch=matrix_stretch)
    history = quasi_static_run(bonds, stretch_program(bonds.nodes, 0, 0.0, 3))
    np.testing.assert_array_equal(history.stresses(), 0.0)
    assert history.final.dissipated == 0.0
    assert history.bonds.intact.all()


def test_elastic_curve_is_linear():
    bonds = plate([0.5, 0.5])
    history = quasi_static_run(bonds, stretch_program(bonds.nodes, 0, 0.005, 5))
    stresses = history.stresses()
    assert stresses[1] > 0.0
    np.testing.assert_allclose(stresses, stresses[1] * np.arange(6), rtol=1e-8)
    table = history.to_dataframe()
    assert list(table.columns) == ["step", "elongation", "stress", "broken", "total_broken", "dissipated_energy",
                                   "external_work", "iterations"]
    assert table["total_broken"].iloc[-1] == 0


def test_homogeneous_plate_uniform_strain():
    bonds = plate([2.0, 1.0])
    nodes = bonds.nodes
    program = stretch_program(nodes, 0, 0.002, 1, region="band", width=horizon)
    history = quasi_static_run(bonds, program)
    u = history.final.u[:, 0]
    lookup = nodes.node_lookup()
    rows = range(6, nodes.shape[1] - 6)
    columns = range(9, nodes.shape[0] - 9)
    local = np.array([
        (u[lookup[a + 1, b]] - u[lookup[a - 1, b]]) / (2.0 * spacing) for a in columns for b in rows
    ])
    np.testing.assert_allclose(local, local.mean(), rtol=0.02)

    stress = reaction_stress(history.final)
    assert stress / (71.7 * local.mean()) == pytest.approx(1.0, abs=0.05)


def test_notched_plate_fails():
    bonds = plate([1.0, 1.0], notches=[((0.47, 0.0), (0.53, 0.3))], critical_stretch=matrix_stretch)
    history = quasi_static_run(bonds, stretch_program(bonds.nodes, 0, 0.03, 30))
    stresses = history.stresses()
    peak = int(np.argmax(stresses))
    assert 0 < peak < len(stresses) - 1
    assert stresses[-1] < 0.05 * stresses[peak]

    intact = np.array([s.intact for s in history.states])
    assert np.all(intact[1:] <= intact[:-1])
    dissipated = np.array([s.dissipated for s in history.states])
    assert np.all(np.diff(dissipated) >= 0.0)
    work = np.array([s.external_work for s in history.states])
    assert np.all(dissipated <= work * (1.0 + 1e-9))


def test_equilibrium_residual_at_accepted_states():
    bonds = plate([1.0, 1.0], notches=[((0.47, 0.0), (0.53, 0.3))], critical_stretch=matrix_stretch)
    program = stretch_program(bonds.nodes, 0, 0.03, 30)
    history = quasi_static_run(bonds, program)
    assert (~history.bonds.intact).sum() > 0

    solver = QuasiStaticSolver(history.bonds)
    internal = [solver.stiffness(state.intact) @ state.u.ravel() for state in history.states]
    scale = max(np.linalg.norm(f) for f in internal)
    assert scale > 0.0
    detached = (history.detached_nodes[:, None] * 2 + np.arange(2)[None, :]).ravel()
    for state, force in zip(history.states[1:], internal[1:]):
        dofs, _ = program.prescribed(state.step, 2)
        free = np.ones(force.size, dtype=bool)
        free[dofs] = False
        free[detached] = False
        assert np.linalg.norm(force[free]) <= 1e-8 * scale


def test_mirror_symmetric_damage():
    notches = [((0.47, 0.0), (0.53, 0.2)), ((0.47, 0.85), (0.53, 1.05))]
    bonds = plate([1.0, 1.05], notches=notches, critical_stretch=matrix_stretch)
    assert bonds.nodes.shape[1] % 2 == 1
    history = quasi_static_run(bonds, stretch_program(bonds.nodes, 0, 0.03, 30), tie_tolerance=1e-9)
    assert (~history.bonds.intact).sum() > 0

    mirror = mirror_bond_map(bonds, 1)
    assert np.all(mirror >= 0)
    np.testing.assert_array_equal(history.bonds.intact, history.bonds.intact[mirror])

    lookup = bonds.nodes.node_lookup()
    damage = history.final.damage
    mirrored = lookup[:, ::-1].ravel()
    kept = lookup.ravel() >= 0
    np.testing.assert_allclose(damage[lookup.ravel()[kept]], damage[mirrored[kept]], atol=1e-6)


def test_isolated_node_is_detached():
    bonds = plate([0.5, 0.5])
    centre = bonds.nodes.node_lookup()[5, 5]
    bonds.intact[(bonds.i == centre) | (bonds.j == centre)] = False
    solver = QuasiStaticSolver(bonds)
    history = solver.run(stretch_program(bonds.nodes, 0, 0.001, 2))
    assert history.detached_nodes.tolist() == [centre]
    np.testing.assert_array_equal(history.final.u[centre], 0.0)


def test_rve_tension_program():
    nodes = build_grid([0.0, 0.0], [1.0, 1.0], 0.0125)
    program = rve_tension_program(nodes, 1, 0.02, 100)
    lower = program.set_by_name("y-")
    upper = program.set_by_name("y+")
    assert lower.increment == pytest.approx(-0.0002)
    assert upper.increment == pytest.approx(0.0002)
    assert program.elongation_increment == pytest.approx(0.0004)
    assert {d.name for d in program.dirichlet} == {"y-", "y+", "y-:mid:x", "y+:mid:x"}

    cube = build_grid([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.125)
    program = rve_tension_program(cube, 0, 0.02, 10)
    assert "x-:edge:z" in {d.name for d in program.dirichlet}
    with pytest.raises(ValueError):
        LoadProgram(steps=0, dirichlet=program.dirichlet).validate()


def test_snapshots(tmp_path):
    bonds = plate([0.5, 0.5])
    program = stretch_program(bonds.nodes, 0, 0.001, 4, snapshot_every=2)
    quasi_static_run(bonds, program, snapshot_dir=tmp_path)
    written = sorted(p.name for p in tmp_path.iterdir())
    assert written == ["step_0002.vtk", "step_0004.vtk"]
    header = (tmp_path / "step_0002.vtk").read_text().splitlines()
    assert header[0] == "# vtk DataFile Version 2.0"
    assert "SCALARS damage double 1" in header
