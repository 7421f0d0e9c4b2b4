"""
Quasi-static bond-based peridynamics with brittle bond failure.

Each load step is solved by a sequentially linear scheme: linear solve, break
every bond at or beyond its critical stretch, re-solve, until no bond breaks.
The same engine serves RVE fracture runs and homogenized macro runs.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from peristat.base import defaults
from peristat.base.exceptions import NonConvergence
from peristat.base.solver import LinearSolver
from peristat.base.writers import write_vtk_points
from peristat.discretization import AXES, BondSet, NodeSet

logger = logging.getLogger(__name__)


@dataclass
class DirichletSet:
    name: str
    nodes: np.ndarray
    direction: int
    increment: float = 0.0
    measure: float = 1.0

    def dofs(self, dim):
        return np.asarray(self.nodes, dtype=int) * dim + self.direction


@dataclass
class LoadProgram:
    """
    Dirichlet sets with per-step increments, optional nodal force increments

    ``stress_set`` names the set whose reaction is reported as stress and
    ``elongation_increment`` the imposed elongation per step.
    """
    steps: int
    dirichlet: List[DirichletSet] = field(default_factory=list)
    forces: Optional[np.ndarray] = None
    stress_set: Optional[str] = None
    elongation_increment: float = 0.0
    snapshot_every: int = 0

    def validate(self):
        if self.steps < 1:
            raise ValueError("a load program needs at least one step")
        if not self.dirichlet:
            raise ValueError("a load program needs at least one Dirichlet set")
        names = [d.name for d in self.dirichlet]
        if len(set(names)) != len(names):
            raise ValueError("duplicate Dirichlet set names")
        if self.stress_set is not None and self.stress_set not in names:
            raise ValueError("unknown stress set {}".format(self.stress_set))
        return self

    def prescribed(self, step, dim):
        """
        :return: (dofs, values) at the given step, later sets overriding earlier ones
        """
        values = {}
        for d in self.dirichlet:
            for dof in d.dofs(dim):
                values[int(dof)] = d.increment * step
        dofs = np.fromiter(values.keys(), dtype=int, count=len(values))
        return dofs, np.fromiter(values.values(), dtype=float, count=len(values))

    def force_vector(self, step, n_dofs):
        if self.forces is None:
            return np.zeros(n_dofs)
        return step * np.asarray(self.forces, dtype=float).ravel()

    def set_by_name(self, name):
        for d in self.dirichlet:
            if d.name == name:
                return d
        raise KeyError(name)


@dataclass
class SimState:
    step: int
    u: np.ndarray
    intact: np.ndarray
    damage: np.ndarray
    reactions: Dict[str, float]
    measures: Dict[str, float]
    dissipated: float = 0.0
    external_work: float = 0.0
    newly_broken: int = 0
    iterations: int = 0
    elongation: float = 0.0
    stress_set: Optional[str] = None


@dataclass
class SimHistory:
    states: List[SimState]
    bonds: BondSet
    detached_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def final(self):
        return self.states[-1]

    def stresses(self):
        return np.array([reaction_stress(s) for s in self.states])

    def to_dataframe(self):
        rows = []
        total = 0
        for state in self.states:
            total += state.newly_broken
            rows.append({
                "step": state.step,
                "elongation": state.elongation,
                "stress": reaction_stress(state),
                "broken": state.newly_broken,
                "total_broken": total,
                "dissipated_energy": state.dissipated,
                "external_work": state.external_work,
                "iterations": state.iterations,
            })
        return pd.DataFrame(rows)


def bond_stretch(bonds: BondSet, u):
    """
    s = (|zeta + u(y') - u(y)| - |zeta|) / |zeta|

    :param bonds: BondSet
    :param u: (n, dim) nodal displacements
    :return: (nb,) stretches
    """
    u = np.asarray(u, dtype=float).reshape(bonds.nodes.count, -1)
    deformed = bonds.xi + u[bonds.j] - u[bonds.i]
    return (np.linalg.norm(deformed, axis=1) - bonds.length) / bonds.length


def bond_stiffness(bonds: BondSet):
    volumes = bonds.nodes.volumes
    return bonds.micromodulus * volumes[bonds.i] * volumes[bonds.j]


def breaking_energy(bonds: BondSet, stretch, which):
    """
    elastic energy 1/2 k (s |zeta|)^2 of the selected bonds
    """
    k = bond_stiffness(bonds)[which]
    elongation = stretch[which] * bonds.length[which]
    return float(np.sum(0.5 * k * elongation ** 2))


def failure_sweep(bonds: BondSet, u, tie_tolerance=defaults.TIE_TOLERANCE):
    """
    :return: (updated intact flags, indices of bonds broken by this sweep)
    """
    stretch = bond_stretch(bonds, u)
    newly = bonds.intact & (stretch >= bonds.critical_stretch * (1.0 - tie_tolerance))
    intact = bonds.intact & ~newly
    return intact, np.flatnonzero(newly)


class QuasiStaticSolver(LinearSolver):
    """
    Linearized bond-based peridynamic equilibrium with Dirichlet sets
    """
    def __init__(
            self,
            bonds: BondSet,
            method=defaults.SOLVER_METHOD,
            tol=defaults.SOLVER_TOLERANCE,
            tie_tolerance=defaults.TIE_TOLERANCE,
            max_inner=defaults.MAX_INNER_ITERATIONS,
            stabilization=1e-12,
    ):
        """
        Initialise solver

        :param bonds: BondSet, mutated in place as bonds break
        :param method: linear solver method
        :param tol: iterative solver tolerance
        :param tie_tolerance: relative tolerance of the breaking rule
        :param max_inner: cap on solve/sweep iterations per step
        :param stabilization: grounding spring on every free dof, relative to the mean stiffness diagonal
        """
        super().__init__(method=method, tol=tol)
        self.bonds = bonds
        self.tie_tolerance = tie_tolerance
        self.max_inner = max_inner
        self.stabilization = stabilization
        self.detached = np.zeros(bonds.nodes.count, dtype=bool)

        self._rows, self._cols, self._local = self._pattern()
        return

    @property
    def dim(self):
        return self.bonds.nodes.dim

    @property
    def n_dofs(self):
        return self.bonds.nodes.count * self.dim

    def _pattern(self):
        bonds = self.bonds
        dim = self.dim
        pairs = np.stack([bonds.i, bonds.j], axis=1)
        dofs = (pairs[:, :, None] * dim + np.arange(dim)[None, None, :]).reshape(bonds.count, 2 * dim)
        projector = np.einsum("bi,bj->bij", bonds.direction, bonds.direction) * bond_stiffness(bonds)[:, None, None]
        sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
        local = np.einsum("pq,bij->bpiqj", sign, projector).reshape(bonds.count, 2 * dim, 2 * dim)
        rows = np.repeat(dofs, 2 * dim, axis=1).ravel()
        cols = np.tile(dofs, (1, 2 * dim)).ravel()
        return rows, cols, local

    def stiffness(self, intact=None):
        kappa = self.bonds.intact if intact is None else intact
        data = (self._local * kappa[:, None, None]).ravel()
        return sparse.coo_matrix((data, (self._rows, self._cols)), shape=(self.n_dofs, self.n_dofs)).tocsr()

    def components(self):
        intact = self.bonds.intact
        n = self.bonds.nodes.count
        graph = sparse.coo_matrix(
            (np.ones(int(intact.sum())), (self.bonds.i[intact], self.bonds.j[intact])), shape=(n, n)
        )
        return connected_components(graph, directed=False)

    def support(self, dofs, values, u_previous):
        """
        add constraints for detached fragments and unsupported directions

        :return: (dofs, values) extended
        """
        dim = self.dim
        n = self.bonds.nodes.count
        n_components, labels = self.components()
        cover = np.zeros((n_components, dim), dtype=bool)
        cover[labels[dofs // dim], dofs % dim] = True

        first = np.full(n_components, n)
        np.minimum.at(first, labels, np.arange(n))

        detached = ~cover.any(axis=1)[labels]
        newly = detached & ~self.detached
        if newly.any():
            self._logger.warning("%d nodes detached from every support; removed from the solve", int(newly.sum()))
        self.detached = detached

        extra = [(np.flatnonzero(detached)[:, None] * dim + np.arange(dim)[None, :]).ravel()]
        for component, direction in zip(*np.nonzero(~cover & cover.any(axis=1)[:, None])):
            extra.append(np.array([first[component] * dim + direction]))
        extra = np.concatenate(extra).astype(int)
        u_flat = u_previous.ravel()
        return np.concatenate([dofs, extra]), np.concatenate([values, u_flat[extra]])

    def solve_state(self, dofs, values, forces, u_previous):
        stiffness = self.stiffness()
        all_dofs, all_values = self.support(dofs, values, u_previous)
        diagonal = stiffness.diagonal()
        scale = diagonal.mean() if diagonal.size and diagonal.mean() > 0.0 else 1.0
        stabilized = stiffness + sparse.identity(self.n_dofs, format="csr") * (self.stabilization * scale)
        u = self.solve(stabilized, forces, all_dofs, all_values)
        return u.reshape(-1, self.dim), stiffness

    def reactions(self, stiffness, u, forces, program: LoadProgram):
        residual = stiffness @ u.ravel() - forces
        return {d.name: float(residual[d.dofs(self.dim)].sum()) for d in program.dirichlet}

    def run(self, program: LoadProgram, snapshot_dir=None) -> SimHistory:
        program.validate()
        dim = self.dim
        nodes = self.bonds.nodes
        u = np.zeros((nodes.count, dim))
        measures = {d.name: d.measure for d in program.dirichlet}
        zero = {d.name: 0.0 for d in program.dirichlet}
        states = [SimState(0, u.copy(), self.bonds.intact.copy(), self.bonds.damage(), zero, measures,
                           stress_set=program.stress_set)]
        dissipated = 0.0
        work = 0.0
        previous_forces = np.zeros(self.n_dofs)
        previous_reaction = zero
        previous_values = {d.name: 0.0 for d in program.dirichlet}

        for step in range(1, program.steps + 1):
            dofs, values = program.prescribed(step, dim)
            forces = program.force_vector(step, self.n_dofs)
            broken_this_step = 0
            for iteration in range(1, self.max_inner + 1):
                u_new, stiffness = self.solve_state(dofs, values, forces, u)
                if iteration == 1:
                    loaded = self.reactions(stiffness, u_new, forces, program)
                    for d in program.dirichlet:
                        current = d.increment * step
                        work += 0.5 * (previous_reaction[d.name] + loaded[d.name]) * (current - previous_values[d.name])
                        previous_values[d.name] = current
                    work += 0.5 * float((previous_forces + forces) @ (u_new - u).ravel())
                u = u_new
                intact, newly = failure_sweep(self.bonds, u, self.tie_tolerance)
                if newly.size == 0:
                    break
                dissipated += breaking_energy(self.bonds, bond_stretch(self.bonds, u), newly)
                self.bonds.intact = intact
                broken_this_step += newly.size
                self._logger.debug("step %d iteration %d: %d bonds broken", step, iteration, newly.size)
            else:
                raise NonConvergence("step {}: bonds still breaking after {} iterations".format(step, self.max_inner))

            reactions = self.reactions(self.stiffness(), u, forces, program)
            previous_reaction = reactions
            previous_forces = forces
            state = SimState(
                step=step,
                u=u.copy(),
                intact=self.bonds.intact.copy(),
                damage=self.bonds.damage(),
                reactions=reactions,
                measures=measures,
                dissipated=dissipated,
                external_work=work,
                newly_broken=broken_this_step,
                iterations=iteration,
                elongation=program.elongation_increment * step,
                stress_set=program.stress_set,
            )
            states.append(state)
            if snapshot_dir is not None and program.snapshot_every and step % program.snapshot_every == 0:
                write_snapshot(Path(snapshot_dir) / "step_{:04d}.vtk".format(step), nodes, state)

        return SimHistory(states=states, bonds=self.bonds, detached_nodes=np.flatnonzero(self.detached))


def write_snapshot(path, nodes: NodeSet, state: SimState):
    path.parent.mkdir(parents=True, exist_ok=True)
    write_vtk_points(
        path,
        nodes.positions,
        {
            "displacement": state.u,
            "displacement_magnitude": np.linalg.norm(state.u, axis=1),
            "damage": state.damage,
        },
        title="step {}".format(state.step),
    )


def assemble_and_solve(bonds: BondSet, program: LoadProgram, step, u_previous=None, **kwargs):
    """
    one linear solve of the step's loads with the current intact flags

    :return: (n, dim) displacements
    """
    solver = QuasiStaticSolver(bonds, **kwargs)
    dofs, values = program.prescribed(step, solver.dim)
    if u_previous is None:
        u_previous = np.zeros((bonds.nodes.count, solver.dim))
    u, _ = solver.solve_state(dofs, values, program.force_vector(step, solver.n_dofs), u_previous)
    return u


def quasi_static_run(bonds: BondSet, program: LoadProgram, snapshot_dir=None, **kwargs) -> SimHistory:
    """
    step the program with sweep-to-quiescence bond breaking; ``bonds`` is copied, not mutated

    :param bonds: BondSet with moduli and critical stretches assigned
    :param program: LoadProgram
    :param snapshot_dir: directory for VTK snapshots, if the program asks for them
    :return: SimHistory
    """
    solver = QuasiStaticSolver(bonds.copy(), **kwargs)
    history = solver.run(program, snapshot_dir=snapshot_dir)
    logger.debug(
        "%d steps, %d bonds broken, dissipated %.4g",
        program.steps, int((~history.bonds.intact).sum()), history.final.dissipated,
    )
    return history


def reaction_stress(state: SimState, name=None):
    """
    sum of reaction forces of a Dirichlet set over its face measure
    """
    name = name or state.stress_set
    if name is None:
        return 0.0
    return state.reactions[name] / state.measures[name]


def dissipated_energy(state: SimState):
    return state.dissipated


def region_nodes(nodes: NodeSet, face, region="face", width=None):
    if region == "face":
        return nodes.face_nodes(face)
    if region == "band":
        return nodes.band_nodes(face, width if width is not None else defaults.HORIZON_FACTOR * nodes.spacing)
    if region == "midpoint":
        return np.array([nodes.midpoint_node(face)])
    raise ValueError("unknown loading region {}".format(region))


def _anchor_sets(nodes: NodeSet, axis, faces):
    """
    transverse supports at face midpoints; in 3D also one edge node against rotation about the axis
    """
    dim = nodes.dim
    sets = []
    for face in faces:
        mid = nodes.midpoint_node(face)
        for k in range(dim):
            if k != axis:
                sets.append(DirichletSet("{}:mid:{}".format(face, AXES[k]), np.array([mid]), k))
    if dim == 3:
        j, k = [a for a in range(3) if a != axis]
        face_nodes = nodes.face_nodes(faces[0])
        positions = nodes.positions[face_nodes]
        center_k = 0.5 * (nodes.lower[k] + nodes.upper[k])
        top = positions[:, j].max()
        candidates = face_nodes[np.isclose(positions[:, j], top)]
        edge = candidates[np.argmin(np.abs(nodes.positions[candidates, k] - center_k))]
        sets.append(DirichletSet("{}:edge:{}".format(faces[0], AXES[k]), np.array([edge]), k))
    return sets


def stretch_program(nodes: NodeSet, axis, displacement, steps, region="face", width=None, two_sided=False,
                    snapshot_every=0) -> LoadProgram:
    """
    tension along ``axis``

    One-sided: the -axis region is held and the +axis region displaced by
    ``displacement`` in total. Two-sided: both regions move apart by
    ``displacement`` each, so the elongation is twice that.

    :return: LoadProgram reporting stress on the +axis region
    """
    lower_face = AXES[axis] + "-"
    upper_face = AXES[axis] + "+"
    increment = displacement / steps
    upper_nodes = region_nodes(nodes, upper_face, region, width)
    lower_nodes = region_nodes(nodes, lower_face, region, width)
    measure = nodes.face_measure(upper_face)
    sets = [
        DirichletSet(lower_face, lower_nodes, axis, -increment if two_sided else 0.0, measure),
        DirichletSet(upper_face, upper_nodes, axis, increment, measure),
    ]
    anchor_faces = [lower_face, upper_face] if two_sided else [lower_face]
    sets.extend(_anchor_sets(nodes, axis, anchor_faces))
    return LoadProgram(
        steps=steps,
        dirichlet=sets,
        stress_set=upper_face,
        elongation_increment=(2.0 if two_sided else 1.0) * increment,
        snapshot_every=snapshot_every,
    )


def rve_tension_program(nodes: NodeSet, axis, displacement=defaults.RVE_DISPLACEMENT, steps=defaults.RVE_STEPS,
                        snapshot_every=0) -> LoadProgram:
    """
    RVE fracture program: both faces normal to ``axis`` pulled apart, mid points held transversely
    """
    return stretch_program(nodes, axis, displacement, steps, region="face", two_sided=True,
                           snapshot_every=snapshot_every)


def mirror_bond_map(bonds: BondSet, axis):
    """
    index of each bond's mirror image across the mid plane normal to ``axis``, -1 if absent
    """
    nodes = bonds.nodes
    mirrored = nodes.grid_index.copy()
    mirrored[:, axis] = nodes.shape[axis] - 1 - mirrored[:, axis]
    table = nodes.node_lookup()
    image = table[tuple(mirrored.T)]

    lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(bonds.i, bonds.j))}
    result = -np.ones(bonds.count, dtype=int)
    for k, (a, b) in enumerate(zip(image[bonds.i], image[bonds.j])):
        if a < 0 or b < 0:
            continue
        result[k] = lookup.get((min(a, b), max(a, b)), -1)
    return result


