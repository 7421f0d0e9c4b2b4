"""
Uniform nodal grids, horizon neighbourhoods and classified bond sets.
"""
import itertools
import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from peristat.base import defaults
from peristat.base.exceptions import EmptyDomain, PoissonMismatch
from peristat.base.utils import check_dimension, voigt_pairs
from peristat.ccm import ElasticTensor

logger = logging.getLogger(__name__)

AXES = "xyz"


class BondClass(IntEnum):
    MATRIX = 0
    PARTICLE = 1
    INTERFACE = 2


@dataclass
class NodeSet:
    positions: np.ndarray
    volumes: np.ndarray
    spacing: float
    lower: np.ndarray
    upper: np.ndarray
    shape: Tuple[int, ...]
    grid_index: np.ndarray
    boundary: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def count(self):
        return self.positions.shape[0]

    def face_nodes(self, face):
        return self.boundary[face]

    def band_nodes(self, face, width):
        """
        nodes whose centres lie within ``width`` of the face plane
        """
        axis, sign = _parse_face(face)
        if sign > 0:
            distance = self.upper[axis] - self.positions[:, axis]
        else:
            distance = self.positions[:, axis] - self.lower[axis]
        return np.flatnonzero(distance <= width + 1e-9 * self.spacing)

    def midpoint_node(self, face):
        """
        face node nearest to the face centre, lowest id on ties
        """
        nodes = self.boundary[face]
        center = 0.5 * (self.lower + self.upper)
        axis, _ = _parse_face(face)
        others = [k for k in range(self.dim) if k != axis]
        distance = np.linalg.norm(self.positions[nodes][:, others] - center[others], axis=1)
        return int(nodes[np.argmin(distance)])

    def face_measure(self, face):
        axis, _ = _parse_face(face)
        extents = self.upper - self.lower
        return float(np.prod([extents[k] for k in range(self.dim) if k != axis]))

    def node_lookup(self):
        """
        :return: array of grid shape with node ids, -1 where a node was cut out
        """
        table = -np.ones(self.shape, dtype=int)
        table[tuple(self.grid_index.T)] = np.arange(self.count)
        return table


def _parse_face(face):
    axis = AXES.index(face[0])
    return axis, (1 if face[1] == "+" else -1)


def face_names(dim):
    return [a + s for a in AXES[:dim] for s in "-+"]


def build_grid(lower, upper, spacing, notches: Sequence[Tuple[Sequence[float], Sequence[float]]] = ()) -> NodeSet:
    """
    cell-centred uniform grid over a box, minus notch cut-outs

    :param lower: box lower corner
    :param upper: box upper corner
    :param spacing: grid spacing, must divide the extents
    :param notches: boxes (lo, hi) whose node centres are removed
    :return: NodeSet
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = check_dimension(len(lower))
    counts = (upper - lower) / spacing
    shape = tuple(int(round(c)) for c in counts)
    if np.any(np.abs(counts - np.asarray(shape)) > 1e-9 * np.maximum(counts, 1.0)) or min(shape) < 1:
        raise ValueError("spacing {} does not divide the extents {}".format(spacing, upper - lower))

    grid_index = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), axis=-1).reshape(-1, dim)
    positions = lower + (grid_index + 0.5) * spacing

    keep = np.ones(len(positions), dtype=bool)
    for lo, hi in notches:
        inside = np.all((positions >= np.asarray(lo)) & (positions <= np.asarray(hi)), axis=1)
        keep &= ~inside
    positions = positions[keep]
    grid_index = grid_index[keep]
    if positions.shape[0] == 0:
        raise EmptyDomain("no nodes remain in box {} - {}".format(lower, upper))

    boundary = {}
    for face in face_names(dim):
        axis, sign = _parse_face(face)
        layer = shape[axis] - 1 if sign > 0 else 0
        boundary[face] = np.flatnonzero(grid_index[:, axis] == layer)

    return NodeSet(
        positions=positions,
        volumes=np.full(positions.shape[0], spacing ** dim),
        spacing=float(spacing),
        lower=lower,
        upper=upper,
        shape=shape,
        grid_index=grid_index,
        boundary=boundary,
    )


@dataclass(frozen=True)
class HorizonSpec:
    delta: float

    @classmethod
    def from_spacing(cls, spacing, factor=defaults.HORIZON_FACTOR):
        return cls(delta=factor * spacing)


@dataclass(frozen=True)
class MicromodulusCoeffs:
    a0: float
    a1: float
    a2: float
    length: float

    def as_tuple(self):
        return self.a0, self.a1, self.a2


@dataclass
class BondSet:
    nodes: NodeSet
    i: np.ndarray
    j: np.ndarray
    xi: np.ndarray
    length: np.ndarray
    direction: np.ndarray
    bond_class: np.ndarray
    node_particle: np.ndarray
    endpoint_moduli: np.ndarray
    micromodulus: np.ndarray
    critical_stretch: np.ndarray
    intact: np.ndarray

    @property
    def count(self):
        return self.i.shape[0]

    @property
    def dim(self):
        return self.xi.shape[1]

    def copy(self):
        return replace(
            self,
            endpoint_moduli=self.endpoint_moduli.copy(),
            micromodulus=self.micromodulus.copy(),
            critical_stretch=self.critical_stretch.copy(),
            intact=self.intact.copy(),
        )

    def fresh(self):
        """
        copy with every bond intact
        """
        bonds = self.copy()
        bonds.intact[:] = True
        return bonds

    def bonds_per_node(self, only_intact=False):
        weights = self.intact.astype(float) if only_intact else np.ones(self.count)
        n = self.nodes.count
        return np.bincount(self.i, weights, n) + np.bincount(self.j, weights, n)

    def damage(self):
        """
        fraction of broken bonds in each node's horizon
        """
        total = self.bonds_per_node()
        intact = self.bonds_per_node(only_intact=True)
        damage = np.zeros(self.nodes.count)
        has_bonds = total > 0
        damage[has_bonds] = 1.0 - intact[has_bonds] / total[has_bonds]
        return damage

    def to_dataframe(self):
        return pd.DataFrame({
            "i": self.i,
            "j": self.j,
            "length": self.length,
            "class": [BondClass(c).name.lower() for c in self.bond_class],
            "micromodulus": self.micromodulus,
            "critical_stretch": self.critical_stretch,
            "intact": self.intact.astype(int),
        })

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as file:
            np.savez(
                file,
                positions=self.nodes.positions,
                volumes=self.nodes.volumes,
                spacing=self.nodes.spacing,
                lower=self.nodes.lower,
                upper=self.nodes.upper,
                shape=np.asarray(self.nodes.shape),
                grid_index=self.nodes.grid_index,
                i=self.i,
                j=self.j,
                bond_class=self.bond_class,
                node_particle=self.node_particle,
                endpoint_moduli=self.endpoint_moduli,
                micromodulus=self.micromodulus,
                critical_stretch=self.critical_stretch,
                intact=self.intact,
            )
        return path

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            lower = data["lower"]
            upper = data["upper"]
            shape = tuple(int(s) for s in data["shape"])
            grid_index = data["grid_index"]
            boundary = {}
            for face in face_names(len(shape)):
                axis, sign = _parse_face(face)
                boundary[face] = np.flatnonzero(grid_index[:, axis] == (shape[axis] - 1 if sign > 0 else 0))
            nodes = NodeSet(
                positions=data["positions"],
                volumes=data["volumes"],
                spacing=float(data["spacing"]),
                lower=lower,
                upper=upper,
                shape=shape,
                grid_index=grid_index,
                boundary=boundary,
            )
            i, j = data["i"], data["j"]
            xi = nodes.positions[j] - nodes.positions[i]
            length = np.linalg.norm(xi, axis=1)
            return cls(
                nodes=nodes,
                i=i,
                j=j,
                xi=xi,
                length=length,
                direction=xi / length[:, None],
                bond_class=data["bond_class"],
                node_particle=data["node_particle"],
                endpoint_moduli=data["endpoint_moduli"],
                micromodulus=data["micromodulus"],
                critical_stretch=data["critical_stretch"],
                intact=data["intact"],
            )


def build_bonds(nodes: NodeSet, horizon: HorizonSpec, phase_query=None) -> BondSet:
    """
    one bond per unordered node pair within the horizon, ordered by (i, j)

    :param nodes: NodeSet
    :param horizon: HorizonSpec
    :param phase_query: optional callable mapping (n, dim) points to a particle mask
    :return: BondSet with zero moduli and infinite critical stretch
    """
    if horizon.delta < nodes.spacing:
        raise ValueError("horizon {} smaller than spacing {}".format(horizon.delta, nodes.spacing))
    tree = cKDTree(nodes.positions)
    pairs = tree.query_pairs(horizon.delta * (1.0 + defaults.HORIZON_TOLERANCE), output_type="ndarray")
    pairs = np.sort(pairs.reshape(-1, 2), axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    i, j = pairs[order, 0], pairs[order, 1]

    xi = nodes.positions[j] - nodes.positions[i]
    length = np.linalg.norm(xi, axis=1)
    if phase_query is None:
        node_particle = np.zeros(nodes.count, dtype=bool)
    else:
        node_particle = np.asarray(phase_query(nodes.positions), dtype=bool)
    n_particle = node_particle[i].astype(int) + node_particle[j].astype(int)
    bond_class = np.where(
        n_particle == 2, BondClass.PARTICLE, np.where(n_particle == 0, BondClass.MATRIX, BondClass.INTERFACE)
    ).astype(np.int8)

    nb = i.shape[0]
    logger.debug("%d nodes, %d bonds (delta=%g)", nodes.count, nb, horizon.delta)
    return BondSet(
        nodes=nodes,
        i=i,
        j=j,
        xi=xi,
        length=length,
        direction=xi / length[:, None] if nb else xi,
        bond_class=bond_class,
        node_particle=node_particle,
        endpoint_moduli=np.zeros((nb, 2)),
        micromodulus=np.zeros(nb),
        critical_stretch=np.full(nb, np.inf),
        intact=np.ones(nb, dtype=bool),
    )


def base_micromodulus(zeta, coeffs: MicromodulusCoeffs):
    """
    (a0 + a1 cos 2theta + a2 cos 4theta) exp(-|zeta| / l), theta measured from the 1-axis

    :param zeta: (dim,) or (n, dim) bond vectors, non-zero
    :param coeffs: MicromodulusCoeffs
    :return: scalar or (n,) micromodulus
    """
    zeta = np.asarray(zeta, dtype=float)
    single = zeta.ndim == 1
    zeta = np.atleast_2d(zeta)
    r = np.linalg.norm(zeta, axis=1)
    theta = np.arccos(np.clip(zeta[:, 0] / r, -1.0, 1.0))
    c = (coeffs.a0 + coeffs.a1 * np.cos(2.0 * theta) + coeffs.a2 * np.cos(4.0 * theta)) * np.exp(-r / coeffs.length)
    return float(c[0]) if single else c


def assign_micromodulus(bonds: BondSet, matrix: MicromodulusCoeffs, particle: Optional[MicromodulusCoeffs] = None):
    """
    endpoint moduli from each endpoint's phase; the bond modulus is their mean
    """
    particle = particle or matrix
    c_matrix = base_micromodulus(bonds.xi, matrix) if bonds.count else np.zeros(0)
    c_particle = base_micromodulus(bonds.xi, particle) if bonds.count else np.zeros(0)
    start = np.where(bonds.node_particle[bonds.i], c_particle, c_matrix)
    end = np.where(bonds.node_particle[bonds.j], c_particle, c_matrix)
    bonds.endpoint_moduli = np.stack([start, end], axis=1)
    bonds.micromodulus = 0.5 * (start + end)
    return bonds


def assign_critical_stretch(bonds: BondSet, by_class: Dict[BondClass, float]):
    s0 = np.full(bonds.count, np.inf)
    for bond_class, value in by_class.items():
        s0[bonds.bond_class == int(bond_class)] = value
    bonds.critical_stretch = s0
    return bonds


def horizon_offsets(horizon, spacing, dim):
    """
    lattice vectors of an interior node's neighbourhood
    """
    reach = int(np.floor(horizon / spacing * (1.0 + defaults.HORIZON_TOLERANCE)))
    offsets = np.array(list(itertools.product(range(-reach, reach + 1), repeat=dim)), dtype=float) * spacing
    r = np.linalg.norm(offsets, axis=1)
    keep = (r > 0.0) & (r <= horizon * (1.0 + defaults.HORIZON_TOLERANCE))
    return offsets[keep]


def strain_tensor(voigt_strain, dim):
    strain = np.zeros((dim, dim))
    for k, (a, b) in enumerate(voigt_pairs(dim)):
        if a == b:
            strain[a, a] = voigt_strain[k]
        else:
            strain[a, b] = strain[b, a] = 0.5 * voigt_strain[k]
    return strain


def lattice_energy_basis(strain, horizon, spacing, length, dim, normalized=True):
    """
    interior PD energy density per unit coefficient (a0, a1, a2) under a uniform strain

    Normalized by |zeta|^2 unless ``normalized=False``, which gives the literal
    (zeta . eps zeta)^2 weighting.

    :param strain: (dim, dim) small strain tensor
    :return: (3,) energy densities for the 1, cos 2theta and cos 4theta terms
    """
    zeta = horizon_offsets(horizon, spacing, dim)
    r = np.linalg.norm(zeta, axis=1)
    theta = np.arccos(np.clip(zeta[:, 0] / r, -1.0, 1.0))
    projection = np.einsum("ni,ij,nj->n", zeta, strain, zeta) ** 2
    if normalized:
        projection = projection / r ** 2
    weight = 0.25 * np.exp(-r / length) * projection * spacing ** dim
    return np.array([np.sum(weight), np.sum(weight * np.cos(2.0 * theta)), np.sum(weight * np.cos(4.0 * theta))])


def interior_energy_density(coeffs: MicromodulusCoeffs, strain, horizon, spacing, dim, normalized=True):
    basis = lattice_energy_basis(strain, horizon, spacing, coeffs.length, dim, normalized)
    return float(basis @ np.asarray(coeffs.as_tuple()))


def calibration_states(tensor: ElasticTensor):
    """
    homogeneous uniaxial-stress strain states (one per axis) and pure-shear states, Voigt form
    """
    compliance = np.linalg.inv(tensor.matrix)
    dim = tensor.dim
    axial = [compliance[:, a] / compliance[a, a] for a in range(dim)]
    shear = [compliance[:, k] / compliance[k, k] for k in range(dim, compliance.shape[0])]
    return axial, shear


def calibrate_to_tensor(tensor: ElasticTensor, length, horizon, spacing, normalized=True) -> MicromodulusCoeffs:
    """
    least-squares match of the interior lattice energy to the continuum energy density
    """
    dim = tensor.dim
    axial, shear = calibration_states(tensor)
    isotropic = tensor.is_isotropic()
    states = axial if isotropic else axial + shear

    rows = []
    targets = []
    for voigt_strain in states:
        rows.append(lattice_energy_basis(strain_tensor(voigt_strain, dim), horizon, spacing, length, dim, normalized))
        targets.append(tensor.energy_density(voigt_strain))
    rows = np.asarray(rows)
    targets = np.asarray(targets)

    if isotropic:
        a0 = float(rows[:, 0] @ targets / (rows[:, 0] @ rows[:, 0]))
        coefficients = (a0, 0.0, 0.0)
    else:
        coefficients = tuple(float(a) for a in np.linalg.lstsq(rows, targets, rcond=None)[0])
    logger.debug("calibrated micromodulus %s (isotropic=%s)", coefficients, isotropic)
    return MicromodulusCoeffs(*coefficients, length=length)


def bond_based_poisson_ratio(dim):
    return defaults.POISSON_RATIO_2D if dim == 2 else defaults.POISSON_RATIO_3D


def calibrate_micromodulus_coeffs(youngs_modulus, poisson_ratio, length, horizon, spacing, dim, normalized=True):
    """
    micromodulus coefficients of an isotropic phase

    :param youngs_modulus: E
    :param poisson_ratio: must equal 1/3 in 2D and 1/4 in 3D
    :param length: characteristic length l
    :param horizon: delta
    :param spacing: grid spacing
    :param dim: 2 or 3
    :return: MicromodulusCoeffs
    """
    expected = bond_based_poisson_ratio(dim)
    if abs(poisson_ratio - expected) > 1e-6:
        raise PoissonMismatch("bond-based peridynamics in {}D requires nu = {:.6f}, got {}".format(
            dim, expected, poisson_ratio))
    tensor = ElasticTensor.isotropic(youngs_modulus, poisson_ratio, dim)
    return calibrate_to_tensor(tensor, length, horizon, spacing, normalized)
