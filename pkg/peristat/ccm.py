"""
Small-strain linear elasticity on voxel meshes of the RVE.

Elements are bilinear quadrilaterals (2D, plane stress) or trilinear hexahedra
(3D) with 2x2(x2) Gauss quadrature. Mesh elements coincide with the cells of the
peridynamic grid, so PD nodes sit at element centroids.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from peristat.base import defaults
from peristat.base.exceptions import ConfigError
from peristat.base.solver import LinearSolver
from peristat.base.utils import check_dimension, voigt_pairs

logger = logging.getLogger(__name__)


class ElasticTensor:
    """
    Stiffness in Voigt form with engineering shear strains
    """
    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape not in ((3, 3), (6, 6)):
            raise ValueError("Voigt stiffness must be 3x3 or 6x6, got {}".format(matrix.shape))
        self.matrix = 0.5 * (matrix + matrix.T)

    @classmethod
    def isotropic(cls, youngs_modulus, poisson_ratio, dim):
        check_dimension(dim)
        e, nu = youngs_modulus, poisson_ratio
        if dim == 2:
            factor = e / (1.0 - nu ** 2)
            return cls(factor * np.array([
                [1.0, nu, 0.0],
                [nu, 1.0, 0.0],
                [0.0, 0.0, 0.5 * (1.0 - nu)],
            ]))
        lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = e / (2.0 * (1.0 + nu))
        matrix = np.zeros((6, 6))
        matrix[:3, :3] = lam
        matrix[:3, :3] += 2.0 * mu * np.eye(3)
        matrix[3:, 3:] = mu * np.eye(3)
        return cls(matrix)

    @classmethod
    def from_lame(cls, lam, mu, dim):
        """
        isotropic structure with axial diagonal lam + 2 mu, axial off-diagonal lam, shear mu
        """
        n_axial = dim
        n = 3 if dim == 2 else 6
        matrix = np.zeros((n, n))
        matrix[:n_axial, :n_axial] = lam
        matrix[:n_axial, :n_axial] += 2.0 * mu * np.eye(n_axial)
        matrix[n_axial:, n_axial:] = mu * np.eye(n - n_axial)
        return cls(matrix)

    @property
    def dim(self):
        return 2 if self.matrix.shape[0] == 3 else 3

    def compliance(self):
        return np.linalg.inv(self.matrix)

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    def is_positive_definite(self):
        return bool(self.eigenvalues()[0] > 0.0)

    def is_isotropic(self, rtol=1e-8):
        lam = self.matrix[0, 1]
        mu = self.matrix[-1, -1]
        reference = ElasticTensor.from_lame(lam, mu, self.dim).matrix
        return bool(np.linalg.norm(self.matrix - reference) <= rtol * np.linalg.norm(self.matrix))

    def energy_density(self, voigt_strain):
        """
        1/2 eps . C . eps

        :param voigt_strain: (..., nv) strains with engineering shear
        :return: energy densities of shape (...)
        """
        strain = np.asarray(voigt_strain, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", strain, self.matrix, strain)

    def engineering_constants(self):
        """
        Young's moduli, Poisson ratios nu_ij = -S_ij / S_ii and shear moduli from the compliance
        """
        compliance = self.compliance()
        dim = self.dim
        axes = "xyz"[:dim]
        constants = {}
        for a in range(dim):
            constants["E_" + axes[a]] = 1.0 / compliance[a, a]
        for a, b in itertools.permutations(range(dim), 2):
            constants["nu_" + axes[a] + axes[b]] = -compliance[a, b] / compliance[a, a]
        for k, (a, b) in enumerate(voigt_pairs(dim)):
            if a != b:
                constants["G_" + axes[a] + axes[b]] = 1.0 / compliance[k, k]
        return constants

    def relative_difference(self, other):
        other = other.matrix if isinstance(other, ElasticTensor) else np.asarray(other)
        return float(np.linalg.norm(self.matrix - other) / np.linalg.norm(self.matrix))

    def scaled(self, factor):
        return ElasticTensor(factor * self.matrix)

    def to_dict(self):
        return {"dim": self.dim, "voigt": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, data):
        tensor = cls(data["voigt"])
        if "dim" in data and data["dim"] != tensor.dim:
            raise ConfigError("does not match the Voigt shape", "dim")
        return tensor

    def to_series(self, prefix="C"):
        n = self.matrix.shape[0]
        return pd.Series({
            "{}{}{}".format(prefix, a + 1, b + 1): self.matrix[a, b] for a in range(n) for b in range(a, n)
        })

    def __repr__(self):
        return "ElasticTensor({})".format(np.array2string(self.matrix, precision=6))


@dataclass(frozen=True)
class Material:
    youngs_modulus: float
    poisson_ratio: float

    def tensor(self, dim):
        return ElasticTensor.isotropic(self.youngs_modulus, self.poisson_ratio, dim)

    def to_dict(self):
        return {"youngs_modulus": self.youngs_modulus, "poisson_ratio": self.poisson_ratio}


@dataclass(frozen=True)
class PhaseMaterials:
    matrix: Material
    particle: Material

    def tensors(self, dim):
        """
        :return: [matrix tensor, particle tensor], indexed by Phase value
        """
        return [self.matrix.tensor(dim), self.particle.tensor(dim)]

    @classmethod
    def default_2d(cls):
        return cls(
            matrix=Material(defaults.MATRIX_YOUNGS_MODULUS, defaults.POISSON_RATIO_2D),
            particle=Material(defaults.PARTICLE_YOUNGS_MODULUS, defaults.POISSON_RATIO_2D),
        )


def _corner_signs(dim):
    return np.array(list(itertools.product((0, 1), repeat=dim)))


@dataclass
class VoxelMesh:
    lower: np.ndarray
    spacing: float
    shape: tuple
    vertices: np.ndarray
    connectivity: np.ndarray
    centroids: np.ndarray

    @classmethod
    def from_box(cls, lower, upper, spacing):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        dim = check_dimension(len(lower))
        counts = (upper - lower) / spacing
        shape = tuple(int(round(c)) for c in counts)
        if np.any(np.abs(counts - np.asarray(shape)) > 1e-9 * np.maximum(counts, 1.0)) or min(shape) < 1:
            raise ValueError("spacing {} does not divide the extents {}".format(spacing, upper - lower))

        vertex_shape = tuple(s + 1 for s in shape)
        vertex_index = np.stack(np.meshgrid(*[np.arange(s) for s in vertex_shape], indexing="ij"), -1).reshape(-1, dim)
        element_index = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), -1).reshape(-1, dim)
        corners = _corner_signs(dim)
        connectivity = np.stack([
            np.ravel_multi_index(tuple((element_index + c).T), vertex_shape) for c in corners
        ], axis=1)
        return cls(
            lower=lower,
            spacing=float(spacing),
            shape=shape,
            vertices=lower + vertex_index * spacing,
            connectivity=connectivity,
            centroids=lower + (element_index + 0.5) * spacing,
        )

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.connectivity.shape[0]

    @property
    def element_volume(self):
        return self.spacing ** self.dim

    @property
    def measure(self):
        return self.n_elements * self.element_volume

    def vertex_grid_index(self):
        return np.rint((self.vertices - self.lower) / self.spacing).astype(int)

    def face_vertices(self, axis, upper):
        index = self.vertex_grid_index()[:, axis]
        return np.flatnonzero(index == (self.shape[axis] if upper else 0))

    def boundary_vertices(self):
        index = self.vertex_grid_index()
        on_boundary = np.any((index == 0) | (index == np.asarray(self.shape)), axis=1)
        return np.flatnonzero(on_boundary)

    def vertex_at(self, grid_index):
        return int(np.ravel_multi_index(tuple(grid_index), tuple(s + 1 for s in self.shape)))

    def element_ids(self, grid_index):
        """
        element ids of cell grid indices, e.g. those of a NodeSet over the same box
        """
        return np.ravel_multi_index(tuple(np.asarray(grid_index).T), self.shape)


class Q1Element:
    """
    reference bilinear/trilinear element of side ``spacing``
    """
    def __init__(self, dim, spacing):
        self.dim = dim
        self.spacing = spacing
        self.signs = 2 * _corner_signs(dim) - 1
        gauss = 1.0 / np.sqrt(3.0)
        self.gauss_points = np.array(list(itertools.product((-gauss, gauss), repeat=dim)))
        self.det_jacobian = (0.5 * spacing) ** dim
        self.pairs = voigt_pairs(dim)
        self.b_matrices = np.array([self._b_matrix(p) for p in self.gauss_points])
        self.b_integral = self.b_matrices.sum(axis=0) * self.det_jacobian
        return

    def shape_gradients(self, point):
        """
        :return: (n_corners, dim) physical derivatives at a reference point
        """
        factors = 0.5 * (1.0 + self.signs * point[None, :])
        gradients = np.empty(self.signs.shape)
        for k in range(self.dim):
            others = np.prod(np.delete(factors, k, axis=1), axis=1)
            gradients[:, k] = 0.5 * self.signs[:, k] * others * 2.0 / self.spacing
        return gradients

    def _b_matrix(self, point):
        gradients = self.shape_gradients(point)
        n_corners = gradients.shape[0]
        b = np.zeros((len(self.pairs), self.dim * n_corners))
        for k, (a, c) in enumerate(self.pairs):
            if a == c:
                b[k, a::self.dim] = gradients[:, a]
            else:
                b[k, a::self.dim] = gradients[:, c]
                b[k, c::self.dim] = gradients[:, a]
        return b

    def stiffness(self, tensor: ElasticTensor):
        return np.einsum("gki,kl,glj->ij", self.b_matrices, tensor.matrix, self.b_matrices) * self.det_jacobian


@dataclass
class EnergyDensityField:
    """
    scalar energy density per PD node (or per element)
    """
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self):
        return self.values.shape[0]

    def max(self):
        return float(self.values.max()) if self.values.size else 0.0


@dataclass
class DisplacementField:
    mesh: VoxelMesh
    values: np.ndarray
    element_phase: np.ndarray
    tensors: Sequence[ElasticTensor]
    fixed_dofs: Optional[np.ndarray] = None
    fixed_values: Optional[np.ndarray] = None

    def element_displacements(self):
        return self.values[self.mesh.connectivity].reshape(self.mesh.n_elements, -1)

    def gauss_strains(self, element=None):
        """
        :return: (n_elements, n_gauss, nv) Voigt strains
        """
        element = element or Q1Element(self.mesh.dim, self.mesh.spacing)
        return np.einsum("gki,ei->egk", element.b_matrices, self.element_displacements())

    def mean_strains(self):
        return self.gauss_strains().mean(axis=1)

    def element_mean_displacement(self):
        """
        corner average, i.e. the bilinear interpolant at the centroid
        """
        return self.values[self.mesh.connectivity].mean(axis=1)

    def at_nodes(self, nodes):
        """
        displacement at PD nodes, which sit at element centroids
        """
        return self.element_mean_displacement()[self.mesh.element_ids(nodes.grid_index)]


@dataclass
class CellFunctions:
    """
    cell-problem solutions, one vertex field per unit Voigt strain; zero on the boundary
    """
    mesh: VoxelMesh
    element_phase: np.ndarray
    chi: np.ndarray

    @property
    def n_strains(self):
        return self.chi.shape[0]


class ElasticitySolver(LinearSolver):
    """
    Two-phase voxel elasticity
    """
    def __init__(
            self,
            mesh: VoxelMesh,
            element_phase,
            tensors: Sequence[ElasticTensor],
            method=defaults.SOLVER_METHOD,
            tol=defaults.SOLVER_TOLERANCE,
    ):
        """
        Initialise solver

        :param mesh: VoxelMesh
        :param element_phase: per-element index into tensors
        :param tensors: ElasticTensor per phase
        :param method: linear solver method
        :param tol: iterative solver tolerance
        """
        super().__init__(method=method, tol=tol)
        self.mesh = mesh
        self.element_phase = np.asarray(element_phase, dtype=int)
        self.tensors = list(tensors)
        self.element = Q1Element(mesh.dim, mesh.spacing)
        self._stiffness = None
        return

    @property
    def n_dofs(self):
        return self.mesh.n_vertices * self.mesh.dim

    def element_dofs(self):
        dim = self.mesh.dim
        dofs = self.mesh.connectivity[:, :, None] * dim + np.arange(dim)[None, None, :]
        return dofs.reshape(self.mesh.n_elements, -1)

    def stiffness(self):
        if self._stiffness is None:
            local = np.array([self.element.stiffness(t) for t in self.tensors])
            dofs = self.element_dofs()
            n_local = dofs.shape[1]
            rows = np.repeat(dofs, n_local, axis=1).ravel()
            cols = np.tile(dofs, (1, n_local)).ravel()
            data = local[self.element_phase].reshape(self.mesh.n_elements, -1).ravel()
            self._stiffness = sparse.coo_matrix((data, (rows, cols)), shape=(self.n_dofs, self.n_dofs)).tocsr()
            self._logger.debug("assembled %d dofs over %d elements", self.n_dofs, self.mesh.n_elements)
        return self._stiffness

    def stretch_constraints(self, axis, magnitude):
        """
        -axis face fixed along axis, +axis face displaced by magnitude along axis,
        lateral faces free; rigid motions removed at the -axis face mid vertex
        """
        mesh = self.mesh
        dim = mesh.dim
        dofs = []
        values = []
        for v in mesh.face_vertices(axis, upper=False):
            dofs.append(v * dim + axis)
            values.append(0.0)
        for v in mesh.face_vertices(axis, upper=True):
            dofs.append(v * dim + axis)
            values.append(magnitude)

        middle = [s // 2 for s in mesh.shape]
        middle[axis] = 0
        anchor = mesh.vertex_at(middle)
        for k in range(dim):
            if k != axis:
                dofs.append(anchor * dim + k)
                values.append(0.0)
        if dim == 3:
            j, k = [a for a in range(3) if a != axis]
            edge = list(middle)
            edge[j] = mesh.shape[j]
            dofs.append(mesh.vertex_at(edge) * dim + k)
            values.append(0.0)
        return np.asarray(dofs), np.asarray(values)

    def solve_stretch(self, axis, magnitude) -> DisplacementField:
        dofs, values = self.stretch_constraints(axis, magnitude)
        u = self.solve(self.stiffness(), np.zeros(self.n_dofs), dofs, values)
        return DisplacementField(
            mesh=self.mesh,
            values=u.reshape(-1, self.mesh.dim),
            element_phase=self.element_phase,
            tensors=self.tensors,
            fixed_dofs=dofs,
            fixed_values=values,
        )

    def unit_strain_loads(self):
        """
        :return: (nv, n_dofs) right-hand sides -int B^T C e_J
        """
        n_voigt = len(self.element.pairs)
        dofs = self.element_dofs()
        loads = np.zeros((n_voigt, self.n_dofs))
        for phase, tensor in enumerate(self.tensors):
            local = -self.element.b_integral.T @ tensor.matrix
            elements = np.flatnonzero(self.element_phase == phase)
            for j in range(n_voigt):
                np.add.at(loads[j], dofs[elements].ravel(), np.tile(local[:, j], elements.size))
        return loads

    def cell_problems(self) -> CellFunctions:
        dim = self.mesh.dim
        boundary = self.mesh.boundary_vertices()
        fixed = (boundary[:, None] * dim + np.arange(dim)[None, :]).ravel()
        chi = np.array([
            self.solve(self.stiffness(), rhs, fixed, 0.0).reshape(-1, dim) for rhs in self.unit_strain_loads()
        ])
        return CellFunctions(mesh=self.mesh, element_phase=self.element_phase, chi=chi)

    def homogenize(self, cell: CellFunctions) -> ElasticTensor:
        n_voigt = len(self.element.pairs)
        volume = self.mesh.element_volume
        averaged = np.zeros((n_voigt, n_voigt))
        for j in range(n_voigt):
            chi_e = cell.chi[j][self.mesh.connectivity].reshape(self.mesh.n_elements, -1)
            strain_integral = volume * np.eye(n_voigt)[j][None, :] + chi_e @ self.element.b_integral.T
            for phase, tensor in enumerate(self.tensors):
                mask = self.element_phase == phase
                averaged[:, j] += tensor.matrix @ strain_integral[mask].sum(axis=0)
        return ElasticTensor(averaged / self.mesh.measure)


def rve_mesh(rve, spacing):
    return VoxelMesh.from_box(np.zeros(rve.dim), np.full(rve.dim, rve.side_length), spacing)


def element_phases(rve, mesh):
    if rve is None:
        return np.zeros(mesh.n_elements, dtype=int)
    return rve.particle_mask(mesh.centroids).astype(int)


def check_resolution(rve, spacing):
    if rve is None or not rve.particles:
        return True
    smallest = min(min(p.semi_axes) for p in rve.particles)
    if smallest / spacing < 4.0:
        logger.warning("smallest semi-axis %.4g spans %.1f elements (< 4)", smallest, smallest / spacing)
        return False
    return True


def make_solver(rve, phases: PhaseMaterials, spacing, dim=None, side_length=None, **kwargs):
    """
    :param rve: RveSample, or None for a homogeneous matrix cell of given dim and side length
    """
    if rve is None:
        mesh = VoxelMesh.from_box(np.zeros(dim), np.full(dim, side_length), spacing)
    else:
        mesh = rve_mesh(rve, spacing)
    return ElasticitySolver(mesh, element_phases(rve, mesh), phases.tensors(mesh.dim), **kwargs)


def solve_stretch_displacement(rve, phases: PhaseMaterials, axis, magnitude, spacing, **kwargs) -> DisplacementField:
    """
    stretch along ``axis`` (0-based) with the +axis face displaced by ``magnitude``

    :param rve: RveSample or None (then pass dim and side_length)
    :param phases: PhaseMaterials
    :param axis: loading direction
    :param magnitude: face displacement
    :param spacing: element size
    :return: DisplacementField
    """
    solver = make_solver(rve, phases, spacing, **kwargs)
    if not 0 <= axis < solver.mesh.dim:
        raise ValueError("axis {} out of range".format(axis))
    return solver.solve_stretch(axis, magnitude)


def ccm_energy_density(field: DisplacementField, tensor_at=None) -> EnergyDensityField:
    """
    element energy density 1/2 eps:C:eps, Gauss averaged

    :param field: DisplacementField
    :param tensor_at: optional ElasticTensor (uniform) or per-element sequence; defaults to the field's phases
    :return: EnergyDensityField per element
    """
    strains = field.gauss_strains()
    if isinstance(tensor_at, ElasticTensor):
        return EnergyDensityField(tensor_at.energy_density(strains).mean(axis=1))
    if tensor_at is None:
        matrices = np.array([t.matrix for t in field.tensors])[field.element_phase]
    else:
        matrices = np.array([t.matrix for t in tensor_at])
    energy = 0.5 * np.einsum("egi,eij,egj->eg", strains, matrices, strains).mean(axis=1)
    return EnergyDensityField(energy)


def solve_cell_problems(rve, phases: PhaseMaterials, spacing, **kwargs) -> CellFunctions:
    """
    one Dirichlet cell problem per unit Voigt strain
    """
    check_resolution(rve, spacing)
    return make_solver(rve, phases, spacing, **kwargs).cell_problems()


def homogenized_tensor(rve, phases: PhaseMaterials, cell: CellFunctions, **kwargs) -> ElasticTensor:
    solver = ElasticitySolver(cell.mesh, cell.element_phase, phases.tensors(cell.mesh.dim), **kwargs)
    return solver.homogenize(cell)


def phase_fractions(element_phase, n_phases=2):
    return np.bincount(np.asarray(element_phase, dtype=int), minlength=n_phases) / len(element_phase)


def mixture_bounds(tensors: Sequence[ElasticTensor], fractions):
    """
    :return: (Reuss, Voigt) mixture tensors
    """
    voigt = sum(f * t.matrix for f, t in zip(fractions, tensors))
    reuss = np.linalg.inv(sum(f * t.compliance() for f, t in zip(fractions, tensors)))
    return ElasticTensor(reuss), ElasticTensor(voigt)


def within_bounds(tensor: ElasticTensor, reuss: ElasticTensor, voigt: ElasticTensor, rtol=1e-8):
    """
    Reuss <= tensor <= Voigt in the Loewner order
    """
    scale = rtol * np.abs(voigt.eigenvalues()).max()
    lower = np.linalg.eigvalsh(tensor.matrix - reuss.matrix).min()
    upper = np.linalg.eigvalsh(voigt.matrix - tensor.matrix).min()
    return bool(lower >= -scale and upper >= -scale)


def homogenize_rve(rve, phases: PhaseMaterials, spacing, **kwargs) -> Dict:
    """
    cell problems plus homogenized tensor and its mixture bounds for one sample
    """
    solver = make_solver(rve, phases, spacing, **kwargs)
    check_resolution(rve, spacing)
    cell = solver.cell_problems()
    tensor = solver.homogenize(cell)
    reuss, voigt = mixture_bounds(solver.tensors, phase_fractions(solver.element_phase, len(solver.tensors)))
    if not within_bounds(tensor, reuss, voigt, rtol=1e-6):
        logger.warning("homogenized tensor outside the Reuss/Voigt bounds")
    return {"tensor": tensor, "cell": cell, "reuss": reuss, "voigt": voigt}
