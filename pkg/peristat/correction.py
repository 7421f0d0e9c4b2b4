"""
Energy-based micromodulus correction.

Each RVE is stretched along every axis with the continuum solver; the ratio of
continuum to peridynamic energy density at every node scales the bond moduli,
which are then combined per bond by harmonic averaging and scalar scaling.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from peristat.base import defaults
from peristat.base.exceptions import DegenerateEnergy
from peristat.ccm import DisplacementField, EnergyDensityField, ccm_energy_density, make_solver
from peristat.discretization import AXES, BondSet

logger = logging.getLogger(__name__)

__all__ = [
    "EnergyDensityField",
    "CorrectionFactors",
    "pd_energy_density",
    "ccm_energy_at_nodes",
    "correction_factors",
    "harmonic_mean",
    "scalar_scaling",
    "corrected_micromodulus",
    "correct_rve",
]


@dataclass
class CorrectionFactors:
    """
    alpha[i, node]: continuum over peridynamic energy density under the stretch along axis i
    """
    alpha: np.ndarray

    @property
    def dim(self):
        return self.alpha.shape[0]

    def to_dataframe(self):
        return pd.DataFrame({"alpha_" + AXES[i]: self.alpha[i] for i in range(self.dim)})


def _nodal_displacement(bonds: BondSet, field):
    if isinstance(field, DisplacementField):
        return field.at_nodes(bonds.nodes)
    return np.asarray(field, dtype=float).reshape(bonds.nodes.count, -1)


def pd_energy_density(bonds: BondSet, field, normalized=True, micromodulus=None) -> EnergyDensityField:
    """
    W(y) = 1/4 sum over bonds at y of c (zeta . du)^2 / |zeta|^2 V'

    The default divides by |zeta|^2 so the density is the one the bond forces
    of the solver derive from. ``normalized=False`` evaluates the literal
    c (zeta . du)^2 form, which carries an extra |zeta|^2 weight per bond; the
    micromodulus must then be calibrated with the same flag.

    :param bonds: BondSet, only intact bonds contribute
    :param field: DisplacementField or (n, dim) nodal displacements
    :param normalized: divide the projected elongation squared by |zeta|^2
    :param micromodulus: per-bond moduli overriding bonds.micromodulus
    :return: EnergyDensityField per node
    """
    u = _nodal_displacement(bonds, field)
    c = bonds.micromodulus if micromodulus is None else np.asarray(micromodulus)
    projection = np.einsum("bi,bi->b", bonds.xi, u[bonds.j] - u[bonds.i]) ** 2
    if normalized:
        projection = projection / bonds.length ** 2
    density = 0.25 * c * projection * bonds.intact
    volumes = bonds.nodes.volumes
    n = bonds.nodes.count
    energy = np.bincount(bonds.i, density * volumes[bonds.j], n) + np.bincount(bonds.j, density * volumes[bonds.i], n)
    return EnergyDensityField(energy)


def ccm_energy_at_nodes(field: DisplacementField, nodes) -> EnergyDensityField:
    energy = ccm_energy_density(field)
    return EnergyDensityField(energy.values[field.mesh.element_ids(nodes.grid_index)])


def correction_factors(w_ccm: Sequence[EnergyDensityField], w_pd: Sequence[EnergyDensityField],
                       floor=defaults.ENERGY_FLOOR) -> CorrectionFactors:
    """
    pointwise ratio W_ccm / W_pd per loading direction

    :param w_ccm: one field per direction (a single field is accepted)
    :param w_pd: one field per direction
    :param floor: relative floor on W_pd
    :return: CorrectionFactors
    """
    if isinstance(w_ccm, EnergyDensityField):
        w_ccm, w_pd = [w_ccm], [w_pd]
    alpha = []
    for axis, (continuum, discrete) in enumerate(zip(w_ccm, w_pd)):
        threshold = floor * discrete.max()
        degenerate = np.flatnonzero(discrete.values <= threshold)
        if degenerate.size or discrete.max() <= 0.0:
            raise DegenerateEnergy("{} nodes with vanishing PD energy density under the {} stretch".format(
                max(degenerate.size, 1), AXES[axis]))
        alpha.append(continuum.values / discrete.values)
    return CorrectionFactors(np.asarray(alpha))


def harmonic_mean(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    total = a + b
    return np.divide(2.0 * a * b, total, out=np.zeros(np.broadcast(a, b).shape), where=total > 0.0)


def scalar_scaling(directional, direction):
    """
    1 / sqrt(sum_i (n_i / k_i)^2)

    :param directional: (n, dim) per-axis values k_i
    :param direction: (n, dim) unit vectors
    :return: (n,) scaled values
    """
    directional = np.asarray(directional, dtype=float)
    direction = np.asarray(direction, dtype=float)
    terms = np.divide(direction, directional, out=np.zeros(direction.shape), where=direction != 0.0)
    total = np.sum(terms ** 2, axis=1)
    return np.divide(1.0, np.sqrt(total), out=np.zeros(total.shape), where=total > 0.0)


def corrected_micromodulus(bonds: BondSet, factors: CorrectionFactors) -> BondSet:
    """
    :return: copy of bonds with c = scalar scaling of the per-axis harmonic means
    """
    start = bonds.endpoint_moduli[:, 0]
    end = bonds.endpoint_moduli[:, 1]
    directional = np.stack([
        harmonic_mean(factors.alpha[i][bonds.i] * start, factors.alpha[i][bonds.j] * end)
        for i in range(factors.dim)
    ], axis=1)
    corrected = bonds.copy()
    corrected.micromodulus = scalar_scaling(directional, bonds.direction)
    return corrected


def correct_rve(rve, bonds: BondSet, phases, magnitude=None, normalized=True, **kwargs):
    """
    stretch the RVE along each axis and correct the bond moduli

    :param rve: RveSample or None for a homogeneous cell
    :param bonds: BondSet over the RVE grid with base moduli assigned
    :param phases: PhaseMaterials
    :param magnitude: face displacement of the stretch, default a 1e-3 strain
    :return: (corrected BondSet, CorrectionFactors)
    """
    nodes = bonds.nodes
    dim = nodes.dim
    side = float(nodes.upper[0] - nodes.lower[0])
    magnitude = defaults.CORRECTION_STRETCH * side if magnitude is None else magnitude
    solver = make_solver(rve, phases, nodes.spacing, dim=dim, side_length=side, **kwargs)

    w_ccm = []
    w_pd = []
    for axis in range(dim):
        field = solver.solve_stretch(axis, magnitude)
        w_ccm.append(ccm_energy_at_nodes(field, nodes))
        w_pd.append(pd_energy_density(bonds, field, normalized=normalized))
    factors = correction_factors(w_ccm, w_pd)
    corrected = corrected_micromodulus(bonds, factors)
    logger.debug(
        "correction factors in [%.4f, %.4f]", float(factors.alpha.min()), float(factors.alpha.max())
    )
    return corrected, factors
