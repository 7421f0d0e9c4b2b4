import math

import numpy as np
import pytest

from peristat.base.exceptions import EmptyDomain, PoissonMismatch
from peristat.ccm import ElasticTensor
from peristat.discretization import (
    BondClass,
    BondSet,
    HorizonSpec,
    MicromodulusCoeffs,
    assign_critical_stretch,
    assign_micromodulus,
    base_micromodulus,
    build_bonds,
    build_grid,
    calibrate_micromodulus_coeffs,
    calibrate_to_tensor,
    calibration_states,
    horizon_offsets,
    interior_energy_density,
    strain_tensor,
)

spacing = 0.05
horizon = 3.0 * spacing
length = spacing / 3.0
matrix_modulus = 71.7


def uniaxial_stress_strain(e, nu, dim):
    if dim == 2:
        return np.array([e, -nu * e, 0.0])
    return np.array([e, -nu * e, -nu * e, 0.0, 0.0, 0.0])


def test_grid_coarse():
    nodes = build_grid([0.0, 0.0], [1.0, 1.0], 0.5)
    assert nodes.count == 4
    np.testing.assert_allclose(nodes.positions[0], [0.25, 0.25])
    np.testing.assert_allclose(nodes.volumes, 0.25)


def test_grid_count():
    nodes = build_grid([0.0, 0.0], [1.0, 1.0], 0.1)
    assert nodes.count == 100
    assert len(nodes.face_nodes("x-")) == 10
    assert nodes.face_measure("x+") == pytest.approx(1.0)


def test_grid_with_notch():
    nodes = build_grid([0.0, 0.0], [8.0, 8.0], 0.1, notches=[((0.0, 3.9), (1.0, 4.1))])
    assert nodes.count == 6400 - 20
    assert np.sum(nodes.node_lookup() < 0) == 20


def test_grid_errors():
    with pytest.raises(ValueError):
        build_grid([0.0, 0.0], [1.0, 1.0], 0.3)
    with pytest.raises(EmptyDomain):
        build_grid([0.0, 0.0], [1.0, 1.0], 0.5, notches=[((0.0, 0.0), (1.0, 1.0))])


def test_bands_and_midpoints():
    nodes = build_grid([0.0, 0.0], [1.0, 1.0], 0.1)
    assert len(nodes.band_nodes("x+", 0.3)) == 30
    mid = nodes.midpoint_node("x-")
    assert nodes.positions[mid, 0] == pytest.approx(0.05)
    assert abs(nodes.positions[mid, 1] - 0.5) == pytest.approx(0.05)


def test_no_bonds_beyond_horizon():
    nodes = build_grid([0.0, 0.0], [2.0, 1.0], 1.0)
    bonds = build_bonds(nodes, HorizonSpec(1.0))
    assert bonds.count == 1
    apart = build_grid([0.0, 0.0], [3.0, 1.0], 1.0, notches=[((1.0, 0.0), (2.0, 1.0))])
    assert apart.count == 2
    assert build_bonds(apart, HorizonSpec(1.5)).count == 0
    with pytest.raises(ValueError):
        build_bonds(nodes, HorizonSpec(0.5))


def test_collinear_nodes():
    nodes = build_grid([0.0, 0.0], [3 * spacing, spacing], spacing)
    bonds = build_bonds(nodes, HorizonSpec.from_spacing(spacing))
    assert bonds.count == 3
    assert np.all(bonds.i < bonds.j)


def test_interior_neighbourhood_2d():
    nodes = build_grid([0.0, 0.0], [1.0, 1.0], spacing)
    bonds = build_bonds(nodes, HorizonSpec(horizon))
    per_node = bonds.bonds_per_node()
    assert per_node.max() == 28
    assert len(horizon_offsets(horizon, spacing, 2)) == 28
    assert per_node.min() < 28


def test_interior_neighbourhood_3d():
    assert len(horizon_offsets(3.0, 1.0, 3)) == 122


def test_bond_symmetry():
    nodes = build_grid([0.0, 0.0], [0.5, 0.5], spacing)
    bonds = build_bonds(nodes, HorizonSpec(horizon))
    distance = np.linalg.norm(nodes.positions[:, None, :] - nodes.positions[None, :, :], axis=2)
    expected = np.argwhere(np.triu(distance <= horizon * (1.0 + 1e-10), k=1))
    np.testing.assert_array_equal(np.stack([bonds.i, bonds.j], axis=1), expected)


def test_bond_classes():
    nodes = build_grid([0.0, 0.0], [1.0, 0.1], 0.1)
    bonds = build_bonds(nodes, HorizonSpec(0.3), lambda points: points[:, 0] > 0.5)
    classes = dict(zip(zip(bonds.i.tolist(), bonds.j.tolist()), bonds.bond_class.tolist()))
    assert classes[(0, 1)] == BondClass.MATRIX
    assert classes[(4, 5)] == BondClass.INTERFACE
    assert classes[(6, 7)] == BondClass.PARTICLE
    assign_critical_stretch(bonds, {BondClass.MATRIX: 0.01161, BondClass.PARTICLE: 0.00338,
                                    BondClass.INTERFACE: 0.007495})
    assert bonds.critical_stretch[bonds.bond_class == BondClass.INTERFACE][0] == 0.007495


def test_base_micromodulus():
    coeffs = MicromodulusCoeffs(2.0, 0.5, 0.25, 0.1)
    isotropic = MicromodulusCoeffs(2.0, 0.0, 0.0, 0.1)
    assert base_micromodulus([0.1, 0.0], isotropic) == pytest.approx(2.0 * math.exp(-1.0))
    assert base_micromodulus([1e-12, 0.0], coeffs) == pytest.approx(2.75)
    zeta = 0.05 * np.array([1.0, 1.0]) / math.sqrt(2.0)
    assert base_micromodulus(zeta, coeffs) == pytest.approx((2.0 - 0.25) * math.exp(-0.5))


def test_mixed_endpoint_moduli():
    nodes = build_grid([0.0, 0.0], [0.2, 0.1], 0.1)
    bonds = build_bonds(nodes, HorizonSpec(0.1), lambda points: points[:, 0] > 0.1)
    assign_micromodulus(bonds, MicromodulusCoeffs(1.0, 0.0, 0.0, 0.1), MicromodulusCoeffs(3.0, 0.0, 0.0, 0.1))
    assert bonds.micromodulus[0] == pytest.approx(2.0 * math.exp(-1.0))
    np.testing.assert_allclose(bonds.endpoint_moduli[0], np.array([1.0, 3.0]) * math.exp(-1.0))


def test_isotropic_calibration():
    coeffs = calibrate_micromodulus_coeffs(matrix_modulus, 1.0 / 3.0, length, horizon, spacing, 2)
    assert coeffs.a1 == 0.0 and coeffs.a2 == 0.0
    assert coeffs.a0 > 0.0
    tensor = ElasticTensor.isotropic(matrix_modulus, 1.0 / 3.0, 2)
    for axis in range(2):
        strain = np.roll(uniaxial_stress_strain(1e-3, 1.0 / 3.0, 2)[:2], axis)
        voigt = np.append(strain, 0.0)
        ratio = interior_energy_density(coeffs, strain_tensor(voigt, 2), horizon, spacing, 2) / \
            tensor.energy_density(voigt)
        assert 0.98 <= ratio <= 1.02


def test_calibration_3d():
    coeffs = calibrate_micromodulus_coeffs(matrix_modulus, 0.25, 1.0 / 3.0, 3.0, 1.0, 3)
    tensor = ElasticTensor.isotropic(matrix_modulus, 0.25, 3)
    voigt = uniaxial_stress_strain(1e-3, 0.25, 3)
    ratio = interior_energy_density(coeffs, strain_tensor(voigt, 3), 3.0, 1.0, 3) / tensor.energy_density(voigt)
    assert ratio == pytest.approx(1.0, rel=0.02)


def test_poisson_mismatch():
    with pytest.raises(PoissonMismatch):
        calibrate_micromodulus_coeffs(matrix_modulus, 0.3, length, horizon, spacing, 2)
    with pytest.raises(PoissonMismatch):
        calibrate_micromodulus_coeffs(matrix_modulus, 1.0 / 3.0, length, horizon, spacing, 3)


def test_anisotropic_calibration():
    tensor = ElasticTensor([[120.0, 30.0, 0.0], [30.0, 90.0, 0.0], [0.0, 0.0, 30.0]])
    coeffs = calibrate_to_tensor(tensor, length, horizon, spacing)
    assert coeffs.a1 != 0.0
    axial, shear = calibration_states(tensor)
    for voigt in axial + shear:
        energy = interior_energy_density(coeffs, strain_tensor(voigt, 2), horizon, spacing, 2)
        assert energy == pytest.approx(tensor.energy_density(voigt), rel=1e-6)


def test_normalized_forms_differ():
    literal = calibrate_micromodulus_coeffs(matrix_modulus, 1.0 / 3.0, length, horizon, spacing, 2, normalized=False)
    normalized = calibrate_micromodulus_coeffs(matrix_modulus, 1.0 / 3.0, length, horizon, spacing, 2)
    assert literal.a0 != pytest.approx(normalized.a0)


def test_damage_and_storage(tmp_path):
    nodes = build_grid([0.0, 0.0], [0.5, 0.5], spacing)
    bonds = build_bonds(nodes, HorizonSpec(horizon))
    assign_micromodulus(bonds, MicromodulusCoeffs(1.0, 0.0, 0.0, length))
    np.testing.assert_array_equal(bonds.damage(), 0.0)
    bonds.intact[bonds.i == 0] = False
    assert bonds.damage()[0] == 1.0
    assert np.all(bonds.fresh().intact)

    loaded = BondSet.load(bonds.save(tmp_path / "bonds.npz"))
    np.testing.assert_array_equal(loaded.intact, bonds.intact)
    np.testing.assert_allclose(loaded.micromodulus, bonds.micromodulus)
    np.testing.assert_array_equal(loaded.nodes.face_nodes("y+"), nodes.face_nodes("y+"))
    assert loaded.to_dataframe().shape[0] == bonds.count
