"""
Statistical upscaling of RVE results and the equivalent macroscale micromodulus.
"""
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from peristat.base import defaults
from peristat.base.exceptions import NoFailure, RepresentabilityWarning
from peristat.base.utils import voigt_pairs
from peristat.ccm import ElasticTensor
from peristat.discretization import (
    AXES,
    MicromodulusCoeffs,
    bond_based_poisson_ratio,
    calibrate_to_tensor,
)
from peristat.peridynamics import SimHistory, quasi_static_run, rve_tension_program

logger = logging.getLogger(__name__)


@dataclass
class SampleResult:
    sample_index: int
    seed: int
    volume_fraction: float
    critical_stretch: List[float]
    tensor: ElasticTensor
    config_hash: Optional[str] = None

    def to_dict(self):
        return {
            "sample_index": self.sample_index,
            "seed": self.seed,
            "volume_fraction": self.volume_fraction,
            "critical_stretch": list(self.critical_stretch),
            "tensor": self.tensor.to_dict(),
            "engineering_constants": self.tensor.engineering_constants(),
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            sample_index=data["sample_index"],
            seed=data["seed"],
            volume_fraction=data["volume_fraction"],
            critical_stretch=list(data["critical_stretch"]),
            tensor=ElasticTensor.from_dict(data["tensor"]),
            config_hash=data.get("config_hash"),
        )

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_record(self):
        record = {
            "m": self.sample_index,
            "seed": self.seed,
            "volume_fraction": self.volume_fraction,
        }
        for axis, value in enumerate(self.critical_stretch):
            record["s0_" + AXES[axis]] = value
        record.update(self.tensor.to_series().to_dict())
        return record


def results_table(results: Sequence[SampleResult]):
    return pd.DataFrame([r.to_record() for r in results])


@dataclass
class ScalarAggregate:
    mean: np.ndarray
    std: np.ndarray
    stderr: np.ndarray
    count: int

    @property
    def single_sample(self):
        return self.count == 1


@dataclass
class EffectiveProperties:
    sample_count: int
    critical_stretch: List[float]
    critical_stretch_std: List[float]
    critical_stretch_stderr: List[float]
    tensor: ElasticTensor
    coefficients: MicromodulusCoeffs
    horizon: float
    fit_residual: float
    notes: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "sample_count": self.sample_count,
            "critical_stretch": list(self.critical_stretch),
            "critical_stretch_std": [_nullable(v) for v in self.critical_stretch_std],
            "critical_stretch_stderr": [_nullable(v) for v in self.critical_stretch_stderr],
            "tensor": self.tensor.to_dict(),
            "micromodulus": {
                "a0": self.coefficients.a0,
                "a1": self.coefficients.a1,
                "a2": self.coefficients.a2,
                "length": self.coefficients.length,
            },
            "horizon": self.horizon,
            "fit_residual": self.fit_residual,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data):
        micromodulus = data["micromodulus"]
        return cls(
            sample_count=data["sample_count"],
            critical_stretch=[float(v) for v in data["critical_stretch"]],
            critical_stretch_std=[_from_nullable(v) for v in data["critical_stretch_std"]],
            critical_stretch_stderr=[_from_nullable(v) for v in data["critical_stretch_stderr"]],
            tensor=ElasticTensor.from_dict(data["tensor"]),
            coefficients=MicromodulusCoeffs(
                micromodulus["a0"], micromodulus["a1"], micromodulus["a2"], micromodulus["length"]
            ),
            horizon=data["horizon"],
            fit_residual=data["fit_residual"],
            notes=list(data.get("notes", [])),
        )

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def summary(self):
        """
        one row per quantity, the text form of the handoff artifact
        """
        rows = [("M", self.sample_count, None)]
        for axis, (mean, stderr) in enumerate(zip(self.critical_stretch, self.critical_stretch_stderr)):
            rows.append(("s0_" + AXES[axis], mean, stderr))
        for name, value in self.tensor.to_series("A").items():
            rows.append((name, value, None))
        rows.extend([
            ("a0", self.coefficients.a0, None),
            ("a1", self.coefficients.a1, None),
            ("a2", self.coefficients.a2, None),
            ("length", self.coefficients.length, None),
            ("fit_residual", self.fit_residual, None),
        ])
        return pd.DataFrame(rows, columns=["quantity", "value", "stderr"])


def _nullable(value):
    return None if value is None or not np.isfinite(value) else float(value)


def _from_nullable(value):
    return float("nan") if value is None else float(value)


def critical_stretch_from_history(history: SimHistory, side_length, break_fraction=defaults.BREAK_FRACTION):
    """
    imposed elongation over side length at the first step whose stress falls
    below ``break_fraction`` of the running peak
    """
    peak = 0.0
    for state, stress in zip(history.states, history.stresses()):
        peak = max(peak, stress)
        if peak > 0.0 and stress < break_fraction * peak:
            return state.elongation / side_length
    raise NoFailure("stress never fell below {:.0%} of its peak {:.4g} in {} steps".format(
        break_fraction, peak, len(history.states) - 1))


def rve_critical_stretch(bonds, axis, program=None, side_length=None, break_fraction=defaults.BREAK_FRACTION,
                         snapshot_dir=None, **kwargs):
    """
    effective critical stretch of one RVE along one axis

    :param bonds: corrected BondSet of the RVE; runs start from all bonds intact
    :param axis: loading direction
    :param program: LoadProgram, the two-sided RVE tension program by default
    :param side_length: RVE side, taken from the grid by default
    :return: (critical stretch, SimHistory)
    """
    nodes = bonds.nodes
    if side_length is None:
        side_length = float(nodes.upper[axis] - nodes.lower[axis])
    program = program or rve_tension_program(nodes, axis)
    history = quasi_static_run(bonds.fresh(), program, snapshot_dir=snapshot_dir, **kwargs)
    return critical_stretch_from_history(history, side_length, break_fraction), history


def aggregate_scalar(values) -> ScalarAggregate:
    """
    sample mean with standard deviation and standard error; both are NaN for one sample

    :param values: (M,) or (M, dim) per-sample values
    """
    values = np.asarray(values, dtype=float)
    count = values.shape[0]
    if count < 1:
        raise ValueError("no samples to aggregate")
    mean = values.mean(axis=0)
    if count == 1:
        std = np.full(mean.shape, np.nan)
        stderr = np.full(mean.shape, np.nan)
    else:
        std = values.std(axis=0, ddof=1)
        stderr = std / np.sqrt(count)
    return ScalarAggregate(mean=mean, std=std, stderr=stderr, count=count)


def convergence_table(values):
    """
    running mean, standard deviation and standard error for M = 1..N
    """
    values = np.asarray(values, dtype=float)
    rows = []
    for m in range(1, values.shape[0] + 1):
        aggregate = aggregate_scalar(values[:m])
        rows.append({"M": m, "mean": float(aggregate.mean), "std": float(aggregate.std),
                     "stderr": float(aggregate.stderr)})
    return pd.DataFrame(rows)


def directional_critical_stretch(critical_stretch, xi):
    """
    1 / sqrt(sum_i (v_i / s_i)^2) with v the unit bond direction

    :param critical_stretch: (dim,) per-axis values
    :param xi: (dim,) or (n, dim) bond vectors
    """
    s = np.asarray(critical_stretch, dtype=float)
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    v = np.atleast_2d(xi)
    v = v / np.linalg.norm(v, axis=1)[:, None]
    value = 1.0 / np.sqrt(np.sum((v / s[None, :]) ** 2, axis=1))
    return float(value[0]) if single else value


def aggregate_tensor(tensors: Sequence[ElasticTensor]) -> ElasticTensor:
    if not tensors:
        raise ValueError("no tensors to aggregate")
    shapes = {t.matrix.shape for t in tensors}
    if len(shapes) != 1:
        raise ValueError("tensors of different Voigt shapes: {}".format(sorted(shapes)))
    return ElasticTensor(np.mean([t.matrix for t in tensors], axis=0))


def _quadrature(horizon, dim, order):
    """
    :return: (points (q, dim), weights (q,)) over the ball of radius ``horizon``
    """
    r, wr = np.polynomial.legendre.leggauss(order)
    r = 0.5 * horizon * (r + 1.0)
    wr = 0.5 * horizon * wr
    phi, wphi = np.polynomial.legendre.leggauss(order)
    phi = np.pi * (phi + 1.0)
    wphi = np.pi * wphi
    if dim == 2:
        rr, pp = np.meshgrid(r, phi, indexing="ij")
        weights = np.outer(wr * r, wphi).ravel()
        points = np.stack([rr * np.cos(pp), rr * np.sin(pp)], axis=-1).reshape(-1, 2)
        return points, weights
    theta, wtheta = np.polynomial.legendre.leggauss(order)
    theta = 0.5 * np.pi * (theta + 1.0)
    wtheta = 0.5 * np.pi * wtheta
    rr, tt, pp = np.meshgrid(r, theta, phi, indexing="ij")
    weights = (wr[:, None, None] * r[:, None, None] ** 2 * wtheta[None, :, None] * np.sin(theta)[None, :, None]
               * wphi[None, None, :]).ravel()
    points = np.stack([rr * np.cos(tt), rr * np.sin(tt) * np.cos(pp), rr * np.sin(tt) * np.sin(pp)], -1).reshape(-1, 3)
    return points, weights


def micromodulus_tensor_basis(horizon, length, dim, order=defaults.QUADRATURE_ORDER):
    """
    Voigt tensors of 1/2 int c xi xi xi xi / |xi|^2 for the 1, cos 2theta and cos 4theta terms

    :return: (3, nv, nv)
    """
    points, weights = _quadrature(horizon, dim, order)
    r = np.linalg.norm(points, axis=1)
    theta = np.arccos(np.clip(points[:, 0] / r, -1.0, 1.0))
    radial = np.exp(-r / length) * weights / r ** 2
    pairs = voigt_pairs(dim)
    basis = []
    for angular in (np.ones_like(theta), np.cos(2.0 * theta), np.cos(4.0 * theta)):
        w = 0.5 * radial * angular
        matrix = np.empty((len(pairs), len(pairs)))
        for p, (a, b) in enumerate(pairs):
            for q, (c, d) in enumerate(pairs):
                matrix[p, q] = np.sum(w * points[:, a] * points[:, b] * points[:, c] * points[:, d])
        basis.append(matrix)
    return np.array(basis)


def integrate_micromodulus(coeffs: MicromodulusCoeffs, horizon, dim, order=defaults.QUADRATURE_ORDER) -> ElasticTensor:
    basis = micromodulus_tensor_basis(horizon, coeffs.length, dim, order)
    return ElasticTensor(np.tensordot(np.asarray(coeffs.as_tuple()), basis, axes=1))


def fit_equivalent_micromodulus(tensor: ElasticTensor, horizon, length, order=defaults.QUADRATURE_ORDER,
                                tolerance=defaults.REPRESENTABILITY_TOLERANCE):
    """
    least-squares (a0, a1, a2) whose horizon integral reproduces ``tensor``; a1 = a2 = 0 for isotropic input

    :param tensor: effective ElasticTensor
    :param horizon: macro horizon
    :param length: macro characteristic length
    :return: (MicromodulusCoeffs, relative residual)
    """
    dim = tensor.dim
    basis = micromodulus_tensor_basis(horizon, length, dim, order)
    upper = np.triu_indices(basis.shape[1])
    system = np.stack([b[upper] for b in basis], axis=1)
    target = tensor.matrix[upper]
    scale = np.linalg.norm(target)
    if scale == 0.0:
        return MicromodulusCoeffs(0.0, 0.0, 0.0, length), 0.0

    if tensor.is_isotropic():
        a0 = float(system[:, 0] @ target / (system[:, 0] @ system[:, 0]))
        coefficients = np.array([a0, 0.0, 0.0])
        expected = bond_based_poisson_ratio(dim)
        nu = tensor.engineering_constants()["nu_xy"]
        if abs(nu - expected) > 0.02 * expected:
            warnings.warn("Poisson ratio {:.4f} is not representable by bond-based peridynamics ({:.4f})".format(
                nu, expected), RepresentabilityWarning)
    else:
        coefficients = np.linalg.lstsq(system, target, rcond=None)[0]
    residual = float(np.linalg.norm(system @ coefficients - target) / scale)
    if residual > tolerance:
        warnings.warn("equivalent micromodulus reproduces the tensor only to {:.1%}".format(residual),
                      RepresentabilityWarning)
    logger.debug("fitted micromodulus %s, residual %.3e", coefficients, residual)
    return MicromodulusCoeffs(*(float(a) for a in coefficients), length=length), residual


def characteristic_length(macro_spacing, factor=defaults.LENGTH_SCALE_FACTOR):
    return factor * macro_spacing


def effective_properties(results: Sequence[SampleResult], horizon, length, order=defaults.QUADRATURE_ORDER):
    """
    aggregate per-sample results and fit the equivalent micromodulus
    """
    results = sorted(results, key=lambda r: r.sample_index)
    stretch = aggregate_scalar([r.critical_stretch for r in results])
    tensor = aggregate_tensor([r.tensor for r in results])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RepresentabilityWarning)
        coefficients, residual = fit_equivalent_micromodulus(tensor, horizon, length, order)
    notes = [str(w.message) for w in caught if issubclass(w.category, RepresentabilityWarning)]
    for note in notes:
        logger.warning(note)
    if stretch.single_sample:
        notes.append("single sample: standard error undefined")
    return EffectiveProperties(
        sample_count=stretch.count,
        critical_stretch=[float(v) for v in np.atleast_1d(stretch.mean)],
        critical_stretch_std=[float(v) for v in np.atleast_1d(stretch.std)],
        critical_stretch_stderr=[float(v) for v in np.atleast_1d(stretch.stderr)],
        tensor=tensor,
        coefficients=coefficients,
        horizon=horizon,
        fit_residual=residual,
        notes=notes,
    )


def lattice_coefficients(coeffs: MicromodulusCoeffs, horizon, spacing, dim, order=defaults.QUADRATURE_ORDER,
                         normalized=True) -> MicromodulusCoeffs:
    """
    micromodulus whose interior lattice energy reproduces the continuum tensor of ``coeffs``

    Matched over every calibration state of the tensor: uniaxial stress along
    each axis and pure shear.
    """
    tensor = integrate_micromodulus(coeffs, horizon, dim, order)
    if not np.any(tensor.matrix):
        return coeffs
    lattice = calibrate_to_tensor(tensor, coeffs.length, horizon, spacing, normalized)
    logger.debug("lattice coefficients %s for continuum %s", lattice, coeffs)
    return lattice
