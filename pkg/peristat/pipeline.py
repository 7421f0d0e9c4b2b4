"""
Configuration, stage-wise artifacts and the end-to-end sample pipeline.

Output layout under the output directory::

    samples/m0000/rve.json              generate-rve
    samples/m0000/bonds.npz             correct
    samples/m0000/correction.csv        correct
    samples/m0000/fracture_x.csv        rve-fracture (one per axis)
    samples/m0000/critical_stretch.json rve-fracture
    samples/m0000/tensor.json           homogenize
    samples/m0000/result.json           completion record with the config hash
    results.csv, effective.json, effective_summary.csv   fit
    macro/history.csv                   macro-sim
    manifest.json
"""
import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import List, Optional, Union, get_args, get_origin, get_type_hints

import numpy as np
import pandas as pd
from tqdm import tqdm

from peristat.base import defaults
from peristat.base.exceptions import ConfigError, MissingArtifact, PsmException, RepresentabilityWarning, add_context
from peristat.base.utils import check_dimension, config_hash, get_current_timestamp
from peristat.base.writers import read_json, write_json, write_table
from peristat.ccm import ElasticTensor, Material, PhaseMaterials, homogenize_rve
from peristat.correction import correct_rve
from peristat.discretization import (
    AXES,
    BondClass,
    BondSet,
    HorizonSpec,
    assign_critical_stretch,
    assign_micromodulus,
    build_bonds,
    build_grid,
    calibrate_micromodulus_coeffs,
)
from peristat.microstructure import DistributionSpec, RveSample, generate_rve
from peristat.multiscale import (
    EffectiveProperties,
    SampleResult,
    characteristic_length,
    directional_critical_stretch,
    effective_properties,
    fit_equivalent_micromodulus,
    lattice_coefficients,
    results_table,
    rve_critical_stretch,
)
from peristat.peridynamics import quasi_static_run, rve_tension_program, stretch_program

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"


def _join(path, key):
    return "{}.{}".format(path, key) if path else key


def _require(condition, message, path):
    if not condition:
        raise ConfigError(message, path)


_type_names = {bool: "a boolean", int: "an integer", float: "a number", str: "a string"}


def _check_type(value, hint, path):
    """
    raises ConfigError when a config entry does not match its annotation

    :param value: raw value read from the mapping
    :param hint: field annotation (bool, int, float, str, Optional[...] or List[...])
    :param path: dotted field path used in the error
    """
    origin = get_origin(hint)
    if origin is Union:
        options = [arg for arg in get_args(hint) if arg is not type(None)]
        if value is None:
            return
        _check_type(value, options[0], path)
        return
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError("expected a list", path)
        (item,) = get_args(hint) or (object,)
        for k, entry in enumerate(value):
            _check_type(entry, item, "{}[{}]".format(path, k))
        return
    if hint is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif hint is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif hint in _type_names:
        ok = isinstance(value, hint)
    else:
        ok = True
    if not ok:
        raise ConfigError("expected {}, got {!r}".format(_type_names[hint], value), path)
    return


class _Section:
    """
    dataclass mixin: strict construction from nested mappings
    """
    _children = {}

    @classmethod
    def from_dict(cls, data, path=""):
        if not isinstance(data, dict):
            raise ConfigError("expected a mapping", path or "config")
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError("unknown key", _join(path, key))
        hints = get_type_hints(cls)
        kwargs = {}
        for key, value in data.items():
            child = cls._children.get(key)
            if child:
                kwargs[key] = child.from_dict(value, _join(path, key))
            else:
                _check_type(value, hints[key], _join(path, key))
                kwargs[key] = value
        try:
            section = cls(**kwargs)
            section.validate(path)
        except (TypeError, ValueError) as error:
            raise ConfigError(str(error), path or "config") from error
        return section

    def validate(self, path=""):
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class MaterialConfig(_Section):
    youngs_modulus: float = defaults.MATRIX_YOUNGS_MODULUS
    poisson_ratio: float = defaults.POISSON_RATIO_2D

    def validate(self, path=""):
        _require(self.youngs_modulus > 0.0, "must be positive", _join(path, "youngs_modulus"))
        _require(-1.0 < self.poisson_ratio < 0.5, "must lie in (-1, 0.5)", _join(path, "poisson_ratio"))
        return self

    def material(self):
        return Material(float(self.youngs_modulus), float(self.poisson_ratio))


@dataclass
class MaterialsConfig(_Section):
    matrix: MaterialConfig = field(default_factory=MaterialConfig)
    particle: MaterialConfig = field(default_factory=lambda: MaterialConfig(defaults.PARTICLE_YOUNGS_MODULUS))

    _children = {"matrix": MaterialConfig, "particle": MaterialConfig}

    def phases(self):
        return PhaseMaterials(matrix=self.matrix.material(), particle=self.particle.material())


@dataclass
class FractureConfig(_Section):
    particle: float = defaults.PARTICLE_CRITICAL_STRETCH
    matrix: float = defaults.MATRIX_CRITICAL_STRETCH
    interface: float = defaults.INTERFACE_CRITICAL_STRETCH
    tie_tolerance: float = defaults.TIE_TOLERANCE

    def validate(self, path=""):
        for name in ("particle", "matrix", "interface"):
            _require(getattr(self, name) > 0.0, "must be positive (Infinity disables failure)", _join(path, name))
        _require(0.0 <= self.tie_tolerance < 1e-3, "must lie in [0, 1e-3)", _join(path, "tie_tolerance"))
        return self

    def by_class(self):
        return {
            BondClass.MATRIX: float(self.matrix),
            BondClass.PARTICLE: float(self.particle),
            BondClass.INTERFACE: float(self.interface),
        }

    @property
    def unbreakable(self):
        return all(math.isinf(v) for v in (self.particle, self.matrix, self.interface))


@dataclass
class RveConfig(_Section):
    side_length: float = defaults.RVE_SIDE_LENGTH
    spacing: float = defaults.RVE_SPACING
    semi_axis_ranges: List[List[float]] = field(default_factory=lambda: [
        [defaults.PARTICLE_RADIUS, defaults.PARTICLE_RADIUS],
        [defaults.PARTICLE_RADIUS, defaults.PARTICLE_RADIUS],
    ])
    equal_axes: bool = True
    orientation_range: List[float] = field(default_factory=lambda: [0.0, defaults.FULL_TURN])
    volume_fraction: Optional[float] = defaults.VOLUME_FRACTION
    count: Optional[int] = None
    max_attempts: int = defaults.MAX_PLACEMENT_ATTEMPTS
    horizon_factor: float = defaults.HORIZON_FACTOR
    length_factor: float = defaults.LENGTH_SCALE_FACTOR
    correction_stretch: float = defaults.CORRECTION_STRETCH
    displacement: float = defaults.RVE_DISPLACEMENT
    steps: int = defaults.RVE_STEPS
    break_fraction: float = defaults.BREAK_FRACTION
    snapshot_every: int = 0

    def validate(self, path=""):
        _require(self.side_length > 0.0, "must be positive", _join(path, "side_length"))
        _require(0.0 < self.spacing < self.side_length, "must lie in (0, side_length)", _join(path, "spacing"))
        cells = self.side_length / self.spacing
        _require(abs(cells - round(cells)) < 1e-9 * cells, "must divide side_length", _join(path, "spacing"))
        _require(self.horizon_factor >= 1.0, "must be at least 1", _join(path, "horizon_factor"))
        _require(self.length_factor > 0.0, "must be positive", _join(path, "length_factor"))
        _require(self.correction_stretch > 0.0, "must be positive", _join(path, "correction_stretch"))
        _require(self.displacement > 0.0, "must be positive", _join(path, "displacement"))
        _require(int(self.steps) >= 1, "must be at least 1", _join(path, "steps"))
        _require(0.0 < self.break_fraction < 1.0, "must lie in (0, 1)", _join(path, "break_fraction"))
        _require(int(self.snapshot_every) >= 0, "must be non-negative", _join(path, "snapshot_every"))
        return self

    def distribution(self, dim, seed):
        return DistributionSpec(
            dim=dim,
            side_length=float(self.side_length),
            semi_axis_ranges=tuple(tuple(float(v) for v in r) for r in self.semi_axis_ranges),
            equal_axes=bool(self.equal_axes),
            orientation_range=tuple(float(v) for v in self.orientation_range),
            volume_fraction=self.volume_fraction,
            count=self.count,
            seed=int(seed),
            max_attempts=int(self.max_attempts),
        )


@dataclass
class MacroConfig(_Section):
    size: List[float] = field(default_factory=lambda: [3.0, 3.0])
    spacing: float = 0.05
    notches: List[List[List[float]]] = field(default_factory=list)
    axis: int = 0
    displacement: float = 0.03
    steps: int = defaults.MACRO_STEPS
    region: str = "band"
    two_sided: bool = False
    horizon_factor: float = defaults.HORIZON_FACTOR
    length_factor: float = defaults.LENGTH_SCALE_FACTOR
    quadrature_order: int = defaults.QUADRATURE_ORDER
    lattice_calibration: bool = True
    snapshot_every: int = 0

    def validate(self, path=""):
        _require(all(s > 0.0 for s in self.size), "must be positive", _join(path, "size"))
        _require(self.spacing > 0.0, "must be positive", _join(path, "spacing"))
        for k, s in enumerate(self.size):
            cells = s / self.spacing
            _require(abs(cells - round(cells)) < 1e-9 * cells, "spacing must divide every extent",
                     _join(path, "size[{}]".format(k)))
        for k, notch in enumerate(self.notches):
            _require(len(notch) == 2 and all(len(c) == len(self.size) for c in notch),
                     "expected [lower corner, upper corner]", _join(path, "notches[{}]".format(k)))
        _require(0 <= int(self.axis) < len(self.size), "must name a coordinate axis", _join(path, "axis"))
        _require(self.displacement > 0.0, "must be positive", _join(path, "displacement"))
        _require(int(self.steps) >= 1, "must be at least 1", _join(path, "steps"))
        _require(self.region in ("face", "band", "midpoint"), "must be face, band or midpoint", _join(path, "region"))
        _require(self.horizon_factor >= 1.0, "must be at least 1", _join(path, "horizon_factor"))
        _require(int(self.quadrature_order) >= 8, "must be at least 8", _join(path, "quadrature_order"))
        return self

    @property
    def horizon(self):
        return self.horizon_factor * self.spacing

    @property
    def length(self):
        return characteristic_length(self.spacing, self.length_factor)


@dataclass
class SolverConfig(_Section):
    method: str = defaults.SOLVER_METHOD
    tol: float = defaults.SOLVER_TOLERANCE
    max_inner: int = defaults.MAX_INNER_ITERATIONS

    def validate(self, path=""):
        _require(self.method in ("direct", "cg"), "must be direct or cg", _join(path, "method"))
        _require(0.0 < self.tol < 1e-2, "must lie in (0, 1e-2)", _join(path, "tol"))
        _require(int(self.max_inner) >= 1, "must be at least 1", _join(path, "max_inner"))
        return self

    def linear(self):
        return {"method": self.method, "tol": float(self.tol)}

    def quasi_static(self, tie_tolerance):
        return dict(self.linear(), max_inner=int(self.max_inner), tie_tolerance=float(tie_tolerance))


@dataclass
class PipelineConfig(_Section):
    """
    Full run configuration. Units: mm, GPa.
    """
    dim: int = 2
    samples: int = defaults.SAMPLE_COUNT
    seed: int = defaults.SEED
    jobs: int = 1
    output_dir: str = "psm_output"
    normalized_energy: bool = True
    rve: RveConfig = field(default_factory=RveConfig)
    materials: MaterialsConfig = field(default_factory=MaterialsConfig)
    fracture: FractureConfig = field(default_factory=FractureConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    macro: MacroConfig = field(default_factory=MacroConfig)

    _children = {
        "rve": RveConfig,
        "materials": MaterialsConfig,
        "fracture": FractureConfig,
        "solver": SolverConfig,
        "macro": MacroConfig,
    }

    def validate(self, path=""):
        try:
            check_dimension(self.dim)
        except ValueError as e:
            raise ConfigError(str(e), "dim")
        _require(int(self.samples) >= 1, "must be at least 1", "samples")
        _require(int(self.jobs) >= 1, "must be at least 1", "jobs")
        _require(len(self.rve.semi_axis_ranges) == self.dim, "needs one range per axis", "rve.semi_axis_ranges")
        _require(len(self.macro.size) == self.dim, "needs one extent per axis", "macro.size")
        try:
            self.rve.distribution(self.dim, self.seed).validate()
        except ConfigError as e:
            raise ConfigError(e.reason, _join("rve", e.field or ""))
        return self

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise MissingArtifact(path)
        try:
            data = read_json(path)
        except ValueError as e:
            raise ConfigError("not valid JSON: {}".format(e), str(path))
        return cls.from_dict(data)

    @classmethod
    def default(cls):
        return cls().validate()

    def with_overrides(self, samples=None, seed=None, jobs=None, output_dir=None):
        changes = {k: v for k, v in (("samples", samples), ("seed", seed), ("jobs", jobs),
                                     ("output_dir", output_dir)) if v is not None}
        return dataclasses.replace(self, **changes).validate()

    def hash(self):
        """
        sha256 of everything that influences results
        """
        data = self.to_dict()
        for key in ("jobs", "output_dir", "samples"):
            data.pop(key)
        return config_hash(data)

    def distribution(self):
        return self.rve.distribution(self.dim, self.seed)

    def phases(self):
        return self.materials.phases()


@dataclass
class RunManifest:
    config_hash: str
    created: int
    samples: dict = field(default_factory=dict)
    results_table: Optional[str] = None
    effective_properties: Optional[str] = None
    macro_history: Optional[str] = None

    def files(self):
        paths = [self.samples[m][name] for m in sorted(self.samples, key=int) for name in sorted(self.samples[m])]
        paths += [p for p in (self.results_table, self.effective_properties, self.macro_history) if p]
        return paths

    def check(self, root):
        for relative in self.files():
            if not (Path(root) / relative).exists():
                raise MissingArtifact(Path(root) / relative)
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def save(self, path):
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls(**read_json(path))


def sample_dir(output_dir, m):
    return Path(output_dir) / "samples" / "m{:04d}".format(m)


def _require_artifact(path):
    if not Path(path).exists():
        raise MissingArtifact(path)
    return Path(path)


def read_tensor(path):
    """
    reads a hand-written tensor file; anything unreadable is a ConfigError on the file
    """
    try:
        return ElasticTensor.from_dict(read_json(_require_artifact(path)))
    except (KeyError, TypeError, ValueError) as error:
        raise ConfigError("not a tensor file: {}".format(error), str(path)) from error


def stage_generate_rve(config: PipelineConfig, m, output_dir):
    rve = generate_rve(config.distribution(), m)
    return rve.save(sample_dir(output_dir, m) / "rve.json")


def rve_bonds(config: PipelineConfig, rve: RveSample):
    """
    RVE grid and bonds with calibrated per-phase moduli and class critical stretches
    """
    spacing = config.rve.spacing
    nodes = build_grid(np.zeros(config.dim), np.full(config.dim, rve.side_length), spacing)
    horizon = HorizonSpec.from_spacing(spacing, config.rve.horizon_factor)
    length = config.rve.length_factor * spacing
    bonds = build_bonds(nodes, horizon, rve.particle_mask)
    coeffs = [
        calibrate_micromodulus_coeffs(
            m.youngs_modulus, m.poisson_ratio, length, horizon.delta, spacing, config.dim, config.normalized_energy
        )
        for m in (config.phases().matrix, config.phases().particle)
    ]
    assign_micromodulus(bonds, coeffs[0], coeffs[1])
    assign_critical_stretch(bonds, config.fracture.by_class())
    return bonds


def stage_correct(config: PipelineConfig, m, output_dir):
    directory = sample_dir(output_dir, m)
    rve = RveSample.load(_require_artifact(directory / "rve.json"))
    bonds = rve_bonds(config, rve)
    corrected, factors = correct_rve(
        rve, bonds, config.phases(), magnitude=config.rve.correction_stretch * rve.side_length,
        normalized=config.normalized_energy, **config.solver.linear()
    )
    table = factors.to_dataframe()
    table.insert(0, "node", np.arange(len(table)))
    write_table(directory / "correction.csv", table)
    return corrected.save(directory / "bonds.npz")


def stage_rve_fracture(config: PipelineConfig, m, output_dir):
    directory = sample_dir(output_dir, m)
    bonds = BondSet.load(_require_artifact(directory / "bonds.npz"))
    side = float(bonds.nodes.upper[0] - bonds.nodes.lower[0])
    stretches = []
    for axis in range(config.dim):
        if config.fracture.unbreakable:
            stretches.append(math.inf)
            continue
        program = rve_tension_program(
            bonds.nodes, axis, config.rve.displacement, int(config.rve.steps), int(config.rve.snapshot_every)
        )
        snapshots = directory / "snapshots_{}".format(AXES[axis]) if config.rve.snapshot_every else None
        stretch, history = rve_critical_stretch(
            bonds, axis, program, side, config.rve.break_fraction, snapshot_dir=snapshots,
            **config.solver.quasi_static(config.fracture.tie_tolerance)
        )
        write_table(directory / "fracture_{}.csv".format(AXES[axis]), history.to_dataframe())
        logger.info("sample %d: critical stretch along %s = %.6g", m, AXES[axis], stretch)
        stretches.append(stretch)
    return write_json(directory / "critical_stretch.json", {"critical_stretch": stretches})


def stage_homogenize(config: PipelineConfig, m, output_dir):
    directory = sample_dir(output_dir, m)
    rve = RveSample.load(_require_artifact(directory / "rve.json"))
    result = homogenize_rve(rve, config.phases(), config.rve.spacing, **config.solver.linear())
    return write_json(directory / "tensor.json", {
        "tensor": result["tensor"].to_dict(),
        "reuss": result["reuss"].to_dict(),
        "voigt": result["voigt"].to_dict(),
        "engineering_constants": result["tensor"].engineering_constants(),
    })


def collect_sample(config: PipelineConfig, m, output_dir) -> SampleResult:
    directory = sample_dir(output_dir, m)
    rve = RveSample.load(_require_artifact(directory / "rve.json"))
    stretches = read_json(_require_artifact(directory / "critical_stretch.json"))["critical_stretch"]
    tensor = ElasticTensor.from_dict(read_json(_require_artifact(directory / "tensor.json"))["tensor"])
    return SampleResult(
        sample_index=m,
        seed=config.seed,
        volume_fraction=rve.volume_fraction,
        critical_stretch=[float(s) for s in stretches],
        tensor=tensor,
        config_hash=config.hash(),
    )


SAMPLE_STAGES = (stage_generate_rve, stage_correct, stage_rve_fracture, stage_homogenize)


def run_sample(config: PipelineConfig, m, output_dir) -> SampleResult:
    """
    generate, correct, fracture and homogenize one sample; skipped when a record with the same hash exists
    """
    record = sample_dir(output_dir, m) / "result.json"
    digest = config.hash()
    if record.exists():
        previous = SampleResult.load(record)
        if previous.config_hash == digest:
            logger.info("sample %d: up to date, skipped", m)
            return previous
    try:
        for stage in SAMPLE_STAGES:
            stage(config, m, output_dir)
        result = collect_sample(config, m, output_dir)
    except PsmException as e:
        raise add_context(e, "sample {}".format(m))
    result.save(record)
    return result


def _sample_worker(task):
    config_data, m, output_dir = task
    return run_sample(PipelineConfig.from_dict(config_data), m, output_dir)


def run_samples(config: PipelineConfig, output_dir, progress=True) -> List[SampleResult]:
    """
    all samples, in sample order, over a bounded worker pool
    """
    tasks = [(config.to_dict(), m, str(output_dir)) for m in range(int(config.samples))]
    if config.jobs == 1:
        iterator = map(_sample_worker, tasks)
        return list(tqdm(iterator, total=len(tasks), desc="samples", disable=not progress))
    with Pool(int(config.jobs)) as pool:
        return list(tqdm(pool.imap(_sample_worker, tasks), total=len(tasks), desc="samples", disable=not progress))


def stage_fit(config: PipelineConfig, output_dir, input_path=None):
    """
    aggregate the per-sample artifacts and fit the macro micromodulus; with
    ``input_path`` fit a hand-written tensor file instead
    """
    output_dir = Path(output_dir)
    macro = config.macro
    if input_path is not None:
        tensor = read_tensor(input_path)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RepresentabilityWarning)
            coeffs, residual = fit_equivalent_micromodulus(tensor, macro.horizon, macro.length,
                                                          int(macro.quadrature_order))
        for w in caught:
            logger.warning(str(w.message))
        return write_json(output_dir / "fit.json", {
            "a0": coeffs.a0, "a1": coeffs.a1, "a2": coeffs.a2, "length": coeffs.length,
            "horizon": macro.horizon, "fit_residual": residual,
        })

    results = [collect_sample(config, m, output_dir) for m in range(int(config.samples))]
    write_table(output_dir / "results.csv", results_table(results))
    effective = effective_properties(results, macro.horizon, macro.length, int(macro.quadrature_order))
    write_table(output_dir / "effective_summary.csv", effective.summary())
    logger.info("effective critical stretch %s over %d samples", effective.critical_stretch, effective.sample_count)
    return effective.save(output_dir / "effective.json")


def macro_bonds(config: PipelineConfig, effective: EffectiveProperties):
    macro = config.macro
    nodes = build_grid(np.zeros(config.dim), macro.size, macro.spacing, [tuple(n) for n in macro.notches])
    bonds = build_bonds(nodes, HorizonSpec(macro.horizon))
    coeffs = effective.coefficients
    if macro.lattice_calibration:
        coeffs = lattice_coefficients(
            coeffs, macro.horizon, macro.spacing, config.dim, int(macro.quadrature_order), config.normalized_energy
        )
    assign_micromodulus(bonds, coeffs)
    with np.errstate(divide="ignore"):
        bonds.critical_stretch = directional_critical_stretch(effective.critical_stretch, bonds.xi)
    return bonds


def macro_program(config: PipelineConfig, nodes, strain=None):
    macro = config.macro
    axis = int(macro.axis)
    extent = float(nodes.upper[axis] - nodes.lower[axis])
    displacement = macro.displacement if strain is None else strain * extent
    return stretch_program(
        nodes, axis, displacement, int(macro.steps), region=macro.region,
        width=macro.horizon_factor * nodes.spacing, two_sided=bool(macro.two_sided),
        snapshot_every=int(macro.snapshot_every),
    )


def stage_macro_sim(config: PipelineConfig, output_dir):
    output_dir = Path(output_dir)
    effective = EffectiveProperties.load(_require_artifact(output_dir / "effective.json"))
    bonds = macro_bonds(config, effective)
    program = macro_program(config, bonds.nodes)
    snapshots = output_dir / "macro" / "snapshots" if config.macro.snapshot_every else None
    history = quasi_static_run(bonds, program, snapshot_dir=snapshots,
                               **config.solver.quasi_static(config.fracture.tie_tolerance))
    logger.info("macro run: peak stress %.6g", float(history.stresses().max()))
    return write_table(output_dir / "macro" / "history.csv", history.to_dataframe())


class Pipeline:
    """
    Stage dispatcher over one output directory
    """
    def __init__(self, config: PipelineConfig, output_dir=None, progress=True):
        """
        Initialise pipeline

        :param config: PipelineConfig
        :param output_dir: overrides config.output_dir
        :param progress: show a progress bar over samples
        """
        self._stage_config = {
            "generate-rve": {"method": stage_generate_rve, "per_sample": True},
            "correct": {"method": stage_correct, "per_sample": True},
            "rve-fracture": {"method": stage_rve_fracture, "per_sample": True},
            "homogenize": {"method": stage_homogenize, "per_sample": True},
            "fit": {"method": stage_fit, "per_sample": False},
            "macro-sim": {"method": stage_macro_sim, "per_sample": False},
        }
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)
        self.progress = progress

        self._logger = logging.getLogger(__name__)
        return

    @property
    def stages(self):
        return list(self._stage_config)

    def run_stage(self, name, input_path=None):
        """
        function to run one stage over all samples or once

        :param name: stage name
        :param input_path: tensor file for the fit stage
        :return: list of written paths
        """
        stage = self._dispatch_stage(name)
        self._logger.info("stage %s", name)
        if not stage["per_sample"]:
            if name == "fit":
                return [stage["method"](self.config, self.output_dir, input_path)]
            return [stage["method"](self.config, self.output_dir)]
        paths = []
        for m in tqdm(range(int(self.config.samples)), desc=name, disable=not self.progress):
            try:
                paths.append(stage["method"](self.config, m, self.output_dir))
            except PsmException as e:
                raise add_context(e, "sample {}".format(m))
        return paths

    def _dispatch_stage(self, name):
        try:
            return self._stage_config[name]
        except KeyError:
            raise ConfigError("unknown stage {}; expected one of {}".format(name, ", ".join(self.stages)), "stage")

    def run(self) -> RunManifest:
        """
        every sample, then fit and macro simulation; writes manifest.json
        """
        self._logger.info("pipeline: %d samples, %d jobs, output %s", self.config.samples, self.config.jobs,
                          self.output_dir)
        results = run_samples(self.config, self.output_dir, self.progress)
        stage_fit(self.config, self.output_dir)
        stage_macro_sim(self.config, self.output_dir)

        manifest = RunManifest(config_hash=self.config.hash(), created=get_current_timestamp())
        for result in results:
            directory = sample_dir(Path("."), result.sample_index)
            files = {"rve": directory / "rve.json", "bonds": directory / "bonds.npz",
                     "critical_stretch": directory / "critical_stretch.json",
                     "tensor": directory / "tensor.json", "result": directory / "result.json"}
            manifest.samples[str(result.sample_index)] = {k: str(v) for k, v in files.items()}
        manifest.results_table = "results.csv"
        manifest.effective_properties = "effective.json"
        manifest.macro_history = str(Path("macro") / "history.csv")
        manifest.check(self.output_dir)
        manifest.save(self.output_dir / "manifest.json")
        return manifest


def cmd_pipeline(config: PipelineConfig, output_dir=None, progress=True) -> RunManifest:
    return Pipeline(config, output_dir, progress).run()


def volume_fraction_sweep(config: PipelineConfig, fractions, output_dir=None, progress=True):
    """
    sample pipeline and fit per target volume fraction

    :return: DataFrame with one row per fraction
    """
    root = Path(output_dir or config.output_dir)
    rows = []
    for fraction in fractions:
        rve = dataclasses.replace(config.rve, volume_fraction=float(fraction), count=None)
        swept = dataclasses.replace(config, rve=rve).validate()
        directory = root / "vf_{:.4f}".format(fraction)
        run_samples(swept, directory, progress)
        effective = EffectiveProperties.load(stage_fit(swept, directory))
        row = {"volume_fraction": float(fraction), "samples": effective.sample_count}
        for axis, (value, stderr) in enumerate(zip(effective.critical_stretch, effective.critical_stretch_stderr)):
            row["s0_" + AXES[axis]] = value
            row["s0_" + AXES[axis] + "_stderr"] = stderr
        row.update({"a0": effective.coefficients.a0, "a1": effective.coefficients.a1,
                    "a2": effective.coefficients.a2})
        rows.append(row)
    table = pd.DataFrame(rows)
    write_table(root / "sweep.csv", table)
    return table


def direct_simulation(config: PipelineConfig, tiles, sample=0, output_dir=None):
    """
    microstructure-resolving run on an RVE tiled ``tiles`` times per axis,
    loaded with the macro program's strain

    :return: SimHistory
    """
    tiles = [int(tiles)] * config.dim if np.isscalar(tiles) else [int(t) for t in tiles]
    rve = generate_rve(config.distribution(), sample)
    side = rve.side_length
    spacing = config.rve.spacing
    nodes = build_grid(np.zeros(config.dim), np.asarray(tiles) * side, spacing)
    horizon = HorizonSpec.from_spacing(spacing, config.rve.horizon_factor)
    bonds = build_bonds(nodes, horizon, lambda points: rve.particle_mask(np.mod(points, side)))
    length = config.rve.length_factor * spacing
    phases = config.phases()
    coeffs = [
        calibrate_micromodulus_coeffs(m.youngs_modulus, m.poisson_ratio, length, horizon.delta, spacing, config.dim,
                                      config.normalized_energy)
        for m in (phases.matrix, phases.particle)
    ]
    assign_micromodulus(bonds, coeffs[0], coeffs[1])
    assign_critical_stretch(bonds, config.fracture.by_class())

    macro = config.macro
    strain = macro.displacement / macro.size[int(macro.axis)]
    program = dataclasses.replace(macro_program(config, nodes, strain), snapshot_every=0)
    history = quasi_static_run(bonds, program, **config.solver.quasi_static(config.fracture.tie_tolerance))
    if output_dir is not None:
        write_table(Path(output_dir) / "direct" / "history.csv", history.to_dataframe())
    return history
