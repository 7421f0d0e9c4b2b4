from peristat.base.exceptions import (
    ConfigError,
    MissingArtifact,
    NumericalException,
    PsmException,
    RepresentabilityWarning,
)

from peristat.microstructure import DistributionSpec, RveSample, generate_rve
from peristat.discretization import BondSet, HorizonSpec, NodeSet, build_bonds, build_grid
from peristat.ccm import ElasticTensor, PhaseMaterials, homogenize_rve
from peristat.correction import correct_rve
from peristat.peridynamics import LoadProgram, QuasiStaticSolver, SimHistory, quasi_static_run
from peristat.multiscale import EffectiveProperties, SampleResult, effective_properties, fit_equivalent_micromodulus
from peristat.pipeline import Pipeline, PipelineConfig, RunManifest

stages = [
    "generate-rve",
    "correct",
    "rve-fracture",
    "homogenize",
    "fit",
    "macro-sim",
]

__all__ = [
    "ConfigError",
    "MissingArtifact",
    "NumericalException",
    "PsmException",
    "RepresentabilityWarning",
    "DistributionSpec",
    "RveSample",
    "generate_rve",
    "BondSet",
    "HorizonSpec",
    "NodeSet",
    "build_bonds",
    "build_grid",
    "ElasticTensor",
    "PhaseMaterials",
    "homogenize_rve",
    "correct_rve",
    "LoadProgram",
    "QuasiStaticSolver",
    "SimHistory",
    "quasi_static_run",
    "EffectiveProperties",
    "SampleResult",
    "effective_properties",
    "fit_equivalent_micromodulus",
    "Pipeline",
    "PipelineConfig",
    "RunManifest",
    "stages",
]
