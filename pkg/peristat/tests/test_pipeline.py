import math

import numpy as np
import pandas as pd
import pytest

from peristat.base.exceptions import ConfigError, MissingArtifact, PoissonMismatch
from peristat.base.writers import read_json, write_json
from peristat.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from peristat.discretization import MicromodulusCoeffs
from peristat.multiscale import EffectiveProperties, SampleResult, integrate_micromodulus
from peristat.peridynamics import quasi_static_run, reaction_stress, stretch_program
from peristat.pipeline import (
    TEMPLATE_DIR,
    Pipeline,
    PipelineConfig,
    RunManifest,
    cmd_pipeline,
    direct_simulation,
    macro_bonds,
    sample_dir,
    volume_fraction_sweep,
)

unbreakable = {"particle": math.inf, "matrix": math.inf, "interface": math.inf}


def small_config(**changes):
    data = {
        "samples": 1,
        "seed": 5,
        "rve": {"spacing": 0.125, "volume_fraction": 0.0, "steps": 10},
        "fracture": dict(unbreakable),
        "macro": {"size": [1.0, 1.0], "spacing": 0.1, "steps": 5, "displacement": 0.001},
    }
    data.update(changes)
    return data


def outputs(root):
    names = ["results.csv", "effective_summary.csv", "macro/history.csv", "samples/m0000/correction.csv",
             "samples/m0000/tensor.json", "effective.json"]
    return {name: (root / name).read_bytes() for name in names}


@pytest.mark.parametrize(
    "data,field",
    [
        ({"dim": 4}, "dim"),
        ({"samples": 0}, "samples"),
        ({"rve": {"spacing": -1.0}}, "rve.spacing"),
        ({"rve": {"spacing": 0.3}}, "rve.spacing"),
        ({"rve": {"volume_fraction": 0.7}}, "rve.volume_fraction"),
        ({"materials": {"matrix": {"youngs_modulus": -71.7}}}, "materials.matrix.youngs_modulus"),
        ({"macro": {"bogus": 1}}, "macro.bogus"),
        ({"macro": {"region": "edge"}}, "macro.region"),
        ({"solver": {"method": "lu"}}, "solver.method"),
        ({"fracture": {"matrix": 0.0}}, "fracture.matrix"),
        ({"rve": []}, "rve"),
        ({"samples": "three"}, "samples"),
        ({"dim": 2.0}, "dim"),
        ({"normalized_energy": 1}, "normalized_energy"),
        ({"rve": {"side_length": "1.0"}}, "rve.side_length"),
        ({"rve": {"semi_axis_ranges": [[0.1, "0.2"]]}}, "rve.semi_axis_ranges[0][1]"),
        ({"rve": {"count": True}}, "rve.count"),
        ({"macro": {"size": 3.0}}, "macro.size"),
        ({"solver": {"method": None}}, "solver.method"),
    ],
)
def test_config_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as error:
        PipelineConfig.from_dict(data)
    assert error.value.field == field
    assert str(error.value).startswith(field)


def test_config_files(tmp_path):
    with pytest.raises(MissingArtifact):
        PipelineConfig.load(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{samples: 3")
    with pytest.raises(ConfigError):
        PipelineConfig.load(broken)

    template = TEMPLATE_DIR / "composite_2d.json"
    assert read_json(template) == PipelineConfig.default().to_dict()
    config = PipelineConfig.load(template)
    assert config.materials.particle.youngs_modulus == 427.0
    assert config.fracture.matrix == 0.01161


def test_config_hash():
    config = PipelineConfig.from_dict(small_config())
    assert config.hash() == config.with_overrides(jobs=3, output_dir="elsewhere", samples=7).hash()
    assert config.hash() != config.with_overrides(seed=6).hash()
    assert config.fracture.unbreakable
    with pytest.raises(ConfigError):
        config.with_overrides(jobs=0)


def test_single_homogeneous_sample(tmp_path):
    config = PipelineConfig.from_dict(small_config())
    manifest = Pipeline(config, output_dir=tmp_path, progress=False).run()

    assert manifest.config_hash == config.hash()
    assert RunManifest.load(tmp_path / "manifest.json").check(tmp_path).files() == manifest.files()
    result = SampleResult.load(sample_dir(tmp_path, 0) / "result.json")
    assert result.critical_stretch == [math.inf, math.inf]
    assert result.tensor.relative_difference(config.phases().matrix.tensor(2)) < 1e-8

    effective = EffectiveProperties.load(tmp_path / "effective.json")
    assert effective.critical_stretch == [math.inf, math.inf]
    assert effective.coefficients.a1 == 0.0 and effective.coefficients.a2 == 0.0

    history = pd.read_csv(tmp_path / "macro" / "history.csv")
    stress = history["stress"].to_numpy()
    assert stress[1] > 0.0
    np.testing.assert_allclose(stress, stress[1] * np.arange(len(stress)), rtol=1e-8)
    assert history["total_broken"].iloc[-1] == 0


def test_rerun_is_skipped_and_identical(tmp_path, caplog):
    config = PipelineConfig.from_dict(small_config(samples=2))
    Pipeline(config, output_dir=tmp_path, progress=False).run()
    first = outputs(tmp_path)
    assert (sample_dir(tmp_path, 1) / "result.json").exists()
    assert EffectiveProperties.load(tmp_path / "effective.json").sample_count == 2

    with caplog.at_level("INFO", logger="peristat.pipeline"):
        Pipeline(config, output_dir=tmp_path, progress=False).run()
    assert "sample 0: up to date, skipped" in caplog.text
    assert outputs(tmp_path) == first


def test_reproducible_across_directories(tmp_path):
    config = PipelineConfig.from_dict(small_config())
    Pipeline(config, output_dir=tmp_path / "a", progress=False).run()
    cmd_pipeline(config, output_dir=tmp_path / "b", progress=False)
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")


def test_stages_compose_to_pipeline(tmp_path):
    config = PipelineConfig.from_dict(small_config())
    Pipeline(config, output_dir=tmp_path / "pipeline", progress=False).run()

    staged = Pipeline(config, output_dir=tmp_path / "staged", progress=False)
    for name in staged.stages:
        written = staged.run_stage(name)
        assert all(path.exists() for path in written)
    assert outputs(tmp_path / "staged") == outputs(tmp_path / "pipeline")


def test_missing_upstream_artifact(tmp_path):
    pipeline = Pipeline(PipelineConfig.from_dict(small_config()), output_dir=tmp_path, progress=False)
    with pytest.raises(MissingArtifact) as error:
        pipeline.run_stage("correct")
    assert str(error.value).startswith("sample 0: ")
    assert error.value.path.endswith("rve.json")
    with pytest.raises(MissingArtifact):
        pipeline.run_stage("macro-sim")
    with pytest.raises(ConfigError):
        pipeline.run_stage("mesh")


def test_fit_from_tensor_file(tmp_path):
    config = PipelineConfig.from_dict(small_config())
    tensor_file = write_json(tmp_path / "tensor.json", config.phases().matrix.tensor(2).to_dict())
    [path] = Pipeline(config, output_dir=tmp_path, progress=False).run_stage("fit", input_path=tensor_file)
    fit = read_json(path)
    assert fit["a0"] > 0.0
    assert fit["a1"] == 0.0 and fit["a2"] == 0.0
    assert fit["fit_residual"] < 1e-8

    broken = tmp_path / "broken.json"
    broken.write_text("{voigt: [[1, 0")
    with pytest.raises(ConfigError) as error:
        Pipeline(config, output_dir=tmp_path, progress=False).run_stage("fit", input_path=broken)
    assert error.value.field == str(broken)


def test_poisson_mismatch_carries_sample(tmp_path):
    config = PipelineConfig.from_dict(small_config(materials={"matrix": {"poisson_ratio": 0.3}}))
    with pytest.raises(PoissonMismatch) as error:
        Pipeline(config, output_dir=tmp_path, progress=False).run()
    assert str(error.value).startswith("sample 0: ")


def test_volume_fraction_sweep(tmp_path):
    config = PipelineConfig.from_dict(small_config())
    table = volume_fraction_sweep(config, [0.0], output_dir=tmp_path, progress=False)
    assert table["volume_fraction"].tolist() == [0.0]
    assert table["s0_x"].tolist() == [math.inf]
    assert (tmp_path / "sweep.csv").exists()
    assert (tmp_path / "vf_0.0000" / "effective.json").exists()


def test_direct_simulation(tmp_path):
    config = PipelineConfig.from_dict(small_config())
    history = direct_simulation(config, 2, output_dir=tmp_path)
    assert history.bonds.nodes.count == 256
    stresses = history.stresses()
    np.testing.assert_allclose(stresses, stresses[1] * np.arange(len(stresses)), rtol=1e-8)
    assert (tmp_path / "direct" / "history.csv").exists()


def test_cli_exit_codes(tmp_path):
    good = write_json(tmp_path / "good.json", small_config())
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "run"), "--quiet"]) == EXIT_OK
    assert (tmp_path / "run" / "manifest.json").exists()

    bad = write_json(tmp_path / "bad.json", small_config(samples=-2))
    assert main(["run", "--config", str(bad), "--quiet"]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "absent.json"), "--quiet"]) == EXIT_CONFIG
    mistyped = write_json(tmp_path / "mistyped.json", small_config(samples="three"))
    assert main(["run", "--config", str(mistyped), "--quiet"]) == EXIT_CONFIG

    malformed = tmp_path / "tensor.json"
    malformed.write_text("{voigt: [[1, 0")
    fit = ["run", "--config", str(good), "--out", str(tmp_path / "fit"), "--stage", "fit", "--quiet"]
    assert main(fit + ["--input", str(malformed)]) == EXIT_CONFIG
    no_voigt = write_json(tmp_path / "no_voigt.json", {"dim": 2})
    assert main(fit + ["--input", str(no_voigt)]) == EXIT_CONFIG

    mismatch = write_json(tmp_path / "mismatch.json", small_config(materials={"matrix": {"poisson_ratio": 0.3}}))
    assert main(["run", "--config", str(mismatch), "--out", str(tmp_path / "x"), "--quiet"]) == EXIT_NUMERICAL


def test_cli_stage_and_template(tmp_path):
    config = write_json(tmp_path / "config.json", small_config())
    out = str(tmp_path / "staged")
    for stage in ["generate-rve", "correct", "rve-fracture", "homogenize", "fit", "macro-sim"]:
        assert main(["run", "--config", str(config), "--out", out, "--stage", stage, "--quiet"]) == EXIT_OK
    assert (tmp_path / "staged" / "macro" / "history.csv").exists()

    assert main(["template", str(tmp_path / "defaults.json")]) == EXIT_OK
    assert PipelineConfig.load(tmp_path / "defaults.json").to_dict() == PipelineConfig.default().to_dict()
    with pytest.raises(SystemExit):
        main(["run", "--stage", "mesh"])


@pytest.mark.parametrize("axis", [0, 1])
def test_anisotropic_macro_plate_stiffness(axis):
    config = PipelineConfig.from_dict(small_config(macro={"size": [2.0, 2.0], "spacing": 0.05}))
    macro = config.macro
    coeffs = MicromodulusCoeffs(1.0, 0.3, -0.1, macro.length)
    tensor = integrate_micromodulus(coeffs, macro.horizon, 2)
    effective = EffectiveProperties(
        sample_count=1, critical_stretch=[math.inf, math.inf], critical_stretch_std=[0.0, 0.0],
        critical_stretch_stderr=[0.0, 0.0], tensor=tensor, coefficients=coeffs, horizon=macro.horizon,
        fit_residual=0.0,
    )
    bonds = macro_bonds(config, effective)
    nodes = bonds.nodes
    history = quasi_static_run(bonds, stretch_program(nodes, axis, 0.004, 1, region="band", width=macro.horizon))

    u = history.final.u[:, axis]
    lookup = nodes.node_lookup()
    if axis == 1:
        lookup = lookup.T
    local = np.array([
        (u[lookup[a + 1, b]] - u[lookup[a - 1, b]]) / (2.0 * macro.spacing)
        for a in range(9, lookup.shape[0] - 9) for b in range(6, lookup.shape[1] - 6)
    ])
    modulus = reaction_stress(history.final) / local.mean()
    compliance = np.linalg.inv(tensor.matrix)
    assert modulus * compliance[axis, axis] == pytest.approx(1.0, abs=0.05)
