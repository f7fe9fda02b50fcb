"""Shared fixtures: the three preset trajectories are integrated once per
session and reused by the module tests and the acceptance gate."""

import pytest

from torusflow import cli, flow


def _run_preset(name):
    config = cli.parse_config(f'scenario = "{name}"')
    curve = config.build_curve()
    profile = config.build_profile()
    flow_config = config.build_flow_config()
    initial = config.build_initial(curve)
    trace = flow.integrate(profile, curve, flow_config, initial)
    return profile, curve, flow_config, trace


@pytest.fixture(scope="session")
def dehn_run():
    return _run_preset("winding-dehn")


@pytest.fixture(scope="session")
def loop_run():
    return _run_preset("winding-loop")


@pytest.fixture(scope="session")
def converging_run():
    return _run_preset("analytic-converging")


@pytest.fixture(scope="session")
def preset_runs(dehn_run, loop_run, converging_run):
    return {"winding-dehn": dehn_run, "winding-loop": loop_run,
            "analytic-converging": converging_run}


@pytest.fixture(scope="session")
def dehn_artifacts(tmp_path_factory):
    root = tmp_path_factory.mktemp("dehn-artifacts")
    config = cli.parse_config('scenario = "winding-dehn"')
    return cli.run_scenario(config, output_root=str(root))


@pytest.fixture(scope="session")
def converging_artifacts(tmp_path_factory):
    root = tmp_path_factory.mktemp("conv-artifacts")
    config = cli.parse_config('scenario = "analytic-converging"')
    return cli.run_scenario(config, output_root=str(root))
