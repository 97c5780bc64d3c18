import math

import numpy as np
import pytest

import fewphoton as fp


def test_decay_matches_exponential():
    spec = fp.make_tls(0.0, 0.0, 0.0, [1.0])
    for tau in (0.5, 2.0, 5.0):
        p = fp.emission_probabilities(spec, 1, tau, 1)
        assert abs(p[(0, 1)] - math.exp(-tau)) < 1e-12


def test_lorentzian():
    spec = fp.make_tls(0.0, 0.0, 0.0, [0.5, 0.5])
    for d in np.linspace(-5, 5, 11):
        t = fp.plane_wave_response(spec, d, 0, 1)
        assert abs(abs(t) ** 2 - 0.25 / (d * d + 0.25)) < 1e-12


def test_green_and_oracle_agree():
    spec = fp.make_tls(0.0, 4.0, 1.0, [1.0])
    g = fp.green(spec, [(1.6, 0)], [(0.4, 0)], 0, 0, 0.0, 2.4)
    o = fp.oracle_green(spec, [(1.6, 0)], [(0.4, 0)], 0, 0, 0.0, 2.4)
    assert abs(g - o) / abs(g) < 1e-2


def test_u_eff_is_numpy():
    u = fp.u_eff(fp.make_tls(0.0, 0.0, 0.0, [1.0]), 0.0, 2.0)
    assert isinstance(u, np.ndarray) and u.shape == (2, 2)
    assert abs(u[1, 1] - math.exp(-1.0)) < 1e-13


def test_engine_errors_carry_kind():
    spec = fp.make_tls(0.0, 2.0, 1.0, [0.5, 0.5])
    with pytest.raises(fp.EngineError) as info:
        fp.plane_wave_response(spec, 0.0)
    assert info.value.kind == "DrivenSpecUnsupported"


def test_config_round_trip(tmp_path):
    bad = {"kind": "tls-emission", "system": {"channels": [{}]}}
    assert ("error", "system.channels[0].rate", "channels[0].rate required") in fp.validate_config(bad)
    config = {
        "kind": "tls-emission",
        "name": "smoke",
        "system": {"omega0": 2.0, "t_pulse": 1.0, "channels": [{"rate": 1.0}]},
        "times": {"tau_max": 2.0, "points": 5},
        "outputs": ["time_series"],
    }
    files, manifest = fp.run_scenario(config, tmp_path, threads=2)
    assert manifest["resolved_config"]["grid"]["n_max"] == 2
    csv = (tmp_path / "smoke" / "emission_time_series.csv").read_text().splitlines()
    assert csv[0] == "tau,P0g,P1g,P2g,P0e,P1e,P2e,closure_deficit"
    assert len(csv) == 6


def test_system_from_json():
    spec = fp.system_from_json(
        {"dim": 2, "h_static": [[[0, 0], [0, 0]], [[0, 0], [1, 0]]], "channels": [{"rate": 4.0, "operator": [[[0, 0], [1, 0]], [[0, 0], [0, 0]]]}]}
    )
    assert spec.labels == ["s0", "s1"]
    assert abs(spec.channel(0)[0, 1] - 2.0) < 1e-15
