"""Few-photon propagator and scattering engine (Python front end)."""

import json
from pathlib import Path

from ._fewphoton import (
    EngineError,
    SystemSpec,
    __version__,
    emission_probabilities,
    green,
    grid_emission_probabilities,
    make_lambda,
    make_tls,
    oracle_green,
    plane_wave_response,
    pulse_area,
    transmit_wavepacket,
    u_eff,
)
from . import _fewphoton as _core


def system_from_json(description):
    """Build a SystemSpec from a dict (or JSON text) in the config system format."""
    text = description if isinstance(description, str) else json.dumps(description)
    return _core._system_from_json(text)


def validate_config(config):
    """List of (level, path, message) diagnostics; empty means the config runs as written."""
    return _core._validate_config(json.dumps(config))


def resolve_config(config, grid_scale=1.0):
    return json.loads(_core._resolve_config(json.dumps(config), grid_scale))


def run_scenario(config, out_dir=".", threads=0, grid_scale=1.0):
    """Run a scenario; returns (files, manifest)."""
    files, manifest, _ = _core._run(json.dumps(config), Path(out_dir), threads, grid_scale, False)
    return [Path(f) for f in files], json.loads(manifest)


def oracle_check(config, out_dir=".", threads=0, grid_scale=1.0):
    """Compare green() with the bath oracle; returns (passed, files, manifest)."""
    files, manifest, passed = _core._run(json.dumps(config), Path(out_dir), threads, grid_scale, True)
    return passed, [Path(f) for f in files], json.loads(manifest)


__all__ = [
    "EngineError",
    "SystemSpec",
    "__version__",
    "emission_probabilities",
    "green",
    "grid_emission_probabilities",
    "make_lambda",
    "make_tls",
    "oracle_check",
    "oracle_green",
    "plane_wave_response",
    "pulse_area",
    "resolve_config",
    "run_scenario",
    "system_from_json",
    "transmit_wavepacket",
    "u_eff",
    "validate_config",
]
