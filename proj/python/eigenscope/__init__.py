"""Weighted entropic uncertainty and cylinder entropies for quantum cat maps."""

import json as _json

from ._eigenscope import (
    ConfigError,
    Error,
    __version__,
    cat_propagator,
    cylinder_measure,
    egorov_time,
    ehrenfest_time,
    eig_unitary,
    eup_certificate,
    husimi,
    lyapunov,
    refined_norm_bound,
    set_threads,
    shannon_entropy,
)
from ._eigenscope import run_experiment as _run_experiment


def run(experiment, **config):
    """Run one experiment; returns (exit_code, report dict, written files)."""
    cfg = {"experiment": experiment}
    cfg.update({k: str(v) for k, v in config.items()})
    code, report, files = _run_experiment(cfg)
    return code, _json.loads(report), files


__all__ = [
    "ConfigError",
    "Error",
    "__version__",
    "cat_propagator",
    "cylinder_measure",
    "egorov_time",
    "ehrenfest_time",
    "eig_unitary",
    "eup_certificate",
    "husimi",
    "lyapunov",
    "refined_norm_bound",
    "run",
    "set_threads",
    "shannon_entropy",
]
