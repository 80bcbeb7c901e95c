"""Trajectory geometry for language-model activations.

Thin wrapper over the compiled ``_core`` module. Geometry takes
``(n_points, dim)`` arrays; bundles are read and written in the on-disk
trajectory-store format shared with the C++ tools.
"""

import json
import os
from pathlib import Path

_PACKAGED_DATA = Path(__file__).with_name("data")
if _PACKAGED_DATA.is_dir():
    os.environ.setdefault("TRAJGEOM_DATA_DIR", str(_PACKAGED_DATA))

from . import _core
from ._core import (  # noqa: E402
    BundleError,
    DomainError,
    Error,
    InfeasibleError,
    ParseError,
    UsageError,
    ValidationError,
    anova_oneway,
    covariance_spectrum,
    data_dir,
    effective_dimensionality,
    elongation,
    layer_profile,
    local_curvatures,
    local_menger_curvatures,
    menger_sequence_curvature,
    pearson_r,
    sequence_curvature,
    ttest_ind,
    validate,
)

__version__ = "0.1.0"


def _config_text(config):
    if config is None:
        return None
    if isinstance(config, (str, os.PathLike)):
        return Path(config).read_text()
    return json.dumps(config)


def generate(kind, out, *, config=None, **request):
    """Write a prompt suite; returns the number of entries."""
    return _core.generate(kind, out, config=_config_text(config), **request)


def analyze(bundle, out, *, config=None, seed=None):
    """Analyze a bundle directory; returns (geometry, behavior, stats) dicts."""
    texts = _core.analyze(bundle, out, config=_config_text(config), seed=seed)
    return tuple(json.loads(t) for t in texts)


def report(in_dir, out, *, run_id="run", format="csv"):
    return [Path(p) for p in _core.report(in_dir, out, run_id=run_id, format=format)]


def read_bundle(path):
    """Returns (manifest dict, activations list, logits list with None gaps)."""
    manifest, acts, logits = _core.read_bundle(path)
    return json.loads(manifest), acts, logits


def write_bundle(path, manifest, activations, logits=()):
    _core.write_bundle(path, json.dumps(manifest), list(activations), list(logits))
