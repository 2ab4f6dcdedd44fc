"""Risk prediction with dynamic Bayesian networks over longitudinal panels."""

import json

from ._raus import (
    RausError,
    average_precision,
    chi2_upper_tail,
    kdigo_labels,
    main as _main,
    roc_auc,
    synth,
)
from ._raus import run as _run

__all__ = [
    "RausError",
    "average_precision",
    "chi2_upper_tail",
    "kdigo_labels",
    "main",
    "roc_auc",
    "run",
    "synth",
]


def run(config=None, **overrides):
    """Run the pipeline from a config dict plus keyword overrides."""
    merged = dict(config or {})
    merged.update(overrides)
    return _run(json.dumps(merged))


def main(argv=None):
    import sys

    return _main(list(sys.argv[1:] if argv is None else argv))
