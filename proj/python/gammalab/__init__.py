"""Gamma calculus, Bakry-Emery curvature and Bobkov inequality checks on finite Markov triples."""

import json as _json

from ._gammalab import *  # noqa: F401,F403
from ._gammalab import __version__, run_experiment as _run_experiment


def run_experiment(config, seed=None):
    """Run an experiment config (text in the gammalab config format) and return the parsed summary."""
    return _json.loads(_run_experiment(config, seed))
