from ._fraclab import *  # noqa: F401,F403
from ._fraclab import __version__, ConfigError, SolverError, run_command


def run(name, config, seed, threads=1):
    """Runs a CLI command on a config dict; returns (text, exit_code, failures)."""
    import json

    return run_command(name, json.dumps(config), seed, threads)
