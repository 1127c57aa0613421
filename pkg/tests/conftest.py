import json

import numpy as np
import pytest

from synlike import cli
from synlike.models import gaussian_toy_model, ma2_model


@pytest.fixture(scope="session")
def toy_model():
    return gaussian_toy_model()


@pytest.fixture(scope="session")
def ma2():
    return ma2_model()


@pytest.fixture()
def run_cli(capsys):
    """Invoke the CLI in-process; returns (exit_code, stdout, stderr)."""

    def _run(*argv):
        code = cli.main(list(argv))
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return _run


@pytest.fixture()
def write_config(tmp_path):
    def _write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return str(path)

    return _write


@pytest.fixture()
def toy_run_config(tmp_path):
    """A small, fast end-to-end sampler config for the conjugate toy model."""

    def _cfg(**overrides):
        payload = {
            "model": {"name": "gaussian-toy"},
            "ssy": [0.7],
            "n": 20,
            "M": 40,
            "cov_rand_walk": [[0.25]],
            "master_seed": 11,
            "output_dir": str(tmp_path / "out"),
        }
        payload.update(overrides)
        return payload

    return _cfg


def rand_posdef(gen, d, scale=1.0):
    a = gen.standard_normal((d, d + 2))
    return scale * (a @ a.T) / (d + 2) + 1e-3 * np.eye(d)
