import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from abjm_vortex.matrix_core import ModelParams, coupling_matrix  # noqa: E402
from abjm_vortex.vortex_sources import VortexConfiguration  # noqa: E402


@pytest.fixture
def cm_a0_m2():
    return coupling_matrix(0.0, 2)


@pytest.fixture
def params_a0_m2():
    return ModelParams(m=2, a=0.0, lam=4.0)


@pytest.fixture
def one_vortex_origin():
    return VortexConfiguration.from_lists([[(0.0, 0.0)], []])


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML config into tmp_path and return its path."""

    def _write(text, name="run.yaml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write
