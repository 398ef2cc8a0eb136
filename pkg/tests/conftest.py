import json

import pytest

from empic import kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # JIT compile outside any timed assertions
    kernels.warmup(kernels.get_backend("numba"))


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    return kernels.get_backend(request.param)


def make_config_doc(**overrides):
    doc = {
        "grid_cells": [16, 8, 8],
        "box_size": [4.0, 2.0, 2.0],
        "n_steps": 10,
        "rng_seed": 7,
        "species": [
            {"name": "electrons", "charge": -1.0, "mass": 1.0,
             "particles_per_cell": 4,
             "init": {"kind": "two_stream", "drift_momentum": 0.1,
                      "density": 1.0,
                      "perturbation": {"kind": "sine", "amplitude": 1e-3,
                                       "mode": 1}}},
        ],
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def config_doc():
    return make_config_doc()


@pytest.fixture
def config_text(config_doc):
    return json.dumps(config_doc)
