import os

import pytest
import torch
from hypothesis import HealthCheck, settings

from sasaki.models import make_model
from sasaki.utils import DTYPE, make_generator

# AD kernels are slow to warm up, so no deadlines
settings.register_profile("default", max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=5, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))

MODEL_SPECS = ["euclidean:2", "sphere:1", "halfplane", "torus:2"]


@pytest.fixture(params=MODEL_SPECS)
def model(request):
    return make_model(request.param)


@pytest.fixture
def euclidean():
    return make_model("euclidean:2")


@pytest.fixture
def sphere():
    return make_model("sphere:1")


@pytest.fixture
def halfplane():
    return make_model("halfplane")


@pytest.fixture
def generator():
    return make_generator(42)


def vec(*values):
    return torch.tensor(values, dtype=DTYPE)
