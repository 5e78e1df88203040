"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from brainalign import build_backbone, build_response_head, tiny_spec

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def spec():
    return tiny_spec()


@pytest.fixture()
def backbone(spec):
    return build_backbone(spec, seed=0)


@pytest.fixture()
def head(spec):
    return build_response_head(spec, target_dim=12, seed=1)


@pytest.fixture()
def small_images():
    rng = np.random.default_rng(7)
    return rng.random((6, 3, 32, 32)).astype(np.float32)
