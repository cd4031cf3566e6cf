import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest
import torch

from adaptsr.backbones import TinyEdsrConfig, TinySwinConfig, build_tiny_edsr, build_tiny_swin
from adaptsr.config.settings import RUN_SLOW_TESTS


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW_TESTS:
        return
    skip = pytest.mark.skip(reason="set ADAPTSR_RUN_SLOW=1 to run the adaptation experiments")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


# =========================
# backbones
# =========================
@pytest.fixture
def tiny_edsr():
    return build_tiny_edsr(TinyEdsrConfig(), seed=0)


@pytest.fixture
def tiny_swin():
    return build_tiny_swin(TinySwinConfig(), seed=0)


@pytest.fixture
def small_edsr():
    """Narrow enough to train a few steps in well under a second."""
    return build_tiny_edsr(TinyEdsrConfig(n_feats=8, n_resblocks=1), seed=0)


@pytest.fixture
def lr_inputs():
    generator = torch.Generator().manual_seed(1234)
    return torch.rand(100, 3, 8, 8, generator=generator)


# =========================
# run configs
# =========================
TINY_RUN = {
    "backbone.edsr.n_feats": 8,
    "backbone.edsr.n_resblocks": 1,
    "degradation.corpus.n": 6,
    "degradation.corpus.size": 48,
    "degradation.patch_size": 32,
    "degradation.val_count": 4,
    "train.iters": 4,
    "train.batch": 2,
    "train.eval_every": 2,
}


@pytest.fixture
def tiny_run_fields():
    return dict(TINY_RUN)


def tiny_cli_overrides(**extra):
    fields = {**TINY_RUN, **extra}
    argv = []
    for key, value in fields.items():
        argv += [f"--{key}", str(value)]
    return argv
