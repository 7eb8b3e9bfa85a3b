"""Shared fixtures: small encoders, seeded tasks and a CLI runner."""

import numpy as np
import pytest

import fsadapt
from components.encoder.encoder import EncoderConfig
from components.taskgen.generator import TaskSpec, generate_task, preset_spec


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_encoder_config():
    """Two stages of one block at width 8 on 16x16 images."""
    return EncoderConfig(image_size=16, patch_size=8, channels=1, stages=((1, 8), (1, 8)),
                         heads=2, output_dim=8, seed=0)


@pytest.fixture
def small_spec():
    return TaskSpec(n_classes=3, k_shot=2, query_size=24, image_size=16, noise_std=0.1,
                    pattern_overlap=0.0, multilabel_prob=0.1, seed=3)


@pytest.fixture
def small_task(small_spec):
    return generate_task(small_spec)


@pytest.fixture(scope="session")
def easy_task():
    return generate_task(preset_spec("easy", seed=1))


@pytest.fixture
def run_cli(capsys):
    """Run the CLI in-process without file logging; returns (exit code, stdout)."""
    def run(*args):
        code = fsadapt.main(["--log-dir", "", *[str(a) for a in args]])
        return code, capsys.readouterr().out
    return run
