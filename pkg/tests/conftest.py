import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from changedet.config import desk_config


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)


@pytest.fixture
def micro_config():
    """Smallest usable config for fast training-path tests."""
    return desk_config(
        input_size=32,
        embed_dim=8,
        stage_heads=(2, 2, 4, 4),
        reduce_to=8,
        decoder_depths=(1, 1, 1, 1),
        decoder_heads=2,
        synth_count=4,
        batch_size=2,
        epochs=2,
        max_steps=4,
    )
