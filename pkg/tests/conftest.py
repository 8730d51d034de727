import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from airfl import channel


@pytest.fixture
def rng():
    return np.random.default_rng(20240915)


@pytest.fixture
def small_cfg():
    return channel.SystemConfig.create(K=4, T=6, snr_db=10, sigma2=0.1, seed=42)


@pytest.fixture
def paper_cfg():
    """The reference operating point: K=20, SNR 10 dB, sigma2=0.1."""
    return channel.SystemConfig.create(K=20, T=200, snr_db=10, sigma2=0.1, seed=42)
