"""Named random sub-streams split from one master seed.

Each purpose gets its own stream so that, for example, switching the
optimizer does not change the sampled devices or the input data.
"""

from __future__ import annotations

import numpy as np

from .optimizers import Streams

STREAM_IDS = {
    "devices": 1,
    "reference": 2,
    "target": 3,
    "inputs": 4,
    "pulses": 5,
    "choppers": 6,
    "reads": 7,
}


def substream(seed: int, name: str, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=(STREAM_IDS[name],) + tuple(int(k) for k in key))
    return np.random.default_rng(seq)


def training_streams(seed: int, *key: int) -> Streams:
    return Streams(substream(seed, "pulses", *key),
                   substream(seed, "choppers", *key),
                   substream(seed, "reads", *key))
