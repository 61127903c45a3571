"""Independent random streams keyed by (seed, labels...)."""

from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)) and label >= 0:
        return int(label)
    digest = hashlib.sha256(repr(label).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int, *labels) -> np.random.Generator:
    """Generator for the stream identified by ``seed`` and ``labels``.

    Streams with different labels are statistically independent; the same
    (seed, labels) always reproduces the same stream.
    """
    key = tuple(_label_key(x) for x in labels)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.default_rng(ss)


def derive_seed(seed: int, *labels) -> int:
    """A 63-bit integer seed derived from ``seed`` and ``labels``."""
    payload = repr((int(seed),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little") >> 1
