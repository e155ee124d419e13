"""Per-component seeds derived from one master seed.

``derive_seed(master, "balance")`` hashes the component name with CRC-32 and
feeds ``[master, crc]`` to :class:`numpy.random.SeedSequence`, taking the
first 32-bit word of its state. Names used by the CLI: ``balance``,
``split``, ``model``, ``tune``, ``synth`` and ``fold<i>`` inside evaluation.
"""
from __future__ import annotations

import zlib

import numpy as np


def derive_seed(master: int, *names: str) -> int:
    words = [int(master) & 0xFFFFFFFF] + [zlib.crc32(n.encode("utf-8")) for n in names]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint32)[0])
