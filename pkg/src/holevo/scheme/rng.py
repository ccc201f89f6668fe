"""Counter-based random streams.

Every draw comes from a Philox generator keyed by (master seed, stream name,
chunk index), so a chunk's numbers do not depend on which thread runs it or
on what other streams consumed.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("latent", "ancilla", "gdyne", "exact", "acquisition", "baseline")


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode())


def generator(seed: int, stream: str, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), stream_id(stream), int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    full, rest = divmod(int(total), int(chunk))
    return [chunk] * full + ([rest] if rest else [])
