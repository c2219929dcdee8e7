"""Counter-based random streams, one per (seed, path, stream) triple.

Every stream is an independent ``Philox4x64-10`` generator from numpy with a
128-bit key

    key = (seed << 64) | (path << 16) | stream

and counter starting at zero.  Results therefore depend only on the seed and
the path index, never on how paths are batched or threaded, and they are
reproducible on any platform with the same numpy bit generator.

Stream layout used by the simulator:

* ``0``: Brownian normals (or exact-Wishart Gaussian innovations);
* ``1 + 2r``: uniforms for the jump counts of ray ``r``;
* ``2 + 2r``: standard exponentials for the jump sizes of ray ``r``.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1
MAX_PATH = 2**48 - 1
MAX_STREAM = 2**16 - 1

BROWNIAN = 0


def jump_count_stream(ray: int) -> int:
    return 1 + 2 * ray


def jump_size_stream(ray: int) -> int:
    return 2 + 2 * ray


def stream_key(seed: int, path: int, stream: int) -> int:
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must lie in [0, 2^64), got {seed}")
    if not 0 <= path <= MAX_PATH:
        raise ValueError(f"path index out of range: {path}")
    if not 0 <= stream <= MAX_STREAM:
        raise ValueError(f"stream index out of range: {stream}")
    return (int(seed) << 64) | (int(path) << 16) | int(stream)


def generator(seed: int, path: int, stream: int = BROWNIAN) -> np.random.Generator:
    """Generator for one (seed, path, stream) triple."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, path, stream)))


def generators(seed: int, paths, stream: int = BROWNIAN) -> list[np.random.Generator]:
    return [generator(seed, int(p), stream) for p in paths]
