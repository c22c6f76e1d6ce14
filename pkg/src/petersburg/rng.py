"""Seeded, stream-indexed random sources.

Each stream is a Philox4x64-10 counter-based generator (numpy's
``np.random.Philox``) keyed by the 128-bit pair ``(seed, stream_id)``.  The
counter starts at zero, so a stream's output depends on nothing but its key:
no global state, no dependence on how replicates are scheduled.
"""

import os

import numpy as np

DEFAULT_SEED = 0xC0FFEE
SEED_ENV_VAR = "PETERSBURG_SEED"
_MASK64 = (1 << 64) - 1


class RngStream:
    """Deterministic uniform source identified by ``(seed, stream_id)``."""

    def __init__(self, seed=DEFAULT_SEED, stream_id=0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RngStream(seed={self.seed:#x}, stream_id={self.stream_id})"

    def uniform(self):
        """One draw from (0, 1]."""
        return 1.0 - self.generator.random()

    def uniforms(self, size):
        return 1.0 - self.generator.random(size)

    def raw(self, size):
        """Raw 64-bit Philox output words (for test vectors)."""
        return self.generator.bit_generator.random_raw(size)

    @property
    def counter(self):
        return self.generator.bit_generator.state["state"]["counter"].copy()


def resolve_seed(flag=None, env=None):
    """Seed precedence: explicit flag, then $PETERSBURG_SEED, then the default."""
    if flag is not None:
        return int(flag, 0) if isinstance(flag, str) else int(flag)
    env = os.environ if env is None else env
    value = env.get(SEED_ENV_VAR)
    if value not in (None, ""):
        return int(value, 0)
    return DEFAULT_SEED
