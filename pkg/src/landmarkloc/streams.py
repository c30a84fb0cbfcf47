"""Counter-style random streams keyed by (master_seed, stream_id)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RngStream", "as_generator", "PURPOSES"]

# Each consumer draws from its own child stream so that, for example, changing
# how many noise draws a trial makes never shifts the map it samples.
PURPOSES = {"map": 0, "target": 1, "select": 2, "noise": 3, "pick": 4}

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Deterministic source of independent generators.

    ``(master_seed, stream_id)`` fully determines every generator handed out;
    distinct ids give statistically independent streams (``SeedSequence``
    spawn keys feeding a Philox counter generator).
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = int(getattr(self, name))
            if not (0 <= v <= _MASK64):
                raise ValueError(f"{name} must be a 64-bit unsigned integer")
            object.__setattr__(self, name, v)

    def generator(self, purpose: str | int = 0) -> np.random.Generator:
        code = PURPOSES[purpose] if isinstance(purpose, str) else int(purpose)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id, code))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.master_seed, (self.stream_id + int(offset)) & _MASK64)


def as_generator(stream, purpose: str | int = 0) -> np.random.Generator:
    """Accept an ``RngStream``, a ``Generator`` or an integer seed."""
    if isinstance(stream, RngStream):
        return stream.generator(purpose)
    if isinstance(stream, np.random.Generator):
        return stream
    if stream is None or isinstance(stream, (int, np.integer)):
        return np.random.default_rng(stream)
    raise TypeError(f"cannot make a generator from {type(stream).__name__}")
