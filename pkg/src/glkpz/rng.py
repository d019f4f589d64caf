"""Counter-based, replayable Brownian increments."""

from __future__ import annotations

import numpy as np

CHUNK = 512
_INIT_STREAM = 2 ** 31 - 1


def stream(seed: int, traj: int, *extra: int) -> np.random.Generator:
    """Independent Philox stream for (seed, trajectory, extra...)."""
    ss = np.random.SeedSequence([int(seed), int(traj), *map(int, extra)])
    return np.random.Generator(np.random.Philox(ss))


def init_stream(seed: int, traj: int) -> np.random.Generator:
    return stream(seed, traj, _INIT_STREAM)


class NoiseTape:
    """Brownian increments dB(step, x) ~ N(0, dt) for a batch of trajectories.

    Chunk c of trajectory b is drawn from stream(seed, traj_b, c), so any
    step can be regenerated without replaying earlier ones. ``scale=0``
    gives a zero tape with the same interface.
    """

    def __init__(self, seed: int, trajs, N: int, dt: float, scale: float = 1.0):
        self.seed, self.N, self.dt = int(seed), int(N), float(dt)
        self.trajs = np.atleast_1d(np.asarray(trajs, dtype=np.int64))
        self.scale = float(scale)
        self._chunk_id = -1
        self._chunk = None

    @property
    def batch(self) -> int:
        return self.trajs.size

    def _load(self, c: int):
        if c != self._chunk_id:
            blk = np.empty((CHUNK, self.batch, self.N))
            for b, tr in enumerate(self.trajs):
                blk[:, b, :] = stream(self.seed, tr, c).standard_normal((CHUNK, self.N))
            self._chunk = blk * (np.sqrt(self.dt) * self.scale)
            self._chunk_id = c
        return self._chunk

    def __getitem__(self, step: int) -> np.ndarray:
        """Increments for one step, shape (batch, N)."""
        c, r = divmod(int(step), CHUNK)
        return self._load(c)[r]
