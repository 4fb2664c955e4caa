# Global imports
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream of one trajectory.

    The stream only depends on (seed, index): trajectory ``i`` draws the same
    numbers whatever the thread count or scheduling order.
    """

    seed: int
    index: int

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(
            entropy=self.seed & MASK64, spawn_key=(self.index,)
        )
        return np.random.Generator(np.random.Philox(sequence))


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return RngStream(seed=seed, index=index).generator()
