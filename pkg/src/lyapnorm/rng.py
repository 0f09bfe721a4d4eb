"""Counter-based random streams.

Every random draw is addressed by ``(seed, stream, *counters)`` so a trajectory can
be regenerated (or resumed) from any point without replaying earlier draws, and
results never depend on how work is split across threads.
"""
import numpy as np

STREAMS = {
    "velocity": 1,   # flow-model phases
    "noise": 2,      # stochastic forcing increments
    "initial": 3,    # initial flow state
    "vector": 4,     # initial tangent vectors
    "sampler": 5,    # geometry / estimator sampling
    "ensemble": 6,   # random test-field ensembles
}


def stream_rng(seed: int, stream: str, *counters: int) -> np.random.Generator:
    key = [int(seed), STREAMS[stream], *(int(c) for c in counters)]
    if min(key) < 0:
        raise ValueError("seeds and counters must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(key))
