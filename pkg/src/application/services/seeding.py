"""Deterministic random streams.

Every stochastic step draws from a generator derived from a root seed and a
tuple of integer keys, so a replicate or a geo can be regenerated on its own
and results do not depend on execution order or worker count.
"""
import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys)))


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return stream(seed, index)


def geo_rng(seed: int, geo_index: int) -> np.random.Generator:
    return stream(seed, geo_index)


def assignment_rng(seed: int, n: int) -> np.random.Generator:
    """Stream for the final assignment of an n-pair design"""
    return stream(seed, n, 1)


def derive_seed(seed: int, key: int) -> int:
    """Child seed for candidate `key` (the pair count in the design grid)"""
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(key,)).generate_state(1)[0])
